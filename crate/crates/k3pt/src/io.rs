//! JSON file formats.
//!
//! Every format carries a versioned `format` tag and renders all numeric
//! payloads as strings: rationals as `"num/den"` (or a plain integer
//! string), table values likewise. Row lists are sorted canonically, so
//! writing is byte-stable. Unknown format versions and unknown fields are
//! rejected.
//!
//! Outputs embed a `manifest` with the content hashes of the inputs that
//! produced them; it is ignored (but preserved structurally) on load.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::monoid::{ClassMonoid, CurveClass};
use crate::pushforward::{DropReason, PushforwardMap, ValidatedMap};
use crate::rational::Rational;
use crate::series::Series;
use crate::tables::{FiberTable, JTable, NlTable};
use crate::window::Window;
use crate::ky::KyTable;

pub const SERIES_FORMAT: &str = "k3pt.series/1";
pub const NL_FORMAT: &str = "k3pt.nl/1";
pub const J_FORMAT: &str = "k3pt.j/1";
pub const FIBER_FORMAT: &str = "k3pt.fiber/1";
pub const KY_FORMAT: &str = "k3pt.ky/1";
pub const MAP_FORMAT: &str = "k3pt.map/1";
pub const REPORT_FORMAT: &str = "k3pt.report/1";
pub const J0_FORMAT: &str = "k3pt.j0/1";

/// Content hashes of the inputs that produced an output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Manifest {
    pub inputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonoidSchema {
    pub generators: Vec<String>,
    pub weights: Vec<i64>,
}

impl MonoidSchema {
    pub fn from_monoid(m: &ClassMonoid) -> Self {
        MonoidSchema {
            generators: m.generator_names().to_vec(),
            weights: m.weights().to_vec(),
        }
    }

    pub fn to_monoid(&self) -> Result<Arc<ClassMonoid>> {
        ClassMonoid::new(self.generators.clone(), self.weights.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSchema {
    pub degree_max: i64,
    pub q_min: i64,
    pub q_max: i64,
}

impl WindowSchema {
    pub fn from_window(w: &Window) -> Self {
        WindowSchema { degree_max: w.degree_max(), q_min: w.q_min(), q_max: w.q_max() }
    }

    pub fn to_window(&self) -> Result<Window> {
        Window::new(self.degree_max, self.q_min, self.q_max)
    }
}

/// Series file: terms sorted lexicographically by (coords, q_exp).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesFile {
    pub format: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<Manifest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub provenance: Option<BTreeMap<String, String>>,
    pub monoid: MonoidSchema,
    pub window: WindowSchema,
    pub terms: Vec<(Vec<i64>, i64, String)>,
}

impl SeriesFile {
    pub fn from_series(series: &Series) -> Self {
        SeriesFile {
            format: SERIES_FORMAT.into(),
            manifest: None,
            mode: None,
            provenance: None,
            monoid: MonoidSchema::from_monoid(series.monoid()),
            window: WindowSchema::from_window(series.window()),
            terms: series
                .terms()
                .map(|(k, c)| (k.class.coords().to_vec(), k.q, c.to_string()))
                .collect(),
        }
    }

    /// Loaded series are window-certified views of external data.
    pub fn to_series(&self) -> Result<Series> {
        check_format(&self.format, SERIES_FORMAT)?;
        let monoid = self.monoid.to_monoid()?;
        let window = self.window.to_window()?;
        let terms = self
            .terms
            .iter()
            .map(|(coords, q, value)| {
                Ok((CurveClass::new(coords.clone()), *q, Rational::parse(value)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Series::new(&monoid, window, terms)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NlFile {
    pub format: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<Manifest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convention: Option<String>,
    pub monoid: MonoidSchema,
    pub h_range: (i64, i64),
    pub classes: Vec<(String, Vec<i64>)>,
    pub entries: Vec<(i64, String, String)>,
}

impl NlFile {
    pub fn from_table(table: &NlTable) -> Self {
        NlFile {
            format: NL_FORMAT.into(),
            manifest: None,
            convention: table.convention().map(String::from),
            monoid: MonoidSchema::from_monoid(table.monoid()),
            h_range: table.h_range(),
            classes: table
                .classes()
                .map(|(id, c)| (id.clone(), c.coords().to_vec()))
                .collect(),
            entries: table
                .entries()
                .map(|((h, id), v)| (*h, id.clone(), v.to_string()))
                .collect(),
        }
    }

    pub fn to_table(&self) -> Result<NlTable> {
        check_format(&self.format, NL_FORMAT)?;
        let monoid = self.monoid.to_monoid()?;
        let classes = self
            .classes
            .iter()
            .map(|(id, coords)| (id.clone(), CurveClass::new(coords.clone())))
            .collect();
        let entries = self
            .entries
            .iter()
            .map(|(h, id, v)| Ok((*h, id.clone(), Rational::parse(v)?)))
            .collect::<Result<Vec<_>>>()?;
        NlTable::new(monoid, self.h_range, classes, entries, self.convention.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JFile {
    pub format: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<Manifest>,
    pub monoid: MonoidSchema,
    pub entries: Vec<(i64, Vec<i64>, i64, String)>,
}

impl JFile {
    pub fn from_table(table: &JTable) -> Self {
        JFile {
            format: J_FORMAT.into(),
            manifest: None,
            monoid: MonoidSchema::from_monoid(table.monoid()),
            entries: table
                .entries()
                .map(|((r, c, n), v)| (*r, c.coords().to_vec(), *n, v.to_string()))
                .collect(),
        }
    }

    pub fn to_table(&self) -> Result<JTable> {
        check_format(&self.format, J_FORMAT)?;
        let monoid = self.monoid.to_monoid()?;
        let entries = self
            .entries
            .iter()
            .map(|(r, coords, n, v)| {
                Ok((*r, CurveClass::new(coords.clone()), *n, Rational::parse(v)?))
            })
            .collect::<Result<Vec<_>>>()?;
        JTable::new(monoid, entries)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberFile {
    pub format: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<Manifest>,
    pub entries: Vec<(i64, i64, String)>,
}

impl FiberFile {
    pub fn from_table(table: &FiberTable) -> Self {
        FiberFile {
            format: FIBER_FORMAT.into(),
            manifest: None,
            entries: table
                .entries()
                .map(|((n, h), v)| (*n, *h, v.to_string()))
                .collect(),
        }
    }

    pub fn to_table(&self) -> Result<FiberTable> {
        check_format(&self.format, FIBER_FORMAT)?;
        let entries = self
            .entries
            .iter()
            .map(|(n, h, v)| Ok((*n, *h, Rational::parse(v)?)))
            .collect::<Result<Vec<_>>>()?;
        FiberTable::new(entries)
    }
}

/// KY table file with a self-integrity hash over the entry rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KyFile {
    pub format: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<Manifest>,
    pub hmax: i64,
    pub nmax: i64,
    pub entries: Vec<(i64, i64, String)>,
    pub content_hash: String,
}

impl KyFile {
    pub fn from_table(table: &KyTable) -> Self {
        let entries: Vec<(i64, i64, String)> = table
            .entries()
            .map(|(&(h, n), c)| (n, h, c.to_string()))
            .collect();
        let content_hash = ky_entries_hash(table.h_max(), table.n_max(), &entries);
        KyFile {
            format: KY_FORMAT.into(),
            manifest: None,
            hmax: table.h_max(),
            nmax: table.n_max(),
            entries,
            content_hash,
        }
    }

    pub fn to_table(&self) -> Result<KyTable> {
        check_format(&self.format, KY_FORMAT)?;
        let expected = ky_entries_hash(self.hmax, self.nmax, &self.entries);
        if expected != self.content_hash {
            return Err(Error::ParseError(format!(
                "KY table content hash mismatch: stored {}, computed {expected}",
                self.content_hash
            )));
        }
        let mut entries = BTreeMap::new();
        for (n, h, value) in &self.entries {
            let c = Rational::parse(value)?
                .to_bigint()
                .ok_or_else(|| Error::ParseError(format!("non-integer entry at ({n},{h})")))?;
            if entries.insert((*h, *n), c).is_some() {
                return Err(Error::DuplicateKey(format!("KY entry (n={n}, h={h})")));
            }
        }
        KyTable::from_entries(self.hmax, self.nmax, entries)
    }
}

fn ky_entries_hash(hmax: i64, nmax: i64, entries: &[(i64, i64, String)]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(format!("{hmax};{nmax}"));
    for (n, h, c) in entries {
        hasher.update(format!(";{n},{h},{c}"));
    }
    hex_digest(hasher)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapFile {
    pub format: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<Manifest>,
    pub source: MonoidSchema,
    pub target: MonoidSchema,
    /// One row per target generator, one column per source generator.
    pub matrix: Vec<Vec<i64>>,
}

impl MapFile {
    pub fn from_map(map: &ValidatedMap) -> Self {
        MapFile {
            format: MAP_FORMAT.into(),
            manifest: None,
            source: MonoidSchema::from_monoid(map.source()),
            target: MonoidSchema::from_monoid(map.target()),
            matrix: map.matrix().to_vec(),
        }
    }

    pub fn to_map(&self) -> Result<ValidatedMap> {
        check_format(&self.format, MAP_FORMAT)?;
        let source = self.source.to_monoid()?;
        let target = self.target.to_monoid()?;
        PushforwardMap::new(&source, &target, self.matrix.clone())
    }
}

/// Conifold comparison report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportFile {
    pub format: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<Manifest>,
    pub certified_matches: Vec<(Vec<i64>, i64)>,
    pub mismatches: Vec<(Vec<i64>, i64, String, String)>,
    pub uncertified: Vec<(Vec<i64>, i64, String)>,
}

/// Extracted J(0, beta, n) values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct J0File {
    pub format: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<Manifest>,
    pub class: Vec<i64>,
    pub mode: String,
    pub values: Vec<(i64, String)>,
}

pub fn drop_reason_label(reason: &DropReason) -> &'static str {
    match reason {
        DropReason::PreimageBeyondDegreeBudget => "preimage-beyond-degree-budget",
        DropReason::SupportTouchesKernelBoundary => "support-touches-kernel-boundary",
    }
}

fn check_format(found: &str, expected: &str) -> Result<()> {
    if found != expected {
        return Err(Error::ParseError(format!(
            "unsupported format {found:?} (expected {expected:?})"
        )));
    }
    Ok(())
}

/// Canonical rendering: pretty JSON with sorted rows and a trailing newline.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Io(format!("serialization failed: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub fn from_json_str<'a, T: Deserialize<'a>>(s: &'a str) -> Result<T> {
    serde_json::from_str(s).map_err(|e| Error::ParseError(format!("invalid JSON: {e}")))
}

pub fn from_json_slice<'a, T: Deserialize<'a>>(bytes: &'a [u8]) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| Error::ParseError(format!("invalid JSON: {e}")))
}

pub fn read_file<T: for<'a> Deserialize<'a>>(path: &Path) -> Result<T> {
    let data = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    from_json_str(&data).map_err(|e| match e {
        Error::ParseError(msg) => Error::ParseError(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let data = to_canonical_json(value)?;
    std::fs::write(path, data).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex_digest(hasher)
}

fn hex_digest(hasher: Sha256) -> String {
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Content hash of any serializable value through its canonical rendering.
pub fn content_hash<T: Serialize>(value: &T) -> Result<String> {
    Ok(sha256_hex(to_canonical_json(value)?.as_bytes()))
}
