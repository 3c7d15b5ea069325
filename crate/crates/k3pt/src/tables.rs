//! Externally supplied invariant tables.
//!
//! Noether-Lefschetz numbers, generalized DT invariants J and fiber
//! integrals are inputs to the assembly and wall-crossing formulas, not
//! things this crate computes. Loading validates totally: a malformed file
//! yields a typed error, never a partial table.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::monoid::{ClassMonoid, CurveClass};
use crate::rational::Rational;

/// Noether-Lefschetz numbers indexed by (h, class id).
///
/// Class ids name effective nonzero curve classes of the declared monoid.
/// The `convention` field records, as free text, the supplier's convention
/// for non-transversal intersections; the table does not adjudicate it.
#[derive(Debug, Clone, PartialEq)]
pub struct NlTable {
    monoid: Arc<ClassMonoid>,
    h_min: i64,
    h_max: i64,
    classes: BTreeMap<String, CurveClass>,
    entries: BTreeMap<(i64, String), Rational>,
    convention: Option<String>,
}

impl NlTable {
    pub fn new(
        monoid: Arc<ClassMonoid>,
        h_range: (i64, i64),
        classes: Vec<(String, CurveClass)>,
        entries: Vec<(i64, String, Rational)>,
        convention: Option<String>,
    ) -> Result<Self> {
        let (h_min, h_max) = h_range;
        if h_min > h_max {
            return Err(Error::ParseError(format!("empty h range [{h_min}, {h_max}]")));
        }
        let mut class_map = BTreeMap::new();
        for (id, class) in classes {
            if class.len() != monoid.rank() {
                return Err(Error::ParseError(format!(
                    "class {id:?} has {} coordinates in a rank-{} monoid",
                    class.len(),
                    monoid.rank()
                )));
            }
            if !class.is_effective() || class.is_zero() {
                return Err(Error::EffectivityError(format!(
                    "class {id:?} = {class} must be effective and nonzero"
                )));
            }
            if class_map.insert(id.clone(), class).is_some() {
                return Err(Error::DuplicateKey(format!("class id {id:?}")));
            }
        }
        let mut entry_map = BTreeMap::new();
        for (h, id, value) in entries {
            if h < h_min || h > h_max {
                return Err(Error::ParseError(format!(
                    "entry at h={h} outside declared range [{h_min}, {h_max}]"
                )));
            }
            if !class_map.contains_key(&id) {
                return Err(Error::ParseError(format!("entry references unknown class {id:?}")));
            }
            if entry_map.insert((h, id.clone()), value).is_some() {
                return Err(Error::DuplicateKey(format!("NL entry (h={h}, class {id:?})")));
            }
        }
        Ok(NlTable { monoid, h_min, h_max, classes: class_map, entries: entry_map, convention })
    }

    pub fn monoid(&self) -> &Arc<ClassMonoid> {
        &self.monoid
    }

    pub fn h_range(&self) -> (i64, i64) {
        (self.h_min, self.h_max)
    }

    pub fn convention(&self) -> Option<&str> {
        self.convention.as_deref()
    }

    pub fn classes(&self) -> impl Iterator<Item = (&String, &CurveClass)> {
        self.classes.iter()
    }

    pub fn class(&self, id: &str) -> Option<&CurveClass> {
        self.classes.get(id)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&(i64, String), &Rational)> {
        self.entries.iter()
    }

    /// The nonzero h-support of one class column.
    pub fn column(&self, id: &str) -> Vec<(i64, Rational)> {
        self.entries
            .iter()
            .filter(|((_, cid), _)| cid == id)
            .map(|((h, _), v)| (*h, v.clone()))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Generalized DT invariants J(r, beta, n), rational by construction.
///
/// Every entry's class is effective and nonzero (the product formulas only
/// range over beta > 0) and r >= 0.
#[derive(Debug, Clone, PartialEq)]
pub struct JTable {
    monoid: Arc<ClassMonoid>,
    entries: BTreeMap<(i64, CurveClass, i64), Rational>,
}

impl JTable {
    pub fn new(
        monoid: Arc<ClassMonoid>,
        entries: Vec<(i64, CurveClass, i64, Rational)>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (r, class, n, value) in entries {
            if r < 0 {
                return Err(Error::ParseError(format!("J entry with r = {r} < 0")));
            }
            if class.len() != monoid.rank() {
                return Err(Error::ParseError(format!(
                    "J class {class} has wrong rank for the monoid"
                )));
            }
            if !class.is_effective() || class.is_zero() {
                return Err(Error::EffectivityError(format!(
                    "J entry class {class} must be effective and nonzero"
                )));
            }
            if map.insert((r, class.clone(), n), value).is_some() {
                return Err(Error::DuplicateKey(format!("J entry (r={r}, {class}, n={n})")));
            }
        }
        Ok(JTable { monoid, entries: map })
    }

    pub fn monoid(&self) -> &Arc<ClassMonoid> {
        &self.monoid
    }

    pub fn entries(&self) -> impl Iterator<Item = (&(i64, CurveClass, i64), &Rational)> {
        self.entries.iter()
    }

    pub fn get(&self, r: i64, class: &CurveClass, n: i64) -> Option<&Rational> {
        self.entries.get(&(r, class.clone(), n))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Fiber integrals (or perverse Euler characteristics) indexed by (n, h).
///
/// Absence of a key means "not covered", never "zero": assemblies that need
/// an uncovered key fail rather than fabricate a value.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberTable {
    entries: BTreeMap<(i64, i64), Rational>,
}

impl FiberTable {
    pub fn new(entries: Vec<(i64, i64, Rational)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, h, value) in entries {
            if map.insert((n, h), value).is_some() {
                return Err(Error::DuplicateKey(format!("fiber entry (n={n}, h={h})")));
            }
        }
        Ok(FiberTable { entries: map })
    }

    pub fn entries(&self) -> impl Iterator<Item = (&(i64, i64), &Rational)> {
        self.entries.iter()
    }

    pub fn get(&self, n: i64, h: i64) -> Option<&Rational> {
        self.entries.get(&(n, h))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
