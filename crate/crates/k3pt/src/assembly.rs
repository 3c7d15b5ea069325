//! Fiberwise assembly: contracting a fiber table against Noether-Lefschetz
//! numbers.
//!
//! The coefficient of `q^n t^gamma` in the assembled series is
//! `sum_h c(n,h) * NL_{h,gamma}`, a dot product over the h-index per
//! (n, gamma). This is table algebra, not series multiplication: h is not a
//! series variable. A fiber table that does not cover a needed (n, h) pair
//! is an error, never a silent zero.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::io;
use crate::ky::KyTable;
use crate::rational::Rational;
use crate::series::Series;
use crate::tables::{FiberTable, NlTable};
use crate::window::Window;

/// Which fiber data entered the contraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssemblyMode {
    Ky,
    Perverse,
    GenericFiber,
}

impl AssemblyMode {
    pub fn label(&self) -> &'static str {
        match self {
            AssemblyMode::Ky => "ky",
            AssemblyMode::Perverse => "perverse",
            AssemblyMode::GenericFiber => "generic",
        }
    }
}

/// Assembled PT series with its input provenance.
#[derive(Debug, Clone)]
pub struct AssembledPt {
    pub series: Series,
    pub mode: AssemblyMode,
    /// Content hashes of the inputs, plus any caller assertion for the
    /// generic-fiber special cases.
    pub provenance: BTreeMap<String, String>,
}

/// Contract a KY table against an NL table.
pub fn assemble(fiber: &KyTable, nl: &NlTable, window: &Window) -> Result<AssembledPt> {
    assemble_ky_mode(fiber, nl, window, AssemblyMode::Ky)
}

/// Same contraction, labeled as perverse stable-pair output.
pub fn assemble_perverse(fiber: &KyTable, nl: &NlTable, window: &Window) -> Result<AssembledPt> {
    assemble_ky_mode(fiber, nl, window, AssemblyMode::Perverse)
}

fn assemble_ky_mode(
    fiber: &KyTable,
    nl: &NlTable,
    window: &Window,
    mode: AssemblyMode,
) -> Result<AssembledPt> {
    let monoid = nl.monoid().clone();
    let mut terms = Vec::new();
    for (id, class) in nl.classes() {
        let degree = monoid.degree(class)?;
        if degree > window.degree_max() {
            return Err(Error::WindowViolation(format!(
                "NL class {id:?} has degree {degree}, beyond the window bound {}",
                window.degree_max()
            )));
        }
        let column = nl.column(id);
        if column.is_empty() {
            continue;
        }
        for n in window.q_min()..=window.q_max() {
            let mut value = Rational::zero();
            for (h, weight) in &column {
                let c = fiber
                    .coefficient(n, *h)
                    .ok_or(Error::InsufficientFiberTable { n, h: *h })?;
                value += &(&Rational::from_bigint(c) * weight);
            }
            if !value.is_zero() {
                terms.push((class.clone(), n, value));
            }
        }
    }
    let series = Series::new(&monoid, *window, terms)?;
    let mut provenance = BTreeMap::new();
    provenance.insert("mode".into(), mode.label().to_string());
    provenance.insert(
        "fiber_table".into(),
        io::content_hash(&io::KyFile::from_table(fiber))?,
    );
    provenance.insert("nl_table".into(), io::content_hash(&io::NlFile::from_table(nl))?);
    Ok(AssembledPt { series, mode, provenance })
}

/// Generic-fiber contraction: the per-(n,h) fiber integrals are supplied,
/// and the two special-case hypotheses under which the formula holds are
/// the caller's assertion, recorded in provenance rather than checked.
pub fn assemble_generic(
    fiber: &FiberTable,
    nl: &NlTable,
    window: &Window,
    caller_assertion: Option<String>,
) -> Result<AssembledPt> {
    let monoid = nl.monoid().clone();
    let mut terms = Vec::new();
    for (id, class) in nl.classes() {
        let degree = monoid.degree(class)?;
        if degree > window.degree_max() {
            return Err(Error::WindowViolation(format!(
                "NL class {id:?} has degree {degree}, beyond the window bound {}",
                window.degree_max()
            )));
        }
        let column = nl.column(id);
        if column.is_empty() {
            continue;
        }
        for n in window.q_min()..=window.q_max() {
            let mut value = Rational::zero();
            for (h, weight) in &column {
                let integral = fiber
                    .get(n, *h)
                    .ok_or(Error::InsufficientFiberTable { n, h: *h })?;
                value += &(integral * weight);
            }
            if !value.is_zero() {
                terms.push((class.clone(), n, value));
            }
        }
    }
    let series = Series::new(&monoid, *window, terms)?;
    let mut provenance = BTreeMap::new();
    provenance.insert("mode".into(), AssemblyMode::GenericFiber.label().to_string());
    provenance.insert(
        "fiber_table".into(),
        io::content_hash(&io::FiberFile::from_table(fiber))?,
    );
    provenance.insert("nl_table".into(), io::content_hash(&io::NlFile::from_table(nl))?);
    provenance.insert(
        "caller_assertion".into(),
        caller_assertion.unwrap_or_else(|| "unasserted".into()),
    );
    Ok(AssembledPt {
        series,
        mode: AssemblyMode::GenericFiber,
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ky::ky_expand;
    use crate::monoid::{ClassMonoid, CurveClass};
    use num::bigint::BigInt;
    use std::sync::Arc;

    fn nl_monoid() -> Arc<ClassMonoid> {
        ClassMonoid::new(vec!["g".into()], vec![1]).unwrap()
    }

    fn delta_nl(h0: i64) -> NlTable {
        NlTable::new(
            nl_monoid(),
            (0, 4),
            vec![("g".into(), CurveClass::new(vec![1]))],
            vec![(h0, "g".into(), Rational::one())],
            None,
        )
        .unwrap()
    }

    #[test]
    fn delta_nl_passes_through_ky_rows() {
        let ky = ky_expand(4, 6).unwrap();
        let gamma = CurveClass::new(vec![1]);
        for h0 in 0..=4 {
            let window = Window::new(1, 1 - h0, 6).unwrap();
            let pt = assemble(&ky, &delta_nl(h0), &window).unwrap();
            for n in (1 - h0)..=6 {
                let expected = Rational::from_bigint(ky.coefficient(n, h0).unwrap());
                assert_eq!(pt.series.coefficient(&gamma, n).unwrap(), expected, "h0={h0}, n={n}");
            }
        }
    }

    #[test]
    fn empty_nl_gives_zero_series() {
        let ky = ky_expand(2, 4).unwrap();
        let nl = NlTable::new(
            nl_monoid(),
            (0, 2),
            vec![("g".into(), CurveClass::new(vec![1]))],
            vec![],
            None,
        )
        .unwrap();
        let pt = assemble(&ky, &nl, &Window::new(1, 0, 4).unwrap()).unwrap();
        assert!(pt.series.is_zero());
    }

    #[test]
    fn two_row_contraction_value() {
        // NL_{0,g} = NL_{1,g} = 1: P_{0,g} = c(0,0) + c(0,1) = 0 + (-2).
        let ky = ky_expand(2, 4).unwrap();
        let nl = NlTable::new(
            nl_monoid(),
            (0, 2),
            vec![("g".into(), CurveClass::new(vec![1]))],
            vec![
                (0, "g".into(), Rational::one()),
                (1, "g".into(), Rational::one()),
            ],
            None,
        )
        .unwrap();
        let pt = assemble(&ky, &nl, &Window::new(1, 0, 4).unwrap()).unwrap();
        let gamma = CurveClass::new(vec![1]);
        assert_eq!(pt.series.coefficient(&gamma, 0).unwrap(), Rational::from_int(-2));
    }

    #[test]
    fn undersized_fiber_table_is_an_error() {
        let ky = ky_expand(0, 4).unwrap();
        let nl = delta_nl(2); // needs h = 2, table only covers h = 0
        let err = assemble(&ky, &nl, &Window::new(1, 0, 3).unwrap()).unwrap_err();
        assert_eq!(err, Error::InsufficientFiberTable { n: 0, h: 2 });
        // q range beyond n_max is likewise insufficient, never zero.
        let ky = ky_expand(2, 4).unwrap();
        let err = assemble(&ky, &delta_nl(1), &Window::new(1, 0, 9).unwrap()).unwrap_err();
        assert!(matches!(err, Error::InsufficientFiberTable { h: 1, .. }));
    }

    #[test]
    fn perverse_mode_differs_only_in_label() {
        let ky = ky_expand(2, 4).unwrap();
        let nl = delta_nl(1);
        let window = Window::new(1, 0, 4).unwrap();
        let a = assemble(&ky, &nl, &window).unwrap();
        let b = assemble_perverse(&ky, &nl, &window).unwrap();
        assert_eq!(a.series, b.series);
        assert_eq!(a.mode, AssemblyMode::Ky);
        assert_eq!(b.mode, AssemblyMode::Perverse);
        assert_eq!(b.provenance.get("mode").unwrap(), "perverse");
    }

    #[test]
    fn generic_mode_uses_supplied_integrals() {
        let fiber = FiberTable::new(vec![
            (0, 1, Rational::from_int(7)),
            (1, 1, Rational::new(1, 2).unwrap()),
        ])
        .unwrap();
        let nl = delta_nl(1);
        let window = Window::new(1, 0, 1).unwrap();
        let pt = assemble_generic(&fiber, &nl, &window, Some("no type I components".into()))
            .unwrap();
        let gamma = CurveClass::new(vec![1]);
        assert_eq!(pt.series.coefficient(&gamma, 0).unwrap(), Rational::from_int(7));
        assert_eq!(pt.series.coefficient(&gamma, 1).unwrap(), Rational::new(1, 2).unwrap());
        assert_eq!(
            pt.provenance.get("caller_assertion").unwrap(),
            "no type I components"
        );
        // Missing (n,h) key: error, not zero.
        let window = Window::new(1, 0, 2).unwrap();
        let err = assemble_generic(&fiber, &nl, &window, None).unwrap_err();
        assert_eq!(err, Error::InsufficientFiberTable { n: 2, h: 1 });
    }

    #[test]
    fn bilinearity_in_the_nl_table() {
        let ky = ky_expand(3, 5).unwrap();
        let window = Window::new(1, -2, 5).unwrap();
        let gamma = CurveClass::new(vec![1]);
        let mk = |rows: Vec<(i64, i64)>| {
            NlTable::new(
                nl_monoid(),
                (0, 3),
                vec![("g".into(), CurveClass::new(vec![1]))],
                rows.into_iter()
                    .map(|(h, v)| (h, "g".into(), Rational::from_int(v)))
                    .collect(),
                None,
            )
            .unwrap()
        };
        let a = mk(vec![(0, 2), (2, -3)]);
        let b = mk(vec![(1, 5), (2, 7)]);
        let sum = mk(vec![(0, 2), (1, 5), (2, 4)]);
        let pa = assemble(&ky, &a, &window).unwrap().series;
        let pb = assemble(&ky, &b, &window).unwrap().series;
        let ps = assemble(&ky, &sum, &window).unwrap().series;
        for n in -2..=5 {
            let lhs = ps.coefficient(&gamma, n).unwrap();
            let rhs = &pa.coefficient(&gamma, n).unwrap() + &pb.coefficient(&gamma, n).unwrap();
            assert_eq!(lhs, rhs, "n = {n}");
        }
    }
}
