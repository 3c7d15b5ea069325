//! Exceptional-curve series and the conifold-transition identity checker.
//!
//! `pt_h_series` expands the exceptional-curve-only series
//! `prod_{i, n>=1} (1 - (-q)^n t^{e_i})^n`. `conifold_check` certifies, key
//! by key, the identity
//!
//! ```text
//! pushforward( PT(resolved) / PT_h ) = PT(base)^2
//! ```
//!
//! where the pushforward is the variable change along the resolution map.
//! Division happens before the pushforward; in the other order every image
//! class receives infinitely many contributions and the completeness
//! certificate of the pushforward refuses to sum them.
//!
//! The checker compares only keys certified on both sides; a key known on
//! one side only is reported as uncertified, never as a mismatch, so
//! truncation cannot fabricate counterexamples.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::monoid::{ClassMonoid, CurveClass};
use crate::pushforward::{pushforward, ValidatedMap};
use crate::rational::Rational;
use crate::series::{binomial_series, truncated_product, Series};
use crate::window::Window;
use std::sync::Arc;

/// One coefficient disagreement between the two sides.
#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub class: CurveClass,
    pub q: i64,
    pub lhs: Rational,
    pub rhs: Rational,
}

/// Keywise comparison of the two sides of the transition identity.
#[derive(Debug, Clone)]
pub struct ConifoldReport {
    pub lhs: Series,
    pub rhs: Series,
    /// Keys certified exact on both sides (whether matching or not).
    pub certified: Vec<(CurveClass, i64)>,
    pub mismatches: Vec<Mismatch>,
    /// Keys where only one side is certified, with the reason.
    pub uncertified: Vec<(CurveClass, i64, String)>,
}

impl ConifoldReport {
    pub fn holds(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Expand `prod_{1<=i<=k, n>=1} (1 - (-q)^n t^{e_i})^n` on the window.
///
/// Factors with `n` beyond the q bound (or classes beyond the degree bound)
/// are identically 1 there, which bounds the product.
pub fn pt_h_series(
    monoid: &Arc<ClassMonoid>,
    window: &Window,
    classes: &[CurveClass],
) -> Result<Series> {
    let mut seen = BTreeSet::new();
    for class in classes {
        if class.len() != monoid.rank() {
            return Err(Error::MonoidError(format!(
                "class {class} has wrong rank for the monoid"
            )));
        }
        if !class.is_effective() || class.is_zero() {
            return Err(Error::EffectivityError(format!(
                "exceptional class {class} must be effective and nonzero"
            )));
        }
        if !seen.insert(class.clone()) {
            return Err(Error::EffectivityError(format!(
                "duplicate exceptional class {class}"
            )));
        }
    }
    let n_bound = window.q_max().max(0);
    let mut factors = Vec::new();
    for class in classes {
        let degree = monoid.degree(class)?;
        if degree > window.degree_max() {
            continue;
        }
        for n in 1..=n_bound {
            // (1 - (-q)^n t^e)^n = (1 + (-1)^(n+1) q^n t^e)^n
            let sign = if (n + 1) % 2 == 0 { 1 } else { -1 };
            factors.push(binomial_series(
                monoid,
                window,
                &Rational::from_int(sign),
                class,
                n,
                n,
            ));
        }
    }
    let count = factors.len() as u64;
    truncated_product(monoid, window, factors, count.max(1))
}

/// Certify the transition identity on all keys certified by both sides.
///
/// `pt_resolved` lives over the source monoid, `pt_base` over the target;
/// the map's kernel must be spanned by the declared exceptional classes.
pub fn conifold_check(
    pt_resolved: &Series,
    classes: &[CurveClass],
    map: &ValidatedMap,
    pt_base: &Series,
) -> Result<ConifoldReport> {
    if pt_resolved.monoid() != map.source() {
        return Err(Error::MonoidError(
            "resolved series monoid does not match the map source".into(),
        ));
    }
    if pt_base.monoid() != map.target() {
        return Err(Error::MonoidError(
            "base series monoid does not match the map target".into(),
        ));
    }
    check_kernel_spanned_by(map, classes)?;

    let pth = pt_h_series(map.source(), pt_resolved.window(), classes)?;
    let quotient = pt_resolved.mul(&pth.inverse()?)?;
    let rhs = pt_base.pow_int(2)?;
    let lhs_out = pushforward(&quotient, map, rhs.window())?;
    let lhs = lhs_out.series;

    // Per-key certification of the pushforward side.
    let mut dropped_keys: BTreeSet<(Vec<i64>, Option<i64>)> = BTreeSet::new();
    for d in &lhs_out.dropped {
        dropped_keys.insert((d.class.clone(), d.q));
    }

    let window = lhs.window().intersect(rhs.window())?;
    let mut certified = Vec::new();
    let mut mismatches = Vec::new();
    let mut uncertified = Vec::new();
    for class in map.target().effective_classes_up_to(window.degree_max()) {
        for q in window.q_min()..=window.q_max() {
            let key_dropped = dropped_keys.contains(&(class.coords().to_vec(), Some(q)))
                || dropped_keys.contains(&(class.coords().to_vec(), None));
            let lhs_value = if key_dropped { None } else { lhs.coefficient(&class, q).ok() };
            let rhs_value = rhs.coefficient(&class, q).ok();
            match (lhs_value, rhs_value) {
                (Some(l), Some(r)) => {
                    if l != r {
                        mismatches.push(Mismatch { class: class.clone(), q, lhs: l, rhs: r });
                    }
                    certified.push((class.clone(), q));
                }
                (None, Some(_)) => {
                    uncertified.push((class.clone(), q, "lhs-uncertified".into()))
                }
                (Some(_), None) => {
                    uncertified.push((class.clone(), q, "rhs-uncertified".into()))
                }
                (None, None) => {
                    uncertified.push((class.clone(), q, "both-uncertified".into()))
                }
            }
        }
    }
    Ok(ConifoldReport { lhs, rhs, certified, mismatches, uncertified })
}

/// The kernel of the map must be exactly the span of the declared classes:
/// each class maps to zero, the counts agree with the kernel rank, and the
/// classes are linearly independent.
fn check_kernel_spanned_by(map: &ValidatedMap, classes: &[CurveClass]) -> Result<()> {
    for class in classes {
        let image = map.apply(class)?;
        if !image.is_zero() {
            return Err(Error::IllFormedPushforward(format!(
                "declared exceptional class {class} maps to {image}, not zero"
            )));
        }
    }
    if classes.len() != map.kernel().len() {
        return Err(Error::IllFormedPushforward(format!(
            "kernel rank {} but {} exceptional classes declared",
            map.kernel().len(),
            classes.len()
        )));
    }
    if !classes_independent(classes) {
        return Err(Error::IllFormedPushforward(
            "declared exceptional classes are linearly dependent".into(),
        ));
    }
    Ok(())
}

fn classes_independent(classes: &[CurveClass]) -> bool {
    if classes.is_empty() {
        return true;
    }
    let rows = classes[0].len();
    // Matrix with the classes as columns; independent iff its kernel is 0.
    let matrix: Vec<Vec<i64>> = (0..rows)
        .map(|i| classes.iter().map(|c| c.coords()[i]).collect())
        .collect();
    crate::pushforward::rational_kernel_rank(&matrix, classes.len()) == 0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pushforward::PushforwardMap;

    fn resolved_monoid() -> Arc<ClassMonoid> {
        ClassMonoid::new(vec!["g0".into(), "e1".into()], vec![1, 1]).unwrap()
    }

    fn base_monoid() -> Arc<ClassMonoid> {
        ClassMonoid::rank1("g0")
    }

    fn collapse_map() -> ValidatedMap {
        PushforwardMap::new(&resolved_monoid(), &base_monoid(), vec![vec![1, 0]]).unwrap()
    }

    #[test]
    fn single_class_coefficients() {
        let m = resolved_monoid();
        let w = Window::new(3, 0, 8).unwrap();
        let e1 = CurveClass::new(vec![0, 1]);
        let s = pt_h_series(&m, &w, &[e1.clone()]).unwrap();
        // Coefficient of q^n t^{e} is (-1)^(n+1) n.
        for n in 1..=8 {
            let expected = Rational::from_int(if (n + 1) % 2 == 0 { n } else { -n });
            assert_eq!(s.coefficient(&e1, n).unwrap(), expected, "n = {n}");
        }
        assert_eq!(s.coefficient(&e1, 1).unwrap(), Rational::one());
    }

    #[test]
    fn empty_class_list_gives_one() {
        let m = resolved_monoid();
        let w = Window::new(2, 0, 4).unwrap();
        let s = pt_h_series(&m, &w, &[]).unwrap();
        let one = Series::one(&m, w).unwrap();
        assert_eq!(s.raw_terms(), one.raw_terms());
    }

    #[test]
    fn duplicate_and_zero_classes_rejected() {
        let m = resolved_monoid();
        let w = Window::new(2, 0, 4).unwrap();
        let e = CurveClass::new(vec![0, 1]);
        assert!(matches!(
            pt_h_series(&m, &w, &[e.clone(), e.clone()]),
            Err(Error::EffectivityError(_))
        ));
        assert!(matches!(
            pt_h_series(&m, &w, &[CurveClass::new(vec![0, 0])]),
            Err(Error::EffectivityError(_))
        ));
    }

    #[test]
    fn relabeling_symmetry() {
        let m = ClassMonoid::new(
            vec!["g0".into(), "e1".into(), "e2".into()],
            vec![1, 1, 2],
        )
        .unwrap();
        let w = Window::new(4, 0, 6).unwrap();
        let e1 = CurveClass::new(vec![0, 1, 0]);
        let e2 = CurveClass::new(vec![0, 0, 1]);
        let a = pt_h_series(&m, &w, &[e1.clone(), e2.clone()]).unwrap();
        let b = pt_h_series(&m, &w, &[e2, e1]).unwrap();
        assert_eq!(a.raw_terms(), b.raw_terms());
    }

    /// Build the synthetic consistent triple: lift pt_base^2 through the
    /// section gamma -> (gamma, 0) and multiply by the exceptional series.
    fn synthetic_triple(
        base_terms: Vec<(i64, i64, Rational)>, // (g0 exponent, q, coeff), plus constant 1
        window: Window,
    ) -> (Series, Vec<CurveClass>, ValidatedMap, Series) {
        let src = resolved_monoid();
        let tgt = base_monoid();
        let map = collapse_map();
        let e1 = CurveClass::new(vec![0, 1]);

        let mut terms = vec![(CurveClass::new(vec![0]), 0, Rational::one())];
        terms.extend(
            base_terms
                .into_iter()
                .map(|(g, q, c)| (CurveClass::new(vec![g]), q, c)),
        );
        let pt_base = Series::new(&tgt, window, terms).unwrap();

        let squared = pt_base.pow_int(2).unwrap();
        let lifted_terms: Vec<_> = squared
            .terms()
            .map(|(k, c)| (CurveClass::new(vec![k.class.coords()[0], 0]), k.q, c.clone()))
            .collect();
        let lifted = Series::new(&src, window, lifted_terms).unwrap();
        let pth = pt_h_series(&src, &window, &[e1.clone()]).unwrap();
        let pt_resolved = lifted.mul(&pth).unwrap();
        (pt_resolved, vec![e1], map, pt_base)
    }

    #[test]
    fn synthetic_consistent_triple_has_no_mismatches() {
        let window = Window::new(4, 0, 5).unwrap();
        let (pt_resolved, classes, map, pt_base) = synthetic_triple(
            vec![(1, 1, Rational::from_int(3)), (1, 2, Rational::from_int(-1))],
            window,
        );
        let report = conifold_check(&pt_resolved, &classes, &map, &pt_base).unwrap();
        assert!(report.holds(), "mismatches: {:?}", report.mismatches);
        assert!(!report.certified.is_empty());
    }

    #[test]
    fn trivial_base_against_exceptional_series() {
        // pt_base = 1, pt_resolved = PT_h: the quotient is 1 and 1^2 = 1.
        let window = Window::new(3, 0, 5).unwrap();
        let src = resolved_monoid();
        let tgt = base_monoid();
        let map = collapse_map();
        let e1 = CurveClass::new(vec![0, 1]);
        let pth = pt_h_series(&src, &window, &[e1.clone()]).unwrap();
        let pt_base = Series::new(&tgt, window, [(CurveClass::new(vec![0]), 0, Rational::one())])
            .unwrap();
        let report = conifold_check(&pth, &[e1], &map, &pt_base).unwrap();
        assert!(report.holds(), "mismatches: {:?}", report.mismatches);
    }

    #[test]
    fn fault_injection_is_detected_at_the_perturbed_key() {
        let window = Window::new(4, 0, 5).unwrap();
        let (pt_resolved, classes, map, pt_base) =
            synthetic_triple(vec![(1, 1, Rational::from_int(2))], window);
        // Perturb an interior coefficient: (g0, q^2), degree 1, far from the
        // kernel boundary shell.
        let mut terms: Vec<_> = pt_resolved
            .terms()
            .map(|(k, c)| (k.class.clone(), k.q, c.clone()))
            .collect();
        terms.push((CurveClass::new(vec![1, 0]), 2, Rational::new(1, 3).unwrap()));
        let perturbed = Series::new(&pt_resolved.monoid().clone(), *pt_resolved.window(), terms)
            .unwrap();
        let report = conifold_check(&perturbed, &classes, &map, &pt_base).unwrap();
        assert!(!report.holds());
        let g0 = CurveClass::new(vec![1]);
        assert!(report
            .mismatches
            .iter()
            .any(|m| m.class == g0 && m.q == 2));
        // Every mismatch is a window shadow of the injected key: same image
        // class column or higher degree, q >= 2.
        for m in &report.mismatches {
            assert!(m.q >= 2, "unexpected mismatch at {:?} q={}", m.class, m.q);
        }
    }

    #[test]
    fn pushforward_before_division_is_refused() {
        // Pushing the resolved series directly: its support along the
        // exceptional tower reaches the degree budget, so the completeness
        // certificate drops those keys instead of summing them.
        let window = Window::new(4, 0, 5).unwrap();
        let (pt_resolved, _classes, map, pt_base) =
            synthetic_triple(vec![(1, 1, Rational::from_int(2))], window);
        let out = pushforward(&pt_resolved, &map, pt_base.window()).unwrap();
        assert!(
            !out.dropped.is_empty(),
            "direct pushforward must flag uncertified keys"
        );
    }

    #[test]
    fn kernel_mismatch_is_rejected() {
        let window = Window::new(2, 0, 3).unwrap();
        let (pt_resolved, _classes, map, pt_base) =
            synthetic_triple(vec![(1, 1, Rational::one())], window);
        // Declaring no exceptional classes disagrees with the kernel rank.
        let err = conifold_check(&pt_resolved, &[], &map, &pt_base).unwrap_err();
        assert!(matches!(err, Error::IllFormedPushforward(_)));
        // Declaring a non-kernel class is caught as well.
        let err = conifold_check(
            &pt_resolved,
            &[CurveClass::new(vec![1, 0])],
            &map,
            &pt_base,
        )
        .unwrap_err();
        assert!(matches!(err, Error::IllFormedPushforward(_)));
    }
}
