//! Wall-crossing dictionary between PT invariants and generalized DT
//! invariants J.
//!
//! The forward direction expands
//!
//! ```text
//! prod_{r>=0, beta>0, n>=0} exp( s J(r,beta,r+n) q^n  t^beta )^(n+2r)
//! . prod_{r>0, beta>0, n>0} exp( s J(r,beta,r+n) q^-n t^beta )^(n+2r)
//! ```
//!
//! with `s = (-1)^(n-1)` in Behrend mode and `s = 1` in Euler mode. Each
//! `(exp x)^(n+2r)` is computed as `exp((n+2r) x)`, never by repeated
//! multiplication. For a degree-1 class the product contributes only the
//! linear part of each exponential, which gives the two linear formulas
//!
//! ```text
//! P_{ n,beta} = sum_{r>=0} s (n+2r) J(r,beta,r+n)      (n >= 0)
//! P_{-n,beta} = sum_{r>0}  s (n+2r) J(r,beta,r+n)      (n > 0)
//! ```
//!
//! and subtracting them isolates `J(0,beta,n) = s (P_n - P_-n)/n`.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::monoid::{ClassMonoid, CurveClass};
use crate::rational::Rational;
use crate::series::{truncated_product, Series};
use crate::tables::JTable;
use crate::window::Window;

/// Whether invariants carry the Behrend-function sign or plain Euler
/// characteristics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignMode {
    Behrend,
    Euler,
}

impl SignMode {
    pub fn label(&self) -> &'static str {
        match self {
            SignMode::Behrend => "behrend",
            SignMode::Euler => "euler",
        }
    }

    /// The factor s for the q-exponent magnitude n.
    fn sign(&self, n: i64) -> Rational {
        match self {
            SignMode::Euler => Rational::one(),
            SignMode::Behrend => {
                if (n - 1).rem_euclid(2) == 0 {
                    Rational::one()
                } else {
                    Rational::from_int(-1)
                }
            }
        }
    }
}

/// Expand the PT series of a finite J table on `window`.
///
/// Entries whose class degree exceeds the window bound cannot contribute
/// inside it and are skipped exactly. The window must be able to hold the
/// constant term.
pub fn pt_from_j(j: &JTable, mode: SignMode, window: &Window) -> Result<Series> {
    if !window.contains(0, 0) {
        return Err(Error::InsufficientWindow(
            "the PT expansion needs q^0 inside the window".into(),
        ));
    }
    let monoid = j.monoid().clone();
    let mut factors = Vec::new();
    for ((r, class, m), value) in j.entries() {
        let n = m - r;
        if n < 0 || value.is_zero() {
            continue;
        }
        if monoid.degree(class)? > window.degree_max() {
            continue;
        }
        let weight = n + 2 * r;
        let scaled = (&mode.sign(n) * value).scale(weight);
        if weight > 0 {
            factors.push(exp_monomial(&monoid, window, class, n, scaled.clone()));
        }
        if *r > 0 && n > 0 {
            factors.push(exp_monomial(&monoid, window, class, -n, scaled));
        }
    }
    let count = factors.len() as u64;
    truncated_product(&monoid, window, factors, count.max(1))
}

/// `exp(coeff * q^q_exp * t^class)` with all degree <= bound terms retained.
fn exp_monomial(
    monoid: &Arc<ClassMonoid>,
    window: &Window,
    class: &CurveClass,
    q_exp: i64,
    coeff: Rational,
) -> Result<Series> {
    let hull = Window::new(window.degree_max(), q_exp.min(0), q_exp.max(0))?;
    Series::monomial(monoid, hull, class.clone(), q_exp, coeff)?.exp()
}

/// The linear formula for a degree-1 (irreducible) class: the signed
/// weighted sum over r at fixed `n`, with `r = 0` excluded for negative
/// exponents.
pub fn pt_irreducible_from_j(
    j: &JTable,
    class: &CurveClass,
    n: i64,
    mode: SignMode,
) -> Result<Rational> {
    check_irreducible(j.monoid(), class)?;
    let magnitude = n.abs();
    let include_r0 = n >= 0;
    let mut sum = Rational::zero();
    for ((r, entry_class, m), value) in j.entries() {
        if entry_class != class {
            continue;
        }
        if *r == 0 && !include_r0 {
            continue;
        }
        if *m != r + magnitude {
            continue;
        }
        let weight = magnitude + 2 * r;
        sum += &(&mode.sign(magnitude) * value).scale(weight);
    }
    Ok(sum)
}

/// Recover `J(0, beta, n)` from the two coefficients `P_{+-n, beta}`.
pub fn extract_j0(pt: &Series, class: &CurveClass, n: i64, mode: SignMode) -> Result<Rational> {
    if n <= 0 {
        return Err(Error::DomainError(format!(
            "extraction needs n > 0 (the n = 0 difference formula is degenerate), got {n}"
        )));
    }
    check_irreducible(pt.monoid(), class)?;
    let p_plus = certified_coefficient(pt, class, n)?;
    let p_minus = certified_coefficient(pt, class, -n)?;
    let difference = &p_plus - &p_minus;
    Ok(&(&mode.sign(n) * &difference) / &Rational::from_int(n))
}

/// All `J(0, beta, n)` values certifiable from the series window.
pub fn extract_j0_range(
    pt: &Series,
    class: &CurveClass,
    mode: SignMode,
) -> Result<Vec<(i64, Rational)>> {
    check_irreducible(pt.monoid(), class)?;
    let n_max = pt.window().q_max().min(-pt.window().q_min());
    let mut out = Vec::new();
    for n in 1..=n_max.max(0) {
        out.push((n, extract_j0(pt, class, n, mode)?));
    }
    Ok(out)
}

fn certified_coefficient(pt: &Series, class: &CurveClass, q: i64) -> Result<Rational> {
    pt.coefficient(class, q).map_err(|e| match e {
        Error::WindowViolation(msg) => Error::InsufficientWindow(msg),
        other => other,
    })
}

fn check_irreducible(monoid: &Arc<ClassMonoid>, class: &CurveClass) -> Result<()> {
    if class.len() != monoid.rank() {
        return Err(Error::MonoidError(format!(
            "class {class} has wrong rank for the monoid"
        )));
    }
    if !class.is_effective() || monoid.degree(class)? != 1 {
        return Err(Error::NotIrreducible(format!(
            "class {class} is not a degree-1 effective class"
        )));
    }
    Ok(())
}

/// Exact solution set of the linear system expressing `P_{-n, beta}` (and
/// `P_{0, beta}`) through the `r > 0` invariants, under caller-supplied
/// support bounds `r <= r_max`, `m <= m_max`.
///
/// The system is underdetermined in general: each equation couples one
/// diagonal `m = r + n` of unknowns. This inversion is a utility, not a
/// canonical formula; only the `r = 0` extraction (`extract_j0`) is forced
/// by the two linear formulas.
#[derive(Debug, Clone)]
pub struct JSliceSolution {
    /// Unknown keys (r, m), in sorted order.
    pub unknowns: Vec<(i64, i64)>,
    /// One exact solution (free unknowns set to zero), when consistent.
    pub particular: Option<Vec<Rational>>,
    pub nullspace_dim: usize,
}

pub fn solve_j_r_slices(
    pt: &Series,
    class: &CurveClass,
    r_max: i64,
    m_max: i64,
    mode: SignMode,
) -> Result<JSliceSolution> {
    check_irreducible(pt.monoid(), class)?;
    if r_max < 1 || m_max < 1 {
        return Err(Error::DomainError(
            "support bounds must be at least 1".into(),
        ));
    }
    let mut unknowns = Vec::new();
    for r in 1..=r_max {
        for m in r..=m_max {
            unknowns.push((r, m));
        }
    }
    let index: BTreeMap<(i64, i64), usize> =
        unknowns.iter().enumerate().map(|(i, k)| (*k, i)).collect();

    let mut rows: Vec<Vec<Rational>> = Vec::new();
    let n_limit = (-pt.window().q_min()).max(0);
    for n in 0..=n_limit {
        let Ok(p) = certified_coefficient(pt, class, -n) else { continue };
        let mut row = vec![Rational::zero(); unknowns.len() + 1];
        for r in 1..=r_max {
            let m = r + n;
            if m > m_max {
                continue;
            }
            row[index[&(r, m)]] = Rational::from_int(n + 2 * r);
        }
        // rhs: P / s(n)  (s is +-1, so dividing equals multiplying)
        row[unknowns.len()] = &mode.sign(n) * &p;
        rows.push(row);
    }

    let cols = unknowns.len();
    let rank = row_reduce(&mut rows, cols);
    let consistent = !rows
        .iter()
        .any(|row| row[..cols].iter().all(|e| e.is_zero()) && !row[cols].is_zero());
    let particular = consistent.then(|| {
        let mut x = vec![Rational::zero(); cols];
        for row in &rows {
            if let Some(lead) = row[..cols].iter().position(|e| e.is_one()) {
                x[lead] = row[cols].clone();
            }
        }
        x
    });
    Ok(JSliceSolution { unknowns, particular, nullspace_dim: cols - rank })
}

/// In-place reduced row echelon form of an augmented matrix; returns the
/// rank of the coefficient part.
fn row_reduce(rows: &mut [Vec<Rational>], cols: usize) -> usize {
    let mut rank = 0;
    for col in 0..cols {
        let Some(pivot) = (rank..rows.len()).find(|&r| !rows[r][col].is_zero()) else {
            continue;
        };
        rows.swap(rank, pivot);
        let inv = rows[rank][col].recip().expect("nonzero pivot");
        for e in rows[rank].iter_mut() {
            *e = &*e * &inv;
        }
        for r in 0..rows.len() {
            if r != rank && !rows[r][col].is_zero() {
                let factor = rows[r][col].clone();
                for c in 0..rows[r].len() {
                    let delta = &factor * &rows[rank][c];
                    rows[r][c] = &rows[r][c] - &delta;
                }
            }
        }
        rank += 1;
    }
    rank
}
