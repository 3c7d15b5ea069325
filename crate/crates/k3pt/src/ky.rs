//! The two-variable product expansion generating the signed Euler
//! characteristics of stable-pair moduli on a K3 surface.
//!
//! The expanded series is
//!
//! ```text
//! y/(1+y)^2 * prod_{n>=1} [ (1-q^n)^20 (1+y q^n)^2 (1+y^-1 q^n)^2 ]^(-1)
//! ```
//!
//! whose coefficient of `y^n q^h` is the signed Euler characteristic
//! `c(n,h)`; the plain Euler characteristic is `(-1)^(n-1) c(n,h)`. The
//! prefactor is the rational form of `-(sqrt(-y) - 1/sqrt(-y))^(-2)`:
//! squaring gives `-y - 2 - 1/y = -(1+y)^2/y`, so the negated inverse is
//! `y/(1+y)^2`, expanded as `sum_{j>=1} (-1)^(j-1) j y^j`.
//!
//! Internally the series lives on a rank-1 monoid whose generator carries
//! the q-grading (exponent h, effective and bounded), while the integer
//! exponent axis carries y (a genuine Laurent direction: `y^-1` factors
//! reach exponent `-h` at order `q^h`).

use std::collections::BTreeMap;
use std::sync::Arc;

use num::bigint::BigInt;

use crate::error::{Error, Result};
use crate::monoid::ClassMonoid;
use crate::rational::Rational;
use crate::series::{binomial_series, truncated_product, Series};
use crate::window::Window;

/// Table of signed Euler characteristics `c(n,h)`, covering
/// `0 <= h <= h_max` and `1-h <= n <= n_max`. Entries below `n = 1-h`
/// vanish identically and are never stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KyTable {
    h_max: i64,
    n_max: i64,
    entries: BTreeMap<(i64, i64), BigInt>,
}

impl KyTable {
    pub fn h_max(&self) -> i64 {
        self.h_max
    }

    pub fn n_max(&self) -> i64 {
        self.n_max
    }

    /// Signed coefficient `c(n,h)`. `None` when the table does not cover
    /// the requested pair; zero entries inside the covered region are
    /// certified zeros.
    pub fn coefficient(&self, n: i64, h: i64) -> Option<BigInt> {
        if h < 0 || h > self.h_max || n > self.n_max {
            return None;
        }
        if n < 1 - h {
            return Some(BigInt::from(0));
        }
        Some(self.entries.get(&(h, n)).cloned().unwrap_or_default())
    }

    /// Euler characteristic `chi(n,h) = (-1)^(n-1) c(n,h)`.
    pub fn euler_characteristic(&self, n: i64, h: i64) -> Option<BigInt> {
        self.coefficient(n, h).map(|c| if (n - 1).rem_euclid(2) == 0 { c } else { -c })
    }

    /// Stored nonzero entries, sorted by (h, n).
    pub fn entries(&self) -> impl Iterator<Item = (&(i64, i64), &BigInt)> {
        self.entries.iter()
    }

    pub(crate) fn from_entries(
        h_max: i64,
        n_max: i64,
        entries: BTreeMap<(i64, i64), BigInt>,
    ) -> Result<Self> {
        if h_max < 0 || n_max < 1 {
            return Err(Error::DomainError(format!(
                "table bounds (h_max={h_max}, n_max={n_max}) out of range"
            )));
        }
        for &(h, n) in entries.keys() {
            if h < 0 || h > h_max || n < 1 - h || n > n_max {
                return Err(Error::ParseError(format!(
                    "table entry (n={n}, h={h}) outside the declared coverage"
                )));
            }
        }
        Ok(KyTable { h_max, n_max, entries })
    }
}

fn ky_monoid() -> Arc<ClassMonoid> {
    ClassMonoid::rank1("q")
}

/// Expand the product to the table of `c(n,h)` for `h <= h_max`,
/// `n <= n_max`.
pub fn ky_expand(h_max: i64, n_max: i64) -> Result<KyTable> {
    if h_max < 0 || n_max < 1 {
        return Err(Error::DomainError(format!(
            "ky_expand needs h_max >= 0 and n_max >= 1, got ({h_max}, {n_max})"
        )));
    }
    let monoid = ky_monoid();
    let series = ky_series(&monoid, h_max, n_max)?;

    let mut entries = BTreeMap::new();
    for (key, coeff) in series.terms() {
        let h = key.class.coords()[0];
        let n = key.q;
        // Row support: nothing below n = 1-h survives in the product.
        if n < 1 - h {
            return Err(Error::DomainError(format!(
                "internal: expansion produced a term at (n={n}, h={h}) below the row bound"
            )));
        }
        let value = coeff.to_bigint().ok_or_else(|| {
            Error::DomainError(format!(
                "internal: non-integer coefficient {coeff} at (n={n}, h={h})"
            ))
        })?;
        entries.insert((h, n), value);
    }
    KyTable::from_entries(h_max, n_max, entries)
}

/// The expanded series itself, on the window `degree <= h_max`,
/// `1-h_max <= y-exponent <= n_max`.
fn ky_series(monoid: &Arc<ClassMonoid>, h_max: i64, n_max: i64) -> Result<Series> {
    let gen = monoid.generator_class(0);
    let prefactor_cap = n_max + h_max;
    let work = Window::new(h_max, -h_max, prefactor_cap)?;

    // y/(1+y)^2 = sum_{j>=1} (-1)^(j-1) j y^j, truncated at the cap; the
    // factors below can lower a y-exponent by at most h_max inside the
    // degree budget, so the cap keeps everything needed for y <= n_max.
    let zero_class = monoid.zero_class();
    let prefactor_terms = (1..=prefactor_cap).map(|j| {
        let sign = if (j - 1) % 2 == 0 { 1 } else { -1 };
        (zero_class.clone(), j, Rational::from_int(sign * j))
    });
    let prefactor = Series::new(monoid, work, prefactor_terms)?;

    let factors = (1..=h_max).flat_map(|n| {
        let base = gen.scale(n).expect("small exponent");
        [
            // (1 - q^n)^(-20)
            binomial_series(monoid, &work, &Rational::from_int(-1), &base, 0, -20),
            // (1 + y q^n)^(-2)
            binomial_series(monoid, &work, &Rational::one(), &base, 1, -2),
            // (1 + y^(-1) q^n)^(-2)
            binomial_series(monoid, &work, &Rational::one(), &base, -1, -2),
        ]
    });
    let product = truncated_product(monoid, &work, factors, (3 * h_max) as u64 + 1)?;

    let full = prefactor.mul(&product)?;
    full.fit_to(&Window::new(h_max, 1 - h_max, n_max)?)
}

/// The q^h coefficients of `(1+y)^2 y^-1 *` (the expanded series), evaluated
/// at `y = -1`: multiplying first cancels the prefactor's double pole, after
/// which each q^h row has finite y-support in `[-h, h]` and the substitution
/// is a finite signed row sum.
pub fn goettsche_limit(table: &KyTable) -> Result<Vec<BigInt>> {
    let h_max = table.h_max;
    if table.n_max < h_max + 1 {
        return Err(Error::InsufficientWindow(format!(
            "goettsche limit needs n_max >= h_max + 1, table has n_max = {}",
            table.n_max
        )));
    }
    let monoid = ky_monoid();
    let window = Window::new(h_max, 1 - h_max, table.n_max)?;
    let terms = table.entries.iter().map(|(&(h, n), c)| {
        (
            monoid.generator_class(0).scale(h).expect("small exponent"),
            n,
            Rational::from_bigint(c.clone()),
        )
    });
    let series = Series::new(&monoid, window, terms)?;

    let poly_window = Window::new(h_max, -1, 1)?;
    let zero_class = monoid.zero_class();
    let poly = Series::new_exact(
        &monoid,
        poly_window,
        [
            (zero_class.clone(), -1, Rational::one()),
            (zero_class.clone(), 0, Rational::from_int(2)),
            (zero_class, 1, Rational::one()),
        ],
    )?;
    let cancelled = series.mul(&poly)?;

    let mut out = Vec::with_capacity(h_max as usize + 1);
    for h in 0..=h_max {
        let class = monoid.generator_class(0).scale(h).expect("small exponent");
        // Finite support check: a term outside [-h, h] would mean the pole
        // did not cancel, i.e. an engine bug.
        for (key, _) in cancelled.terms() {
            if key.class == class && (key.q < -h || key.q > h) {
                return Err(Error::DomainError(format!(
                    "internal: residual pole term at (h={h}, y^{})",
                    key.q
                )));
            }
        }
        let mut sum = Rational::zero();
        for y in -h..=h {
            let c = cancelled.coefficient(&class, y)?;
            if y.rem_euclid(2) == 0 {
                sum += &c;
            } else {
                sum += &-c;
            }
        }
        out.push(sum.to_bigint().ok_or_else(|| {
            Error::DomainError(format!("internal: non-integer limit coefficient at h={h}"))
        })?);
    }
    Ok(out)
}

/// Expand and take the limit in one step.
pub fn ky_goettsche_check(h_max: i64) -> Result<Vec<BigInt>> {
    if h_max < 0 {
        return Err(Error::DomainError(format!("h_max {h_max} is negative")));
    }
    let table = ky_expand(h_max, h_max + 1)?;
    goettsche_limit(&table)
}
