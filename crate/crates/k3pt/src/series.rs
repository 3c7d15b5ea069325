//! Sparse, exactly truncated Laurent series in q with formal curve-class
//! variables, over arbitrary-precision rationals.
//!
//! A `Series` stores a finite term map together with the window on which its
//! values are certified exact. Three certification levels exist:
//!
//! - `WindowOnly`: values are exact inside the window; outside it the
//!   underlying series is unknown, except that `q_min` is a hard floor
//!   (nothing lives below it).
//! - `DegreeComplete`: for every class of degree <= the window's degree
//!   bound, the stored terms are the whole q-support. The q range of the
//!   window is bookkeeping only.
//! - `Exact`: the stored terms are the entire series.
//!
//! Every operation computes the largest output window on which the retained
//! coefficients equal the coefficients of the untruncated operation, given
//! the inputs' certification. No coefficient is ever retained approximately.
//!
//! Invariants:
//! - no stored zero coefficients;
//! - every stored key lies inside the window;
//! - every stored class is effective and matches the monoid rank.

use std::collections::BTreeMap;
use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::monoid::{ClassMonoid, CurveClass};
use crate::rational::Rational;
use crate::window::Window;

/// Key of one stored term: (class coordinates, q exponent), ordered
/// lexicographically so serialization order is canonical.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TermKey {
    pub class: CurveClass,
    pub q: i64,
}

/// How much of the underlying series the stored terms certify.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Exactness {
    WindowOnly,
    DegreeComplete,
    Exact,
}

/// Sparse truncated Laurent series over a class monoid.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    monoid: Arc<ClassMonoid>,
    window: Window,
    exactness: Exactness,
    terms: BTreeMap<TermKey, Rational>,
}

impl Series {
    /// Build a series from a term list. Duplicate keys are summed; zero
    /// coefficients are dropped. Terms outside the window or with
    /// non-effective classes are rejected.
    ///
    /// The result is certified `WindowOnly`: the caller is declaring a
    /// window-complete view of a series that may continue beyond it.
    pub fn new<I>(monoid: &Arc<ClassMonoid>, window: Window, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (CurveClass, i64, Rational)>,
    {
        Self::build(monoid, window, terms, Exactness::WindowOnly)
    }

    /// Like `new`, but the term list is declared to be the whole series.
    pub fn new_exact<I>(monoid: &Arc<ClassMonoid>, window: Window, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (CurveClass, i64, Rational)>,
    {
        Self::build(monoid, window, terms, Exactness::Exact)
    }

    fn build<I>(
        monoid: &Arc<ClassMonoid>,
        window: Window,
        terms: I,
        exactness: Exactness,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = (CurveClass, i64, Rational)>,
    {
        let mut map: BTreeMap<TermKey, Rational> = BTreeMap::new();
        for (class, q, coeff) in terms {
            if !class.is_effective() {
                return Err(Error::EffectivityError(format!(
                    "class {class} has a negative coordinate"
                )));
            }
            let degree = monoid.degree(&class)?;
            if !window.contains(degree, q) {
                return Err(Error::WindowViolation(format!(
                    "term at (class {class}, q^{q}) lies outside the window"
                )));
            }
            let key = TermKey { class, q };
            match map.get_mut(&key) {
                Some(c) => *c += &coeff,
                None => {
                    map.insert(key, coeff);
                }
            }
        }
        map.retain(|_, c| !c.is_zero());
        Ok(Series { monoid: Arc::clone(monoid), window, exactness, terms: map })
    }

    /// The zero series (exact: nothing beyond what is stored).
    pub fn zero(monoid: &Arc<ClassMonoid>, window: Window) -> Self {
        Series {
            monoid: Arc::clone(monoid),
            window,
            exactness: Exactness::Exact,
            terms: BTreeMap::new(),
        }
    }

    /// The constant series 1. The window must contain (degree 0, q^0).
    pub fn one(monoid: &Arc<ClassMonoid>, window: Window) -> Result<Self> {
        if !window.contains(0, 0) {
            return Err(Error::WindowViolation(
                "window does not contain the constant term q^0".into(),
            ));
        }
        let key = TermKey { class: monoid.zero_class(), q: 0 };
        let mut terms = BTreeMap::new();
        terms.insert(key, Rational::one());
        Ok(Series {
            monoid: Arc::clone(monoid),
            window,
            exactness: Exactness::Exact,
            terms,
        })
    }

    /// A single term `coeff * q^q_exp * t^class`, exact.
    pub fn monomial(
        monoid: &Arc<ClassMonoid>,
        window: Window,
        class: CurveClass,
        q_exp: i64,
        coeff: Rational,
    ) -> Result<Self> {
        Self::new_exact(monoid, window, [(class, q_exp, coeff)])
    }

    pub fn monoid(&self) -> &Arc<ClassMonoid> {
        &self.monoid
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn exactness(&self) -> Exactness {
        self.exactness
    }

    pub fn terms(&self) -> impl Iterator<Item = (&TermKey, &Rational)> {
        self.terms.iter()
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Smallest stored q exponent, if any term is stored.
    pub fn stored_q_min(&self) -> Option<i64> {
        self.terms.keys().map(|k| k.q).min()
    }

    /// Largest stored q exponent, if any term is stored.
    pub fn stored_q_max(&self) -> Option<i64> {
        self.terms.keys().map(|k| k.q).max()
    }

    /// Exact coefficient of `q^q t^class`, or an error when the requested
    /// key lies outside the certified region (unknown is not zero).
    pub fn coefficient(&self, class: &CurveClass, q: i64) -> Result<Rational> {
        if class.len() != self.monoid.rank() {
            return Err(Error::MonoidError(format!(
                "class {class} has wrong rank for this monoid"
            )));
        }
        let certified = match self.exactness {
            Exactness::Exact => true,
            Exactness::DegreeComplete => {
                class.is_effective() && self.monoid.degree(class)? <= self.window.degree_max()
            }
            Exactness::WindowOnly => {
                class.is_effective() && self.window.contains(self.monoid.degree(class)?, q)
            }
        };
        if !certified && class.is_effective() {
            return Err(Error::WindowViolation(format!(
                "coefficient at (class {class}, q^{q}) is outside the certified window"
            )));
        }
        if !class.is_effective() {
            // Only effective classes carry terms.
            return Ok(Rational::zero());
        }
        Ok(self
            .terms
            .get(&TermKey { class: class.clone(), q })
            .cloned()
            .unwrap_or_else(Rational::zero))
    }

    fn check_monoid(&self, other: &Series) -> Result<()> {
        if self.monoid != other.monoid {
            return Err(Error::MonoidError(
                "operands declared over different monoids".into(),
            ));
        }
        Ok(())
    }

    /// Coefficientwise sum on the intersection of the windows.
    pub fn add(&self, other: &Series) -> Result<Series> {
        self.check_monoid(other)?;
        let window = self.window.intersect(&other.window)?;
        let mut terms = BTreeMap::new();
        let mut dropped = false;
        let mut degrees: HashMap<CurveClass, i64> = HashMap::new();
        for (key, coeff) in self.terms.iter().chain(other.terms.iter()) {
            let deg = cached_degree(&self.monoid, &mut degrees, &key.class)?;
            if !window.contains(deg, key.q) {
                dropped = true;
                continue;
            }
            match terms.get_mut(key) {
                Some(c) => {
                    let c: &mut Rational = c;
                    *c += coeff;
                }
                None => {
                    terms.insert(key.clone(), coeff.clone());
                }
            }
        }
        terms.retain(|_, c| !c.is_zero());
        let exactness = if dropped {
            Exactness::WindowOnly
        } else {
            self.exactness.min(other.exactness)
        };
        Ok(Series { monoid: Arc::clone(&self.monoid), window, exactness, terms })
    }

    pub fn negate(&self) -> Series {
        let terms = self.terms.iter().map(|(k, c)| (k.clone(), -c)).collect();
        Series {
            monoid: Arc::clone(&self.monoid),
            window: self.window,
            exactness: self.exactness,
            terms,
        }
    }

    pub fn sub(&self, other: &Series) -> Result<Series> {
        self.add(&other.negate())
    }

    pub fn scalar_mul(&self, scalar: &Rational) -> Series {
        if scalar.is_zero() {
            return Series {
                monoid: Arc::clone(&self.monoid),
                window: self.window,
                exactness: self.exactness,
                terms: BTreeMap::new(),
            };
        }
        let terms = self.terms.iter().map(|(k, c)| (k.clone(), c * scalar)).collect();
        Series {
            monoid: Arc::clone(&self.monoid),
            window: self.window,
            exactness: self.exactness,
            terms,
        }
    }

    /// Exact convolution. The output window is the largest one on which all
    /// retained coefficients are certified:
    ///
    /// - degree bound: min of the two degree bounds;
    /// - if both factors are degree-complete or exact, the q range is the
    ///   hull of the possible products;
    /// - otherwise a window-only factor may hide terms above its `q_max`,
    ///   which can pair with the other factor's lowest possible exponent, so
    ///   the output `q_max` shrinks to `q_max(a) + lowest(b)` (and
    ///   symmetrically), where `lowest` is the smallest stored exponent or,
    ///   for a window-only factor, at most its `q_max + 1` (its own unknown
    ///   region). The output `q_min` is the sum of the hard floors.
    pub fn mul(&self, other: &Series) -> Result<Series> {
        self.check_monoid(other)?;
        let degree_max = self.window.degree_max().min(other.window.degree_max());
        let hull_min = sat_add(self.window.q_min(), other.window.q_min());
        let hull_max = sat_add(self.window.q_max(), other.window.q_max());

        let both_complete = self.exactness >= Exactness::DegreeComplete
            && other.exactness >= Exactness::DegreeComplete;
        let (q_min, q_max) = if both_complete {
            (hull_min, hull_max)
        } else {
            let mut q_max = hull_max;
            if self.exactness == Exactness::WindowOnly {
                q_max = q_max.min(sat_add(self.window.q_max(), lowest_partner(other)));
            }
            if other.exactness == Exactness::WindowOnly {
                q_max = q_max.min(sat_add(other.window.q_max(), lowest_partner(self)));
            }
            (hull_min, q_max)
        };
        if q_max < q_min {
            return Err(Error::WindowViolation(format!(
                "product window is empty (q range [{q_min}, {q_max}])"
            )));
        }
        let window = Window::new(degree_max, q_min, q_max)?;

        let mut degrees: HashMap<CurveClass, i64> = HashMap::new();
        let mut dropped_degree = false;
        let mut terms: BTreeMap<TermKey, Rational> = BTreeMap::new();
        for (ka, ca) in &self.terms {
            let da = cached_degree(&self.monoid, &mut degrees, &ka.class)?;
            if da > degree_max {
                dropped_degree = true;
                continue;
            }
            for (kb, cb) in &other.terms {
                let db = cached_degree(&self.monoid, &mut degrees, &kb.class)?;
                let deg = da + db;
                if deg > degree_max {
                    dropped_degree = true;
                    continue;
                }
                let q = ka
                    .q
                    .checked_add(kb.q)
                    .ok_or_else(|| Error::DomainError("q exponent overflow".into()))?;
                if q < q_min || q > q_max {
                    continue;
                }
                let class = ka.class.add(&kb.class)?;
                let coeff = ca * cb;
                let key = TermKey { class, q };
                match terms.get_mut(&key) {
                    Some(c) => *c += &coeff,
                    None => {
                        terms.insert(key, coeff);
                    }
                }
            }
        }
        terms.retain(|_, c| !c.is_zero());

        let exactness = if both_complete {
            if self.exactness == Exactness::Exact
                && other.exactness == Exactness::Exact
                && !dropped_degree
            {
                Exactness::Exact
            } else {
                Exactness::DegreeComplete
            }
        } else {
            Exactness::WindowOnly
        };
        Ok(Series { monoid: Arc::clone(&self.monoid), window, exactness, terms })
    }

    /// Restrict to the intersection with `window`, dropping terms outside.
    /// Dropping any term demotes the certification to window-only.
    pub fn restrict(&self, window: &Window) -> Result<Series> {
        let target = self.window.intersect(window)?;
        let mut degrees = HashMap::new();
        let mut dropped_q = false;
        let mut dropped_deg = false;
        let mut terms = BTreeMap::new();
        for (key, coeff) in &self.terms {
            let deg = cached_degree(&self.monoid, &mut degrees, &key.class)?;
            if deg > target.degree_max() {
                dropped_deg = true;
            } else if key.q < target.q_min() || key.q > target.q_max() {
                dropped_q = true;
            } else {
                terms.insert(key.clone(), coeff.clone());
            }
        }
        let exactness = match (self.exactness, dropped_deg, dropped_q) {
            (e, false, false) => e,
            (Exactness::Exact, true, false) => Exactness::DegreeComplete,
            _ => Exactness::WindowOnly,
        };
        Ok(Series { monoid: Arc::clone(&self.monoid), window: target, exactness, terms })
    }

    /// Re-window to exactly `window`, widening where the certification
    /// allows it and restricting elsewhere.
    ///
    /// Widening below `q_min` is always sound (the floor certifies zeros),
    /// widening above `q_max` needs degree-completeness, and raising the
    /// degree bound needs exactness.
    pub fn fit_to(&self, window: &Window) -> Result<Series> {
        if window.q_max() > self.window.q_max() && self.exactness < Exactness::DegreeComplete {
            return Err(Error::InsufficientWindow(format!(
                "cannot certify q exponents above {} (requested {})",
                self.window.q_max(),
                window.q_max()
            )));
        }
        if window.degree_max() > self.window.degree_max() && self.exactness < Exactness::Exact {
            return Err(Error::InsufficientWindow(format!(
                "cannot certify degrees above {} (requested {})",
                self.window.degree_max(),
                window.degree_max()
            )));
        }
        let mut degrees = HashMap::new();
        let mut dropped_q = false;
        let mut dropped_deg = false;
        let mut terms = BTreeMap::new();
        for (key, coeff) in &self.terms {
            let deg = cached_degree(&self.monoid, &mut degrees, &key.class)?;
            if deg > window.degree_max() {
                dropped_deg = true;
            } else if key.q < window.q_min() || key.q > window.q_max() {
                dropped_q = true;
            } else {
                terms.insert(key.clone(), coeff.clone());
            }
        }
        let exactness = match (self.exactness, dropped_deg, dropped_q) {
            (e, false, false) => e,
            (Exactness::Exact, true, false) => Exactness::DegreeComplete,
            _ => Exactness::WindowOnly,
        };
        Ok(Series { monoid: Arc::clone(&self.monoid), window: *window, exactness, terms })
    }

    /// The non-constant part together with a check that the constant term
    /// equals 1.
    fn unit_tail(&self) -> Result<BTreeMap<TermKey, Rational>> {
        let const_key = TermKey { class: self.monoid.zero_class(), q: 0 };
        if !self.window.contains(0, 0) {
            return Err(Error::NotAUnit(
                "window does not contain the constant term".into(),
            ));
        }
        match self.terms.get(&const_key) {
            Some(c) if c.is_one() => {}
            other => {
                return Err(Error::NotAUnit(format!(
                    "constant term is {}",
                    other.map(|c| c.to_string()).unwrap_or_else(|| "0".into())
                )))
            }
        }
        let mut tail = self.terms.clone();
        tail.remove(&const_key);
        Ok(tail)
    }

    /// Multiplicative inverse of a unit series. Requires constant term 1
    /// and every other term of class degree >= 1 or q exponent >= 1, the
    /// condition that makes the geometric series die inside the window.
    pub fn inverse(&self) -> Result<Series> {
        let tail = self.unit_tail()?;
        let mut degrees = HashMap::new();
        let mut has_degree_zero = false;
        for key in tail.keys() {
            let deg = cached_degree(&self.monoid, &mut degrees, &key.class)?;
            if deg == 0 {
                has_degree_zero = true;
            }
            if deg < 1 && key.q < 1 {
                return Err(Error::NonNilpotentTail(format!(
                    "term at (class {}, q^{}) has degree 0 and q exponent < 1",
                    key.class, key.q
                )));
            }
        }
        let ctx = self.power_context(&tail, has_degree_zero)?;
        // 1/(1+u) = sum_k (-u)^k
        let mut acc = ctx.one_terms(&self.monoid);
        let mut power = ctx.one_terms(&self.monoid);
        let sign_u: BTreeMap<TermKey, Rational> =
            tail.iter().map(|(k, c)| (k.clone(), -c)).collect();
        for _ in 1..=ctx.k_cap {
            power = convolve(&self.monoid, &ctx.work, &power, &sign_u)?;
            if power.is_empty() {
                break;
            }
            accumulate(&mut acc, &power, &Rational::one());
        }
        ctx.finish(&self.monoid, acc)
    }

    /// Exponential of a series all of whose terms have class degree >= 1,
    /// so that powers beyond the degree bound vanish.
    pub fn exp(&self) -> Result<Series> {
        let mut degrees = HashMap::new();
        for key in self.terms.keys() {
            let deg = cached_degree(&self.monoid, &mut degrees, &key.class)?;
            if deg < 1 {
                return Err(Error::NonNilpotentTail(format!(
                    "exp argument has a degree-0 term at (class {}, q^{})",
                    key.class, key.q
                )));
            }
        }
        if !self.window.contains(0, 0) {
            return Err(Error::WindowViolation(
                "exp needs the constant term q^0 inside the window".into(),
            ));
        }
        let ctx = self.power_context(&self.terms, false)?;
        let mut acc = ctx.one_terms(&self.monoid);
        let mut power = ctx.one_terms(&self.monoid);
        let mut factorial = Rational::one();
        for k in 1..=ctx.k_cap {
            power = convolve(&self.monoid, &ctx.work, &power, &self.terms)?;
            if power.is_empty() {
                break;
            }
            factorial = factorial.scale(k as i64);
            accumulate(&mut acc, &power, &factorial.recip()?);
        }
        ctx.finish(&self.monoid, acc)
    }

    /// Logarithm of a unit series (same preconditions as `inverse`).
    pub fn log(&self) -> Result<Series> {
        let tail = self.unit_tail()?;
        let mut degrees = HashMap::new();
        let mut has_degree_zero = false;
        for key in tail.keys() {
            let deg = cached_degree(&self.monoid, &mut degrees, &key.class)?;
            if deg == 0 {
                has_degree_zero = true;
            }
            if deg < 1 && key.q < 1 {
                return Err(Error::NonNilpotentTail(format!(
                    "term at (class {}, q^{}) has degree 0 and q exponent < 1",
                    key.class, key.q
                )));
            }
        }
        let ctx = self.power_context(&tail, has_degree_zero)?;
        // log(1+u) = sum_k (-1)^(k-1) u^k / k
        let mut acc: BTreeMap<TermKey, Rational> = BTreeMap::new();
        let mut power = ctx.one_terms(&self.monoid);
        for k in 1..=ctx.k_cap {
            power = convolve(&self.monoid, &ctx.work, &power, &tail)?;
            if power.is_empty() {
                break;
            }
            let sign = if k % 2 == 1 { 1 } else { -1 };
            let scale = Rational::new(sign, k as i64)?;
            accumulate(&mut acc, &power, &scale);
        }
        ctx.finish(&self.monoid, acc)
    }

    /// Integer power by binary exponentiation; negative exponents go through
    /// `inverse` and therefore require a unit.
    pub fn pow_int(&self, exponent: i64) -> Result<Series> {
        if exponent == 0 {
            return Series::one(&self.monoid, self.window);
        }
        if exponent < 0 {
            let positive = exponent
                .checked_neg()
                .ok_or_else(|| Error::DomainError("exponent overflow".into()))?;
            return self.inverse()?.pow_int(positive);
        }
        let mut result: Option<Series> = None;
        let mut base = self.clone();
        let mut e = exponent;
        loop {
            if e & 1 == 1 {
                result = Some(match result {
                    Some(r) => r.mul(&base)?,
                    None => base.clone(),
                });
            }
            e >>= 1;
            if e == 0 {
                break;
            }
            base = base.mul(&base)?;
        }
        Ok(result.expect("exponent > 0"))
    }

    /// Shared setup for the power-sum expansions (`inverse`, `exp`, `log`).
    ///
    /// `work` is an enlarged window in which partial products are kept so
    /// that terms temporarily above the result window (reachable again by
    /// negative-q factors, which all carry degree >= 1) are not lost; every
    /// sub-product of a term that ends inside the result window stays inside
    /// `work`, so nothing certified is dropped prematurely.
    fn power_context(
        &self,
        tail: &BTreeMap<TermKey, Rational>,
        tail_has_degree_zero: bool,
    ) -> Result<PowerContext> {
        let d = self.window.degree_max();
        let tail_min_q = tail.keys().map(|k| k.q).min().unwrap_or(0);
        let tail_max_q = tail.keys().map(|k| k.q).max().unwrap_or(0);
        let m0 = tail_min_q.min(0);
        let complete = self.exactness >= Exactness::DegreeComplete && !tail_has_degree_zero;
        if complete {
            let lo = self.window.q_min().min(sat_mul(d, m0)).min(0);
            let hi = self.window.q_max().max(sat_mul(d, tail_max_q.max(0))).max(0);
            let work = Window::new(d, lo, hi)?;
            Ok(PowerContext {
                work,
                result: work,
                exactness: Exactness::DegreeComplete,
                k_cap: d.max(0) as u64,
            })
        } else {
            let descent = sat_mul(d, m0);
            let res_hi = sat_add(self.window.q_max(), descent);
            let res_lo = self.window.q_min().min(descent);
            if res_hi < 0 || res_lo > 0 {
                return Err(Error::InsufficientWindow(format!(
                    "result window [{res_lo}, {res_hi}] cannot hold the constant term"
                )));
            }
            let result = Window::new(d, res_lo, res_hi)?;
            let work = Window::new(d, res_lo, self.window.q_max())?;
            let k_cap = (d + (self.window.q_max() - descent).max(0)).max(1) as u64 + 1;
            Ok(PowerContext {
                work,
                result,
                exactness: Exactness::WindowOnly,
                k_cap,
            })
        }
    }

    /// Push a coefficient map through `map`: see `pushforward::pushforward`.
    pub fn raw_terms(&self) -> &BTreeMap<TermKey, Rational> {
        &self.terms
    }

    pub(crate) fn from_parts(
        monoid: Arc<ClassMonoid>,
        window: Window,
        exactness: Exactness,
        terms: BTreeMap<TermKey, Rational>,
    ) -> Self {
        Series { monoid, window, exactness, terms }
    }
}

struct PowerContext {
    work: Window,
    result: Window,
    exactness: Exactness,
    k_cap: u64,
}

impl PowerContext {
    fn one_terms(&self, monoid: &Arc<ClassMonoid>) -> BTreeMap<TermKey, Rational> {
        let mut terms = BTreeMap::new();
        terms.insert(TermKey { class: monoid.zero_class(), q: 0 }, Rational::one());
        terms
    }

    fn finish(
        &self,
        monoid: &Arc<ClassMonoid>,
        mut acc: BTreeMap<TermKey, Rational>,
    ) -> Result<Series> {
        acc.retain(|_, c| !c.is_zero());
        let mut terms = BTreeMap::new();
        let mut degrees = HashMap::new();
        for (key, coeff) in acc {
            let deg = cached_degree(monoid, &mut degrees, &key.class)?;
            if self.result.contains(deg, key.q) {
                terms.insert(key, coeff);
            }
        }
        Ok(Series {
            monoid: Arc::clone(monoid),
            window: self.result,
            exactness: self.exactness,
            terms,
        })
    }
}

/// Lowest q exponent the partner factor can contribute: its smallest stored
/// exponent, and additionally `q_max + 1` (start of its unknown region) when
/// it is only window-certified.
fn lowest_partner(s: &Series) -> i64 {
    let stored = s.stored_q_min().unwrap_or(i64::MAX);
    if s.exactness == Exactness::WindowOnly {
        stored.min(sat_add(s.window.q_max(), 1))
    } else {
        stored
    }
}

fn sat_add(a: i64, b: i64) -> i64 {
    a.saturating_add(b)
}

fn sat_mul(a: i64, b: i64) -> i64 {
    a.saturating_mul(b)
}

fn cached_degree(
    monoid: &Arc<ClassMonoid>,
    cache: &mut HashMap<CurveClass, i64>,
    class: &CurveClass,
) -> Result<i64> {
    if let Some(d) = cache.get(class) {
        return Ok(*d);
    }
    let d = monoid.degree(class)?;
    cache.insert(class.clone(), d);
    Ok(d)
}

/// Convolution of two raw term maps, keeping only products inside `window`.
fn convolve(
    monoid: &Arc<ClassMonoid>,
    window: &Window,
    a: &BTreeMap<TermKey, Rational>,
    b: &BTreeMap<TermKey, Rational>,
) -> Result<BTreeMap<TermKey, Rational>> {
    let mut degrees = HashMap::new();
    let mut out: BTreeMap<TermKey, Rational> = BTreeMap::new();
    for (ka, ca) in a {
        let da = cached_degree(monoid, &mut degrees, &ka.class)?;
        for (kb, cb) in b {
            let db = cached_degree(monoid, &mut degrees, &kb.class)?;
            if da + db > window.degree_max() {
                continue;
            }
            let q = ka
                .q
                .checked_add(kb.q)
                .ok_or_else(|| Error::DomainError("q exponent overflow".into()))?;
            if q < window.q_min() || q > window.q_max() {
                continue;
            }
            let key = TermKey { class: ka.class.add(&kb.class)?, q };
            let coeff = ca * cb;
            match out.get_mut(&key) {
                Some(c) => *c += &coeff,
                None => {
                    out.insert(key, coeff);
                }
            }
        }
    }
    out.retain(|_, c| !c.is_zero());
    Ok(out)
}

fn accumulate(
    acc: &mut BTreeMap<TermKey, Rational>,
    power: &BTreeMap<TermKey, Rational>,
    scale: &Rational,
) {
    for (key, coeff) in power {
        let contribution = coeff * scale;
        match acc.get_mut(key) {
            Some(c) => *c += &contribution,
            None => {
                acc.insert(key.clone(), contribution);
            }
        }
    }
}

/// Exact finite product of a factor sequence on `window`.
///
/// The caller guarantees, by construction of the iterator, that all factors
/// beyond its end are identically 1 on the window; `max_factors` is the
/// caller's termination bound, and exceeding it means the bound was wrong.
pub fn truncated_product<I>(
    monoid: &Arc<ClassMonoid>,
    window: &Window,
    factors: I,
    max_factors: u64,
) -> Result<Series>
where
    I: IntoIterator<Item = Result<Series>>,
{
    let mut acc = Series::one(monoid, *window)?;
    let mut count: u64 = 0;
    for factor in factors {
        count += 1;
        if count > max_factors {
            return Err(Error::NonTerminatingProduct(format!(
                "factor sequence exceeded the declared bound of {max_factors}"
            )));
        }
        acc = acc.mul(&factor?)?;
    }
    acc.fit_to(window)
}

/// The truncation of `(1 + coeff * q^q_exp * t^class)^exponent` on `window`.
///
/// The class must have degree >= 1, which bounds the expansion. Negative
/// exponents expand through the generalized binomial coefficients.
#[allow(clippy::too_many_arguments)]
pub fn binomial_series(
    monoid: &Arc<ClassMonoid>,
    window: &Window,
    coeff: &Rational,
    class: &CurveClass,
    q_exp: i64,
    exponent: i64,
) -> Result<Series> {
    if !class.is_effective() || class.is_zero() {
        return Err(Error::EffectivityError(format!(
            "binomial base class {class} must be effective and nonzero"
        )));
    }
    let degree = monoid.degree(class)?;
    let mut terms = Vec::new();
    let mut binom = Rational::one();
    let mut power = Rational::one();
    let mut dropped_degree = false;
    let mut dropped_q = false;
    let mut j: i64 = 0;
    loop {
        if exponent >= 0 && j > exponent {
            break;
        }
        let deg_j = match degree.checked_mul(j) {
            Some(d) => d,
            None => {
                dropped_degree = true;
                break;
            }
        };
        if deg_j > window.degree_max() {
            dropped_degree = true;
            break;
        }
        let q_j = q_exp
            .checked_mul(j)
            .ok_or_else(|| Error::DomainError("q exponent overflow".into()))?;
        if q_j >= window.q_min() && q_j <= window.q_max() {
            let c = &binom * &power;
            if !c.is_zero() {
                terms.push((class.scale(j)?, q_j, c));
            }
        } else if !binom.is_zero() {
            dropped_q = true;
        }
        // next binomial coefficient: C(e, j+1) = C(e, j) * (e - j) / (j + 1)
        binom = &binom.scale(exponent - j) / &Rational::from_int(j + 1);
        power = &power * coeff;
        j += 1;
    }
    let exactness = match (dropped_degree, dropped_q) {
        (false, false) => Exactness::Exact,
        (true, false) => Exactness::DegreeComplete,
        _ => Exactness::WindowOnly,
    };
    Series::build(monoid, *window, terms, exactness)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(n: i64) -> Rational {
        Rational::from_int(n)
    }

    fn monoid1() -> Arc<ClassMonoid> {
        ClassMonoid::rank1("t")
    }

    fn monoid2() -> Arc<ClassMonoid> {
        ClassMonoid::new(vec!["t".into(), "u".into()], vec![1, 2]).unwrap()
    }

    fn cls(coords: &[i64]) -> CurveClass {
        CurveClass::new(coords.to_vec())
    }

    /// Quadratic double-loop convolution over raw term lists, the oracle
    /// `mul` must agree with on every in-window key.
    fn brute_convolution(
        monoid: &Arc<ClassMonoid>,
        a: &Series,
        b: &Series,
        keys: impl Iterator<Item = (CurveClass, i64)>,
    ) -> Vec<((CurveClass, i64), Rational)> {
        let mut out = Vec::new();
        for (class, q) in keys {
            let mut sum = Rational::zero();
            for (ka, ca) in a.terms() {
                for (kb, cb) in b.terms() {
                    if ka.q + kb.q == q && ka.class.add(&kb.class).unwrap() == class {
                        sum += &(ca * cb);
                    }
                }
            }
            let _ = monoid;
            out.push(((class, q), sum));
        }
        out
    }

    #[test]
    fn make_constructor_echo() {
        let m = monoid1();
        let w = Window::new(2, 0, 3).unwrap();
        let s = Series::new(&m, w, [(cls(&[1]), 1, rat(5))]).unwrap();
        assert_eq!(s.coefficient(&cls(&[1]), 1).unwrap(), rat(5));
        assert_eq!(s.term_count(), 1);
    }

    #[test]
    fn make_sums_duplicates() {
        let m = monoid1();
        let w = Window::new(2, 0, 3).unwrap();
        let s = Series::new(&m, w, [(cls(&[1]), 1, rat(2)), (cls(&[1]), 1, rat(3))]).unwrap();
        assert_eq!(s.coefficient(&cls(&[1]), 1).unwrap(), rat(5));
        assert_eq!(s.term_count(), 1);
    }

    #[test]
    fn make_rejects_window_violation_and_noneffective() {
        let m = monoid1();
        let w = Window::new(2, 0, 3).unwrap();
        assert!(matches!(
            Series::new(&m, w, [(cls(&[3]), 1, rat(1))]),
            Err(Error::WindowViolation(_))
        ));
        assert!(matches!(
            Series::new(&m, w, [(cls(&[-1]), 1, rat(1))]),
            Err(Error::EffectivityError(_))
        ));
    }

    #[test]
    fn add_cancellation_and_windows() {
        let m = monoid1();
        let wa = Window::new(2, 0, 3).unwrap();
        let wb = Window::new(2, 1, 5).unwrap();
        let a = Series::new(&m, wa, [(cls(&[0]), 1, rat(1))]).unwrap();
        let b = Series::new(&m, wb, [(cls(&[0]), 1, rat(-1))]).unwrap();
        let sum = a.add(&b).unwrap();
        assert!(sum.is_zero());
        assert_eq!(*sum.window(), Window::new(2, 1, 3).unwrap());

        let c = Series::new(&m, wa, [(cls(&[1]), 1, rat(2))]).unwrap();
        let d = Series::new(&m, wa, [(cls(&[1]), 1, rat(3))]).unwrap();
        assert_eq!(c.add(&d).unwrap().coefficient(&cls(&[1]), 1).unwrap(), rat(5));
    }

    #[test]
    fn add_rejects_monoid_mismatch() {
        let a = Series::new(&monoid1(), Window::new(1, 0, 1).unwrap(), []).unwrap();
        let b = Series::new(&monoid2(), Window::new(1, 0, 1).unwrap(), []).unwrap();
        assert!(matches!(a.add(&b), Err(Error::MonoidError(_))));
    }

    #[test]
    fn mul_difference_of_squares() {
        let m = monoid1();
        let w = Window::new(2, 0, 4).unwrap();
        let one = (cls(&[0]), 0, rat(1));
        let a = Series::new(&m, w, [one.clone(), (cls(&[1]), 1, rat(1))]).unwrap();
        let b = Series::new(&m, w, [one, (cls(&[1]), 1, rat(-1))]).unwrap();
        let p = a.mul(&b).unwrap();
        assert_eq!(p.coefficient(&cls(&[0]), 0).unwrap(), rat(1));
        assert_eq!(p.coefficient(&cls(&[1]), 1).unwrap(), rat(0));
        assert_eq!(p.coefficient(&cls(&[2]), 2).unwrap(), rat(-1));
        assert_eq!(p.term_count(), 2);
    }

    #[test]
    fn mul_by_one_is_identity() {
        let m = monoid1();
        let w = Window::new(3, 0, 5).unwrap();
        let a = Series::new(
            &m,
            w,
            [(cls(&[0]), 0, rat(1)), (cls(&[2]), 3, rat(-7)), (cls(&[1]), 5, rat(2))],
        )
        .unwrap();
        let one = Series::new(&m, w, [(cls(&[0]), 0, rat(1))]).unwrap();
        let p = a.mul(&one).unwrap();
        assert_eq!(p.raw_terms(), a.raw_terms());
        assert_eq!(p.window(), a.window());
    }

    #[test]
    fn mul_matches_brute_convolution() {
        let m = monoid2();
        let w = Window::new(4, -2, 6).unwrap();
        let a = Series::new(
            &m,
            w,
            [
                (cls(&[0, 0]), 0, rat(1)),
                (cls(&[1, 0]), -1, rat(3)),
                (cls(&[0, 1]), 2, Rational::new(1, 2).unwrap()),
                (cls(&[2, 0]), 4, rat(-2)),
            ],
        )
        .unwrap();
        let b = Series::new(
            &m,
            w,
            [
                (cls(&[0, 0]), 1, rat(-1)),
                (cls(&[1, 1]), 0, rat(5)),
                (cls(&[1, 0]), -2, Rational::new(2, 3).unwrap()),
            ],
        )
        .unwrap();
        let p = a.mul(&b).unwrap();
        let keys = m
            .effective_classes_up_to(p.window().degree_max())
            .into_iter()
            .flat_map(|c| {
                (p.window().q_min()..=p.window().q_max()).map(move |q| (c.clone(), q))
            });
        for ((class, q), expected) in brute_convolution(&m, &a, &b, keys) {
            assert_eq!(p.coefficient(&class, q).unwrap(), expected, "at ({class}, {q})");
        }
    }

    #[test]
    fn mul_window_shrinks_for_negative_exponent_factors() {
        // a = 1 + q^-3 t (window-certified): its unknown region above q_max
        // can pair with the partner's q^-3 term, so the product's certified
        // top drops by 3.
        let m = monoid1();
        let w = Window::new(2, -5, 5).unwrap();
        let a = Series::new(&m, w, [(cls(&[0]), 0, rat(1)), (cls(&[1]), -3, rat(1))]).unwrap();
        let p = a.mul(&a).unwrap();
        assert_eq!(p.window().q_max(), 2);
        assert_eq!(p.window().q_min(), -10);
        assert_eq!(p.coefficient(&cls(&[2]), -6).unwrap(), rat(1));
        assert_eq!(p.coefficient(&cls(&[1]), -3).unwrap(), rat(2));
    }

    #[test]
    fn inverse_geometric_series() {
        let m = monoid1();
        let w = Window::new(4, 0, 6).unwrap();
        // 1 - q t
        let a = Series::new(&m, w, [(cls(&[0]), 0, rat(1)), (cls(&[1]), 1, rat(-1))]).unwrap();
        let inv = a.inverse().unwrap();
        for k in 0..=4 {
            assert_eq!(inv.coefficient(&cls(&[k]), k).unwrap(), rat(1), "k = {k}");
        }
        let prod = a.mul(&inv).unwrap();
        let one = Series::one(&m, *prod.window()).unwrap();
        assert_eq!(prod.raw_terms(), one.raw_terms());
    }

    #[test]
    fn inverse_alternating_geometric_in_q() {
        let m = monoid1();
        let w = Window::new(1, 0, 5).unwrap();
        // 1 + q
        let a = Series::new(&m, w, [(cls(&[0]), 0, rat(1)), (cls(&[0]), 1, rat(1))]).unwrap();
        let inv = a.inverse().unwrap();
        for k in 0..=5 {
            let expected = if k % 2 == 0 { rat(1) } else { rat(-1) };
            assert_eq!(inv.coefficient(&cls(&[0]), k).unwrap(), expected, "k = {k}");
        }
    }

    #[test]
    fn inverse_rejects_non_units() {
        let m = monoid1();
        let w = Window::new(2, 0, 3).unwrap();
        let two = Series::new(&m, w, [(cls(&[0]), 0, rat(2))]).unwrap();
        assert!(matches!(two.inverse(), Err(Error::NotAUnit(_))));
        let zero = Series::new(&m, w, []).unwrap();
        assert!(matches!(zero.inverse(), Err(Error::NotAUnit(_))));
    }

    #[test]
    fn inverse_rejects_non_nilpotent_tail() {
        let m = monoid1();
        let w = Window::new(2, -2, 3).unwrap();
        // 1 + q^-1: degree 0 with negative exponent cannot terminate.
        let a = Series::new(&m, w, [(cls(&[0]), 0, rat(1)), (cls(&[0]), -1, rat(1))]).unwrap();
        assert!(matches!(a.inverse(), Err(Error::NonNilpotentTail(_))));
    }

    #[test]
    fn inverse_with_negative_exponent_degree_terms() {
        let m = monoid1();
        let w = Window::new(3, -9, 3).unwrap();
        // 1 + q^-2 t, declared exact: the geometric series descends in q
        // and stays fully certified.
        let a =
            Series::new_exact(&m, w, [(cls(&[0]), 0, rat(1)), (cls(&[1]), -2, rat(1))]).unwrap();
        let inv = a.inverse().unwrap();
        for k in 0..=3 {
            let expected = if k % 2 == 0 { rat(1) } else { rat(-1) };
            assert_eq!(inv.coefficient(&cls(&[k]), -2 * k).unwrap(), expected);
        }
        let prod = a.mul(&inv).unwrap();
        for (key, value) in prod.terms() {
            assert!(
                key.class.is_zero() && key.q == 0 && value.is_one(),
                "unexpected residual term"
            );
        }
    }

    #[test]
    fn window_only_negative_tail_inverse_is_refused_honestly() {
        // With a window-certified input, unknown terms above q_max can pair
        // with the q^-2 t tail and land anywhere down to q_max - 3*2, so no
        // rectangle holding the constant term is certifiable.
        let m = monoid1();
        let w = Window::new(3, -9, 3).unwrap();
        let a = Series::new(&m, w, [(cls(&[0]), 0, rat(1)), (cls(&[1]), -2, rat(1))]).unwrap();
        assert!(matches!(a.inverse(), Err(Error::InsufficientWindow(_))));
    }

    #[test]
    fn exp_of_zero_and_nilpotency() {
        let m = monoid1();
        let w = Window::new(3, 0, 5).unwrap();
        let zero = Series::new(&m, w, []).unwrap();
        let e = zero.exp().unwrap();
        assert_eq!(e.coefficient(&cls(&[0]), 0).unwrap(), rat(1));
        assert_eq!(e.term_count(), 1);

        // exp(c q^n t^b) truncated below 2 deg(b): only the linear term.
        let w = Window::new(3, 0, 5).unwrap();
        let mono = Series::monomial(&m, w, cls(&[2]), 1, rat(7)).unwrap();
        let e = mono.exp().unwrap();
        assert_eq!(e.coefficient(&cls(&[0]), 0).unwrap(), rat(1));
        assert_eq!(e.coefficient(&cls(&[2]), 1).unwrap(), rat(7));
        assert_eq!(e.term_count(), 2);
    }

    #[test]
    fn exp_rejects_degree_zero_terms() {
        let m = monoid1();
        let w = Window::new(2, 0, 3).unwrap();
        let a = Series::new(&m, w, [(cls(&[0]), 1, rat(1))]).unwrap();
        assert!(matches!(a.exp(), Err(Error::NonNilpotentTail(_))));
    }

    #[test]
    fn log_exp_roundtrip() {
        let m = monoid2();
        let w = Window::new(4, -3, 6).unwrap();
        let a = Series::new_exact(
            &m,
            w,
            [
                (cls(&[1, 0]), 1, rat(3)),
                (cls(&[0, 1]), -1, Rational::new(-1, 2).unwrap()),
                (cls(&[1, 1]), 2, rat(5)),
            ],
        )
        .unwrap();
        let round = a.exp().unwrap().log().unwrap();
        for (key, value) in a.terms() {
            assert_eq!(&round.coefficient(&key.class, key.q).unwrap(), value);
        }
        for (key, value) in round.terms() {
            assert_eq!(&a.coefficient(&key.class, key.q).unwrap(), value, "extra {key:?}");
        }
    }

    #[test]
    fn pow_int_small_cases() {
        let m = monoid1();
        let w = Window::new(2, 0, 4).unwrap();
        let a = Series::new(&m, w, [(cls(&[0]), 0, rat(1)), (cls(&[1]), 1, rat(1))]).unwrap();
        let sq = a.pow_int(2).unwrap();
        assert_eq!(sq.coefficient(&cls(&[0]), 0).unwrap(), rat(1));
        assert_eq!(sq.coefficient(&cls(&[1]), 1).unwrap(), rat(2));
        assert_eq!(sq.coefficient(&cls(&[2]), 2).unwrap(), rat(1));

        let p0 = a.pow_int(0).unwrap();
        assert_eq!(p0.raw_terms(), Series::one(&m, w).unwrap().raw_terms());

        // pow of exp equals exp of scalar multiple.
        let arg = Series::monomial(&m, w, cls(&[1]), 2, Rational::new(2, 3).unwrap()).unwrap();
        let lhs = arg.exp().unwrap().pow_int(3).unwrap();
        let rhs = arg.scalar_mul(&rat(3)).exp().unwrap();
        assert_eq!(lhs.raw_terms(), rhs.raw_terms());
    }

    #[test]
    fn pow_int_negative_requires_unit() {
        let m = monoid1();
        let w = Window::new(2, 0, 4).unwrap();
        let t = Series::new(&m, w, [(cls(&[1]), 0, rat(1))]).unwrap();
        assert!(matches!(t.pow_int(-1), Err(Error::NotAUnit(_))));
        let unit = Series::new(&m, w, [(cls(&[0]), 0, rat(1)), (cls(&[1]), 1, rat(1))]).unwrap();
        let inv2 = unit.pow_int(-2).unwrap();
        let direct = unit.inverse().unwrap().pow_int(2).unwrap();
        assert_eq!(inv2.raw_terms(), direct.raw_terms());
    }

    /// Independent partition-count oracle by bounded recursion: partitions
    /// of n into parts of size <= m.
    fn partitions(n: i64, m: i64) -> i64 {
        if n == 0 {
            return 1;
        }
        if n < 0 || m == 0 {
            return 0;
        }
        partitions(n, m - 1) + partitions(n - m, m)
    }

    #[test]
    fn product_of_inverse_eta_factors_counts_partitions() {
        // prod_{n>=1} (1 - q^n)^(-1) to q^5: 1,1,2,3,5,7.
        let m = monoid1();
        let w = Window::new(5, 0, 5).unwrap();
        let factors = (1..=5).map(|n| {
            binomial_series(&m, &w, &rat(-1), &cls(&[1]).scale(n).unwrap(), 0, -1)
        });
        let p = truncated_product(&m, &w, factors, 6).unwrap();
        for h in 0..=5 {
            assert_eq!(
                p.coefficient(&cls(&[h]), 0).unwrap(),
                rat(partitions(h, h.max(1))),
                "h = {h}"
            );
        }
    }

    #[test]
    fn empty_product_is_one() {
        let m = monoid1();
        let w = Window::new(3, 0, 3).unwrap();
        let p = truncated_product(&m, &w, std::iter::empty(), 1).unwrap();
        assert_eq!(p.raw_terms(), Series::one(&m, w).unwrap().raw_terms());
    }

    #[test]
    fn product_termination_bound_enforced() {
        let m = monoid1();
        let w = Window::new(2, 0, 2).unwrap();
        let factors = std::iter::repeat_with(move || Series::one(&m, w));
        let m2 = monoid1();
        let err = truncated_product(&m2, &w, factors.take(10), 3).unwrap_err();
        assert!(matches!(err, Error::NonTerminatingProduct(_)));
    }

    #[test]
    fn eta_power_24_expansion() {
        // prod (1-q^n)^(-24) to q^3: 1, 24, 324, 3200.
        let m = monoid1();
        let w = Window::new(3, 0, 3).unwrap();
        let factors = (1..=3).map(|n| {
            binomial_series(&m, &w, &rat(-1), &cls(&[1]).scale(n).unwrap(), 0, -24)
        });
        let p = truncated_product(&m, &w, factors, 4).unwrap();
        let expected = [1, 24, 324, 3200];
        for (h, e) in expected.iter().enumerate() {
            assert_eq!(p.coefficient(&cls(&[h as i64]), 0).unwrap(), rat(*e), "h = {h}");
        }
    }

    #[test]
    fn coefficient_distinguishes_unknown_from_zero() {
        let m = monoid1();
        let w = Window::new(2, 0, 3).unwrap();
        let s = Series::new(&m, w, [(cls(&[1]), 1, rat(5))]).unwrap();
        assert_eq!(s.coefficient(&cls(&[2]), 2).unwrap(), rat(0));
        assert!(matches!(
            s.coefficient(&cls(&[1]), 4),
            Err(Error::WindowViolation(_))
        ));
        assert!(matches!(
            s.coefficient(&cls(&[1]), -1),
            Err(Error::WindowViolation(_))
        ));
    }

    #[test]
    fn send_and_sync() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<Series>();
    }
}
