//! Pushforward of series along a lattice map (the variable change
//! `t^beta -> t^{f(beta)}`).
//!
//! The map may have a kernel, in which case infinitely many effective source
//! classes share one image and only a degree-budget slice of each preimage
//! set is visible inside the source window. A target coefficient is retained
//! only when the visible slice certifiably accounts for the whole sum:
//!
//! - an `Exact` source certifies everything (nothing lives beyond the stored
//!   terms);
//! - otherwise the stored support of the preimage set must stay clear of the
//!   boundary shell, the band of budget degrees within one kernel-generator
//!   step of the degree bound. Support touching the shell means the preimage
//!   tower may continue past the budget, and the key is dropped with a
//!   report instead of being summed silently.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::monoid::{ClassMonoid, CurveClass};
use crate::rational::Rational;
use crate::series::{Exactness, Series, TermKey};
use crate::window::Window;

/// Integer lattice map between two class monoids.
///
/// `matrix` has one row per target generator and one column per source
/// generator; the image of a source class is `matrix * coords`. Valid maps
/// send effective classes to effective classes (all matrix entries are
/// nonnegative) and have a kernel generated by effective classes of
/// positive degree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PushforwardMap {
    source: ClassMonoid,
    target: ClassMonoid,
    matrix: Vec<Vec<i64>>,
}

impl PushforwardMap {
    pub fn new(
        source: &Arc<ClassMonoid>,
        target: &Arc<ClassMonoid>,
        matrix: Vec<Vec<i64>>,
    ) -> Result<ValidatedMap> {
        if matrix.len() != target.rank() || matrix.iter().any(|r| r.len() != source.rank()) {
            return Err(Error::IllFormedPushforward(format!(
                "matrix must be {} x {}",
                target.rank(),
                source.rank()
            )));
        }
        if matrix.iter().flatten().any(|&e| e < 0) {
            return Err(Error::IllFormedPushforward(
                "a negative matrix entry sends an effective class outside the effective cone"
                    .into(),
            ));
        }
        let kernel = effective_kernel_basis(source, &matrix)?;
        Ok(ValidatedMap {
            source: Arc::clone(source),
            target: Arc::clone(target),
            matrix,
            kernel,
        })
    }
}

/// A `PushforwardMap` whose kernel has been computed and validated.
#[derive(Debug, Clone)]
pub struct ValidatedMap {
    source: Arc<ClassMonoid>,
    target: Arc<ClassMonoid>,
    matrix: Vec<Vec<i64>>,
    kernel: Vec<CurveClass>,
}

impl ValidatedMap {
    pub fn source(&self) -> &Arc<ClassMonoid> {
        &self.source
    }

    pub fn target(&self) -> &Arc<ClassMonoid> {
        &self.target
    }

    pub fn matrix(&self) -> &[Vec<i64>] {
        &self.matrix
    }

    /// Primitive effective generators of the kernel lattice.
    pub fn kernel(&self) -> &[CurveClass] {
        &self.kernel
    }

    /// Image of a source class.
    pub fn apply(&self, class: &CurveClass) -> Result<CurveClass> {
        if class.len() != self.source.rank() {
            return Err(Error::MonoidError(format!(
                "class {class} has wrong rank for the source monoid"
            )));
        }
        let coords = self
            .matrix
            .iter()
            .map(|row| {
                row.iter().zip(class.coords()).try_fold(0i64, |acc, (m, c)| {
                    m.checked_mul(*c)
                        .and_then(|p| acc.checked_add(p))
                        .ok_or_else(|| Error::DomainError("pushforward overflow".into()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CurveClass::new(coords))
    }

    /// Whether the rational system `matrix * x = target` is solvable at all.
    fn has_rational_preimage(&self, target: &CurveClass) -> bool {
        rational_solvable(&self.matrix, target.coords())
    }
}

/// Why a target key was dropped rather than summed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DropReason {
    /// Every effective preimage lies beyond the source degree budget.
    PreimageBeyondDegreeBudget,
    /// The stored preimage support reaches the boundary shell, so the
    /// preimage tower may continue past the budget.
    SupportTouchesKernelBoundary,
}

/// A target key whose coefficient could not be certified.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedKey {
    pub class: Vec<i64>,
    /// `None` when the whole class column is dropped, independent of q.
    pub q: Option<i64>,
    pub reason: DropReason,
}

/// Result of a pushforward: the certified series plus the dropped keys.
#[derive(Debug, Clone)]
pub struct PushforwardOutcome {
    pub series: Series,
    pub dropped: Vec<DroppedKey>,
}

/// Push `series` forward along `map`, summing coefficients of classes with
/// the same image. Only certified coefficients are retained; everything
/// else is dropped and reported.
pub fn pushforward(
    series: &Series,
    map: &ValidatedMap,
    target_window: &Window,
) -> Result<PushforwardOutcome> {
    if series.monoid() != map.source() {
        return Err(Error::MonoidError(
            "series monoid does not match the pushforward source".into(),
        ));
    }
    let source_window = *series.window();
    let (q_min, q_max) = if series.exactness() >= Exactness::DegreeComplete {
        (target_window.q_min(), target_window.q_max())
    } else {
        (
            target_window.q_min().max(source_window.q_min()),
            target_window.q_max().min(source_window.q_max()),
        )
    };
    if q_min > q_max {
        return Err(Error::WindowViolation(
            "pushforward target q range is empty".into(),
        ));
    }
    let window = Window::new(target_window.degree_max(), q_min, q_max)?;

    // Slice of every preimage set visible inside the source degree budget.
    let mut buckets: BTreeMap<CurveClass, Vec<CurveClass>> = BTreeMap::new();
    for sigma in map.source().effective_classes_up_to(source_window.degree_max()) {
        let tau = map.apply(&sigma)?;
        let tau_degree = map.target().degree(&tau)?;
        if tau_degree <= window.degree_max() {
            buckets.entry(tau).or_default().push(sigma);
        }
    }

    let shell_step = map
        .kernel()
        .iter()
        .map(|g| map.source().degree(g))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .min();

    let exact_source = series.exactness() == Exactness::Exact;
    let mut terms: BTreeMap<TermKey, Rational> = BTreeMap::new();
    let mut dropped: Vec<DroppedKey> = Vec::new();

    for (tau, preimages) in &buckets {
        // Boundary shell: in-budget preimages within one kernel step of the
        // budget. Stored support there means the tower may continue.
        let shell: Vec<&CurveClass> = match shell_step {
            Some(step) if !exact_source => {
                let mut shell = Vec::new();
                for sigma in preimages {
                    if map.source().degree(sigma)? + step > source_window.degree_max() {
                        shell.push(sigma);
                    }
                }
                shell
            }
            _ => Vec::new(),
        };
        for q in q_min..=q_max {
            let contaminated = shell.iter().any(|sigma| {
                series
                    .raw_terms()
                    .contains_key(&TermKey { class: (*sigma).clone(), q })
            });
            if contaminated {
                dropped.push(DroppedKey {
                    class: tau.coords().to_vec(),
                    q: Some(q),
                    reason: DropReason::SupportTouchesKernelBoundary,
                });
                continue;
            }
            let mut sum = Rational::zero();
            for sigma in preimages {
                if let Some(c) = series.raw_terms().get(&TermKey { class: sigma.clone(), q }) {
                    sum += c;
                }
            }
            if !sum.is_zero() {
                terms.insert(TermKey { class: tau.clone(), q }, sum);
            }
        }
    }

    // Target classes that are hit only beyond the degree budget. An exact
    // source certifies those sums as zero, so no report is needed there.
    if !exact_source {
        for tau in map.target().effective_classes_up_to(window.degree_max()) {
            if !buckets.contains_key(&tau) && map.has_rational_preimage(&tau) {
                dropped.push(DroppedKey {
                    class: tau.coords().to_vec(),
                    q: None,
                    reason: DropReason::PreimageBeyondDegreeBudget,
                });
            }
        }
    }
    dropped.sort_by(|a, b| (&a.class, a.q).cmp(&(&b.class, b.q)));

    let exactness = if exact_source && dropped.is_empty() {
        Exactness::Exact
    } else {
        Exactness::WindowOnly
    };
    let series = Series::from_parts(Arc::clone(map.target()), window, exactness, terms);
    Ok(PushforwardOutcome { series, dropped })
}

/// Primitive integer basis of the kernel of `matrix`, each vector normalized
/// to an effective class. Fails when some kernel direction cannot be made
/// effective or has degree 0.
fn effective_kernel_basis(
    source: &Arc<ClassMonoid>,
    matrix: &[Vec<i64>],
) -> Result<Vec<CurveClass>> {
    let basis = rational_kernel_basis(matrix, source.rank());
    let mut kernel = Vec::new();
    for vec in basis {
        let prim = primitive_integer_vector(&vec)?;
        let class = CurveClass::new(prim);
        let class = if class.is_effective() {
            class
        } else if class.negate().is_effective() {
            class.negate()
        } else {
            return Err(Error::IllFormedPushforward(format!(
                "kernel direction {class} is not generated by an effective class"
            )));
        };
        if source.degree(&class)? < 1 {
            return Err(Error::IllFormedPushforward(format!(
                "kernel generator {class} has degree < 1"
            )));
        }
        kernel.push(class);
    }
    kernel.sort();
    Ok(kernel)
}

/// Dimension of the kernel of an integer matrix.
pub(crate) fn rational_kernel_rank(matrix: &[Vec<i64>], cols: usize) -> usize {
    rational_kernel_basis(matrix, cols).len()
}

/// Kernel basis of an integer matrix, by exact Gauss-Jordan elimination.
fn rational_kernel_basis(matrix: &[Vec<i64>], cols: usize) -> Vec<Vec<Rational>> {
    let mut m: Vec<Vec<Rational>> = matrix
        .iter()
        .map(|row| row.iter().map(|&e| Rational::from_int(e)).collect())
        .collect();
    let rows = m.len();
    let mut pivot_of_col: Vec<Option<usize>> = vec![None; cols];
    let mut rank = 0;
    for col in 0..cols {
        let pivot_row = (rank..rows).find(|&r| !m[r][col].is_zero());
        let Some(pr) = pivot_row else { continue };
        m.swap(rank, pr);
        let inv = m[rank][col].recip().expect("nonzero pivot");
        for c in 0..cols {
            m[rank][c] = &m[rank][c] * &inv;
        }
        for r in 0..rows {
            if r != rank && !m[r][col].is_zero() {
                let factor = m[r][col].clone();
                for c in 0..cols {
                    let delta = &factor * &m[rank][c];
                    m[r][c] = &m[r][c] - &delta;
                }
            }
        }
        pivot_of_col[col] = Some(rank);
        rank += 1;
    }
    let mut basis = Vec::new();
    for free in 0..cols {
        if pivot_of_col[free].is_some() {
            continue;
        }
        let mut v = vec![Rational::zero(); cols];
        v[free] = Rational::one();
        for (col, pivot) in pivot_of_col.iter().enumerate() {
            if let Some(r) = pivot {
                v[col] = -&m[*r][free];
            }
        }
        basis.push(v);
    }
    basis
}

/// Whether `matrix * x = rhs` has any rational solution.
fn rational_solvable(matrix: &[Vec<i64>], rhs: &[i64]) -> bool {
    let cols = matrix.first().map_or(0, |r| r.len());
    let mut m: Vec<Vec<Rational>> = matrix
        .iter()
        .zip(rhs)
        .map(|(row, &b)| {
            row.iter()
                .map(|&e| Rational::from_int(e))
                .chain([Rational::from_int(b)])
                .collect()
        })
        .collect();
    let rows = m.len();
    let mut rank = 0;
    for col in 0..cols {
        let pivot_row = (rank..rows).find(|&r| !m[r][col].is_zero());
        let Some(pr) = pivot_row else { continue };
        m.swap(rank, pr);
        let inv = m[rank][col].recip().expect("nonzero pivot");
        for c in 0..=cols {
            m[rank][c] = &m[rank][c] * &inv;
        }
        for r in 0..rows {
            if r != rank && !m[r][col].is_zero() {
                let factor = m[r][col].clone();
                for c in 0..=cols {
                    let delta = &factor * &m[rank][c];
                    m[r][c] = &m[r][c] - &delta;
                }
            }
        }
        rank += 1;
    }
    // Inconsistent iff some row reduces to (0 ... 0 | nonzero).
    !m.iter()
        .any(|row| row[..cols].iter().all(|e| e.is_zero()) && !row[cols].is_zero())
}

/// Clear denominators and divide by the content, yielding a primitive
/// integer vector.
fn primitive_integer_vector(v: &[Rational]) -> Result<Vec<i64>> {
    use num::bigint::BigInt;
    use num::Integer;
    let mut lcm = BigInt::from(1);
    for r in v {
        lcm = lcm.lcm(r.denom());
    }
    let scaled: Vec<BigInt> = v
        .iter()
        .map(|r| r.numer() * (&lcm / r.denom()))
        .collect();
    let mut gcd = BigInt::from(0);
    for s in &scaled {
        gcd = gcd.gcd(s);
    }
    if gcd == BigInt::from(0) {
        gcd = BigInt::from(1);
    }
    scaled
        .iter()
        .map(|s| {
            i64::try_from(s / &gcd)
                .map_err(|_| Error::DomainError("kernel coordinate overflow".into()))
        })
        .collect()
}
