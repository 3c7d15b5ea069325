//! The effective curve-class lattice and its classes.
//!
//! A `ClassMonoid` declares named generators with strictly positive integer
//! degree weights; a `CurveClass` is an integer coordinate vector in that
//! basis. A class is effective when all coordinates are nonnegative, and the
//! degree of an effective class vanishes exactly on the zero class.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Finitely generated effective curve-class lattice with a positive degree
/// functional.
///
/// Invariants: rank >= 1, all weights >= 1, generator names unique.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassMonoid {
    generators: Vec<String>,
    weights: Vec<i64>,
}

impl ClassMonoid {
    pub fn new(generators: Vec<String>, weights: Vec<i64>) -> Result<Arc<Self>> {
        if generators.is_empty() {
            return Err(Error::MonoidError("rank must be at least 1".into()));
        }
        if generators.len() != weights.len() {
            return Err(Error::MonoidError(format!(
                "{} generators but {} weights",
                generators.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|&&w| w < 1) {
            return Err(Error::MonoidError(format!("degree weight {w} is not >= 1")));
        }
        for (i, g) in generators.iter().enumerate() {
            if generators[..i].contains(g) {
                return Err(Error::MonoidError(format!("duplicate generator name {g:?}")));
            }
        }
        Ok(Arc::new(ClassMonoid { generators, weights }))
    }

    /// Rank-1 monoid with a single weight-1 generator.
    pub fn rank1(name: &str) -> Arc<Self> {
        Self::new(vec![name.to_string()], vec![1]).expect("valid rank-1 monoid")
    }

    pub fn rank(&self) -> usize {
        self.generators.len()
    }

    pub fn generator_names(&self) -> &[String] {
        &self.generators
    }

    pub fn weights(&self) -> &[i64] {
        &self.weights
    }

    /// Index of a generator by name.
    pub fn generator_index(&self, name: &str) -> Option<usize> {
        self.generators.iter().position(|g| g == name)
    }

    /// The class of a single generator.
    pub fn generator_class(&self, index: usize) -> CurveClass {
        let mut coords = vec![0; self.rank()];
        coords[index] = 1;
        CurveClass::new(coords)
    }

    pub fn zero_class(&self) -> CurveClass {
        CurveClass::new(vec![0; self.rank()])
    }

    /// Degree of a class: sum of weight_i * coord_i, checked against overflow.
    pub fn degree(&self, class: &CurveClass) -> Result<i64> {
        if class.coords.len() != self.rank() {
            return Err(Error::MonoidError(format!(
                "class of length {} in a rank-{} monoid",
                class.coords.len(),
                self.rank()
            )));
        }
        let mut deg: i64 = 0;
        for (c, w) in class.coords.iter().zip(&self.weights) {
            let term = c.checked_mul(*w).ok_or_else(|| overflow(class))?;
            deg = deg.checked_add(term).ok_or_else(|| overflow(class))?;
        }
        Ok(deg)
    }

    /// All effective classes of degree at most `max_degree`, in coordinate
    /// lexicographic order. The count is finite because every weight is >= 1.
    pub fn effective_classes_up_to(&self, max_degree: i64) -> Vec<CurveClass> {
        let mut out = Vec::new();
        let mut coords = vec![0i64; self.rank()];
        self.enumerate(0, max_degree, &mut coords, &mut out);
        out
    }

    fn enumerate(&self, axis: usize, budget: i64, coords: &mut Vec<i64>, out: &mut Vec<CurveClass>) {
        if axis == self.rank() {
            out.push(CurveClass::new(coords.clone()));
            return;
        }
        let w = self.weights[axis];
        let mut c = 0;
        while c * w <= budget {
            coords[axis] = c;
            self.enumerate(axis + 1, budget - c * w, coords, out);
            c += 1;
        }
        coords[axis] = 0;
    }
}

fn overflow(class: &CurveClass) -> Error {
    Error::DomainError(format!("degree overflow for class {class}"))
}

/// Integer coordinate vector in a monoid's generator basis.
///
/// Effective iff all coordinates are nonnegative. Ordering is lexicographic
/// on coordinates, which fixes the sort order of every serialized term list.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CurveClass {
    coords: Vec<i64>,
}

impl CurveClass {
    pub fn new(coords: Vec<i64>) -> Self {
        CurveClass { coords }
    }

    pub fn coords(&self) -> &[i64] {
        &self.coords
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn is_effective(&self) -> bool {
        self.coords.iter().all(|&c| c >= 0)
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(|&c| c == 0)
    }

    /// Componentwise sum, checked.
    pub fn add(&self, other: &CurveClass) -> Result<CurveClass> {
        if self.len() != other.len() {
            return Err(Error::MonoidError("class rank mismatch in addition".into()));
        }
        let coords = self
            .coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| a.checked_add(*b).ok_or_else(|| overflow(self)))
            .collect::<Result<Vec<_>>>()?;
        Ok(CurveClass::new(coords))
    }

    /// Componentwise scalar multiple, checked.
    pub fn scale(&self, k: i64) -> Result<CurveClass> {
        let coords = self
            .coords
            .iter()
            .map(|c| c.checked_mul(k).ok_or_else(|| overflow(self)))
            .collect::<Result<Vec<_>>>()?;
        Ok(CurveClass::new(coords))
    }

    pub fn negate(&self) -> CurveClass {
        CurveClass::new(self.coords.iter().map(|c| -c).collect())
    }
}

impl fmt::Display for CurveClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monoid_validation() {
        assert!(ClassMonoid::new(vec![], vec![]).is_err());
        assert!(ClassMonoid::new(vec!["a".into()], vec![0]).is_err());
        assert!(ClassMonoid::new(vec!["a".into(), "a".into()], vec![1, 1]).is_err());
        assert!(ClassMonoid::new(vec!["a".into()], vec![1, 2]).is_err());
        assert!(ClassMonoid::new(vec!["a".into(), "b".into()], vec![1, 3]).is_ok());
    }

    #[test]
    fn degree_and_effectivity() {
        let m = ClassMonoid::new(vec!["a".into(), "b".into()], vec![1, 3]).unwrap();
        let c = CurveClass::new(vec![2, 1]);
        assert_eq!(m.degree(&c).unwrap(), 5);
        assert!(c.is_effective());
        assert!(!CurveClass::new(vec![1, -1]).is_effective());
        assert_eq!(m.degree(&m.zero_class()).unwrap(), 0);
    }

    #[test]
    fn enumeration_counts() {
        let m = ClassMonoid::new(vec!["a".into(), "b".into()], vec![1, 2]).unwrap();
        // degree <= 3: a-coord 0..3 alone, or a-coord 0..1 with one b.
        let classes = m.effective_classes_up_to(3);
        let expected: Vec<Vec<i64>> = vec![
            vec![0, 0],
            vec![0, 1],
            vec![1, 0],
            vec![1, 1],
            vec![2, 0],
            vec![3, 0],
        ];
        let got: Vec<Vec<i64>> = classes.iter().map(|c| c.coords().to_vec()).collect();
        assert_eq!(got.len(), expected.len());
        for e in expected {
            assert!(got.contains(&e));
        }
    }

    #[test]
    fn degree_overflow_is_an_error() {
        let m = ClassMonoid::new(vec!["a".into()], vec![i64::MAX]).unwrap();
        let c = CurveClass::new(vec![3]);
        assert!(m.degree(&c).is_err());
    }
}
