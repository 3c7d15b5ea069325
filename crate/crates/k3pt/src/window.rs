//! Truncation windows.
//!
//! A window is the finite region (class degree bound, q-exponent range)
//! inside which series coefficients are stored. Negative q-exponents are
//! allowed; `q_min` is a hard bound asserted by the caller: the represented
//! series has no terms below it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Finite truncation region for series terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    degree_max: i64,
    q_min: i64,
    q_max: i64,
}

impl Window {
    pub fn new(degree_max: i64, q_min: i64, q_max: i64) -> Result<Self> {
        if degree_max < 0 {
            return Err(Error::WindowViolation(format!(
                "degree bound {degree_max} is negative"
            )));
        }
        if q_min > q_max {
            return Err(Error::WindowViolation(format!(
                "empty q range [{q_min}, {q_max}]"
            )));
        }
        Ok(Window { degree_max, q_min, q_max })
    }

    pub fn degree_max(&self) -> i64 {
        self.degree_max
    }

    pub fn q_min(&self) -> i64 {
        self.q_min
    }

    pub fn q_max(&self) -> i64 {
        self.q_max
    }

    pub fn contains(&self, degree: i64, q: i64) -> bool {
        degree <= self.degree_max && q >= self.q_min && q <= self.q_max
    }

    /// Intersection of two windows; fails when the q ranges are disjoint.
    pub fn intersect(&self, other: &Window) -> Result<Window> {
        Window::new(
            self.degree_max.min(other.degree_max),
            self.q_min.max(other.q_min),
            self.q_max.min(other.q_max),
        )
    }

    /// Whether `other` fits inside this window.
    pub fn covers(&self, other: &Window) -> bool {
        self.degree_max >= other.degree_max && self.q_min <= other.q_min && self.q_max >= other.q_max
    }
}
