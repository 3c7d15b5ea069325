//! Exact-arithmetic engine for truncated multivariate generating series of
//! stable-pair (PT) invariants on K3 fibrations.
//!
//! The crate computes, assembles and cross-checks four families of
//! identities:
//!
//! - the two-variable product expansion generating signed Euler
//!   characteristics of stable-pair moduli on a K3 surface ([`ky`]);
//! - the fiberwise assembly contracting that table against
//!   Noether-Lefschetz numbers ([`assembly`]);
//! - the conifold-transition identity relating a resolved fibration to its
//!   nodal base through the exceptional-curve series ([`conifold`]);
//! - the wall-crossing product and linear formulas relating PT invariants
//!   to generalized Donaldson-Thomas invariants ([`wallcross`]).
//!
//! Everything rests on [`series`], a sparse truncated Laurent-series kernel
//! over exact rationals: no floating point anywhere, and every retained
//! coefficient is certified exact on its window.

pub mod assembly;
pub mod cache;
pub mod conifold;
pub mod error;
pub mod io;
pub mod ky;
pub mod monoid;
pub mod pushforward;
pub mod rational;
pub mod series;
pub mod tables;
pub mod wallcross;
pub mod window;

pub use error::{Error, Result};
pub use monoid::{ClassMonoid, CurveClass};
pub use rational::Rational;
pub use series::{binomial_series, truncated_product, Exactness, Series, TermKey};
pub use window::Window;
