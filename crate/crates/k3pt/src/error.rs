//! Error types shared across the crate.
//!
//! Every failure carries enough context (the offending key, class or file
//! position) to be reported verbatim by the CLI.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    /// A term or coefficient request lies outside the window that certifies
    /// exact values. Distinguishes "unknown" from "zero".
    #[error("WindowViolation: {0}")]
    WindowViolation(String),

    /// A curve class with negative coordinates (or zero where a nonzero
    /// effective class is required).
    #[error("EffectivityError: {0}")]
    EffectivityError(String),

    /// Operands declared over different class monoids.
    #[error("MonoidError: {0}")]
    MonoidError(String),

    /// Inversion of a series whose constant term is not 1.
    #[error("NotAUnit: {0}")]
    NotAUnit(String),

    /// A series tail that does not die under truncation, so a power-series
    /// expansion would not terminate.
    #[error("NonNilpotentTail: {0}")]
    NonNilpotentTail(String),

    /// An infinite product whose factor sequence never certifies that the
    /// remaining factors are 1 on the window.
    #[error("NonTerminatingProduct: {0}")]
    NonTerminatingProduct(String),

    /// A pushforward map whose kernel is not generated by effective classes
    /// of positive degree, or whose kernel disagrees with the declared one.
    #[error("IllFormedPushforward: {0}")]
    IllFormedPushforward(String),

    /// Arguments outside the mathematical domain of an operation.
    #[error("DomainError: {0}")]
    DomainError(String),

    /// Malformed input file or string.
    #[error("ParseError: {0}")]
    ParseError(String),

    /// A table file with two rows for the same key.
    #[error("DuplicateKey: {0}")]
    DuplicateKey(String),

    /// The fiber table does not cover an (n, h) pair needed by the
    /// contraction. Never silently treated as zero.
    #[error("InsufficientFiberTable: missing entry (n={n}, h={h})")]
    InsufficientFiberTable { n: i64, h: i64 },

    /// A class that is not a degree-1 generator where the irreducible-class
    /// formulas require one.
    #[error("NotIrreducible: {0}")]
    NotIrreducible(String),

    /// The series window is too small to certify a coefficient the operation
    /// needs.
    #[error("InsufficientWindow: {0}")]
    InsufficientWindow(String),

    /// Filesystem failure wrapped with the path involved.
    #[error("IoError: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
