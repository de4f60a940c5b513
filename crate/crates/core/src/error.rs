//! Error type shared by all engine modules.

use thiserror::Error;

/// Engine-wide error enumeration.
///
/// Numerical guards (hermiticity, unitarity, hull containment) fail loudly
/// with the measured residual and the tolerance that was applied, so callers
/// can log or tighten them; nothing is silently clamped or renormalized.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid physical or numerical parameter (negative mass, empty grid, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A matrix that must be hermitian (symmetric) failed the residual check.
    #[error("matrix not hermitian: residual {residual:.3e} exceeds tolerance {tol:.3e} ({context})")]
    NotHermitian {
        residual: f64,
        tol: f64,
        context: String,
    },

    /// A matrix that must be unitary (orthogonal) failed the defect check.
    #[error("unitarity defect {defect:.3e} exceeds tolerance {tol:.3e} ({context})")]
    UnitarityDefect {
        defect: f64,
        tol: f64,
        context: String,
    },

    /// A momentum image fell outside the convex hull of the supporting grid
    /// and evaluating it would require extrapolation.
    #[error("momentum image outside grid hull: {0}")]
    OutsideGridHull(String),

    /// Matrix logarithm hit the branch cut (eigenvalue at -1).
    #[error("unitary logarithm undefined: eigenvalue within {margin:.3e} of -1 ({context})")]
    LogBranchCut { margin: f64, context: String },

    /// Linear solve or eigensolve failed to converge / factor.
    #[error("linear algebra failure: {0}")]
    Linalg(String),

    /// Requested energy lies outside the regime a routine supports.
    #[error("energy out of range: {0}")]
    EnergyOutOfRange(String),

    /// Channel/basis lookup failed.
    #[error("unknown channel or sector: {0}")]
    UnknownChannel(String),

    /// Dimension mismatch between operands built from different bases.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Shorthand for [`Error::InvalidParameter`] from any displayable value.
    pub fn invalid(msg: impl std::fmt::Display) -> Self {
        Error::InvalidParameter(msg.to_string())
    }
}
