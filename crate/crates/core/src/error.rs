//! Error type shared by all modules.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A scalar argument is outside its admissible range.
    InvalidParameter(String),
    /// Vector or matrix dimensions do not line up.
    DimensionMismatch { expected: usize, found: usize, context: &'static str },
    /// A direct solve hit a zero (or numerically vanishing) pivot.
    ZeroPivot { index: usize },
    /// A circulant spectrum contains a vanishing mode and cannot be inverted.
    SingularSpectrum { mode: usize },
    /// An iterative solve broke down (for CG: nonpositive curvature direction).
    Breakdown(String),
    /// A dense materialization or Galerkin construction exceeds its size cap.
    SizeCapExceeded { size: usize, cap: usize },
    /// The requested configuration is not supported for this operator.
    Unsupported(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::DimensionMismatch { expected, found, context } => {
                write!(f, "dimension mismatch in {context}: expected {expected}, found {found}")
            }
            Error::ZeroPivot { index } => write!(f, "zero pivot at row {index}"),
            Error::SingularSpectrum { mode } => {
                write!(f, "circulant spectrum vanishes at mode {mode}")
            }
            Error::Breakdown(msg) => write!(f, "iteration breakdown: {msg}"),
            Error::SizeCapExceeded { size, cap } => {
                write!(f, "problem size {size} exceeds cap {cap}")
            }
            Error::Unsupported(msg) => write!(f, "unsupported: {msg}"),
        }
    }
}

impl std::error::Error for Error {}
