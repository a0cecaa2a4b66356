use thiserror::Error;

/// Errors produced by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point coordinate {index} has modulus {modulus}, outside the open unit disk")]
    OutsideDisk { index: usize, modulus: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("argument {value} outside the domain {domain}")]
    Domain { value: f64, domain: &'static str },

    #[error("truncation degree for coordinate {coordinate} would exceed the cap {cap}")]
    TruncationCap { coordinate: usize, cap: usize },

    #[error("evaluation point outside the certified radius in coordinate {coordinate}")]
    OutsideCertifiedRegion { coordinate: usize },

    #[error("degenerate polynomial: all coefficients are zero")]
    DegeneratePolynomial,

    #[error("numerical method did not converge: {0}")]
    NonConvergence(String),

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures of iterative numerics (quadrature, root finding,
    /// contour counting) as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence(_) | Error::TruncationCap { .. } | Error::DegeneratePolynomial
        )
    }
}
