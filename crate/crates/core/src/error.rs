use thiserror::Error;

/// Errors produced by the estimation, construction and verification routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sample is empty")]
    EmptySample,

    #[error("cell index {index:?} outside {{1..{m}}}^d")]
    IndexOutOfRange { index: Vec<usize>, m: usize },

    #[error("omega has {got} entries, expected m^d = {expected}")]
    OmegaLength { expected: usize, got: usize },

    #[error("integration grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("quadrature failed: {0}")]
    QuadratureFailed(String),

    #[error("rejection sampler acceptance rate {rate:.3e} is below the floor {floor:.3e}")]
    LowAcceptance { rate: f64, floor: f64 },

    #[error("non-finite log ratio at {location:?}")]
    NonFiniteLogRatio { location: Vec<f64> },

    #[error("codebook construction failed: {0}")]
    Codebook(String),

    #[error("degenerate abscissa: all x values are identical")]
    DegenerateAbscissa,

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
