use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("component index {index} out of range for {count} components")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("point has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point has non-finite coordinates")]
    NonFinitePoint,

    #[error("problem does not provide {0}")]
    MissingCapability(&'static str),

    #[error("batch size {batch} must lie in 1..={count}")]
    BatchSizeOutOfRange { batch: usize, count: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("interpolation geometry is degenerate")]
    DegenerateGeometry,

    #[error("sampling probability for component {0} is zero")]
    ZeroProbability(usize),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
