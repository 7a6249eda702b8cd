use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("all weights are zero")]
    AllZero,
    #[error("negative or non-finite weight {value} at index {index}")]
    NegativeWeight { index: usize, value: f64 },
    #[error("alphabet must have at least one element")]
    EmptyAlphabet,
    #[error("masses sum to {sum}, expected 1")]
    NotNormalized { sum: f64 },
    #[error("kernel row {row} sums to {sum}, expected 1")]
    RowNotNormalized { row: usize, sum: f64 },
    #[error("axis {axis} out of range for {count} axes")]
    BadAxis { axis: usize, count: usize },
    #[error("conditioning event has zero probability")]
    ZeroConditioning,
    #[error("point has zero probability")]
    ZeroProbabilityPoint,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("element {element} outside universe of size {size}")]
    OutOfUniverse { element: usize, size: usize },
    #[error("{atoms} atoms exceed the atom cap of {cap}")]
    CapacityExceeded { atoms: u128, cap: usize },
    #[error("bound kind mismatch: {0}")]
    KindMismatch(String),
    #[error("invalid network: {}", .0.join("; "))]
    InvalidNetwork(Vec<String>),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
