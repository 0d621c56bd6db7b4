use thiserror::Error;

/// Errors raised by the library. Every variant maps onto a stable
/// integer code through [`Error::code`] so the C ABI can surface them.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("empty data: count vector has total 0")]
    EmptyData,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("probability {value:e} at category {index} is below the representable floor")]
    NumericalUnderflow { index: usize, value: f64 },

    #[error("empirical distribution lies on the simplex boundary (category {0} is empty)")]
    Boundary(usize),

    #[error("sample size {0} is too small; the criterion needs n_o > 8*pi")]
    SampleTooSmall(u64),

    #[error("unsupported parameter dimension {dim} (maximum {max})")]
    UnsupportedDimension { dim: usize, max: usize },

    #[error("Hessian is not positive definite")]
    HessianNotPd,

    #[error("simulator contract violated: {0}")]
    SimulatorContract(String),

    #[error("simulator failed at theta = {theta:?}: {reason}")]
    Simulator { theta: Vec<f64>, reason: String },

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("enumeration too large: {0}")]
    UnsupportedScale(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn code(&self) -> i32 {
        match self {
            Error::EmptyData => 1,
            Error::Dimension { .. } => 2,
            Error::Domain(_) => 3,
            Error::Config(_) => 4,
            Error::NumericalUnderflow { .. } => 5,
            Error::Boundary(_) => 6,
            Error::SampleTooSmall(_) => 7,
            Error::UnsupportedDimension { .. } => 8,
            Error::HessianNotPd => 9,
            Error::SimulatorContract(_) => 10,
            Error::Simulator { .. } => 11,
            Error::Constraint(_) => 12,
            Error::UnsupportedScale(_) => 13,
            Error::Io(_) => 14,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension { expected, got });
    }
    Ok(())
}
