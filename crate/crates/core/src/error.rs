use std::fmt;

/// Errors produced by the lattice, dynamics, charge and quantum layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("lattices live on different grids")]
    GridMismatch,
    #[error("axis {axis} out of range for a {ndim}-dimensional grid")]
    AxisOutOfRange { axis: usize, ndim: usize },
    #[error("expected {expected} samples, got {actual}")]
    SampleCount { expected: usize, actual: usize },
    #[error("non-finite sample at site {0}")]
    NonFinite(usize),
    #[error("invalid constants: {0}")]
    InvalidConstants(String),
    #[error("invalid time step: {0}")]
    InvalidTimeStep(String),
    #[error("operation needs at least {required} spatial dimensions, grid has {actual}")]
    DimensionTooLow { required: usize, actual: usize },
    #[error("time series needs at least {required} samples, got {actual}")]
    TooFewSamples { required: usize, actual: usize },
    #[error("time series samples are not equally spaced (sample {0})")]
    UnequalSpacing(usize),
    #[error("numerical blow-up at step {step}: {what}")]
    Blowup { step: usize, what: String },
    #[error("malformed file: {0}")]
    Format(String),
    #[error("configuration invalid:\n{0}")]
    Validation(ValidationErrors),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// One configuration problem, located by a dotted field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationError {
    pub path: String,
    pub message: String,
}

impl ValidationError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Every problem found while validating a configuration document.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationErrors(pub Vec<ValidationError>);

impl ValidationErrors {
    pub fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(ValidationError::new(path, message));
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ValidationError> {
        self.0.iter()
    }
}

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "  {e}")?;
        }
        Ok(())
    }
}
