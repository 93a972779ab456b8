use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {0} has (near) zero norm and cannot be normalized")]
    ZeroRow(usize),

    #[error("row {row} has norm {norm}, expected a unit vector")]
    NotUnit { row: usize, norm: f64 },

    #[error("non-finite entry at row {row}, column {col}")]
    NonFiniteEntry { row: usize, col: usize },

    #[error("class {0} has a degenerate (near zero) mean")]
    DegenerateMean(usize),

    #[error("points {0} and {1} coincide")]
    CoincidentPoints(usize, usize),

    #[error("kernel gram matrix is numerically singular")]
    SingularGram,

    #[error("cayley transform is numerically singular")]
    SingularCayley,

    #[error("non-finite value produced at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("expected {expected} points, got {actual}")]
    WrongCount { expected: usize, actual: usize },

    #[error("{classes} classes do not fit a regular simplex in dimension {dim}")]
    DimensionTooSmall { classes: usize, dim: usize },

    #[error("riesz s = {s} is not integrable on the sphere in dimension {dim}")]
    Divergent { s: f64, dim: usize },

    #[error("class {0} has no samples")]
    EmptyClass(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("schema version {found} is not supported (this build reads version {supported})")]
    SchemaVersionMismatch { found: u32, supported: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
