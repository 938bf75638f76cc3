use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("input has no header row")]
    MissingHeader,
    #[error("header must start with `id,group` followed by at least one time column")]
    BadHeader,
    #[error("input has no data rows")]
    NoRows,
    #[error("malformed row {row}: expected {expected} fields, found {found}")]
    MalformedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-numeric value at ({row}, {col})")]
    NonNumeric { row: usize, col: usize },
    #[error("missing group id at row {row}")]
    MissingGroup { row: usize },
    #[error("invalid group id `{value}` at row {row}")]
    InvalidGroup { row: usize, value: String },
    #[error("negative group id at row {row}")]
    NegativeGroup { row: usize },
    #[error("non-contiguous group ids: group {missing} has no rows")]
    NonContiguousGroups { missing: usize },
    #[error("group {group} is empty")]
    EmptyGroup { group: usize },
    #[error("dimension mismatch: expected {expected} grid points, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("at least {required} groups are required, found {found}")]
    TooFewGroups { required: usize, found: usize },
    #[error("empty sample")]
    EmptySample,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("exhaustive enumeration needs {count} plans, above the cap of {cap}")]
    PlanCapExceeded { count: String, cap: u64 },
    #[error("design id {0} is not in 1..=10")]
    UnknownDesign(usize),
    #[error("correlation shift pushes |rho| to {value} at t = {t}")]
    CorrelationOutOfRange { t: usize, value: f64 },
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
