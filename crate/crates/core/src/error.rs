use alloc::string::String;

/// Errors raised by estimation, inference and simulation routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("column `{0}` not found")]
    MissingColumn(String),
    #[error("column `{name}` is {found}, expected {expected}")]
    ColumnType {
        name: String,
        expected: &'static str,
        found: &'static str,
    },
    #[error("column `{name}` has {found} rows, expected {expected}")]
    LengthMismatch {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("column `{name}` has a non-finite value at row {row}")]
    NonFinite { name: String, row: usize },
    #[error("weights must be strictly positive and finite (row {row})")]
    InvalidWeight { row: usize },
    #[error("invalid model specification: {0}")]
    InvalidSpec(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("fixed-effect absorption did not converge after {sweeps} sweeps (max within-group mean {max_mean:e})")]
    NonConvergence { sweeps: usize, max_mean: f64 },
    #[error("no regressors retained after collinearity screening")]
    NoRetainedColumns,
    #[error("{n_obs} observations cannot identify {n_params} parameters")]
    InsufficientObservations { n_obs: usize, n_params: usize },
    #[error("cluster-robust covariance needs at least two clusters, found {0}")]
    TooFewClusters(usize),
    #[error("singular matrix: {0}")]
    Singular(&'static str),
    #[error("`{0}` is collinear with the other regressors or fixed effects")]
    Collinear(String),
    #[error("unsupported: {0}")]
    Unsupported(&'static str),
    #[error("model is exactly identified; overidentification test undefined")]
    NotOveridentified,
    #[error("value {value} lies outside the support [{lower}, {upper}] of the control pre-period sample")]
    SupportViolation { value: f64, lower: f64, upper: f64 },
    #[error("empty sample: {0}")]
    EmptySample(&'static str),
    #[error("degenerate: {0}")]
    Degenerate(&'static str),
}

impl Error {
    /// True for failures that arise during computation on valid input
    /// (non-convergence, singularity, support failures) rather than
    /// malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::Singular(_)
                | Error::Collinear(_)
                | Error::NoRetainedColumns
                | Error::SupportViolation { .. }
                | Error::Degenerate(_)
                | Error::NotOveridentified
        )
    }
}

pub type Result<T> = core::result::Result<T, Error>;
