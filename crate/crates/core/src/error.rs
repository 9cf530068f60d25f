use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("all weights are zero")]
    AllZeroWeights,
    #[error("weight {index} is not finite or negative ({value})")]
    NonFiniteWeight { index: usize, value: f64 },
    #[error("no draws")]
    EmptyDraws,
    #[error("degenerate sample: all observations identical")]
    DegenerateSample,
    #[error("degenerate innovations: zero sum of squares")]
    DegenerateInnovations,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("singular design matrix")]
    SingularDesign,
    #[error("singular moment covariance matrix")]
    SingularCovariance,
    #[error("variance parameter must be positive, got {0}")]
    NonPositiveVariance(f64),
    #[error("objective is not finite at the starting point and all restarts")]
    ObjectiveNaN,
    #[error("solver did not converge (best objective {best_objective:e})")]
    NoConvergence { best_objective: f64 },
    #[error("non-finite Jacobian entry at ({row}, {col})")]
    NonFiniteEntry { row: usize, col: usize },
    #[error("model has no analytic binding function or direct zero-finder")]
    NoBindingFunction,
    #[error("no starting point entered the tolerance ball after {attempts} attempts")]
    InitializationFailure { attempts: usize },
    #[error("{failed} of {total} draws failed to converge")]
    TooManyFailures { failed: usize, total: usize },
    #[error("unsupported estimator: {0}")]
    UnsupportedEstimator(String),
    #[error("denominator is not positive: {0}")]
    DenominatorNonPositive(String),
    #[error("too few effective draws: {0:.1}")]
    TooFewEffectiveDraws(f64),
    #[error("density grids do not share the same x vector")]
    GridMismatch,
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io failure: {0}")]
    Io(String),
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
