use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("too few samples: n = {n}, need more than {required}")]
    TooFewSamples { n: usize, required: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("too few usable hypotheses for mixture fit: {found} (need at least {required})")]
    TooFewHypotheses { found: usize, required: usize },

    #[error("mixture density is zero or non-finite at hypothesis {0}")]
    NonFiniteDensity(usize),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{failed} of {reps} replicates failed, above the {limit} cap")]
    TooManyFailures { failed: usize, reps: usize, limit: usize },
}

impl Error {
    /// Short machine-readable code, prefixed by the module that raised it.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidDataset(_) => "regression.invalid_dataset",
            Error::TooFewSamples { .. } => "regression.too_few_samples",
            Error::DimensionMismatch(_) => "data.dimension_mismatch",
            Error::InvalidParameter(_) => "config.invalid_parameter",
            Error::TooFewHypotheses { .. } => "mixture.too_few_hypotheses",
            Error::NonFiniteDensity(_) => "mixture.non_finite_density",
            Error::Numerical(_) => "numeric.failure",
            Error::TooManyFailures { .. } => "evaluate.too_many_failures",
        }
    }
}
