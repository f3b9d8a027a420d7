use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed document: {0}")]
    Malformed(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("invalid order `{id}`: {reason}")]
    InvalidOrder { id: String, reason: String },

    #[error("invalid starting orders: {0}")]
    InvalidTheta(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("matrix is not doubly stochastic (max residual {0:.3e})")]
    NotDoublyStochastic(f64),

    #[error("no perfect matching on the support: {0}")]
    NoPerfectMatching(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("permanent estimator failed: {0}")]
    Estimator(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wraps the error with the name of the pipeline stage that raised it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
