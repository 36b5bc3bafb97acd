use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("correlation matrix is not positive definite (pivot {pivot}, smallest eigenvalue {min_eigenvalue:.6e})")]
    NotPositiveDefinite { pivot: usize, min_eigenvalue: f64 },

    #[error("ill-conditioned basis: Cholesky of the Gram matrix broke down at pivot {pivot}; consider dropping the monomial at index {pivot}")]
    IllConditionedBasis { pivot: usize },

    #[error("node budget exceeded: tensor grid would need {nodes} nodes but the budget is {budget}{context}")]
    NodeBudget {
        nodes: u64,
        budget: u64,
        context: String,
    },

    #[error("evaluation error: integrand returned a non-finite value at node {node:?}")]
    NonFiniteIntegrand { node: Vec<f64> },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("problem infeasible: {0}")]
    Infeasible(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// CLI exit code contract: 1 infeasible/numerical, 2 input validation, 3 resource budget.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NodeBudget { .. } => 3,
            Error::Domain(_)
            | Error::Parameter(_)
            | Error::Validation(_)
            | Error::Configuration(_)
            | Error::Serde(_)
            | Error::Io(_) => 2,
            _ => 1,
        }
    }
}
