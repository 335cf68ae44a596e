use thiserror::Error;

pub type Result<T, E = MsvddError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum MsvddError {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("infeasible sphere subproblem: C * {members} = {product} < 1")]
    InfeasibleSubproblem { members: usize, product: f64 },

    #[error("sphere subsolver did not converge after {iterations} iterations (gap {gap:e})")]
    Convergence {
        iterations: usize,
        gap: f64,
        best_alpha: Vec<f64>,
    },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl MsvddError {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        MsvddError::Input(msg.into())
    }
}
