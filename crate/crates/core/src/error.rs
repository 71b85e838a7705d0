use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The input is a singular point of the estimator (e.g. Δ²X + Δ²Y = 2).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("fit did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },

    /// The Jacobian at the optimum does not determine all parameters.
    #[error("rank-deficient fit: {0}")]
    RankDeficient(String),

    #[error("insufficient phase range: swept {span:.4} rad, need at least {required:.4} rad")]
    InsufficientPhaseRange { span: f64, required: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// An efficiency exceeds unity by more than three combined standard deviations.
    #[error("unphysical result: {value} ± {sigma} exceeds 1 by more than 3σ")]
    Unphysical { value: f64, sigma: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
