use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// The model description itself is malformed (bad dimensions, probabilities, ...).
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// A sampled matrix violates the structural requirement (zero row or column)
    /// while condition-C mode is on.
    #[error("structural violation: {0}")]
    StructuralViolation(String),

    /// An argument outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("no root of m(s)=1 in ({lo}, {hi}): m(lo)={m_lo}, m(hi)={m_hi}")]
    NoRoot { lo: f64, hi: f64, m_lo: f64, m_hi: f64 },

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("{what} cap exceeded: cap {cap}, reached {reached}")]
    CapExceeded {
        what: &'static str,
        cap: usize,
        reached: usize,
    },

    #[error("walk not transient at this horizon: {max_steps} steps without passing t={t}")]
    NotTransient { max_steps: usize, t: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("root finding failed: {0}")]
    RootFind(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
