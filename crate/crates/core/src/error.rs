use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum CrowdError {
    /// The grid or a field does not have the expected shape.
    #[error("structural error: {0}")]
    Structure(String),

    /// A field or input contains non-finite or out-of-range data.
    #[error("data error: {0}")]
    Data(String),

    /// A scalar parameter violates its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Configuration text could not be parsed.
    #[error("config error (line {line}): {msg}")]
    Parse { line: usize, msg: String },

    /// A configuration value violates a documented invariant.
    #[error("invalid configuration: {0}")]
    Invalid(String),

    /// A nonlinear solve exhausted its iteration budget.
    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CrowdError>;
