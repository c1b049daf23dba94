use thiserror::Error;

pub type Result<T, E = BubbleError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum BubbleError {
    /// Shape matrix singular, indefinite or badly conditioned.
    #[error("degenerate shape: {0}")]
    DegenerateShape(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// Bubbles overlap or leave the cavity.
    #[error("inadmissible configuration: {0}")]
    Inadmissible(String),

    #[error("ill-posed boundary problem (condition estimate {condition:.3e}): {message}")]
    IllPosed { message: String, condition: f64 },

    /// Cavity volume compatibility or velocity constraint violated.
    #[error("constraint violation: {0}")]
    Constraint(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("discretization failure: {message} (eigenvalues {eigenvalues:?})")]
    Discretization {
        message: String,
        eigenvalues: Vec<f64>,
    },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("{path}: {message}")]
    Validation { path: String, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl BubbleError {
    pub fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        BubbleError::Validation {
            path: path.into(),
            message: message.into(),
        }
    }
}
