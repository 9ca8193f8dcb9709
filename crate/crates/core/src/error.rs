use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A scalar or matrix function was evaluated outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// The velocity divergence left the admissible interval (-1/b, 1/b).
    #[error("barrier violation: |div u| = {value:.6e} reached the bound 1/b = {bound:.6e}")]
    Barrier { value: f64, bound: f64 },

    #[error("fixed-point iteration did not converge: residual {residual:.3e} after {iterations} iterations")]
    Nonconvergence { residual: f64, iterations: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("degenerate field: {0}")]
    DegenerateField(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the command line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::Nonconvergence { .. } => 3,
            Error::Barrier { .. } => 4,
            _ => 1,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}
