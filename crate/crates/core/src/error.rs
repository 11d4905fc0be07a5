use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// The propensity Hessian is singular; `columns` names the columns found
    /// linearly dependent on the others.
    #[error("singular Hessian; dependent columns: {}", columns.join(", "))]
    SingularHessian { columns: Vec<String> },

    /// A raking constraint with a positive target has no sample support.
    #[error("structural zero: constraint {constraint} has target {target} but no supporting rows")]
    StructuralZero { constraint: String, target: f64 },

    /// A zero target that positive weights can never reach multiplicatively.
    #[error("zero target: constraint {constraint} has target 0 but weighted total {current}")]
    ZeroTarget { constraint: String, current: f64 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Raking failures the LIFO layer is allowed to recover from.
    pub fn is_raking_failure(&self) -> bool {
        matches!(
            self,
            Error::StructuralZero { .. } | Error::ZeroTarget { .. }
        )
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
