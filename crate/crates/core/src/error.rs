use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("point at {path}:{line} has norm {norm} (more than 1e-8 from unit length)")]
    NonUnitPoint {
        path: String,
        line: usize,
        norm: f64,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("conjugate gradient stopped after {iterations} iterations, relative residual {residual:.3e}")]
    CgDidNotConverge { iterations: usize, residual: f64 },

    #[error("gram matrix for degree {degree} needs {bytes} bytes, above the {limit}-byte guard")]
    ResourceGuard { degree: usize, bytes: u64, limit: u64 },

    #[error("filter bank {name}: {msg}")]
    InvalidBank { name: String, msg: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("node index {index} out of range for rule with {len} nodes")]
    IndexOutOfRange { index: usize, len: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
