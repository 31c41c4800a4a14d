use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("input out of domain: {0}")]
    InputDomain(String),

    /// A geometry parameter violates its bound in strict mode.
    #[error("parameter `{field}` = {value} outside [{lower}, {upper}]")]
    Validation {
        field: &'static str,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("invalid construction: {0}")]
    Construction(String),

    #[error("index ({i}, {j}) is not an interior node of a {rows}x{cols} grid")]
    Index {
        i: usize,
        j: usize,
        rows: usize,
        cols: usize,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("{what} did not converge in {iterations} sweeps (last residual {last:e})")]
    Convergence {
        what: &'static str,
        iterations: usize,
        last: f64,
    },

    #[error("mesh is folded: minimum Jacobian {min_jacobian:e}")]
    MeshFolding { min_jacobian: f64 },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("kernel matrix not positive definite even with jitter {jitter:e}")]
    Conditioning { jitter: f64 },

    #[error("level {level}: {source}")]
    Level {
        level: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("level {level}, coefficient {index}: {source}")]
    Coefficient {
        level: usize,
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed input: {0}")]
    Decode(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Load {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_level(self, level: usize) -> Self {
        Error::Level {
            level,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn load(path: impl Into<PathBuf>, source: Error) -> Self {
        Error::Load {
            path: path.into(),
            source: Box::new(source),
        }
    }
}
