use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid robot model: {0}")]
    InvalidModel(String),

    #[error("index {index} out of range for {len} links")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dataset contains no samples")]
    EmptyDataset,

    #[error("non-finite {what} at joint {joint}")]
    NonFinite { what: &'static str, joint: usize },

    #[error("mass matrix is singular at q = {q:?}")]
    SingularMassMatrix { q: Vec<f64> },

    #[error("simulation diverged at t = {t} s: {source}")]
    Simulation {
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("normal equations are singular (rank-deficient regressor); use the SVD solver")]
    SingularNormalEquations,

    #[error("tuning failed: {0}")]
    Tuning(String),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dim(what: &'static str, expected: usize, got: usize) -> Self {
        Error::Dimension {
            what,
            expected,
            got,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl std::fmt::Display) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }

    /// Strips any [`Error::Simulation`] wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Simulation { source, .. } => source.root(),
            other => other,
        }
    }
}
