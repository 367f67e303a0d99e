use std::path::PathBuf;

/// Errors raised across the simulator, receiver and refiner.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument is out of its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A scenario or construction request cannot be satisfied.
    #[error("configuration error: {0}")]
    Config(String),

    /// Vector or tensor dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Malformed input file.
    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    /// A non-finite value appeared where it must not.
    #[error("numeric error in {tensor}: {msg}")]
    Numeric { tensor: String, msg: String },

    /// Training diverged.
    #[error("training failed at epoch {epoch}: {msg}")]
    Training { epoch: usize, msg: String },

    /// A sweep point failed; names the axis value.
    #[error("{axis} = {value}: {source}")]
    Sweep {
        axis: String,
        value: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors the CLI reports as configuration problems.
    pub fn is_config(&self) -> bool {
        if let Error::Sweep { source, .. } = self {
            return source.is_config();
        }
        matches!(
            self,
            Error::Parameter(_) | Error::Config(_) | Error::Shape(_) | Error::Format { .. }
        )
    }

    /// True for numeric blow-ups and training divergence.
    pub fn is_numeric(&self) -> bool {
        if let Error::Sweep { source, .. } = self {
            return source.is_numeric();
        }
        matches!(self, Error::Numeric { .. } | Error::Training { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
