use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("mesh contains no triangles")]
    EmptyMesh,

    #[error("vertex index {index} out of range (vertex count {count})")]
    Index { index: i64, count: usize },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("mesh is not watertight: {inconsistent} of {total} voxels disagree across ray axes")]
    NotWatertight { inconsistent: usize, total: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },

    #[error("metric `{0}` is undefined: zero denominator")]
    UndefinedMetric(&'static str),

    #[error("form has no occupied voxels")]
    EmptyForm,

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the filesystem rather than of the inputs' content.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
