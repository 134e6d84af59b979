use std::path::PathBuf;

use crate::geometry::RigidTransform;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("degenerate patch: {0}")]
    DegeneratePatch(String),

    #[error("no valid depth")]
    NoValidDepth,

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient positives: {0}")]
    InsufficientPositives(String),

    #[error("empty patch bounding box")]
    EmptyBoundingBox,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("degenerate label set: {0}")]
    DegenerateLabels(String),

    #[error("benchmark bin {bin} cannot be filled: need {needed} {kind}, found {found}")]
    BinUnderfilled {
        bin: String,
        kind: &'static str,
        needed: usize,
        found: usize,
    },

    #[error("frame {0} is not covered by any fragment")]
    UncoveredFrame(usize),

    #[error("solver diverged: {reason}")]
    SolverDiverged {
        reason: String,
        last_poses: Vec<RigidTransform>,
    },

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("missing path: {}", .0.display())]
    MissingPath(PathBuf),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
