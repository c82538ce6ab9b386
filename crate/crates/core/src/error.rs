use std::path::PathBuf;

use thiserror::Error;

use crate::raster::Dims;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dimension mismatch: {a} vs {b}")]
    DimensionMismatch { a: Dims, b: Dims },

    #[error("inner mask is not contained in outer mask (first offending pixel at x={x}, y={y})")]
    MaskInconsistent { x: usize, y: usize },

    #[error("bad patch size {patch}: {reason}")]
    BadPatchSize { patch: usize, reason: &'static str },

    #[error("bad offset ({dy},{dx}): {reason}")]
    BadOffset {
        dy: i32,
        dx: i32,
        reason: &'static str,
    },

    #[error("bad level count {0}: need at least one level")]
    BadLevels(usize),

    #[error("feature grids differ: {a} vs {b}")]
    GridMismatch { a: Dims, b: Dims },

    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    FeatureDimension { expected: usize, got: usize },

    #[error("covariance is not positive definite: pivot {pivot} is {value:e}")]
    SingularCovariance { pivot: usize, value: f64 },

    #[error("empty class: {0}")]
    EmptyClass(&'static str),

    #[error("bad config: {0}")]
    BadConfig(String),

    #[error("unknown scene {0:?}")]
    UnknownScene(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Stable short name used in CLI diagnostics.
    pub fn name(&self) -> &'static str {
        match self {
            Error::NotFound(_) => "NotFound",
            Error::Format(_) => "FormatError",
            Error::Io { .. } => "IoError",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::MaskInconsistent { .. } => "MaskInconsistent",
            Error::BadPatchSize { .. } => "BadPatchSize",
            Error::BadOffset { .. } => "BadOffset",
            Error::BadLevels(_) => "BadLevels",
            Error::GridMismatch { .. } => "GridMismatch",
            Error::FeatureDimension { .. } => "DimensionMismatch",
            Error::SingularCovariance { .. } => "SingularCovariance",
            Error::EmptyClass(_) => "EmptyClass",
            Error::BadConfig(_) => "BadConfig",
            Error::UnknownScene(_) => "UnknownScene",
            Error::Internal(_) => "InternalError",
            Error::Context { source, .. } => source.name(),
        }
    }

    /// Innermost error, skipping context layers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn read(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::NotFound(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn write(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub trait ResultExt<T> {
    fn context(self, context: impl FnOnce() -> String) -> Result<T>;
}

impl<T> ResultExt<T> for Result<T> {
    fn context(self, context: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|e| e.context(context()))
    }
}
