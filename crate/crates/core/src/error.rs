use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid voxel ratio {0}: must be an integer >= 2")]
    InvalidRatio(u32),
    #[error("degenerate grid: voxel ratio {ratio} is not smaller than extent {extent}")]
    DegenerateGrid { ratio: u32, extent: u32 },
    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),
    #[error("duplicate coordinate {0:?}")]
    DuplicateCoordinate([i32; 4]),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid kernel size {0}: must be odd")]
    InvalidKernel(usize),
    #[error("batch normalization needs at least 2 rows in training mode, got {0}")]
    DegenerateBatch(usize),
    #[error("inconsistent LR/HR pair: {0}")]
    Mapping(String),
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("PLY parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("missing attribute: {0}")]
    Attribute(String),
    #[error("degenerate recipe: {0}")]
    Recipe(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short machine-readable category tag.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidRatio(_) | Error::DegenerateGrid { .. } => "ratio",
            Error::InvalidCloud(_) | Error::DuplicateCoordinate(_) | Error::EmptyCloud => "cloud",
            Error::Shape(_) | Error::InvalidKernel(_) | Error::DegenerateBatch(_) => "shape",
            Error::Mapping(_) => "mapping",
            Error::Parse { .. } | Error::Attribute(_) => "parse",
            Error::Recipe(_) | Error::EmptyDataset => "dataset",
            Error::InsufficientData(_) => "bench",
            Error::Config(_) => "config",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
