use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("pixel ({x}, {y}) outside the {width}x{height} image")]
    PixelOutOfBounds { x: f64, y: f64, width: u32, height: u32 },

    #[error("uv ({u}, {v}) is not covered by any triangle")]
    UvNotCovered { u: f64, v: f64 },

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("model-space point {0:?} lies outside [-1, 1]^3")]
    OutsideCube([f64; 3]),

    #[error("non-positive composed scale {0:?}")]
    NonPositiveScale([f64; 3]),

    #[error("hierarchy depth {0} exceeds the traversal stack")]
    TooDeep(usize),

    #[error("version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),

    #[error("truncated data: {0}")]
    Truncated(String),

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("optimization diverged at iteration {iteration}; state dumped to {}", .dump.display())]
    Diverged { iteration: usize, dump: PathBuf },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("png: {0}")]
    Png(String),
}

impl Error {
    /// Stable machine-readable category, printed by the command line tool.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) | Error::Empty(_) | Error::ShapeMismatch(_) => "invalid_input",
            Error::PixelOutOfBounds { .. } | Error::OutsideCube(_) => "out_of_bounds",
            Error::UvNotCovered { .. } | Error::Degenerate(_) | Error::NonPositiveScale(_) => {
                "degenerate"
            }
            Error::TooDeep(_) => "accel",
            Error::VersionMismatch { .. } | Error::BadMagic(_) => "version",
            Error::Truncated(_) => "truncated",
            Error::MissingFile(_) => "missing_file",
            Error::NonFinite(_) | Error::Diverged { .. } => "numeric",
            Error::Parse(_) | Error::Json(_) => "parse",
            Error::Io(_) | Error::Png(_) => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "invalid_input" => 2,
            "out_of_bounds" => 3,
            "degenerate" => 4,
            "accel" => 5,
            "version" => 6,
            "truncated" => 7,
            "missing_file" => 8,
            "numeric" => 9,
            "parse" => 10,
            _ => 11,
        }
    }
}
