use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("slice {0} referenced by the stack manifest does not exist")]
    MissingSlice(PathBuf),
    #[error("slice {path} is {found:?}, expected {expected:?}")]
    DimensionMismatch {
        path: PathBuf,
        expected: (u32, u32),
        found: (u32, u32),
    },
    #[error("unsupported pixel format in {path}: {format}")]
    UnsupportedPixelFormat { path: PathBuf, format: String },
    #[error("stack manifest lists no slices")]
    EmptyStack,
    #[error("invalid volume: {0}")]
    InvalidVolume(String),
    #[error("z range {start}..={end} outside 0..{nz}")]
    RangeOutOfBounds { start: usize, end: usize, nz: usize },
    #[error("invalid downscale target {target:?} for dims {dims:?}")]
    InvalidTarget {
        dims: [usize; 3],
        target: [usize; 3],
    },
    #[error("invalid phantom spec: {0}")]
    InvalidSpec(String),

    #[error("histogram is empty")]
    EmptyHistogram,
    #[error("histogram is degenerate: all mass in bin {0}")]
    DegenerateHistogram(u8),
    #[error("threshold iteration produced an empty region at T = {threshold}")]
    EmptyRegion { threshold: u8 },
    #[error("threshold iteration did not converge within {cap} iterations (last T = {last})")]
    NonConvergence { cap: usize, last: u8 },
    #[error("invalid start threshold {0}, expected 1..=254")]
    InvalidStart(i64),

    #[error("no circle found (best normalized votes {best:.3} below floor {floor:.3})")]
    NoCircleFound { best: f64, floor: f64 },
    #[error("circle ({cx:.1}, {cy:.1}, r = {r:.1}) lies outside a {nx}x{ny} slice")]
    CircleOutOfBounds {
        cx: f64,
        cy: f64,
        r: f64,
        nx: usize,
        ny: usize,
    },
    #[error("slice too small for circle detection: {0}x{1}, minimum 64")]
    SliceTooSmall(usize, usize),

    #[error("unsupported slicemap scheme {0}, expected 128, 256 or 512")]
    UnsupportedScheme(usize),
    #[error("slicemap manifest mismatch: {0}")]
    ManifestMismatch(String),
    #[error("slice index {index} out of range for scheme {s}")]
    IndexOutOfRange { index: usize, s: usize },

    #[error("volume is empty")]
    EmptyVolume,
    #[error("invalid view parameters: {0}")]
    InvalidView(String),

    #[error("dataset {0} not found")]
    UnknownDataset(String),
    #[error("malformed bundle {id}: {reason}")]
    MalformedBundle { id: String, reason: String },
    #[error("a build for dataset {0} is already in progress")]
    BuildInProgress(String),
    #[error("invalid dataset id {0:?}")]
    InvalidId(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    /// Wraps the error with the name of the pipeline stage that raised it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error below any stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}
