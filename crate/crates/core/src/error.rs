use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty image")]
    EmptyImage,
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("image {width}x{height} too small for {levels} pyramid levels")]
    ImageTooSmall {
        width: usize,
        height: usize,
        levels: usize,
    },
    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(f64),
    #[error("coordinate outside lattice support: ({x}, {y})")]
    OutsideSupport { x: f64, y: f64 },
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
    #[error("unsplittable patch grid: {cols}x{rows} patches into {groups} groups")]
    UnsplittablePatchGrid {
        cols: usize,
        rows: usize,
        groups: usize,
    },
    #[error("unsupported group count {0} (expected 1, 2 or 4)")]
    UnsupportedGroupCount(usize),
    #[error("invalid bounds for gene {index}: [{lo}, {hi}]")]
    InvalidBounds { index: usize, lo: f64, hi: f64 },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("lattice not subdividable to requested depth: {0}")]
    NotSubdividable(String),
    #[error("unevaluated individual at index {0}")]
    Unevaluated(usize),
    #[error("no overlap")]
    NoOverlap,
    #[error("mesh configuration mismatch")]
    ConfigMismatch,
    #[error("crop {crop} larger than base image {width}x{height}")]
    CropTooLarge {
        crop: usize,
        width: usize,
        height: usize,
    },
    #[error("empty population")]
    EmptyPopulation,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed PGM: {0}")]
    Pgm(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] ::image::ImageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
