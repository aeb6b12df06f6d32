use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid material parameters: {0}")]
    Material(String),

    #[error("port mismatch: {0}")]
    PortMismatch(String),

    #[error("layout error: {0}")]
    Layout(String),

    #[error("system is singular or indefinite: {0}")]
    Singular(String),

    #[error("condensed matrix not positive definite at port {port}, mode {mode}")]
    NotPositiveDefinite { port: usize, mode: usize },

    #[error("stale factorization: cached state was computed for a different design point")]
    StaleFactorization,

    #[error("aggregation error: {0}")]
    Aggregation(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("library format error: {0}")]
    LibraryFormat(String),

    #[error("library checksum mismatch: stored {stored}, computed {computed}")]
    ChecksumMismatch { stored: String, computed: String },

    #[error("unsupported library version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("postprocessing error: {0}")]
    Postprocess(String),

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
