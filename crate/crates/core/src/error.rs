use thiserror::Error;

/// Errors raised by the library. The `Display` strings are part of the CLI
/// contract and are matched by scripts, so keep their prefixes stable.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum WspError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },

    #[error("row count mismatch: expected {expected} rows, found {found}")]
    RowCount { expected: usize, found: usize },

    #[error("non-finite entry in row {row}")]
    NonFinite { row: usize },

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("region is empty")]
    EmptyRegion,

    #[error("N = {n} is not divisible by 2^{j}")]
    Divisibility { n: usize, j: u32 },

    #[error("under-resolved kernel: t = {t} < 2h = {two_h}")]
    UnderResolvedKernel { t: f64, two_h: f64 },

    #[error("kernel radius t = {t} exceeds half-width {half_width}")]
    KernelTooWide { t: f64, half_width: f64 },

    #[error("regime gate: {0}")]
    Regime(String),

    #[error("point outside tubular neighbourhood: dist = {dist} > iota = {iota}")]
    OutsideTube { dist: f64, iota: f64 },

    #[error("retraction singularity: |y - xi| = {0:e}")]
    Singularity(f64),

    #[error("point is not on the target manifold (dist = {0:e})")]
    NotOnManifold(f64),

    #[error("degenerate field near singular set")]
    DegenerateField,

    #[error("under-resolved loop: angular increment {increment} at loop step {step}")]
    UnderResolvedLoop { increment: f64, step: usize },

    #[error("chart construction failed: no free spherical cap of radius 5 degrees")]
    ChartFailure,

    #[error("exponent relation violated: {0}")]
    ExponentRelation(String),

    #[error("field is identically zero")]
    ZeroField,

    #[error("map fails the non-affineness witness: {0}")]
    AffineWitness(String),

    #[error("resolution violated: N = {n} < 32 j = {required}")]
    Resolution { n: usize, required: usize },

    #[error("unknown fixture '{0}'")]
    UnknownFixture(String),
}

pub type Result<T> = std::result::Result<T, WspError>;
