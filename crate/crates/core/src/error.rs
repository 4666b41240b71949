use thiserror::Error;

/// Error variants shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input file row.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Structurally inconsistent dataset (mixed dimensions, gaps in ids, ...).
    #[error("schema error: {0}")]
    Schema(String),

    /// Operation restricted to p = 2 was called with another dimension.
    #[error("unsupported dimension p = {p}: {msg}")]
    UnsupportedDimension { p: usize, msg: &'static str },

    /// Too few or perfectly collocated sample points.
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    /// A density or slice row carries no mass where mass is required.
    #[error("empty mass: {0}")]
    EmptyMass(String),

    /// Grid too coarse for the requested operation.
    #[error("resolution too low: {0}")]
    Resolution(String),

    /// Two gridded objects do not share the same angle/probability/u grid.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A quantile row that must be nondecreasing is not.
    #[error("monotonicity violation in row {row}: values decrease at index {index}")]
    MonotonicityViolation { row: usize, index: usize },

    /// Frequency cutoff above what the u-grid can represent.
    #[error("cutoff too large: tau = {tau:.6} exceeds the grid Nyquist frequency {nyquist:.6}")]
    CutoffTooLarge { tau: f64, nyquist: f64 },

    /// Singular predictor covariance.
    #[error("rank-deficient design: predictor dimension {dim} {msg}")]
    RankDeficient { dim: usize, msg: String },

    /// Local weights collapse because no two distinct points fall in the window.
    #[error("bandwidth too small: h = {h:.6} leaves a degenerate local design at x = {x:.6}")]
    BandwidthTooSmall { h: f64, x: f64 },

    /// All responses identical; R^2 denominator vanishes.
    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    /// Weight vector unusable (all zero, or sum far from n).
    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),

    /// Gradient descent diverged; a numeric failure at runtime.
    #[error("step size too large: objective increased for {streak} consecutive iterations (eta = {eta}); retry with a smaller learning rate")]
    StepSize { eta: f64, streak: usize },

    /// Other numeric failure (non-finite intermediate, impossible state).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Invalid argument combination not covered by a more specific variant.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Numeric failures map to CLI exit code 2; everything else is a
    /// validation failure (exit code 1).
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::StepSize { .. } | Error::Numeric(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
