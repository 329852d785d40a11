//! Error and result types shared across the toolkit.

/// Errors produced by dataset handling, model validation, inference,
/// simulation, and reliability extrapolation.
#[derive(Debug, thiserror::Error)]
pub enum AdtError {
    /// A time grid violated an invariant (empty, non-increasing, negative
    /// times, or a uniform grid was required but not supplied).
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    /// A parameter violated its domain (non-positive variance, Hurst
    /// exponent outside (0, 1), inconsistent model variant, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Stress normalization was evaluated outside its domain, e.g. a
    /// non-positive absolute temperature under an Arrhenius law.
    #[error("stress domain error: {0}")]
    StressDomain(String),

    /// A covariance matrix could not be factorized even after the jitter
    /// ladder was exhausted.
    #[error("numerical conditioning failure: {0}")]
    Conditioning(String),

    /// Dataset-level validation failure (no levels, no units, duplicate
    /// unit ids, misaligned grids, ...).
    #[error("invalid dataset: {0}")]
    Dataset(String),

    /// A CSV record could not be parsed; `line` is 1-based and counts the
    /// header line.
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    /// An operation required observations or simulated paths aligned on a
    /// common time grid.
    #[error("grid alignment error: {0}")]
    GridAlignment(String),

    /// A reliability query ran past the simulated horizon.
    #[error("horizon exceeded: {0}")]
    HorizonExceeded(String),

    /// Relative error is undefined when a true parameter component is zero.
    #[error("relative error undefined: {0}")]
    UndefinedRelativeError(String),

    /// A fit or search failed to produce a usable estimate.
    #[error("estimation failure: {0}")]
    Estimation(String),

    /// I/O failure, wrapping the underlying error.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl AdtError {
    /// Stable machine-readable tag for each error class, used by the CLI's
    /// JSON error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            AdtError::InvalidGrid(_) => "invalid-grid",
            AdtError::InvalidParameter(_) => "invalid-parameter",
            AdtError::StressDomain(_) => "stress-domain",
            AdtError::Conditioning(_) => "conditioning",
            AdtError::Dataset(_) => "dataset",
            AdtError::Parse { .. } => "parse",
            AdtError::GridAlignment(_) => "grid-alignment",
            AdtError::HorizonExceeded(_) => "horizon-exceeded",
            AdtError::UndefinedRelativeError(_) => "undefined-relative-error",
            AdtError::Estimation(_) => "estimation",
            AdtError::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, AdtError>;
