use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid resolutions {left} and {right} have no common refinement at or below {max_cells} cells")]
    IncompatibleGrids {
        left: usize,
        right: usize,
        max_cells: usize,
    },

    #[error("contraction violated: lambda * ||W||_inf = {product} (must be < 1)")]
    ContractionViolated { product: f64 },

    #[error("strategy cap L = {cap} is too small: {bound} requires L >= {required}")]
    CapTooSmall {
        cap: f64,
        bound: &'static str,
        required: f64,
    },

    #[error("value {value} at index {index} lies outside [{lo}, {hi}]")]
    OutOfRange {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("negative regret {value} at index {index}")]
    NegativeRegret { index: usize, value: f64 },

    #[error("{size} does not divide reference resolution {reference}")]
    NotADivisor { size: usize, reference: usize },

    #[error("utility evaluation failed: {0}")]
    Utility(String),

    #[error("resolvent and direct solve disagree by {gap} (allowed {allowed})")]
    CrossCheck { gap: f64, allowed: f64 },

    #[error("linear system (I - lambda W) is singular at this resolution")]
    Singular,

    #[error("equilibrium certification failed: {0}")]
    Certification(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
