use thiserror::Error;

/// Errors produced anywhere in the solver pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{axis}: domain length / cell size = {ratio} is not integral")]
    NonIntegralGrid { axis: char, ratio: f64 },

    #[error("{axis}: grid has {cells} cells, at least 3 are required")]
    DegenerateGrid { axis: char, cells: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{axis}: periodic boundary must be set on both ends or neither")]
    PeriodicMismatch { axis: char },

    #[error("timestep {dt} exceeds the explicit stability bound {max_dt}")]
    CflViolation { dt: f64, max_dt: f64 },

    #[error("shape mismatch: expected {expected} values, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("non-finite state at step {step}")]
    NonFiniteState { step: usize },

    #[error("quota must be positive and finite, got {0}")]
    NonPositiveQuota(f64),

    #[error("face {face}: flux/quota ratio {ratio:e} exceeds 2^53 quanta")]
    QuotaTooSmall { face: usize, ratio: f64 },

    #[error("cell index {index} out of range for {len} cells")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("no predicted frame aligned with teacher time t={t}")]
    FrameMisalignment { t: f64 },

    #[error("empty quota search range [{lo}, {hi}]")]
    EmptySearchRange { lo: f64, hi: f64 },

    #[error("unsupported initial condition: {0}")]
    UnsupportedIc(String),

    #[error("reference field is identically zero")]
    ZeroReference,

    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error("config: {0}")]
    Config(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
