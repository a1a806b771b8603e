use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("transform undefined at exact degeneracy")]
    DegenerateTransform,

    #[error("zero sweep rate; adiabatic limit")]
    ZeroSweepRate,

    #[error("invalid protocol: {}", .0.join("; "))]
    InvalidProtocol(Vec<String>),

    #[error("numerical blow-up at t = {t} s")]
    NumericalBlowUp { t: f64 },

    #[error("not an adiabatic stroke: {0}")]
    NotAdiabaticStroke(String),

    #[error("not an isochoric stroke: {0}")]
    NotIsochoricStroke(String),

    #[error("no heat intake; not operating as engine")]
    NoHeatIntake,

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("series too short: need at least {needed} samples, got {got}")]
    SeriesTooShort { needed: usize, got: usize },

    #[error("unresolved splitting")]
    UnresolvedSplitting,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
