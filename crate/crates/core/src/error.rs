use thiserror::Error;

use crate::mgf::CurveKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("theta mismatch: {left} vs {right}")]
    ThetaMismatch { left: f64, right: f64 },

    #[error("expected {expected:?} curve, found {found:?}")]
    KindMismatch {
        expected: CurveKind,
        found: CurveKind,
    },

    #[error("unstable at theta = {theta}: tail ratio {ratio} does not decay")]
    Unstable { theta: f64, ratio: f64 },

    #[error("horizon too short: {available} terms available, {needed} needed to certify the tail")]
    HorizonTooShort { needed: usize, available: usize },

    #[error("empty sequence")]
    EmptySequence,

    #[error("invalid Hoelder pair (kappa = {kappa}, nu = {nu})")]
    InvalidHolderPair { kappa: f64, nu: f64 },

    #[error("theta {0} is not tabulated")]
    ThetaNotTabulated(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("no stable theta in the grid")]
    NoStableTheta,

    #[error("tau_max = {tau_max} leaves a remainder of {remainder:e} (sum {sum:e})")]
    InsufficientTerms {
        tau_max: u64,
        remainder: f64,
        sum: f64,
    },

    #[error("source violates its leaky bucket: {0}")]
    NonCompliantSource(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
