use thiserror::Error;

use crate::wrench::Component;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("yaw {yaw} is at the logarithm branch cut (|yaw| >= pi - 1e-6)")]
    YawAtBranchCut { yaw: f64 },

    /// `at` is a 1-based line number for logs, a 0-based index for in-memory sequences.
    #[error("timestamps are not strictly increasing at {at}")]
    NonMonotonicTime { at: usize },

    #[error("at least {needed} samples are required, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("point ({x}, {y}) lies outside the terrain bounds")]
    OutOfBounds { x: f64, y: f64 },

    #[error("gravity norm {norm} m/s^2 is outside the plausible band [8.0, 11.5]")]
    ImplausibleGravityNorm { norm: f64 },

    #[error("malformed telemetry row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },

    #[error("unexpected telemetry header: {0}")]
    BadHeader(String),

    #[error("{remaining} samples remain but the median window needs {window}")]
    WindowTooShort { remaining: usize, window: usize },

    #[error("window {window_id} has no dominant twist axis")]
    NoDominantAxis { window_id: usize },

    #[error("design matrix for {component} is ill-conditioned (condition number {condition:e})")]
    IllConditioned { component: Component, condition: f64 },

    #[error("{component} needs at least {needed} samples, got {got}")]
    InsufficientSamples {
        component: Component,
        needed: usize,
        got: usize,
    },

    #[error("non-finite power at t = {t} s")]
    NonFinitePower { t: f64 },

    #[error("path endpoints do not match: {0}")]
    EndpointMismatch(String),

    #[error("no path to the goal")]
    NoPath,

    #[error("negative edge energy {energy} J; the lattice search needs non-negative costs")]
    NegativeEdgeCost { energy: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid terrain: {0}")]
    InvalidTerrain(String),

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::MalformedRow { .. }
                | Error::BadHeader(_)
                | Error::NonMonotonicTime { .. }
                | Error::InvalidConfig(_)
                | Error::InvalidTerrain(_)
                | Error::InvalidPath(_)
                | Error::EndpointMismatch(_)
                | Error::Json(_)
                | Error::Csv(_)
        )
    }
}
