use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate point {point:?}: no projection onto the target exists")]
    DegeneratePoint { point: [f64; 3] },

    #[error("band {k} outside [{k_min}, {k_max}]")]
    BandOutOfRange { k: i32, k_min: i32, k_max: i32 },

    #[error("negative heat time {0}")]
    NegativeTime(f64),

    #[error("boost ({0}, {1}) is not compatible with the periodic grid")]
    IncompatibleBoost(f64, f64),

    #[error("fixed-point iteration did not converge at step {step} (residual {residual:e})")]
    NoConvergence { step: usize, residual: f64 },

    #[error("time step {dt} violates stability limit {limit}")]
    StepTooLarge { dt: f64, limit: f64 },

    #[error("need at least {needed} slices, got {got}")]
    TooFewSlices { needed: usize, got: usize },

    #[error("energy {energy} is not below the threshold {threshold}")]
    EnergyAboveThreshold { energy: f64, threshold: f64 },

    #[error("frame drift {drift:e} at s-slice {slice} exceeds tolerance")]
    FrameDrift { slice: usize, drift: f64 },

    #[error("missing slices: {0}")]
    MissingSlices(String),

    #[error("heat flow did not trivialize (oscillation {0:e})")]
    NotTrivialized(f64),

    #[error("tail bound {tail:e} exceeds 10% of field norm {norm:e}")]
    TailTooLarge { tail: f64, norm: f64 },

    #[error("exponent {p} must exceed delta {delta}")]
    ExponentTooSmall { p: f64, delta: f64 },

    #[error("need at least {needed} samples in the fit window, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("scenario {scenario} is not available for this target")]
    ScenarioTargetMismatch { scenario: String },

    #[error("bad snapshot magic {0:?}")]
    BadMagic([u8; 4]),

    #[error("bad snapshot header: {0}")]
    BadHeader(String),

    #[error("truncated payload: expected {expected} bytes, got {got}")]
    TruncatedPayload { expected: usize, got: usize },

    #[error("snapshot value at index {index} is off target by {defect:e}")]
    ConstraintViolation { index: usize, defect: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for configuration/input errors, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::NoConvergence { .. }
            | Error::DegeneratePoint { .. }
            | Error::FrameDrift { .. }
            | Error::NotTrivialized(_)
            | Error::TailTooLarge { .. } => 3,
            _ => 2,
        }
    }
}
