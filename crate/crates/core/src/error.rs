use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, OwmError>;

#[derive(Debug, Error)]
pub enum OwmError {
    #[error("invalid configuration: {0}")]
    Config(String),

    /// `tan(pi * f * dt)` is undefined at this carrier frequency.
    #[error("carrier {frequency} Hz sits on a tangent pole of the speed formula (f*dt = {cycles_per_step})")]
    TangentPole { frequency: f64, cycles_per_step: f64 },

    #[error("shape mismatch for {what}: expected {expected} cells, got {actual}")]
    Shape {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("numerical instability: non-finite field value after step {step}")]
    Instability { step: u64 },

    #[error("frame {frame}: probability {value} for category {category} is outside [0, 1]")]
    ProbabilityRange {
        frame: usize,
        category: usize,
        value: f64,
    },

    #[error("frame {frame}: expected {expected} probabilities, got {actual}")]
    FrameLength {
        frame: usize,
        expected: usize,
        actual: usize,
    },

    #[error("frame times must strictly increase: {current} s follows {previous} s")]
    NonMonotoneTime { previous: f64, current: f64 },

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Stream(#[from] std::io::Error),
}

impl OwmError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        OwmError::Config(msg.into())
    }

    pub fn io_at(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        OwmError::Io {
            path: path.into(),
            source,
        }
    }
}
