use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("expected a {expected_rows}x{expected_cols} operator, got {rows}x{cols}")]
    DimensionMismatch {
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },

    #[error("{module}: invalid `{name}`: {reason}")]
    InvalidParameter {
        module: &'static str,
        name: &'static str,
        reason: String,
    },

    #[error("non-finite {what}")]
    NonFinite { what: &'static str },

    #[error("rf axis must be a non-zero vector")]
    ZeroAxis,

    #[error("eigenstate matching is ambiguous at sample {sample} (phi = {phi:.6} rad); increase the number of track samples")]
    AmbiguousMatch { sample: usize, phi: f64 },

    #[error("sample rate {sample_rate_hz} Hz is below 10x the maximum frequency ({required_hz} Hz required)")]
    Undersampled { sample_rate_hz: f64, required_hz: f64 },

    #[error("gate windows overlap at t = {at_s} s")]
    GateOverlap { at_s: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("segment of {duration_s} s exceeds the 9-level propagator limit of {limit_s} s; use the reduced two-level propagator")]
    FullPropagatorCost { duration_s: f64, limit_s: f64 },

    #[error("{module}: time step {dt_s} s exceeds the stability limit {max_dt_s} s")]
    StepTooLarge {
        module: &'static str,
        dt_s: f64,
        max_dt_s: f64,
    },

    #[error("sequence ends at {end_s} s, after the readout alignment at {readout_s} s")]
    SequenceTooLong { end_s: f64, readout_s: f64 },

    #[error("multi-period echo needs an even number of periods, got {0}")]
    OddPeriodCount(usize),

    #[error("{what} fit failed: {reason}")]
    FitFailed { what: &'static str, reason: String },
}

impl Error {
    /// Name of the module that raised the error, for CLI diagnostics.
    pub fn module(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "spincore",
            Error::InvalidParameter { module, .. } => module,
            Error::NonFinite { .. } | Error::ZeroAxis | Error::AmbiguousMatch { .. } => "spectral",
            Error::Undersampled { .. } | Error::GateOverlap { .. } => "feedforward",
            Error::Io { .. } | Error::Parse { .. } => "feedforward",
            Error::FullPropagatorCost { .. } => "dynamics",
            Error::StepTooLarge { module, .. } => module,
            Error::SequenceTooLong { .. } | Error::OddPeriodCount(_) | Error::FitFailed { .. } => {
                "protocols"
            }
        }
    }

    pub(crate) fn invalid(module: &'static str, name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            module,
            name,
            reason: reason.into(),
        }
    }
}
