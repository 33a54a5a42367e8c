use thiserror::Error;

use crate::onchip::CellOutcome;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("non-finite value for `{0}`")]
    NonFinite(&'static str),

    #[error(
        "amplitude {0} V is outside the 0.75 V safe operating range; sweeping beyond it risks device damage"
    )]
    UnsafeAmplitude(f64),

    #[error("read voltage {v_read} V is not below the SET threshold {v_set} V and would disturb the state")]
    DisturbingRead { v_read: f64, v_set: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("trace does not cover a full sweep cycle")]
    ShortTrace,

    #[error("unknown glyph `{0}` (expected one of X, O, T, H)")]
    UnknownGlyph(String),

    #[error("loss became NaN at epoch {0}")]
    NanLoss(usize),

    #[error("weight {0} is outside [0, 2.5]")]
    WeightOutOfRange(f64),

    #[error("target conductance {0} S is outside [0, 2.5 mS]")]
    InvalidTarget(f64),

    #[error("cell did not reach its target after {} cycles (final {} S, target {} S)", .0.cycles, .0.final_g, .0.target_g)]
    NonConvergent(CellOutcome),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn ensure_finite(value: f64, name: &'static str) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(name))
    }
}
