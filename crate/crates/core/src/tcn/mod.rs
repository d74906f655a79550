//! Dilated causal convolutional melody model.
//!
//! Frame `t` sees the one-hot of melody label `t-1` (zeros at `t = 0`) and
//! the chord one-hot of frame `t`. A 1×1 input projection feeds a stack of
//! gated residual blocks whose skip outputs are summed into a two-layer
//! ReLU head over the 128 labels.

mod conv;
mod model;

pub use conv::{dilated_causal_conv, dilated_causal_conv_backward};
pub use model::{BlockCache, GatedBlock, TcnCache, TcnModel};

use crate::encoding::CHORD_VOCAB;
use crate::numerics::NumericsError;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TcnError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    Shape { expected: Vec<usize>, found: Vec<usize> },
    #[error("condition covers {condition} frames but melody has {melody}")]
    ConditionLength { melody: usize, condition: usize },
    #[error("checkpoint lacks parameter `{0}`")]
    MissingParam(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TcnConfig {
    pub kernel: usize,
    pub dilations: Vec<usize>,
    pub residual_channels: usize,
    pub skip_channels: usize,
    pub condition_dim: usize,
}

impl Default for TcnConfig {
    fn default() -> Self {
        Self {
            kernel: 2,
            dilations: vec![1, 2, 4, 8, 16, 32, 64, 128, 256],
            residual_channels: 64,
            skip_channels: 128,
            condition_dim: CHORD_VOCAB,
        }
    }
}

impl TcnConfig {
    pub fn validate(&self) -> Result<(), TcnError> {
        if self.kernel == 0 || self.dilations.contains(&0) {
            return Err(TcnError::Config("kernel and dilations must be positive".into()));
        }
        if self.residual_channels == 0 || self.skip_channels == 0 {
            return Err(TcnError::Config("channel counts must be positive".into()));
        }
        if self.condition_dim != CHORD_VOCAB {
            return Err(TcnError::Config(format!("condition_dim must be {CHORD_VOCAB}")));
        }
        Ok(())
    }
}

/// `1 + Σ (kernel - 1) · d` frames.
pub fn receptive_field(config: &TcnConfig) -> usize {
    1 + config.dilations.iter().map(|d| (config.kernel - 1) * d).sum::<usize>()
}
