//! Recurrent melody models.
//!
//! The unidirectional model reads, at frame `i`, the previous melody label
//! (a learned start vector at frame 0) and the current chord. The
//! bidirectional-context model replaces the chord one-hot with the output of
//! a forward and a backward LSTM run over the complete chord progression, so
//! the melody stays causal while the chords are seen globally.

mod layer;
mod model;
mod stack;

pub use layer::{lstm_cell, LayerCache, LstmLayer};
pub use model::{LstmModel, LstmModelConfig, LstmStepper, ModelCache};
pub use stack::{LstmStack, StackCache};

use crate::numerics::NumericsError;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LstmError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    Shape { expected: Vec<usize>, found: Vec<usize> },
    #[error("checkpoint lacks parameter `{0}`")]
    MissingParam(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}
