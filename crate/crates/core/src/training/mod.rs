//! Corpus splitting, teacher-forced training with held-out model selection,
//! evaluation and autoregressive continuation.

mod corpus;
mod fit;
mod generate;
mod network;

pub use corpus::{source_id, split_corpus, transposed_id, CorpusSplit, Song, TrainSize};
pub use fit::{evaluate_xent, train, write_loss_csv, EpochLoss, TrainConfig, TrainReport};
pub use generate::{generate_continuation, sample_label, GenerationTask};
pub use network::{Example, ModelConfig, ModelKind, Network};

use crate::encoding::EncodingError;
use crate::lstm::LstmError;
use crate::numerics::NumericsError;
use crate::tcn::TcnError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("{0}")]
    Config(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("no non-empty sequences to evaluate")]
    EmptyData,
    #[error("io: {0}")]
    Io(String),
    #[error("training diverged in epoch {epoch} after {step} steps")]
    Diverged { epoch: usize, step: usize },
    #[error("chord progression covers {available} frames, {needed} needed")]
    ChordCoverage { needed: usize, available: usize },
    #[error("prime has {available} frames, {needed} needed")]
    PrimeTooShort { needed: usize, available: usize },
    #[error(transparent)]
    Lstm(#[from] LstmError),
    #[error(transparent)]
    Tcn(#[from] TcnError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
}

impl TrainError {
    /// True when the error comes from a NaN or infinity in a forward or
    /// backward pass.
    pub fn is_non_finite(&self) -> bool {
        let numerics = |e: &NumericsError| matches!(e, NumericsError::NonFinite(_) | NumericsError::NonFiniteGrad(_));
        match self {
            TrainError::Lstm(LstmError::NonFinite(_)) | TrainError::Tcn(TcnError::NonFinite(_)) => true,
            TrainError::Lstm(LstmError::Numerics(e)) | TrainError::Tcn(TcnError::Numerics(e)) | TrainError::Numerics(e) => {
                numerics(e)
            }
            _ => false,
        }
    }
}
