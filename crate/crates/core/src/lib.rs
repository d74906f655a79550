//! Chord-conditioned symbolic melody generation with implicit (recurrent) and
//! explicit (dilated convolutional) structure encoding.
//!
//! The crate is organised bottom-up:
//!
//! * [`ingest`] reads Standard MIDI Files and a line-oriented text score format.
//! * [`encoding`] quantizes scores onto a 1/16-beat frame grid and produces the
//!   label sequences and one-hot tensors consumed by the models.
//! * [`numerics`] is the dense `f64` substrate: tensors, parameter store,
//!   optimizers, checkpoints and a finite-difference gradient checker.
//! * [`lstm`] and [`tcn`] hold the three sequence models with hand-derived
//!   backward passes.
//! * [`training`] splits corpora, trains, evaluates and samples continuations.
//! * [`analysis`] builds variable Markov oracles, sweeps the similarity
//!   threshold by information rate and discovers repeated motifs, either from
//!   synthesized audio chromagrams or directly from note pitch classes.
//! * [`stats`] implements one-way ANOVA and two-sample t-tests on top of an
//!   in-house regularized incomplete beta function.

pub mod analysis;
pub mod encoding;
pub mod ingest;
pub mod lstm;
pub mod numerics;
pub mod stats;
pub mod tcn;
pub mod training;

pub use encoding::{FrameSequence, WaveNetFrames};
pub use ingest::{ChordEvent, NoteEvent, PitchClassSet, SymbolicScore};
pub use numerics::{ParamId, ParamStore, Tensor};
