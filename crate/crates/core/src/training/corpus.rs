use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoding::{transpose_frames, FrameSequence};

use super::TrainError;

/// A named song. Transposed copies carry a `__tNN` suffix on their source id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Song {
    pub id: String,
    pub frames: FrameSequence,
}

impl Song {
    pub fn new(id: impl Into<String>, frames: FrameSequence) -> Self {
        Self { id: id.into(), frames }
    }

    pub fn source(&self) -> &str {
        source_id(&self.id)
    }
}

/// Strips a trailing `__tNN` transposition marker.
pub fn source_id(id: &str) -> &str {
    match id.rsplit_once("__t") {
        Some((base, shift)) if !shift.is_empty() && shift.bytes().all(|b| b.is_ascii_digit()) => base,
        _ => id,
    }
}

pub fn transposed_id(source: &str, semitones: u8) -> String {
    format!("{source}__t{semitones:02}")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrainSize {
    Count(usize),
    Fraction(f64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusSplit {
    pub train: Vec<Song>,
    pub held_out: Vec<Song>,
    pub augmented: bool,
}

impl CorpusSplit {
    pub fn train_frames(&self) -> impl Iterator<Item = &FrameSequence> {
        self.train.iter().map(|s| &s.frames)
    }

    pub fn held_out_frames(&self) -> impl Iterator<Item = &FrameSequence> {
        self.held_out.iter().map(|s| &s.frames)
    }
}

/// Shuffles source songs with `seed` and assigns the first `size` of them to
/// training. Songs sharing a source id stay together. With `augment`, each
/// training source is replaced by its 12 transpositions.
pub fn split_corpus(songs: &[Song], size: TrainSize, seed: u64, augment: bool) -> Result<CorpusSplit, TrainError> {
    if songs.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let mut groups: BTreeMap<&str, Vec<&Song>> = BTreeMap::new();
    for song in songs {
        groups.entry(song.source()).or_default().push(song);
    }
    let mut keys: Vec<&str> = groups.keys().copied().collect();
    keys.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = match size {
        TrainSize::Count(n) => n,
        TrainSize::Fraction(f) if (0.0..=1.0).contains(&f) => (f * keys.len() as f64).round() as usize,
        TrainSize::Fraction(f) => return Err(TrainError::Config(format!("train fraction {f} outside [0, 1]"))),
    };
    if n_train > keys.len() {
        return Err(TrainError::Config(format!("train count {n_train} exceeds {} source songs", keys.len())));
    }
    let mut train = Vec::new();
    for key in &keys[..n_train] {
        let group = &groups[key];
        if augment {
            // The untransposed original (or the first member) seeds all 12 keys.
            let base = group.iter().find(|s| s.id == *key).unwrap_or(&group[0]);
            train.extend((0..12).map(|s| Song::new(transposed_id(key, s), transpose_frames(&base.frames, s))));
        } else {
            train.extend(group.iter().map(|s| (*s).clone()));
        }
    }
    let held_out = keys[n_train..].iter().flat_map(|k| groups[k].iter().map(|s| (*s).clone())).collect();
    Ok(CorpusSplit { train, held_out, augmented: augment })
}
