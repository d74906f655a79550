//! Frame-level encodings of scores.
//!
//! The recurrent models use a 130-symbol melody alphabet (128 pitch onsets,
//! rest, hold) and a 25-symbol chord alphabet (12 major, 12 minor, none).
//! The convolutional model uses a 128-symbol melody alphabet where 0 is a
//! rest and a repeated label is a sustain.

mod chord;
mod frames_csv;

pub use chord::{chord_root, chord_template, hash_chord, transpose_chord, CHORD_VOCAB, NO_CHORD};
pub use frames_csv::{read_frames_csv, write_frames_csv};

use crate::ingest::{ChordEvent, NoteEvent, SymbolicScore, REFERENCE_BPM};
use crate::numerics::Tensor;

pub const FRAMES_PER_BEAT: u32 = 16;
pub const REST: u8 = 128;
pub const HOLD: u8 = 129;
pub const MELODY_VOCAB: usize = 130;
pub const WAVENET_VOCAB: usize = 128;
/// Width of one recurrent-model input row: melody one-hot then chord one-hot.
pub const LSTM_INPUT_DIM: usize = MELODY_VOCAB + CHORD_VOCAB;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum EncodingError {
    #[error("melody and chord streams differ in length ({melody} vs {chords})")]
    LengthMismatch { melody: usize, chords: usize },
    #[error("label {label} at frame {frame} out of range")]
    LabelOutOfRange { frame: usize, label: u8 },
    #[error("hold at frame {0} does not follow a sounding pitch")]
    OrphanHold(usize),
    #[error("score has no events")]
    EmptyScore,
    #[error("chords overlap at frame {0}")]
    ChordOverlap(usize),
    #[error("frames csv: {0}")]
    Csv(String),
}

/// Per-frame melody labels (0..=129) and chord labels (0..=24).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameSequence {
    melody: Vec<u8>,
    chords: Vec<u8>,
}

impl FrameSequence {
    pub fn new(melody: Vec<u8>, chords: Vec<u8>) -> Result<Self, EncodingError> {
        if melody.len() != chords.len() {
            return Err(EncodingError::LengthMismatch { melody: melody.len(), chords: chords.len() });
        }
        let mut prev_sounding = false;
        for (frame, &label) in melody.iter().enumerate() {
            match label {
                0..=127 => prev_sounding = true,
                REST => prev_sounding = false,
                HOLD if prev_sounding => {}
                HOLD => return Err(EncodingError::OrphanHold(frame)),
                _ => return Err(EncodingError::LabelOutOfRange { frame, label }),
            }
        }
        if let Some((frame, &label)) = chords.iter().enumerate().find(|(_, &c)| c > NO_CHORD) {
            return Err(EncodingError::LabelOutOfRange { frame, label });
        }
        Ok(Self { melody, chords })
    }

    pub fn melody(&self) -> &[u8] {
        &self.melody
    }

    pub fn chords(&self) -> &[u8] {
        &self.chords
    }

    pub fn len(&self) -> usize {
        self.melody.len()
    }

    pub fn is_empty(&self) -> bool {
        self.melody.is_empty()
    }

    /// Leading `frames` frames (clamped to the length).
    pub fn prefix(&self, frames: usize) -> Self {
        let n = frames.min(self.len());
        Self { melody: self.melody[..n].to_vec(), chords: self.chords[..n].to_vec() }
    }

    pub(crate) fn from_parts_unchecked(melody: Vec<u8>, chords: Vec<u8>) -> Self {
        debug_assert!(Self::new(melody.clone(), chords.clone()).is_ok());
        Self { melody, chords }
    }
}

/// Melody labels in the 128-symbol convolutional representation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WaveNetFrames {
    melody: Vec<u8>,
    chords: Vec<u8>,
}

impl WaveNetFrames {
    pub fn new(melody: Vec<u8>, chords: Vec<u8>) -> Result<Self, EncodingError> {
        if melody.len() != chords.len() {
            return Err(EncodingError::LengthMismatch { melody: melody.len(), chords: chords.len() });
        }
        if let Some((frame, &label)) = melody.iter().enumerate().find(|(_, &m)| m > 127) {
            return Err(EncodingError::LabelOutOfRange { frame, label });
        }
        if let Some((frame, &label)) = chords.iter().enumerate().find(|(_, &c)| c > NO_CHORD) {
            return Err(EncodingError::LabelOutOfRange { frame, label });
        }
        Ok(Self { melody, chords })
    }

    pub fn melody(&self) -> &[u8] {
        &self.melody
    }

    pub fn chords(&self) -> &[u8] {
        &self.chords
    }

    pub fn len(&self) -> usize {
        self.melody.len()
    }

    pub fn is_empty(&self) -> bool {
        self.melody.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantizeWarning {
    /// Note rounded to zero frames; kept as a single frame.
    VanishingNote { tick: u64, pitch: u8 },
    /// A note's frames were overwritten by the next note's onset.
    Overwritten { frame: usize },
    /// Chord rounded to zero frames and dropped.
    VanishingChord { tick: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Quantized {
    pub frames: FrameSequence,
    pub warnings: Vec<QuantizeWarning>,
}

/// Frame index of a tick position, rounding half up.
fn tick_to_frame(tick: u64, ticks_per_beat: u32) -> usize {
    let tpb = u128::from(ticks_per_beat);
    let num = u128::from(tick) * u128::from(FRAMES_PER_BEAT) * 2 + tpb;
    (num / (2 * tpb)) as usize
}

/// Samples a score onto the 1/16-beat grid.
pub fn quantize_score(score: &SymbolicScore) -> Result<Quantized, EncodingError> {
    if score.is_empty() {
        return Err(EncodingError::EmptyScore);
    }
    let tpb = score.ticks_per_beat.max(1);
    let mut warnings = Vec::new();

    let mut spans = Vec::with_capacity(score.melody.len());
    for n in &score.melody {
        let on = tick_to_frame(n.onset, tpb);
        let mut end = tick_to_frame(n.end(), tpb);
        if end <= on {
            warnings.push(QuantizeWarning::VanishingNote { tick: n.onset, pitch: n.pitch });
            end = on + 1;
        }
        spans.push((on, end, n.pitch));
    }
    let melody_end = spans.iter().map(|s| s.1).max().unwrap_or(0);
    let chord_end = score.chords.iter().map(|c| tick_to_frame(c.end(), tpb)).max().unwrap_or(0);
    let len = melody_end.max(chord_end);
    if len == 0 {
        return Err(EncodingError::EmptyScore);
    }

    let mut melody = vec![REST; len];
    let mut last_end = 0;
    for (on, end, pitch) in spans {
        if on < last_end {
            warnings.push(QuantizeWarning::Overwritten { frame: on });
        }
        melody[on] = pitch;
        for label in &mut melody[on + 1..end] {
            *label = HOLD;
        }
        last_end = end;
    }

    let mut chords = vec![NO_CHORD; len];
    let mut covered = vec![false; len];
    for c in &score.chords {
        let on = tick_to_frame(c.onset, tpb);
        let end = tick_to_frame(c.end(), tpb);
        if end <= on {
            warnings.push(QuantizeWarning::VanishingChord { tick: c.onset });
            continue;
        }
        let label = hash_chord(c.pitch_classes);
        for f in on..end {
            if covered[f] {
                return Err(EncodingError::ChordOverlap(f));
            }
            covered[f] = true;
            chords[f] = label;
        }
    }
    Ok(Quantized { frames: FrameSequence::from_parts_unchecked(melody, chords), warnings })
}

/// Inverse of [`quantize_score`]: one tick per frame (16 ticks per beat).
/// Every chord-label run, including no-chord runs, becomes a chord event so
/// the decoded score spans all frames.
pub fn decode_frames(frames: &FrameSequence) -> SymbolicScore {
    let mut melody: Vec<NoteEvent> = Vec::new();
    let mut current: Option<NoteEvent> = None;
    for (t, &label) in frames.melody().iter().enumerate() {
        match label {
            HOLD => {
                if let Some(n) = current.as_mut() {
                    n.duration += 1;
                }
            }
            REST => melody.extend(current.take()),
            pitch => {
                melody.extend(current.take());
                current = Some(NoteEvent { onset: t as u64, duration: 1, pitch });
            }
        }
    }
    melody.extend(current);

    let mut chords: Vec<ChordEvent> = Vec::new();
    for (t, &label) in frames.chords().iter().enumerate() {
        match chords.last_mut() {
            Some(c) if c.end() == t as u64 && hash_chord(c.pitch_classes) == label => c.duration += 1,
            _ => chords.push(ChordEvent {
                onset: t as u64,
                duration: 1,
                pitch_classes: chord_template(label),
                root: chord_root(label),
            }),
        }
    }
    SymbolicScore { melody, chords, ticks_per_beat: FRAMES_PER_BEAT, bpm: REFERENCE_BPM }
}

/// Onset frames of three-note groups with 5+6+5 frame durations, the uneven
/// rendering of a beat-long triplet.
pub fn triplet_groups(frames: &FrameSequence) -> Vec<usize> {
    let notes = decode_frames(frames).melody;
    notes
        .windows(3)
        .filter(|w| {
            w[0].duration == 5
                && w[1].duration == 6
                && w[2].duration == 5
                && w[0].end() == w[1].onset
                && w[1].end() == w[2].onset
        })
        .map(|w| w[0].onset as usize)
        .collect()
}

/// Result of converting to the convolutional representation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WaveNetConversion {
    pub frames: WaveNetFrames,
    /// Frames where pitch 0 sounds and is therefore indistinguishable from rest.
    pub pitch_zero_frames: usize,
}

pub fn to_wavenet_frames(frames: &FrameSequence) -> WaveNetConversion {
    let mut melody = Vec::with_capacity(frames.len());
    let mut prev = 0u8;
    let mut pitch_zero_frames = 0;
    let mut sounding_zero = false;
    for &label in frames.melody() {
        let out = match label {
            REST => {
                sounding_zero = false;
                0
            }
            HOLD => prev,
            p => {
                sounding_zero = p == 0;
                p
            }
        };
        if sounding_zero && label != REST {
            pitch_zero_frames += 1;
        }
        melody.push(out);
        prev = out;
    }
    WaveNetConversion {
        frames: WaveNetFrames { melody, chords: frames.chords().to_vec() },
        pitch_zero_frames,
    }
}

/// Sustain-run decoding: 0 is rest, a label equal to its predecessor is a hold.
pub fn from_wavenet_frames(frames: &WaveNetFrames) -> FrameSequence {
    let mut melody = Vec::with_capacity(frames.len());
    let mut prev = 0u8;
    for &label in frames.melody() {
        melody.push(match label {
            0 => REST,
            l if l == prev => HOLD,
            l => l,
        });
        prev = label;
    }
    FrameSequence::from_parts_unchecked(melody, frames.chords().to_vec())
}

/// Transposes by `semitones` (0..12). Pitches pushed above 127 drop an octave.
pub fn transpose_frames(frames: &FrameSequence, semitones: u8) -> FrameSequence {
    let s = semitones % 12;
    let melody = frames
        .melody()
        .iter()
        .map(|&m| match m {
            REST | HOLD => m,
            p if p + s > 127 => p + s - 12,
            p => p + s,
        })
        .collect();
    let chords = frames.chords().iter().map(|&c| transpose_chord(c, s)).collect();
    FrameSequence::from_parts_unchecked(melody, chords)
}

/// All 12 transpositions, shift 0 first.
pub fn transpose_augment(frames: &FrameSequence) -> Vec<FrameSequence> {
    (0..12).map(|s| transpose_frames(frames, s)).collect()
}

/// One-hot rows of width 155: melody label at its column, chord at 130 + label.
pub fn encode_lstm(frames: &FrameSequence) -> Tensor {
    let mut out = Tensor::zeros(&[frames.len(), LSTM_INPUT_DIM]);
    for (t, (&m, &c)) in frames.melody().iter().zip(frames.chords()).enumerate() {
        let row = out.row_mut(t);
        row[m as usize] = 1.0;
        row[MELODY_VOCAB + c as usize] = 1.0;
    }
    out
}

/// Melody (T, 128) and chord (T, 25) one-hot tensors.
pub fn encode_wavenet(frames: &WaveNetFrames) -> (Tensor, Tensor) {
    (one_hot(frames.melody(), WAVENET_VOCAB), one_hot(frames.chords(), CHORD_VOCAB))
}

pub fn one_hot(labels: &[u8], width: usize) -> Tensor {
    let mut out = Tensor::zeros(&[labels.len(), width]);
    for (t, &l) in labels.iter().enumerate() {
        out.row_mut(t)[l as usize] = 1.0;
    }
    out
}
