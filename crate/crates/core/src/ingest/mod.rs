//! Score ingestion: a minimal Standard MIDI File reader, a textual score
//! format, and the [`SymbolicScore`] type both decode into.

mod smf;
mod text;

pub use smf::{
    parse_smf, read_vlq, to_symbolic_score, write_smf, write_vlq, EventKind, RawSmfEvents,
    SmfError, TimedEvent,
};
pub use text::{parse_score_text, render_score_text, TextError};

use std::fmt;

/// Tempo every score is normalized to before quantization.
pub const REFERENCE_BPM: f64 = 120.0;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ScoreError {
    #[error("ticks_per_beat must be positive")]
    ZeroTicksPerBeat,
    #[error("bpm must be positive and finite, got {0}")]
    BadBpm(f64),
    #[error("melody pitch {pitch} at tick {tick} outside 0..=127")]
    PitchOutOfRange { tick: u64, pitch: u32 },
    #[error("zero-length event at tick {0}")]
    ZeroDuration(u64),
    #[error("overlapping melody notes at tick {0}")]
    MelodyOverlap(u64),
    #[error("overlapping chords at tick {0}")]
    ChordOverlap(u64),
    #[error("events not sorted by onset at tick {0}")]
    Unsorted(u64),
}

/// A set of pitch classes stored as a 12-bit mask (bit `k` = pitch class `k`).
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct PitchClassSet(u16);

impl PitchClassSet {
    pub const EMPTY: Self = Self(0);

    pub fn from_mask(mask: u16) -> Self {
        Self(mask & 0x0FFF)
    }

    pub fn mask(self) -> u16 {
        self.0
    }

    pub fn insert(&mut self, pc: u8) {
        self.0 |= 1 << (pc % 12);
    }

    pub fn contains(self, pc: u8) -> bool {
        pc < 12 && self.0 & (1 << pc) != 0
    }

    pub fn len(self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn intersection(self, other: Self) -> Self {
        Self(self.0 & other.0)
    }

    /// Rotate every pitch class up by `semitones` (mod 12).
    pub fn transposed(self, semitones: u8) -> Self {
        let s = u32::from(semitones % 12);
        let m = u32::from(self.0);
        Self((((m << s) | (m >> (12 - s))) & 0x0FFF) as u16)
    }

    /// Major or minor triad on `root`.
    pub fn triad(root: u8, minor: bool) -> Self {
        let third = if minor { 3 } else { 4 };
        [root, root + third, root + 7].into_iter().map(|p| p % 12).collect()
    }

    pub fn iter(self) -> impl Iterator<Item = u8> {
        (0u8..12).filter(move |&pc| self.contains(pc))
    }
}

impl FromIterator<u8> for PitchClassSet {
    fn from_iter<I: IntoIterator<Item = u8>>(iter: I) -> Self {
        let mut set = Self::EMPTY;
        for pc in iter {
            set.insert(pc);
        }
        set
    }
}

impl fmt::Debug for PitchClassSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoteEvent {
    pub onset: u64,
    pub duration: u64,
    pub pitch: u8,
}

impl NoteEvent {
    pub fn end(&self) -> u64 {
        self.onset + self.duration
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChordEvent {
    pub onset: u64,
    pub duration: u64,
    pub pitch_classes: PitchClassSet,
    pub root: Option<u8>,
}

impl ChordEvent {
    pub fn end(&self) -> u64 {
        self.onset + self.duration
    }
}

/// Note and chord event lists with their time base, before quantization.
/// Times are in ticks; `ticks_per_beat` converts them to beats.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolicScore {
    pub melody: Vec<NoteEvent>,
    pub chords: Vec<ChordEvent>,
    pub ticks_per_beat: u32,
    pub bpm: f64,
}

impl SymbolicScore {
    /// Checks ordering, monophony, ranges and chord tiling.
    pub fn validate(&self) -> Result<(), ScoreError> {
        if self.ticks_per_beat == 0 {
            return Err(ScoreError::ZeroTicksPerBeat);
        }
        if !(self.bpm.is_finite() && self.bpm > 0.0) {
            return Err(ScoreError::BadBpm(self.bpm));
        }
        for (i, n) in self.melody.iter().enumerate() {
            if n.pitch > 127 {
                return Err(ScoreError::PitchOutOfRange {
                    tick: n.onset,
                    pitch: n.pitch.into(),
                });
            }
            if n.duration == 0 {
                return Err(ScoreError::ZeroDuration(n.onset));
            }
            if let Some(next) = self.melody.get(i + 1) {
                if next.onset < n.onset {
                    return Err(ScoreError::Unsorted(next.onset));
                }
                if n.end() > next.onset {
                    return Err(ScoreError::MelodyOverlap(next.onset));
                }
            }
        }
        for (i, c) in self.chords.iter().enumerate() {
            if c.duration == 0 {
                return Err(ScoreError::ZeroDuration(c.onset));
            }
            if let Some(next) = self.chords.get(i + 1) {
                if next.onset < c.onset {
                    return Err(ScoreError::Unsorted(next.onset));
                }
                if c.end() > next.onset {
                    return Err(ScoreError::ChordOverlap(next.onset));
                }
            }
        }
        Ok(())
    }

    /// Last tick covered by any event.
    pub fn end_tick(&self) -> u64 {
        let m = self.melody.iter().map(NoteEvent::end).max().unwrap_or(0);
        let c = self.chords.iter().map(ChordEvent::end).max().unwrap_or(0);
        m.max(c)
    }

    pub fn is_empty(&self) -> bool {
        self.melody.is_empty() && self.chords.is_empty()
    }

    /// Seconds per tick at the score's tempo.
    pub fn seconds_per_tick(&self) -> f64 {
        60.0 / self.bpm / f64::from(self.ticks_per_beat)
    }
}

/// Sets the tempo to 120 bpm. Ticks are untouched: durations are read in
/// beats and a beat lasts half a second from here on.
pub fn normalize_tempo(mut score: SymbolicScore) -> SymbolicScore {
    score.bpm = REFERENCE_BPM;
    score
}
