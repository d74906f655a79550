//! Line-oriented text score format.
//!
//! ```text
//! bpm 120
//! tpb 4
//! N 0 4 60        # onset duration pitch
//! C 0 16 C:maj    # onset duration chord
//! ```
//!
//! Chord names are `<Root>:<maj|min>`, `NC`, or `pcs:{0,4,7}`.

use std::fmt::Write as _;

use super::{ChordEvent, NoteEvent, PitchClassSet, ScoreError, SymbolicScore};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TextError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("missing `{0}` header")]
    MissingHeader(&'static str),
    #[error("no events")]
    NoEvents,
    #[error(transparent)]
    Score(#[from] ScoreError),
}

const ROOT_NAMES: [&str; 12] = ["C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B"];

fn parse_root(name: &str) -> Option<u8> {
    let mut chars = name.chars();
    let base: i32 = match chars.next()? {
        'C' => 0,
        'D' => 2,
        'E' => 4,
        'F' => 5,
        'G' => 7,
        'A' => 9,
        'B' => 11,
        _ => return None,
    };
    let accidental = match chars.as_str() {
        "" => 0,
        "#" => 1,
        "b" => -1,
        _ => return None,
    };
    Some((base + accidental).rem_euclid(12) as u8)
}

fn triad(root: u8, minor: bool) -> PitchClassSet {
    PitchClassSet::triad(root, minor)
}

fn parse_chord(name: &str) -> Result<(PitchClassSet, Option<u8>), String> {
    if name == "NC" {
        return Ok((PitchClassSet::EMPTY, None));
    }
    if let Some(body) = name.strip_prefix("pcs:") {
        let inner = body
            .strip_prefix('{')
            .and_then(|b| b.strip_suffix('}'))
            .ok_or_else(|| format!("bad pitch-class set `{name}`"))?;
        let mut set = PitchClassSet::EMPTY;
        for part in inner.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let pc: u8 = part.parse().map_err(|_| format!("bad pitch class `{part}`"))?;
            if pc > 11 {
                return Err(format!("pitch class {pc} outside 0..=11"));
            }
            set.insert(pc);
        }
        return Ok((set, None));
    }
    let (root, quality) = name.split_once(':').ok_or_else(|| format!("bad chord name `{name}`"))?;
    let root = parse_root(root).ok_or_else(|| format!("bad chord root `{root}`"))?;
    let minor = match quality {
        "maj" => false,
        "min" => true,
        other => return Err(format!("bad chord quality `{other}`")),
    };
    Ok((triad(root, minor), Some(root)))
}

fn chord_name(c: &ChordEvent) -> String {
    if c.pitch_classes.is_empty() && c.root.is_none() {
        return "NC".to_string();
    }
    if let Some(root) = c.root.filter(|&r| r < 12) {
        if c.pitch_classes == triad(root, false) {
            return format!("{}:maj", ROOT_NAMES[root as usize]);
        }
        if c.pitch_classes == triad(root, true) {
            return format!("{}:min", ROOT_NAMES[root as usize]);
        }
    }
    let pcs: Vec<String> = c.pitch_classes.iter().map(|p| p.to_string()).collect();
    format!("pcs:{{{}}}", pcs.join(","))
}

/// A `#` opens a comment only at line start or after whitespace, so sharps
/// in chord roots survive.
fn strip_comment(line: &str) -> &str {
    let bytes = line.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'#' && (i == 0 || bytes[i - 1].is_ascii_whitespace()) {
            return &line[..i];
        }
    }
    line
}

pub fn parse_score_text(text: &str) -> Result<SymbolicScore, TextError> {
    let mut bpm = None;
    let mut tpb = None;
    let mut melody = Vec::new();
    let mut chords = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let bad = |message: String| TextError::Malformed { line: line_no, message };
        let line = strip_comment(raw_line).trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let int = |s: &str| -> Result<u64, TextError> {
            s.parse::<u64>().map_err(|_| bad(format!("expected a non-negative integer, got `{s}`")))
        };
        match fields.as_slice() {
            ["bpm", v] => {
                let v: f64 = v.parse().map_err(|_| bad(format!("bad bpm `{v}`")))?;
                if !(v.is_finite() && v > 0.0) {
                    return Err(bad(format!("bpm must be positive, got {v}")));
                }
                bpm = Some(v);
            }
            ["tpb", v] => {
                let v = int(v)?;
                if v == 0 || v > u64::from(u32::MAX) {
                    return Err(bad(format!("ticks per beat out of range: {v}")));
                }
                tpb = Some(v as u32);
            }
            ["N", onset, dur, pitch] => {
                let (onset, duration, pitch) = (int(onset)?, int(dur)?, int(pitch)?);
                if pitch > 127 {
                    return Err(bad(format!("pitch {pitch} outside 0..=127")));
                }
                if duration == 0 {
                    return Err(bad("zero duration".into()));
                }
                melody.push(NoteEvent { onset, duration, pitch: pitch as u8 });
            }
            ["C", onset, dur, name] => {
                let (onset, duration) = (int(onset)?, int(dur)?);
                if duration == 0 {
                    return Err(bad("zero duration".into()));
                }
                let (pitch_classes, root) = parse_chord(name).map_err(bad)?;
                chords.push(ChordEvent { onset, duration, pitch_classes, root });
            }
            _ => return Err(bad(format!("unrecognized line `{line}`"))),
        }
    }
    let ticks_per_beat = tpb.ok_or(TextError::MissingHeader("tpb"))?;
    let bpm = bpm.ok_or(TextError::MissingHeader("bpm"))?;
    if melody.is_empty() && chords.is_empty() {
        return Err(TextError::NoEvents);
    }
    melody.sort_by_key(|n: &NoteEvent| n.onset);
    chords.sort_by_key(|c: &ChordEvent| c.onset);
    let score = SymbolicScore { melody, chords, ticks_per_beat, bpm };
    score.validate()?;
    Ok(score)
}

pub fn render_score_text(score: &SymbolicScore) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "bpm {}", score.bpm);
    let _ = writeln!(out, "tpb {}", score.ticks_per_beat);
    for n in &score.melody {
        let _ = writeln!(out, "N {} {} {}", n.onset, n.duration, n.pitch);
    }
    for c in &score.chords {
        let _ = writeln!(out, "C {} {} {}", c.onset, c.duration, chord_name(c));
    }
    out
}
