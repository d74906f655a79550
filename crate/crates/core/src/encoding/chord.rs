use crate::ingest::PitchClassSet;

/// Label for frames without a chord.
pub const NO_CHORD: u8 = 24;
pub const CHORD_VOCAB: usize = 25;

/// Pitch classes of chord template `label` (0..12 major, 12..24 minor).
pub fn chord_template(label: u8) -> PitchClassSet {
    match label {
        0..=11 => PitchClassSet::triad(label, false),
        12..=23 => PitchClassSet::triad(label - 12, true),
        _ => PitchClassSet::EMPTY,
    }
}

/// Root pitch class of a chord label, `None` for no-chord.
pub fn chord_root(label: u8) -> Option<u8> {
    (label < NO_CHORD).then_some(label % 12)
}

/// Maps an arbitrary pitch-class set to the major/minor triad sharing the
/// most pitch classes with it. Among equally good templates, a complete triad
/// whose minor or major seventh is also present wins, then the lowest label.
/// The empty set maps to [`NO_CHORD`].
pub fn hash_chord(pitch_classes: PitchClassSet) -> u8 {
    if pitch_classes.is_empty() {
        return NO_CHORD;
    }
    let mut best = 0u8;
    let mut best_score = (0, false);
    for label in 0..NO_CHORD {
        let score = template_score(pitch_classes, label);
        if score > best_score {
            best = label;
            best_score = score;
        }
    }
    best
}

fn template_score(pitch_classes: PitchClassSet, label: u8) -> (u32, bool) {
    let overlap = pitch_classes.intersection(chord_template(label)).len();
    let root = label % 12;
    let seventh = overlap == 3
        && (pitch_classes.contains((root + 10) % 12) || pitch_classes.contains((root + 11) % 12));
    (overlap, seventh)
}

/// Transposes a chord label by `semitones`, keeping its quality.
pub fn transpose_chord(label: u8, semitones: u8) -> u8 {
    match label {
        0..=11 => (label + semitones % 12) % 12,
        12..=23 => 12 + (label - 12 + semitones % 12) % 12,
        _ => label,
    }
}
