//! Standard MIDI File subset: formats 0 and 1, PPQ time division.

use std::collections::{BTreeMap, HashMap, VecDeque};

use super::{ChordEvent, NoteEvent, PitchClassSet, ScoreError, SymbolicScore, REFERENCE_BPM};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SmfError {
    #[error("truncated input at byte {offset}")]
    Truncated { offset: usize },
    #[error("variable-length quantity at byte {offset} not terminated within 4 bytes")]
    UnterminatedVlq { offset: usize },
    #[error("bad chunk magic at byte {offset}: expected {expected}")]
    BadMagic { offset: usize, expected: &'static str },
    #[error("unsupported SMF format {format}")]
    UnsupportedFormat { format: u16 },
    #[error("SMPTE time division is not supported")]
    SmpteDivision,
    #[error("zero ticks per beat in header")]
    ZeroDivision,
    #[error("data byte without running status at byte {offset}")]
    NoRunningStatus { offset: usize },
    #[error("unsupported status byte {status:#04x} at byte {offset}")]
    UnsupportedStatus { offset: usize, status: u8 },
    #[error("track {track} does not exist (file has {count})")]
    MissingTrack { track: usize, count: usize },
    #[error("polyphonic melody track: notes overlap at tick {tick}")]
    Polyphony { tick: u64 },
    #[error(transparent)]
    Score(#[from] ScoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    NoteOn { channel: u8, pitch: u8, velocity: u8 },
    NoteOff { channel: u8, pitch: u8, velocity: u8 },
    Tempo { us_per_beat: u32 },
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimedEvent {
    pub delta_ticks: u32,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSmfEvents {
    pub format: u16,
    pub ticks_per_beat: u16,
    pub tracks: Vec<Vec<TimedEvent>>,
    /// Non-fatal diagnostics, such as note-ons closed at end of track.
    pub warnings: Vec<String>,
}

impl RawSmfEvents {
    /// First tempo event in file order, as beats per minute.
    pub fn bpm(&self) -> Option<f64> {
        self.tracks.iter().flatten().find_map(|e| match e.kind {
            EventKind::Tempo { us_per_beat } if us_per_beat > 0 => {
                Some(60e6 / f64::from(us_per_beat))
            }
            _ => None,
        })
    }
}

/// Decodes a big-endian base-128 quantity starting at `offset`.
pub fn read_vlq(bytes: &[u8], offset: usize) -> Result<(u32, usize), SmfError> {
    let mut value = 0u32;
    for i in 0..4 {
        let b = *bytes
            .get(offset + i)
            .ok_or(SmfError::Truncated { offset: offset + i })?;
        value = (value << 7) | u32::from(b & 0x7F);
        if b & 0x80 == 0 {
            return Ok((value, i + 1));
        }
    }
    Err(SmfError::UnterminatedVlq { offset })
}

/// Encodes `value` (must be below 2^28) as a variable-length quantity.
pub fn write_vlq(value: u32, out: &mut Vec<u8>) {
    assert!(value < 1 << 28, "VLQ value {value} exceeds 28 bits");
    let mut buf = [0u8; 4];
    let mut n = 0;
    let mut v = value;
    loop {
        buf[n] = (v & 0x7F) as u8;
        n += 1;
        v >>= 7;
        if v == 0 {
            break;
        }
    }
    for i in (0..n).rev() {
        let cont = if i > 0 { 0x80 } else { 0 };
        out.push(buf[i] | cont);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SmfError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(SmfError::Truncated { offset: self.bytes.len() }),
        }
    }

    fn u8(&mut self) -> Result<u8, SmfError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, SmfError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, SmfError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn vlq(&mut self) -> Result<u32, SmfError> {
        let (v, n) = read_vlq(self.bytes, self.pos)?;
        self.pos += n;
        Ok(v)
    }
}

pub fn parse_smf(bytes: &[u8]) -> Result<RawSmfEvents, SmfError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4).map_err(|_| SmfError::BadMagic { offset: 0, expected: "MThd" })? != b"MThd" {
        return Err(SmfError::BadMagic { offset: 0, expected: "MThd" });
    }
    let header_len = r.u32()? as usize;
    if header_len < 6 {
        return Err(SmfError::Truncated { offset: r.pos });
    }
    let format = r.u16()?;
    let ntrks = r.u16()?;
    let division = r.u16()?;
    r.take(header_len - 6)?;
    if format > 1 {
        return Err(SmfError::UnsupportedFormat { format });
    }
    if division & 0x8000 != 0 {
        return Err(SmfError::SmpteDivision);
    }
    if division == 0 {
        return Err(SmfError::ZeroDivision);
    }

    let mut tracks = Vec::with_capacity(ntrks.into());
    let mut warnings = Vec::new();
    while tracks.len() < usize::from(ntrks) && r.pos < bytes.len() {
        let magic_at = r.pos;
        let magic = r.take(4)?;
        let len = r.u32()? as usize;
        if magic != b"MTrk" {
            if !magic.iter().all(u8::is_ascii_alphanumeric) {
                return Err(SmfError::BadMagic { offset: magic_at, expected: "MTrk" });
            }
            // Unknown chunk types are skipped.
            r.take(len)?;
            continue;
        }
        let start = r.pos;
        let body = r.take(len)?;
        let index = tracks.len();
        let mut events = parse_track(body, start)?;
        close_dangling_notes(&mut events, index, &mut warnings);
        tracks.push(events);
    }
    if tracks.len() < usize::from(ntrks) {
        return Err(SmfError::Truncated { offset: bytes.len() });
    }
    Ok(RawSmfEvents { format, ticks_per_beat: division, tracks, warnings })
}

fn parse_track(body: &[u8], base: usize) -> Result<Vec<TimedEvent>, SmfError> {
    let shift = |e: SmfError| match e {
        SmfError::Truncated { offset } => SmfError::Truncated { offset: offset + base },
        SmfError::UnterminatedVlq { offset } => SmfError::UnterminatedVlq { offset: offset + base },
        other => other,
    };
    let mut r = Reader { bytes: body, pos: 0 };
    let mut events = Vec::new();
    let mut running: Option<u8> = None;
    while r.pos < body.len() {
        let delta_ticks = r.vlq().map_err(shift)?;
        let at = r.pos;
        let first = r.u8().map_err(shift)?;
        let (status, first_data) = if first & 0x80 != 0 {
            (first, None)
        } else {
            let s = running.ok_or(SmfError::NoRunningStatus { offset: base + at })?;
            (s, Some(first))
        };
        let kind = match status {
            0xFF => {
                running = None;
                let meta = r.u8().map_err(shift)?;
                let len = r.vlq().map_err(shift)? as usize;
                let data = r.take(len).map_err(shift)?;
                match meta {
                    0x2F => {
                        events.push(TimedEvent { delta_ticks, kind: EventKind::Other });
                        break;
                    }
                    0x51 if len == 3 => EventKind::Tempo {
                        us_per_beat: u32::from_be_bytes([0, data[0], data[1], data[2]]),
                    },
                    _ => EventKind::Other,
                }
            }
            0xF0 | 0xF7 => {
                running = None;
                let len = r.vlq().map_err(shift)? as usize;
                r.take(len).map_err(shift)?;
                EventKind::Other
            }
            0x80..=0xEF => {
                running = Some(status);
                let mut pending = first_data;
                let mut next = |r: &mut Reader| -> Result<u8, SmfError> {
                    match pending.take() {
                        Some(d) => Ok(d),
                        None => r.u8().map_err(shift),
                    }
                };
                let channel = status & 0x0F;
                match status >> 4 {
                    0x8 => {
                        let pitch = next(&mut r)? & 0x7F;
                        let velocity = next(&mut r)? & 0x7F;
                        EventKind::NoteOff { channel, pitch, velocity }
                    }
                    0x9 => {
                        let pitch = next(&mut r)? & 0x7F;
                        let velocity = next(&mut r)? & 0x7F;
                        if velocity == 0 {
                            EventKind::NoteOff { channel, pitch, velocity }
                        } else {
                            EventKind::NoteOn { channel, pitch, velocity }
                        }
                    }
                    0xC | 0xD => {
                        next(&mut r)?;
                        EventKind::Other
                    }
                    _ => {
                        next(&mut r)?;
                        next(&mut r)?;
                        EventKind::Other
                    }
                }
            }
            other => return Err(SmfError::UnsupportedStatus { offset: base + at, status: other }),
        };
        events.push(TimedEvent { delta_ticks, kind });
    }
    Ok(events)
}

/// Appends note-offs at track end for note-ons that were never released.
fn close_dangling_notes(events: &mut Vec<TimedEvent>, track: usize, warnings: &mut Vec<String>) {
    let mut open: BTreeMap<(u8, u8), usize> = BTreeMap::new();
    for e in events.iter() {
        match e.kind {
            EventKind::NoteOn { channel, pitch, .. } => *open.entry((channel, pitch)).or_default() += 1,
            EventKind::NoteOff { channel, pitch, .. } => {
                if let Some(n) = open.get_mut(&(channel, pitch)) {
                    *n = n.saturating_sub(1);
                }
            }
            _ => {}
        }
    }
    for ((channel, pitch), n) in open {
        for _ in 0..n {
            warnings.push(format!(
                "track {track}: note-on channel {channel} pitch {pitch} unmatched, closed at track end"
            ));
            events.push(TimedEvent {
                delta_ticks: 0,
                kind: EventKind::NoteOff { channel, pitch, velocity: 0 },
            });
        }
    }
}

/// Pairs note-on/off events into (onset, duration, pitch) in onset order.
fn paired_notes(track: &[TimedEvent]) -> Vec<(u64, u64, u8)> {
    let mut now = 0u64;
    let mut open: HashMap<(u8, u8), VecDeque<u64>> = HashMap::new();
    let mut notes = Vec::new();
    for e in track {
        now += u64::from(e.delta_ticks);
        match e.kind {
            EventKind::NoteOn { channel, pitch, .. } => {
                open.entry((channel, pitch)).or_default().push_back(now)
            }
            EventKind::NoteOff { channel, pitch, .. } => {
                if let Some(on) = open.get_mut(&(channel, pitch)).and_then(VecDeque::pop_front) {
                    if now > on {
                        notes.push((on, now - on, pitch));
                    }
                }
            }
            _ => {}
        }
    }
    notes.sort_unstable();
    notes
}

/// Builds a score from the melody track and (optionally) a chord track.
/// Chord-track notes that share an exact onset tick form one chord.
pub fn to_symbolic_score(
    raw: &RawSmfEvents,
    melody_track: usize,
    chord_track: Option<usize>,
) -> Result<SymbolicScore, SmfError> {
    let count = raw.tracks.len();
    let track = |i: usize| raw.tracks.get(i).ok_or(SmfError::MissingTrack { track: i, count });

    let mut melody: Vec<NoteEvent> = Vec::new();
    for (onset, duration, pitch) in paired_notes(track(melody_track)?) {
        if let Some(prev) = melody.last() {
            if prev.end() > onset {
                return Err(SmfError::Polyphony { tick: onset });
            }
        }
        melody.push(NoteEvent { onset, duration, pitch });
    }

    let mut chords: Vec<ChordEvent> = Vec::new();
    if let Some(ci) = chord_track {
        let notes = paired_notes(track(ci)?);
        let mut groups: BTreeMap<u64, (u64, PitchClassSet)> = BTreeMap::new();
        for (onset, duration, pitch) in notes {
            let g = groups.entry(onset).or_insert((0, PitchClassSet::EMPTY));
            g.0 = g.0.max(duration);
            g.1.insert(pitch % 12);
        }
        let onsets: Vec<u64> = groups.keys().copied().collect();
        for (i, (&onset, &(duration, pcs))) in groups.iter().enumerate() {
            let limit = onsets.get(i + 1).map_or(u64::MAX, |&n| n - onset);
            chords.push(ChordEvent {
                onset,
                duration: duration.min(limit),
                pitch_classes: pcs,
                root: None,
            });
        }
    }

    let score = SymbolicScore {
        melody,
        chords,
        ticks_per_beat: raw.ticks_per_beat.into(),
        bpm: raw.bpm().unwrap_or(REFERENCE_BPM),
    };
    score.validate()?;
    Ok(score)
}

/// Writes a format-1 file: a tempo track, a melody track, and a chord track
/// (chord tones voiced from C3 upward).
pub fn write_smf(score: &SymbolicScore) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&3u16.to_be_bytes());
    let division = score.ticks_per_beat.clamp(1, 0x7FFF) as u16;
    out.extend_from_slice(&division.to_be_bytes());

    let us = (60e6 / score.bpm).round().clamp(1.0, 16_777_215.0) as u32;
    let tempo = [0xFF, 0x51, 0x03, (us >> 16) as u8, (us >> 8) as u8, us as u8];
    write_track(&mut out, &[(0, tempo.to_vec())]);

    let mut melody = Vec::new();
    for n in &score.melody {
        melody.push((n.onset, vec![0x90, n.pitch, 96]));
        melody.push((n.end(), vec![0x80, n.pitch, 0]));
    }
    write_track(&mut out, &melody);

    let mut chords = Vec::new();
    for c in &score.chords {
        for pc in c.pitch_classes.iter() {
            chords.push((c.onset, vec![0x91, 48 + pc, 72]));
            chords.push((c.end(), vec![0x81, 48 + pc, 0]));
        }
    }
    write_track(&mut out, &chords);
    out
}

fn write_track(out: &mut Vec<u8>, events: &[(u64, Vec<u8>)]) {
    // Note-offs sort before note-ons at equal ticks.
    let mut sorted: Vec<&(u64, Vec<u8>)> = events.iter().collect();
    sorted.sort_by_key(|(t, msg)| (*t, msg[0] & 0xF0 != 0x80));
    let mut body = Vec::new();
    let mut now = 0u64;
    for (t, msg) in sorted {
        let delta = (t - now).min((1 << 28) - 1) as u32;
        write_vlq(delta, &mut body);
        body.extend_from_slice(msg);
        now = *t;
    }
    body.extend_from_slice(&[0x00, 0xFF, 0x2F, 0x00]);
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn header(format: u16, ntrks: u16, division: u16) -> Vec<u8> {
        let mut v = b"MThd".to_vec();
        v.extend_from_slice(&6u32.to_be_bytes());
        v.extend_from_slice(&format.to_be_bytes());
        v.extend_from_slice(&ntrks.to_be_bytes());
        v.extend_from_slice(&division.to_be_bytes());
        v
    }

    fn track(body: &[u8]) -> Vec<u8> {
        let mut v = b"MTrk".to_vec();
        v.extend_from_slice(&(body.len() as u32).to_be_bytes());
        v.extend_from_slice(body);
        v
    }

    #[test]
    fn vlq_examples() {
        assert_eq!(read_vlq(&[0x00], 0), Ok((0, 1)));
        assert_eq!(read_vlq(&[0x81, 0x00], 0), Ok((1 << 7, 2)));
        assert_eq!(read_vlq(&[0xFF, 0x7F], 0), Ok(((0x7F << 7) | 0x7F, 2)));
        assert_eq!(read_vlq(&[0xFF, 0xFF, 0xFF, 0xFF, 0x00], 0), Err(SmfError::UnterminatedVlq { offset: 0 }));
        assert_eq!(read_vlq(&[0x81], 0), Err(SmfError::Truncated { offset: 1 }));
    }

    proptest! {
        #[test]
        fn vlq_round_trip(v in 0u32..(1 << 28)) {
            let mut buf = Vec::new();
            write_vlq(v, &mut buf);
            prop_assert_eq!(read_vlq(&buf, 0), Ok((v, buf.len())));
            prop_assert!((1..=4).contains(&buf.len()));
        }
    }

    #[test]
    fn single_note_file() {
        let mut bytes = header(0, 1, 480);
        // note on C4, 480 ticks later note off (0x83 0x60 = 480), end of track.
        bytes.extend(track(&[0x00, 0x90, 60, 100, 0x83, 0x60, 0x80, 60, 0, 0x00, 0xFF, 0x2F, 0x00]));
        let raw = parse_smf(&bytes).unwrap();
        let pairs: Vec<_> = raw.tracks[0]
            .iter()
            .filter(|e| matches!(e.kind, EventKind::NoteOn { .. } | EventKind::NoteOff { .. }))
            .collect();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[1].delta_ticks, 480);
        let score = to_symbolic_score(&raw, 0, None).unwrap();
        assert_eq!(score.melody, vec![NoteEvent { onset: 0, duration: 480, pitch: 60 }]);
    }

    #[test]
    fn empty_track_has_no_events() {
        let mut bytes = header(0, 1, 96);
        bytes.extend(track(&[0x00, 0xFF, 0x2F, 0x00]));
        let raw = parse_smf(&bytes).unwrap();
        assert!(raw.tracks[0].iter().all(|e| e.kind == EventKind::Other));
        let score = to_symbolic_score(&raw, 0, None).unwrap();
        assert!(score.melody.is_empty());
    }

    #[test]
    fn tempo_meta_gives_120_bpm() {
        let mut bytes = header(1, 2, 480);
        bytes.extend(track(&[0x00, 0xFF, 0x51, 0x03, 0x07, 0xA1, 0x20, 0x00, 0xFF, 0x2F, 0x00]));
        bytes.extend(track(&[0x00, 0xFF, 0x2F, 0x00]));
        let raw = parse_smf(&bytes).unwrap();
        assert_eq!(raw.tracks[0][0].kind, EventKind::Tempo { us_per_beat: 500_000 });
        assert_eq!(raw.bpm(), Some(120.0));
    }

    #[test]
    fn running_status_and_zero_velocity() {
        let mut bytes = header(0, 1, 4);
        // on 60, running-status "on 60 vel 0" = off, on 62, off.
        bytes.extend(track(&[0x00, 0x90, 60, 90, 0x04, 60, 0, 0x00, 62, 90, 0x04, 62, 0, 0x00, 0xFF, 0x2F, 0x00]));
        let raw = parse_smf(&bytes).unwrap();
        let score = to_symbolic_score(&raw, 0, None).unwrap();
        assert_eq!(
            score.melody,
            vec![
                NoteEvent { onset: 0, duration: 4, pitch: 60 },
                NoteEvent { onset: 4, duration: 4, pitch: 62 }
            ]
        );
    }

    #[test]
    fn dangling_note_closed_at_track_end() {
        let mut bytes = header(0, 1, 4);
        bytes.extend(track(&[0x00, 0x90, 60, 90, 0x08, 0xFF, 0x2F, 0x00]));
        let raw = parse_smf(&bytes).unwrap();
        assert_eq!(raw.warnings.len(), 1);
        let score = to_symbolic_score(&raw, 0, None).unwrap();
        assert_eq!(score.melody, vec![NoteEvent { onset: 0, duration: 8, pitch: 60 }]);
    }

    #[test]
    fn header_errors() {
        assert!(matches!(parse_smf(b"RIFF0000"), Err(SmfError::BadMagic { .. })));
        assert_eq!(parse_smf(&header(0, 1, 0xE728)), Err(SmfError::SmpteDivision));
        assert_eq!(parse_smf(&header(2, 1, 96)), Err(SmfError::UnsupportedFormat { format: 2 }));
        let mut truncated = header(0, 1, 96);
        truncated.extend_from_slice(b"MTrk\x00\x00\x00\x10\x00\x90");
        assert!(matches!(parse_smf(&truncated), Err(SmfError::Truncated { .. })));
    }

    #[test]
    fn chord_track_groups_by_onset() {
        let mut bytes = header(1, 2, 480);
        bytes.extend(track(&[0x00, 0xFF, 0x2F, 0x00]));
        // 48, 52, 55 at tick 0 for 960 ticks (0x87 0x40).
        bytes.extend(track(&[
            0x00, 0x91, 48, 80, 0x00, 52, 80, 0x00, 55, 80, 0x87, 0x40, 0x81, 48, 0, 0x00, 52, 0, 0x00, 55, 0, 0x00,
            0xFF, 0x2F, 0x00,
        ]));
        let raw = parse_smf(&bytes).unwrap();
        let score = to_symbolic_score(&raw, 0, Some(1)).unwrap();
        assert_eq!(score.chords.len(), 1);
        assert_eq!(score.chords[0].pitch_classes, [0, 4, 7].into_iter().collect());
        assert_eq!(score.chords[0].duration, 960);
    }

    #[test]
    fn overlapping_melody_is_rejected() {
        let mut bytes = header(0, 1, 4);
        bytes.extend(track(&[0x00, 0x90, 60, 90, 0x02, 0x90, 64, 90, 0x02, 0x80, 60, 0, 0x02, 0x80, 64, 0, 0x00, 0xFF, 0x2F, 0x00]));
        let raw = parse_smf(&bytes).unwrap();
        assert_eq!(to_symbolic_score(&raw, 0, None), Err(SmfError::Polyphony { tick: 2 }));
    }

    #[test]
    fn written_file_parses_back() {
        let score = SymbolicScore {
            melody: vec![
                NoteEvent { onset: 0, duration: 16, pitch: 60 },
                NoteEvent { onset: 24, duration: 8, pitch: 67 },
            ],
            chords: vec![ChordEvent {
                onset: 0,
                duration: 32,
                pitch_classes: [0, 4, 7].into_iter().collect(),
                root: None,
            }],
            ticks_per_beat: 16,
            bpm: 120.0,
        };
        let raw = parse_smf(&write_smf(&score)).unwrap();
        assert_eq!(raw.tracks.len(), 3);
        let back = to_symbolic_score(&raw, 1, Some(2)).unwrap();
        assert_eq!(back, score);
    }

    #[test]
    fn melody_duration_is_preserved() {
        let mut bytes = header(0, 1, 8);
        bytes.extend(track(&[
            0x00, 0x90, 60, 90, 0x03, 0x80, 60, 0, 0x05, 0x90, 62, 90, 0x0B, 0x80, 62, 0, 0x00, 0xFF, 0x2F, 0x00,
        ]));
        let raw = parse_smf(&bytes).unwrap();
        let score = to_symbolic_score(&raw, 0, None).unwrap();
        let total: u64 = score.melody.iter().map(|n| n.duration).sum();
        assert_eq!(total, 3 + 11);
    }
}
