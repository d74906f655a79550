use std::io::{Read, Write};

use super::{EncodingError, FrameSequence};

/// Writes `frame_index,melody_label,chord_label` rows with a header.
pub fn write_frames_csv<W: Write>(writer: W, frames: &FrameSequence) -> Result<(), EncodingError> {
    let err = |e: csv::Error| EncodingError::Csv(e.to_string());
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["frame_index", "melody_label", "chord_label"]).map_err(err)?;
    for (i, (m, c)) in frames.melody().iter().zip(frames.chords()).enumerate() {
        w.write_record([i.to_string(), m.to_string(), c.to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| EncodingError::Csv(e.to_string()))
}

pub fn read_frames_csv<R: Read>(reader: R) -> Result<FrameSequence, EncodingError> {
    let mut r = csv::Reader::from_reader(reader);
    let mut melody = Vec::new();
    let mut chords = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(|e| EncodingError::Csv(e.to_string()))?;
        let field = |k: usize| -> Result<u64, EncodingError> {
            record
                .get(k)
                .and_then(|s| s.trim().parse::<u64>().ok())
                .ok_or_else(|| EncodingError::Csv(format!("row {}: bad field {k}", i + 1)))
        };
        if field(0)? != i as u64 {
            return Err(EncodingError::Csv(format!("row {}: frame index out of sequence", i + 1)));
        }
        let m = u8::try_from(field(1)?).map_err(|_| EncodingError::Csv(format!("row {}: melody label", i + 1)))?;
        let c = u8::try_from(field(2)?).map_err(|_| EncodingError::Csv(format!("row {}: chord label", i + 1)))?;
        melody.push(m);
        chords.push(c);
    }
    FrameSequence::new(melody, chords)
}
