//! Variable Markov oracles, information-rate threshold selection, motif
//! discovery and the chromagram front end.

mod chroma;
mod oracle;

pub use chroma::{
    beat_average, beat_count, bin_pitch_class, fold_chroma, hann, midi_hz, power_spectrogram, render, stft_chroma,
    symbolic_chroma, synthesize, unit_normalize, ChromaSequence, HOP, MIN_FOLD_HZ, SAMPLE_RATE, WINDOW,
};
pub use oracle::{
    build_oracle, compute_ir, find_patterns, ir_profile, sweep_theta, symbol_frames, theta_grid, IrCurve, Metric,
    Motif, Oracle, PatternSet,
};

use std::io::Write;

use crate::ingest::{ScoreError, SymbolicScore};
use crate::numerics::Tensor;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AnalysisError {
    #[error("feature sequence is empty")]
    EmptySequence,
    #[error("frame {index} has dimension {found}, expected {expected}")]
    Dimension { index: usize, expected: usize, found: usize },
    #[error("threshold {0} must be a non-negative number")]
    Theta(f64),
    #[error("threshold grid is empty")]
    EmptyGrid,
    #[error("threshold grid is not sorted")]
    UnsortedGrid,
    #[error("score has no events")]
    EmptyScore,
    #[error("{samples} samples is shorter than the {window}-sample window")]
    TooShort { samples: usize, window: usize },
    #[error("window {window} and hop {hop} must be positive")]
    Framing { window: usize, hop: usize },
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChromaSource {
    /// Synthesize, STFT and fold.
    Audio,
    /// Read pitch classes from the notes.
    Symbolic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub source: ChromaSource,
    /// Explicit thresholds; `None` derives a grid from the data.
    pub theta_grid: Option<Vec<f64>>,
    pub grid_size: usize,
    pub min_len: usize,
    pub sample_rate: f64,
    pub window: usize,
    pub hop: usize,
    pub jobs: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            source: ChromaSource::Audio,
            theta_grid: None,
            grid_size: 64,
            min_len: 4,
            sample_rate: SAMPLE_RATE,
            window: WINDOW,
            hop: HOP,
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    /// Unit-normalized beat-level chroma the oracle was built on.
    pub chroma: ChromaSequence,
    pub ir: IrCurve,
    pub oracle: Oracle,
    pub patterns: PatternSet,
}

/// Beat chroma, threshold sweep, oracle at the best threshold, motifs.
pub fn analyze_sample(score: &SymbolicScore, cfg: &AnalysisConfig) -> Result<Analysis, AnalysisError> {
    let seconds_per_beat = 60.0 / score.bpm;
    let mut rows = match cfg.source {
        ChromaSource::Symbolic => symbolic_chroma(score)?,
        ChromaSource::Audio => {
            let mut samples = synthesize(score, cfg.sample_rate)?;
            if samples.len() < cfg.window {
                samples.resize(cfg.window, 0.0);
            }
            let frames = stft_chroma(&samples, cfg.sample_rate, cfg.window, cfg.hop)?;
            beat_average(&frames, cfg.window, cfg.sample_rate, seconds_per_beat, beat_count(score))
        }
    };
    unit_normalize(&mut rows);
    let grid = match &cfg.theta_grid {
        Some(g) => g.clone(),
        None => theta_grid(&rows, Metric::Euclidean, cfg.grid_size, 200)?,
    };
    let ir = sweep_theta(&rows, &grid, Metric::Euclidean, cfg.jobs)?;
    let oracle = build_oracle(&rows, ir.best_theta, Metric::Euclidean)?;
    let patterns = find_patterns(&oracle, cfg.min_len);
    let frames = Tensor::from_rows(&rows).map_err(|_| AnalysisError::EmptySequence)?;
    Ok(Analysis { chroma: ChromaSequence { frames, frame_rate: 1.0 / seconds_per_beat }, ir, oracle, patterns })
}

fn csv_err(e: impl std::fmt::Display) -> AnalysisError {
    AnalysisError::Csv(e.to_string())
}

pub const PITCH_CLASS_NAMES: [&str; 12] = ["C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B"];

/// `theta,ir_total,selected`.
pub fn write_ir_csv<W: Write>(w: W, curve: &IrCurve) -> Result<(), AnalysisError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["theta", "ir_total", "selected"]).map_err(csv_err)?;
    for (&t, &v) in curve.thetas.iter().zip(&curve.ir_totals) {
        let sel = if t == curve.best_theta { "1" } else { "0" };
        out.write_record([t.to_string(), v.to_string(), sel.to_string()]).map_err(csv_err)?;
    }
    out.flush().map_err(csv_err)
}

/// `motif,length,start,end` with 1-based inclusive frame spans.
pub fn write_patterns_csv<W: Write>(w: W, patterns: &PatternSet) -> Result<(), AnalysisError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["motif", "length", "start", "end"]).map_err(csv_err)?;
    for (i, m) in patterns.motifs.iter().enumerate() {
        for (a, b) in m.spans() {
            out.write_record([i.to_string(), m.len.to_string(), a.to_string(), b.to_string()]).map_err(csv_err)?;
        }
    }
    out.flush().map_err(csv_err)
}

/// `frame,C,...,B`.
pub fn write_chroma_csv<W: Write>(w: W, chroma: &ChromaSequence) -> Result<(), AnalysisError> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["frame".to_string()];
    header.extend(PITCH_CLASS_NAMES.iter().map(|s| s.to_string()));
    out.write_record(&header).map_err(csv_err)?;
    for f in 0..chroma.len() {
        let mut rec = vec![f.to_string()];
        rec.extend(chroma.frames.row(f).iter().map(|v| v.to_string()));
        out.write_record(&rec).map_err(csv_err)?;
    }
    out.flush().map_err(csv_err)
}
