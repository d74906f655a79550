use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::ingest::SymbolicScore;
use crate::numerics::Tensor;

use super::AnalysisError;

pub const SAMPLE_RATE: f64 = 44_100.0;
pub const WINDOW: usize = 4096;
pub const HOP: usize = 1024;
/// Lowest spectrogram frequency folded into a pitch class (A0).
pub const MIN_FOLD_HZ: f64 = 27.5;

const FADE_SECONDS: f64 = 0.01;
const PEAK: f64 = 0.9;
/// Chord tones sound in the octave starting at C3.
const CHORD_BASE: u8 = 48;

/// Pitch-class energies, one row of 12 per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ChromaSequence {
    pub frames: Tensor,
    /// Rows per second.
    pub frame_rate: f64,
}

impl ChromaSequence {
    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.frames.row(i).to_vec()).collect()
    }
}

pub fn midi_hz(pitch: u8) -> f64 {
    440.0 * 2f64.powf((f64::from(pitch) - 69.0) / 12.0)
}

fn add_tone(out: &mut [f64], start: usize, len: usize, hz: f64, sample_rate: f64) {
    let fade = ((FADE_SECONDS * sample_rate) as usize).min(len / 2).max(1);
    for n in 0..len.min(out.len().saturating_sub(start)) {
        let env = ((n + 1) as f64 / fade as f64).min((len - n) as f64 / fade as f64).min(1.0);
        out[start + n] += env * (2.0 * PI * hz * n as f64 / sample_rate).sin();
    }
}

/// Unnormalized additive sine rendering of melody and chord tones.
pub fn render(score: &SymbolicScore, sample_rate: f64) -> Result<Vec<f64>, AnalysisError> {
    if score.is_empty() {
        return Err(AnalysisError::EmptyScore);
    }
    score.validate()?;
    let spt = score.seconds_per_tick() * sample_rate;
    let at = |tick: u64| (tick as f64 * spt).round() as usize;
    let mut out = vec![0.0; at(score.end_tick())];
    for n in &score.melody {
        let (a, b) = (at(n.onset), at(n.end()));
        add_tone(&mut out, a, b - a, midi_hz(n.pitch), sample_rate);
    }
    for c in &score.chords {
        let (a, b) = (at(c.onset), at(c.end()));
        for pc in c.pitch_classes.iter() {
            add_tone(&mut out, a, b - a, midi_hz(CHORD_BASE + pc), sample_rate);
        }
    }
    Ok(out)
}

/// [`render`] scaled so that the peak absolute sample is 0.9.
pub fn synthesize(score: &SymbolicScore, sample_rate: f64) -> Result<Vec<f64>, AnalysisError> {
    let mut out = render(score, sample_rate)?;
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= PEAK / peak);
    }
    Ok(out)
}

/// Periodic Hann window.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len).map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos()).collect()
}

/// Hann-windowed `|X_k|^2` for `k = 0..=window/2`, one row per hop.
pub fn power_spectrogram(samples: &[f64], window: usize, hop: usize) -> Result<Tensor, AnalysisError> {
    if window == 0 || hop == 0 {
        return Err(AnalysisError::Framing { window, hop });
    }
    if samples.len() < window {
        return Err(AnalysisError::TooShort { samples: samples.len(), window });
    }
    let frames = 1 + (samples.len() - window) / hop;
    let bins = window / 2 + 1;
    let w = hann(window);
    let fft = FftPlanner::new().plan_fft_forward(window);
    let mut buf = vec![Complex::new(0.0, 0.0); window];
    let mut out = Tensor::zeros(&[frames, bins]);
    for f in 0..frames {
        let chunk = &samples[f * hop..f * hop + window];
        for ((b, &x), &wv) in buf.iter_mut().zip(chunk).zip(&w) {
            *b = Complex::new(x * wv, 0.0);
        }
        fft.process(&mut buf);
        for (o, b) in out.row_mut(f).iter_mut().zip(&buf) {
            *o = b.norm_sqr();
        }
    }
    Ok(out)
}

/// Pitch class of FFT bin `k`, or `None` below 27.5 Hz.
pub fn bin_pitch_class(k: usize, window: usize, sample_rate: f64) -> Option<usize> {
    let hz = k as f64 * sample_rate / window as f64;
    if hz < MIN_FOLD_HZ {
        return None;
    }
    let midi = (12.0 * (hz / 440.0).log2() + 69.0).round() as i64;
    Some(midi.rem_euclid(12) as usize)
}

pub fn fold_chroma(spectrogram: &Tensor, window: usize, sample_rate: f64) -> Tensor {
    let classes: Vec<Option<usize>> = (0..spectrogram.cols()).map(|k| bin_pitch_class(k, window, sample_rate)).collect();
    let mut out = Tensor::zeros(&[spectrogram.rows(), 12]);
    for f in 0..spectrogram.rows() {
        let row = out.row_mut(f);
        for (&p, &v) in spectrogram.row(f).iter().zip(&classes) {
            if let Some(pc) = v {
                row[pc] += p;
            }
        }
    }
    out
}

pub fn stft_chroma(samples: &[f64], sample_rate: f64, window: usize, hop: usize) -> Result<ChromaSequence, AnalysisError> {
    let power = power_spectrogram(samples, window, hop)?;
    Ok(ChromaSequence { frames: fold_chroma(&power, window, sample_rate), frame_rate: sample_rate / hop as f64 })
}

/// Scales each row to unit Euclidean norm; all-zero rows stay zero.
pub fn unit_normalize(rows: &mut [Vec<f64>]) {
    for r in rows {
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            r.iter_mut().for_each(|v| *v /= norm);
        }
    }
}

/// Averages STFT chroma frames into `beats` rows by the beat their window
/// centre falls in. Beats without a frame centre are zero.
pub fn beat_average(chroma: &ChromaSequence, window: usize, sample_rate: f64, seconds_per_beat: f64, beats: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; 12]; beats];
    let mut counts = vec![0usize; beats];
    let hop_seconds = 1.0 / chroma.frame_rate;
    let half = window as f64 / 2.0 / sample_rate;
    for f in 0..chroma.len() {
        let centre = f as f64 * hop_seconds + half;
        let b = (centre / seconds_per_beat) as usize;
        if b < beats {
            sums[b].iter_mut().zip(chroma.frames.row(f)).for_each(|(s, v)| *s += v);
            counts[b] += 1;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    sums
}

pub fn beat_count(score: &SymbolicScore) -> usize {
    score.end_tick().div_ceil(u64::from(score.ticks_per_beat.max(1))) as usize
}

/// Beat-level chroma straight from note pitch classes: every sounding melody
/// note and chord tone adds its overlap with the beat, in beats.
pub fn symbolic_chroma(score: &SymbolicScore) -> Result<Vec<Vec<f64>>, AnalysisError> {
    if score.is_empty() {
        return Err(AnalysisError::EmptyScore);
    }
    score.validate()?;
    let tpb = u64::from(score.ticks_per_beat);
    let mut rows = vec![vec![0.0; 12]; beat_count(score)];
    let mut spread = |onset: u64, end: u64, pc: usize| {
        for (b, row) in rows.iter_mut().enumerate().take(end.div_ceil(tpb) as usize).skip((onset / tpb) as usize) {
            let (lo, hi) = (b as u64 * tpb, (b as u64 + 1) * tpb);
            let overlap = end.min(hi).saturating_sub(onset.max(lo));
            row[pc] += overlap as f64 / tpb as f64;
        }
    };
    for n in &score.melody {
        spread(n.onset, n.end(), usize::from(n.pitch % 12));
    }
    for c in &score.chords {
        for pc in c.pitch_classes.iter() {
            spread(c.onset, c.end(), usize::from(pc));
        }
    }
    Ok(rows)
}
