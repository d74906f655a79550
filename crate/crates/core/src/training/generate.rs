use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoding::{from_wavenet_frames, to_wavenet_frames, FrameSequence, WaveNetFrames, FRAMES_PER_BEAT, HOLD, REST};

use super::network::Network;
use super::TrainError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationTask {
    pub prime_beats: usize,
    pub generate_beats: usize,
    /// Softmax temperature; `0` selects the most likely label.
    pub temperature: f64,
    pub seed: u64,
}

impl Default for GenerationTask {
    fn default() -> Self {
        Self { prime_beats: 20, generate_beats: 20, temperature: 1.0, seed: 0 }
    }
}

impl GenerationTask {
    pub fn prime_frames(&self) -> usize {
        self.prime_beats * FRAMES_PER_BEAT as usize
    }

    pub fn total_frames(&self) -> usize {
        (self.prime_beats + self.generate_beats) * FRAMES_PER_BEAT as usize
    }
}

/// Draws a label from `softmax(logits / temperature)` restricted to labels
/// where `allowed` holds. Temperature 0 picks the first maximal label.
pub fn sample_label<R: Rng + ?Sized>(logits: &[f64], temperature: f64, allowed: impl Fn(usize) -> bool, rng: &mut R) -> usize {
    let candidates: Vec<usize> = (0..logits.len()).filter(|&i| allowed(i)).collect();
    if temperature <= 0.0 {
        let mut best = candidates[0];
        for &i in &candidates[1..] {
            if logits[i] > logits[best] {
                best = i;
            }
        }
        return best;
    }
    let max = candidates.iter().map(|&i| logits[i]).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = candidates.iter().map(|&i| ((logits[i] - max) / temperature).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (&i, &w) in candidates.iter().zip(&weights) {
        if u < w {
            return i;
        }
        u -= w;
    }
    *candidates.last().expect("at least one allowed label")
}

/// Keeps the first `prime_frames` of `prime` and samples the following
/// `generate_beats` beats autoregressively over `chords`.
pub fn generate_continuation(
    network: &Network,
    prime: &FrameSequence,
    chords: &[u8],
    task: &GenerationTask,
) -> Result<FrameSequence, TrainError> {
    let (p_len, total) = (task.prime_frames(), task.total_frames());
    if prime.len() < p_len {
        return Err(TrainError::PrimeTooShort { needed: p_len, available: prime.len() });
    }
    if chords.len() < total {
        return Err(TrainError::ChordCoverage { needed: total, available: chords.len() });
    }
    if task.temperature.is_nan() || task.temperature < 0.0 {
        return Err(TrainError::Config(format!("temperature {} must be non-negative", task.temperature)));
    }
    let chords = &chords[..total];
    let prime_melody = &prime.melody()[..p_len];
    let mut rng = ChaCha8Rng::seed_from_u64(task.seed);

    let melody = if let Some(m) = network.lstm() {
        let mut stepper = m.stepper(network.store(), chords)?;
        let mut melody: Vec<u8> = Vec::with_capacity(total);
        for &label in prime_melody {
            stepper.step(melody.last().copied())?;
            melody.push(label);
        }
        for t in p_len..total {
            let previous = melody.last().copied();
            let logits = stepper.step(previous)?;
            // Hold may not open the continuation or follow a rest.
            let hold_ok = t > p_len && matches!(previous, Some(p) if p != REST);
            let label = sample_label(&logits, task.temperature, |i| i != HOLD as usize || hold_ok, &mut rng);
            melody.push(label as u8);
        }
        melody
    } else if let Some(m) = network.tcn() {
        let wn_prime = to_wavenet_frames(&prime.prefix(p_len)).frames;
        let mut wn: Vec<u8> = wn_prime.melody().to_vec();
        for _ in p_len..total {
            let logits = m.next_logits(network.store(), &wn, chords)?;
            wn.push(sample_label(&logits, task.temperature, |_| true, &mut rng) as u8);
        }
        let decoded = from_wavenet_frames(&WaveNetFrames::new(wn, chords.to_vec())?);
        let mut melody = prime_melody.to_vec();
        melody.extend_from_slice(&decoded.melody()[p_len..]);
        melody
    } else {
        unreachable!("network is either recurrent or convolutional")
    };
    Ok(FrameSequence::new(melody, chords.to_vec())?)
}
