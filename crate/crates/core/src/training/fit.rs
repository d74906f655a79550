use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoding::FrameSequence;
use crate::numerics::{AdamConfig, NumericsError, Optimizer};

use super::network::{Example, Network};
use super::{CorpusSplit, TrainError};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub optimizer: AdamConfig,
    /// Global gradient-norm clip applied before each update.
    pub clip_norm: Option<f64>,
    /// Stop after this many optimizer steps even mid-epoch.
    pub max_steps: Option<usize>,
    /// Stop once an epoch's mean training loss reaches this value.
    pub target_loss: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 10, optimizer: AdamConfig::default(), clip_norm: Some(5.0), max_steps: None, target_loss: None, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_nats: f64,
    pub heldout_nats: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub curve: Vec<EpochLoss>,
    pub steps: usize,
    /// Epoch whose parameters were kept (`None`: initial parameters).
    pub best_epoch: Option<usize>,
}

impl TrainReport {
    /// Running minimum of the selection loss, i.e. the loss of the retained
    /// checkpoint after each epoch.
    pub fn selected_curve(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.curve
            .iter()
            .map(|e| {
                best = best.min(e.heldout_nats.unwrap_or(e.train_nats));
                best
            })
            .collect()
    }
}

/// Frame-weighted teacher-forced cross-entropy in nats per frame.
pub fn evaluate_xent<'a, I>(network: &Network, data: I) -> Result<f64, TrainError>
where
    I: IntoIterator<Item = &'a FrameSequence>,
{
    let mut total = 0.0;
    let mut frames = 0usize;
    for f in data {
        if f.is_empty() {
            continue;
        }
        total += network.loss(f)? * f.len() as f64;
        frames += f.len();
    }
    if frames == 0 {
        return Err(TrainError::EmptyData);
    }
    Ok(total / frames as f64)
}

fn examples_xent(network: &Network, examples: &[Example]) -> Result<f64, TrainError> {
    let mut total = 0.0;
    let mut frames = 0usize;
    for ex in examples {
        total += network.example_loss(ex)? * ex.len() as f64;
        frames += ex.len();
    }
    Ok(total / frames as f64)
}

/// Teacher-forced training, one song per optimizer step. The parameters
/// with the lowest held-out loss (training loss when nothing is held out)
/// are restored at the end. On divergence the network is rolled back to the
/// last retained parameters and an error is returned.
pub fn train(network: &mut Network, split: &CorpusSplit, cfg: &TrainConfig) -> Result<TrainReport, TrainError> {
    let train: Vec<Example> = split.train.iter().filter(|s| !s.frames.is_empty()).map(|s| network.example(&s.frames)).collect();
    let held: Vec<Example> = split.held_out.iter().filter(|s| !s.frames.is_empty()).map(|s| network.example(&s.frames)).collect();
    if train.is_empty() && cfg.epochs > 0 {
        return Err(TrainError::EmptyData);
    }
    let optimizer = Optimizer::Adam(cfg.optimizer);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best_store = network.store().clone();
    let mut best_loss = f64::INFINITY;
    let mut report = TrainReport { curve: Vec::new(), steps: 0, best_epoch: None };

    'epochs: for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut frames = 0usize;
        for &i in &order {
            let ex = &train[i];
            network.store_mut().zero_grads();
            let loss = match network.example_loss_and_grad(ex) {
                Ok(loss) if loss.is_finite() => loss,
                Err(e) if !e.is_non_finite() => return Err(e),
                _ => {
                    *network.store_mut() = best_store;
                    return Err(TrainError::Diverged { epoch, step: report.steps });
                }
            };
            if let Some(max) = cfg.clip_norm {
                network.store_mut().clip_grad_norm(max);
            }
            match network.store_mut().apply(&optimizer) {
                Ok(()) => {}
                Err(NumericsError::NonFiniteGrad(_)) => {
                    *network.store_mut() = best_store;
                    return Err(TrainError::Diverged { epoch, step: report.steps });
                }
                Err(e) => return Err(e.into()),
            }
            report.steps += 1;
            sum += loss * ex.len() as f64;
            frames += ex.len();
            if cfg.max_steps.is_some_and(|m| report.steps >= m) {
                record(network, &held, epoch, sum / frames as f64, &mut report, &mut best_store, &mut best_loss)?;
                break 'epochs;
            }
        }
        let train_nats = sum / frames as f64;
        record(network, &held, epoch, train_nats, &mut report, &mut best_store, &mut best_loss)?;
        if cfg.target_loss.is_some_and(|t| train_nats <= t) {
            break;
        }
    }
    if report.best_epoch.is_some() {
        *network.store_mut() = best_store;
    }
    Ok(report)
}

fn record(
    network: &Network,
    held: &[Example],
    epoch: usize,
    train_nats: f64,
    report: &mut TrainReport,
    best_store: &mut crate::numerics::ParamStore,
    best_loss: &mut f64,
) -> Result<(), TrainError> {
    let heldout_nats = if held.is_empty() { None } else { Some(examples_xent(network, held)?) };
    let selection = heldout_nats.unwrap_or(train_nats);
    if selection < *best_loss {
        *best_loss = selection;
        *best_store = network.store().clone();
        report.best_epoch = Some(epoch);
    }
    report.curve.push(EpochLoss { epoch, train_nats, heldout_nats });
    Ok(())
}

/// `epoch,train_nats,heldout_nats` with an empty field when nothing is held out.
pub fn write_loss_csv<W: Write>(w: W, curve: &[EpochLoss]) -> Result<(), TrainError> {
    let mut out = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| TrainError::Io(e.to_string());
    out.write_record(["epoch", "train_nats", "heldout_nats"]).map_err(csv_err)?;
    for e in curve {
        let held = e.heldout_nats.map(|v| v.to_string()).unwrap_or_default();
        out.write_record([e.epoch.to_string(), e.train_nats.to_string(), held]).map_err(csv_err)?;
    }
    out.flush().map_err(|e| TrainError::Io(e.to_string()))
}
