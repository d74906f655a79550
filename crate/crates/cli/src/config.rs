use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use structgen_core::analysis::{AnalysisConfig, ChromaSource, HOP, SAMPLE_RATE, WINDOW};
use structgen_core::lstm::LstmModelConfig;
use structgen_core::numerics::{AdamConfig, GradCheckConfig};
use structgen_core::tcn::TcnConfig;
use structgen_core::training::{ModelConfig, ModelKind, TrainConfig, TrainSize};

/// Effective settings of one invocation. Every field has a default, a config
/// file overrides the defaults and command-line flags override the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub jobs: usize,
    pub ingest: IngestSettings,
    pub model: ModelSettings,
    pub train: TrainSettings,
    pub generate: GenerateSettings,
    pub analyze: AnalyzeSettings,
    pub evaluate: EvaluateSettings,
    pub gradcheck: GradcheckSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            jobs: 1,
            ingest: IngestSettings::default(),
            model: ModelSettings::default(),
            train: TrainSettings::default(),
            generate: GenerateSettings::default(),
            analyze: AnalyzeSettings::default(),
            evaluate: EvaluateSettings::default(),
            gradcheck: GradcheckSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    /// Decide by file extension.
    Auto,
    Text,
    Smf,
    /// Frame CSV as written by `ingest`.
    Frames,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSettings {
    pub inputs: Vec<PathBuf>,
    pub format: InputFormat,
    pub melody_track: usize,
    pub chord_track: Option<usize>,
    pub augment: bool,
}

impl Default for IngestSettings {
    fn default() -> Self {
        Self { inputs: Vec::new(), format: InputFormat::Auto, melody_track: 1, chord_track: Some(2), augment: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub kind: String,
    pub layers: usize,
    pub hidden: usize,
    pub context_hidden: usize,
    pub kernel: usize,
    pub dilations: Vec<usize>,
    pub residual_channels: usize,
    pub skip_channels: usize,
}

impl Default for ModelSettings {
    fn default() -> Self {
        let l = LstmModelConfig::default();
        let t = TcnConfig::default();
        Self {
            kind: "uni".into(),
            layers: l.layers,
            hidden: l.hidden,
            context_hidden: l.context_hidden,
            kernel: t.kernel,
            dilations: t.dilations,
            residual_channels: t.residual_channels,
            skip_channels: t.skip_channels,
        }
    }
}

impl ModelSettings {
    pub fn kind(&self) -> anyhow::Result<ModelKind> {
        Ok(self.kind.parse::<ModelKind>()?)
    }

    pub fn to_model_config(&self) -> anyhow::Result<ModelConfig> {
        Ok(match self.kind()? {
            k @ (ModelKind::Uni | ModelKind::Bi) => ModelConfig::Lstm(LstmModelConfig {
                layers: self.layers,
                hidden: self.hidden,
                bidirectional_context: k == ModelKind::Bi,
                context_hidden: self.context_hidden,
            }),
            ModelKind::Tcn => ModelConfig::Tcn(TcnConfig {
                kernel: self.kernel,
                dilations: self.dilations.clone(),
                residual_channels: self.residual_channels,
                skip_channels: self.skip_channels,
                ..TcnConfig::default()
            }),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub corpus: Option<PathBuf>,
    pub epochs: usize,
    pub lr: f64,
    pub clip_norm: Option<f64>,
    pub max_steps: Option<usize>,
    pub target_loss: Option<f64>,
    /// Share of source songs used for training; ignored when `train_count` is set.
    pub train_fraction: f64,
    pub train_count: Option<usize>,
    pub augment: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            corpus: None,
            epochs: t.epochs,
            lr: t.optimizer.lr,
            clip_norm: t.clip_norm,
            max_steps: t.max_steps,
            target_loss: t.target_loss,
            train_fraction: 0.8,
            train_count: None,
            augment: false,
        }
    }
}

impl TrainSettings {
    pub fn to_train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            optimizer: AdamConfig { lr: self.lr, ..AdamConfig::default() },
            clip_norm: self.clip_norm,
            max_steps: self.max_steps,
            target_loss: self.target_loss,
            seed,
        }
    }

    pub fn size(&self) -> TrainSize {
        match self.train_count {
            Some(n) => TrainSize::Count(n),
            None => TrainSize::Fraction(self.train_fraction),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSettings {
    pub checkpoint: Option<PathBuf>,
    pub prime: Option<PathBuf>,
    pub temperature: f64,
    pub prime_beats: usize,
    pub generate_beats: usize,
    pub smf: bool,
}

impl Default for GenerateSettings {
    fn default() -> Self {
        Self { checkpoint: None, prime: None, temperature: 1.0, prime_beats: 20, generate_beats: 20, smf: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SourceSetting {
    Audio,
    Symbolic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeSettings {
    pub input: Option<PathBuf>,
    pub source: SourceSetting,
    pub theta_grid: Option<Vec<f64>>,
    pub grid_size: usize,
    pub min_len: usize,
    pub sample_rate: f64,
    pub window: usize,
    pub hop: usize,
}

impl Default for AnalyzeSettings {
    fn default() -> Self {
        let a = AnalysisConfig::default();
        Self {
            input: None,
            source: SourceSetting::Audio,
            theta_grid: None,
            grid_size: a.grid_size,
            min_len: a.min_len,
            sample_rate: SAMPLE_RATE,
            window: WINDOW,
            hop: HOP,
        }
    }
}

impl AnalyzeSettings {
    pub fn to_analysis_config(&self, jobs: usize) -> AnalysisConfig {
        AnalysisConfig {
            source: match self.source {
                SourceSetting::Audio => ChromaSource::Audio,
                SourceSetting::Symbolic => ChromaSource::Symbolic,
            },
            theta_grid: self.theta_grid.clone(),
            grid_size: self.grid_size,
            min_len: self.min_len,
            sample_rate: self.sample_rate,
            window: self.window,
            hop: self.hop,
            jobs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSettings {
    pub ratings: Option<PathBuf>,
    pub welch: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckSettings {
    /// Models to check; empty means all three.
    pub models: Vec<String>,
    pub frames: usize,
    pub epsilon: f64,
    pub tolerance: f64,
    pub coords_per_param: usize,
}

impl Default for GradcheckSettings {
    fn default() -> Self {
        let g = GradCheckConfig::default();
        Self { models: Vec::new(), frames: 12, epsilon: g.epsilon, tolerance: g.tolerance, coords_per_param: g.coords_per_param }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.jobs == 0 {
            bail!("jobs must be at least 1");
        }
        self.model.kind()?;
        Ok(())
    }
}
