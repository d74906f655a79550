use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoding::{to_wavenet_frames, FrameSequence, WaveNetFrames};
use crate::lstm::{LstmModel, LstmModelConfig};
use crate::numerics::{read_checkpoint, write_checkpoint, ParamStore};
use crate::tcn::{TcnConfig, TcnModel};

use super::TrainError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Uni,
    Bi,
    Tcn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Uni, ModelKind::Bi, ModelKind::Tcn];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Uni => "uni",
            ModelKind::Bi => "bi",
            ModelKind::Tcn => "tcn",
        }
    }

    /// Output alphabet size.
    pub fn vocab(self) -> usize {
        match self {
            ModelKind::Tcn => crate::encoding::WAVENET_VOCAB,
            _ => crate::encoding::MELODY_VOCAB,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uni" | "uni-lstm" => Ok(ModelKind::Uni),
            "bi" | "bi-lstm" => Ok(ModelKind::Bi),
            "tcn" | "wavenet" => Ok(ModelKind::Tcn),
            other => Err(TrainError::Config(format!("unknown model kind `{other}`"))),
        }
    }
}

/// Architecture choice for one of the three model kinds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelConfig {
    Lstm(LstmModelConfig),
    Tcn(TcnConfig),
}

impl ModelConfig {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Uni => ModelConfig::Lstm(LstmModelConfig::default()),
            ModelKind::Bi => ModelConfig::Lstm(LstmModelConfig { bidirectional_context: true, ..Default::default() }),
            ModelKind::Tcn => ModelConfig::Tcn(TcnConfig::default()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelConfig::Lstm(c) if c.bidirectional_context => ModelKind::Bi,
            ModelConfig::Lstm(_) => ModelKind::Uni,
            ModelConfig::Tcn(_) => ModelKind::Tcn,
        }
    }

    pub fn to_meta(&self) -> Vec<(String, String)> {
        let kv = |k: &str, v: String| (k.to_string(), v);
        let mut meta = vec![kv("kind", self.kind().to_string())];
        match self {
            ModelConfig::Lstm(c) => {
                meta.push(kv("gate_order", "i,f,o,c".into()));
                meta.push(kv("layers", c.layers.to_string()));
                meta.push(kv("hidden", c.hidden.to_string()));
                meta.push(kv("context_hidden", c.context_hidden.to_string()));
            }
            ModelConfig::Tcn(c) => {
                meta.push(kv("kernel", c.kernel.to_string()));
                let d: Vec<String> = c.dilations.iter().map(|d| d.to_string()).collect();
                meta.push(kv("dilations", d.join(",")));
                meta.push(kv("residual_channels", c.residual_channels.to_string()));
                meta.push(kv("skip_channels", c.skip_channels.to_string()));
            }
        }
        meta
    }

    pub fn from_meta(meta: &[(String, String)]) -> Result<Self, TrainError> {
        let get = |k: &str| {
            meta.iter()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| TrainError::Config(format!("checkpoint metadata lacks `{k}`")))
        };
        let num = |k: &str| -> Result<usize, TrainError> {
            get(k)?.parse().map_err(|_| TrainError::Config(format!("bad `{k}` in checkpoint metadata")))
        };
        let kind: ModelKind = get("kind")?.parse()?;
        Ok(match kind {
            ModelKind::Uni | ModelKind::Bi => {
                if get("gate_order")? != "i,f,o,c" {
                    return Err(TrainError::Config("unsupported gate order".into()));
                }
                ModelConfig::Lstm(LstmModelConfig {
                    layers: num("layers")?,
                    hidden: num("hidden")?,
                    bidirectional_context: kind == ModelKind::Bi,
                    context_hidden: num("context_hidden")?,
                })
            }
            ModelKind::Tcn => ModelConfig::Tcn(TcnConfig {
                kernel: num("kernel")?,
                dilations: get("dilations")?
                    .split(',')
                    .map(|d| d.trim().parse().map_err(|_| TrainError::Config("bad dilation list".into())))
                    .collect::<Result<_, _>>()?,
                residual_channels: num("residual_channels")?,
                skip_channels: num("skip_channels")?,
                ..TcnConfig::default()
            }),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Arch {
    Lstm(LstmModel),
    Tcn(TcnModel),
}

/// A model together with its parameters.
#[derive(Debug, Clone)]
pub struct Network {
    config: ModelConfig,
    arch: Arch,
    store: ParamStore,
}

/// A training example in the representation its model consumes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Example {
    Lstm(FrameSequence),
    Tcn(WaveNetFrames),
}

impl Example {
    pub fn len(&self) -> usize {
        match self {
            Example::Lstm(f) => f.len(),
            Example::Tcn(f) => f.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Network {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, TrainError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let arch = match &config {
            ModelConfig::Lstm(c) => Arch::Lstm(LstmModel::new(*c, &mut store, &mut rng)?),
            ModelConfig::Tcn(c) => Arch::Tcn(TcnModel::new(c.clone(), &mut store, &mut rng)?),
        };
        Ok(Self { config, arch, store })
    }

    pub fn from_parts(config: ModelConfig, store: ParamStore) -> Result<Self, TrainError> {
        let arch = match &config {
            ModelConfig::Lstm(c) => Arch::Lstm(LstmModel::bind(*c, &store)?),
            ModelConfig::Tcn(c) => Arch::Tcn(TcnModel::bind(c.clone(), &store)?),
        };
        Ok(Self { config, arch, store })
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind()
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn lstm(&self) -> Option<&LstmModel> {
        match &self.arch {
            Arch::Lstm(m) => Some(m),
            Arch::Tcn(_) => None,
        }
    }

    pub fn tcn(&self) -> Option<&TcnModel> {
        match &self.arch {
            Arch::Tcn(m) => Some(m),
            Arch::Lstm(_) => None,
        }
    }

    pub fn example(&self, frames: &FrameSequence) -> Example {
        match self.arch {
            Arch::Lstm(_) => Example::Lstm(frames.clone()),
            Arch::Tcn(_) => Example::Tcn(to_wavenet_frames(frames).frames),
        }
    }

    pub fn example_loss(&self, example: &Example) -> Result<f64, TrainError> {
        self.example_loss_with(&self.store, example)
    }

    /// Loss under an alternative parameter store with the same layout.
    pub fn example_loss_with(&self, store: &ParamStore, example: &Example) -> Result<f64, TrainError> {
        Ok(match (&self.arch, example) {
            (Arch::Lstm(m), Example::Lstm(f)) => m.loss(store, f)?,
            (Arch::Tcn(m), Example::Tcn(f)) => m.loss(store, f)?,
            _ => return Err(TrainError::Config("example does not match model representation".into())),
        })
    }

    /// Accumulates gradients of the example's mean loss.
    pub fn example_loss_and_grad(&mut self, example: &Example) -> Result<f64, TrainError> {
        Ok(match (&self.arch, example) {
            (Arch::Lstm(m), Example::Lstm(f)) => m.loss_and_grad(&mut self.store, f)?,
            (Arch::Tcn(m), Example::Tcn(f)) => m.loss_and_grad(&mut self.store, f)?,
            _ => return Err(TrainError::Config("example does not match model representation".into())),
        })
    }

    /// Teacher-forced mean cross-entropy of one song in nats per frame.
    pub fn loss(&self, frames: &FrameSequence) -> Result<f64, TrainError> {
        self.example_loss(&self.example(frames))
    }

    pub fn write_checkpoint<W: Write>(&self, w: W) -> Result<(), TrainError> {
        Ok(write_checkpoint(w, &self.config.to_meta(), &self.store)?)
    }

    pub fn read_checkpoint<R: Read>(r: R) -> Result<Self, TrainError> {
        let file = read_checkpoint(BufReader::new(r))?;
        let config = ModelConfig::from_meta(&file.meta)?;
        Self::from_parts(config, file.store)
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let f = File::create(path).map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))?;
        self.write_checkpoint(BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let f = File::open(path).map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))?;
        Self::read_checkpoint(f)
    }
}
