use rand::Rng;

use crate::encoding::{FrameSequence, CHORD_VOCAB, MELODY_VOCAB};
use crate::numerics::{softmax_xent, xavier_uniform, GradView, ParamId, ParamStore, ParamView, Tensor};

use super::layer::{lookup, LayerCache, LstmLayer};
use super::stack::{LstmStack, StackCache, StackState};
use super::LstmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmModelConfig {
    pub layers: usize,
    pub hidden: usize,
    /// Condition on the whole chord progression through a bidirectional
    /// chord encoder instead of on the current chord only.
    pub bidirectional_context: bool,
    /// Per-direction width of the chord encoder.
    pub context_hidden: usize,
}

impl Default for LstmModelConfig {
    fn default() -> Self {
        Self { layers: 7, hidden: 128, bidirectional_context: false, context_hidden: 64 }
    }
}

impl LstmModelConfig {
    pub fn input_dim(&self) -> usize {
        if self.bidirectional_context {
            MELODY_VOCAB + 2 * self.context_hidden
        } else {
            MELODY_VOCAB + CHORD_VOCAB
        }
    }

    pub fn validate(&self) -> Result<(), LstmError> {
        if self.layers < 2 {
            return Err(LstmError::Config(format!("need at least 2 layers, got {}", self.layers)));
        }
        if self.hidden == 0 || (self.bidirectional_context && self.context_hidden == 0) {
            return Err(LstmError::Config("hidden sizes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct ChordEncoder {
    forward: LstmLayer,
    backward: LstmLayer,
}

/// Melody model over recurrent layers: `p(m_i | m_<i, c_≤i)` in the
/// unidirectional form, `p(m_i | m_<i, c_1..c_T)` with the chord encoder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LstmModel {
    config: LstmModelConfig,
    start: ParamId,
    encoder: Option<ChordEncoder>,
    stack: LstmStack,
    head_w: ParamId,
    head_b: ParamId,
}

#[derive(Debug, Clone)]
pub struct ModelCache {
    stack: StackCache,
    encoder: Option<(LayerCache, LayerCache)>,
    top: Tensor,
}

impl ModelCache {
    pub fn stack(&self) -> &StackCache {
        &self.stack
    }
}

fn reverse_rows(t: &Tensor) -> Tensor {
    let rows: Vec<f64> = (0..t.rows()).rev().flat_map(|r| t.row(r).to_vec()).collect();
    Tensor::from_vec(t.shape(), rows).expect("same shape")
}

fn chord_one_hots(chords: &[u8]) -> Tensor {
    let mut x = Tensor::zeros(&[chords.len(), CHORD_VOCAB]);
    for (t, &c) in chords.iter().enumerate() {
        x.row_mut(t)[c as usize] = 1.0;
    }
    x
}

impl LstmModel {
    pub fn new<R: Rng + ?Sized>(config: LstmModelConfig, store: &mut ParamStore, rng: &mut R) -> Result<Self, LstmError> {
        config.validate()?;
        let start = store.add("start", xavier_uniform(rng, &[MELODY_VOCAB], 1, MELODY_VOCAB))?;
        let encoder = if config.bidirectional_context {
            Some(ChordEncoder {
                forward: LstmLayer::register(store, rng, "enc.fwd", CHORD_VOCAB, config.context_hidden)?,
                backward: LstmLayer::register(store, rng, "enc.bwd", CHORD_VOCAB, config.context_hidden)?,
            })
        } else {
            None
        };
        let stack = LstmStack::register(store, rng, "stack", config.input_dim(), config.hidden, config.layers)?;
        let head_w = store.add("head.w", xavier_uniform(rng, &[MELODY_VOCAB, config.hidden], config.hidden, MELODY_VOCAB))?;
        let head_b = store.add("head.b", Tensor::zeros(&[MELODY_VOCAB]))?;
        Ok(Self { config, start, encoder, stack, head_w, head_b })
    }

    /// Attaches to parameters already present in `store`, e.g. from a checkpoint.
    pub fn bind(config: LstmModelConfig, store: &ParamStore) -> Result<Self, LstmError> {
        config.validate()?;
        let start = lookup(store, "start", &[MELODY_VOCAB])?;
        let encoder = if config.bidirectional_context {
            Some(ChordEncoder {
                forward: LstmLayer::bind(store, "enc.fwd", CHORD_VOCAB, config.context_hidden)?,
                backward: LstmLayer::bind(store, "enc.bwd", CHORD_VOCAB, config.context_hidden)?,
            })
        } else {
            None
        };
        let stack = LstmStack::bind(store, "stack", config.input_dim(), config.hidden, config.layers)?;
        let head_w = lookup(store, "head.w", &[MELODY_VOCAB, config.hidden])?;
        let head_b = lookup(store, "head.b", &[MELODY_VOCAB])?;
        Ok(Self { config, start, encoder, stack, head_w, head_b })
    }

    pub fn config(&self) -> &LstmModelConfig {
        &self.config
    }

    pub fn stack(&self) -> &LstmStack {
        &self.stack
    }

    fn context(&self, view: &ParamView<'_>, chords: &[u8]) -> Result<Option<(Tensor, LayerCache, LayerCache)>, LstmError> {
        let Some(enc) = &self.encoder else { return Ok(None) };
        let x = chord_one_hots(chords);
        let (hf, cf) = enc.forward.forward(view, &x)?;
        let (hb_rev, cb) = enc.backward.forward(view, &reverse_rows(&x))?;
        let he = self.config.context_hidden;
        let mut e = Tensor::zeros(&[chords.len(), 2 * he]);
        for t in 0..chords.len() {
            let row = e.row_mut(t);
            row[..he].copy_from_slice(hf.row(t));
            row[he..].copy_from_slice(hb_rev.row(chords.len() - 1 - t));
        }
        Ok(Some((e, cf, cb)))
    }

    fn inputs(&self, view: &ParamView<'_>, frames: &FrameSequence, context: Option<&Tensor>) -> Tensor {
        let t_len = frames.len();
        let mut x = Tensor::zeros(&[t_len, self.config.input_dim()]);
        for t in 0..t_len {
            let row = x.row_mut(t);
            if t == 0 {
                row[..MELODY_VOCAB].copy_from_slice(view.get(self.start).data());
            } else {
                row[frames.melody()[t - 1] as usize] = 1.0;
            }
            match context {
                Some(e) => row[MELODY_VOCAB..].copy_from_slice(e.row(t)),
                None => row[MELODY_VOCAB + frames.chords()[t] as usize] = 1.0,
            }
        }
        x
    }

    /// Logits `(T, 130)`; row `i` scores melody label `i`.
    pub fn forward(&self, store: &ParamStore, frames: &FrameSequence) -> Result<(Tensor, ModelCache), LstmError> {
        let view = store.view();
        let ctx = self.context(&view, frames.chords())?;
        let x = self.inputs(&view, frames, ctx.as_ref().map(|c| &c.0));
        let (top, stack) = self.stack.forward(&view, &x)?;
        let t_len = frames.len();
        let mut logits = Tensor::zeros(&[t_len, MELODY_VOCAB]);
        let (w, b) = (view.get(self.head_w).data(), view.get(self.head_b).data());
        for t in 0..t_len {
            let hrow = top.row(t);
            for (v, out) in logits.row_mut(t).iter_mut().enumerate() {
                *out = head_logit(w, b, v, hrow);
            }
        }
        let encoder = ctx.map(|(_, cf, cb)| (cf, cb));
        Ok((logits, ModelCache { stack, encoder, top }))
    }

    /// Accumulates parameter gradients for upstream gradient `dlogits`.
    pub fn backward(&self, store: &mut ParamStore, cache: &ModelCache, dlogits: &Tensor) -> Result<(), LstmError> {
        let (view, mut grads) = store.split();
        self.backward_with(&view, &mut grads, cache, dlogits)
    }

    fn backward_with(&self, view: &ParamView<'_>, grads: &mut GradView<'_>, cache: &ModelCache, dlogits: &Tensor) -> Result<(), LstmError> {
        let (t_len, hd) = (cache.top.rows(), self.config.hidden);
        if dlogits.shape() != [t_len, MELODY_VOCAB] {
            return Err(LstmError::Shape { expected: vec![t_len, MELODY_VOCAB], found: dlogits.shape().to_vec() });
        }
        let w = view.get(self.head_w).data();
        let mut dtop = Tensor::zeros(&[t_len, hd]);
        {
            let gw = grads.get_mut(self.head_w).data_mut();
            for t in 0..t_len {
                let (dl, h) = (dlogits.row(t), cache.top.row(t));
                for (v, &g) in dl.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    for (a, hv) in gw[v * hd..(v + 1) * hd].iter_mut().zip(h) {
                        *a += g * hv;
                    }
                }
            }
        }
        {
            let gb = grads.get_mut(self.head_b).data_mut();
            for t in 0..t_len {
                for (a, g) in gb.iter_mut().zip(dlogits.row(t)) {
                    *a += g;
                }
            }
        }
        for t in 0..t_len {
            let dh = dtop.row_mut(t);
            for (v, &g) in dlogits.row(t).iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                for (a, wv) in dh.iter_mut().zip(&w[v * hd..(v + 1) * hd]) {
                    *a += g * wv;
                }
            }
        }
        let dx_rows = if self.encoder.is_some() { t_len } else { t_len.min(1) };
        let dx = self.stack.backward(grads, &cache.stack, &dtop, dx_rows)?;
        if t_len > 0 {
            for (a, g) in grads.get_mut(self.start).data_mut().iter_mut().zip(&dx.row(0)[..MELODY_VOCAB]) {
                *a += g;
            }
        }
        if let (Some(enc), Some((cf, cb))) = (&self.encoder, &cache.encoder) {
            let he = self.config.context_hidden;
            let mut dhf = Tensor::zeros(&[t_len, he]);
            let mut dhb = Tensor::zeros(&[t_len, he]);
            for t in 0..t_len {
                let row = &dx.row(t)[MELODY_VOCAB..];
                dhf.row_mut(t).copy_from_slice(&row[..he]);
                dhb.row_mut(t_len - 1 - t).copy_from_slice(&row[he..]);
            }
            enc.forward.backward(grads, cf, &dhf, 0);
            enc.backward.backward(grads, cb, &dhb, 0);
        }
        Ok(())
    }

    /// Mean cross-entropy (nats per frame) of the frames' own melody.
    pub fn loss(&self, store: &ParamStore, frames: &FrameSequence) -> Result<f64, LstmError> {
        let (logits, _) = self.forward(store, frames)?;
        Ok(softmax_xent(&logits, &targets(frames))?.0)
    }

    /// Loss plus gradient accumulation into `store`.
    pub fn loss_and_grad(&self, store: &mut ParamStore, frames: &FrameSequence) -> Result<f64, LstmError> {
        let (logits, cache) = self.forward(store, frames)?;
        let (loss, dlogits) = softmax_xent(&logits, &targets(frames))?;
        self.backward(store, &cache, &dlogits)?;
        Ok(loss)
    }

    /// Step-by-step decoder over a fixed chord progression.
    pub fn stepper(&self, store: &ParamStore, chords: &[u8]) -> Result<LstmStepper, LstmError> {
        let view = store.view();
        let context = self.context(&view, chords)?.map(|c| c.0);
        Ok(LstmStepper {
            state: StackState::new(&self.stack, &view),
            start: view.get(self.start).data().to_vec(),
            head_w: view.get(self.head_w).data().to_vec(),
            head_b: view.get(self.head_b).data().to_vec(),
            input_dim: self.config.input_dim(),
            chords: chords.to_vec(),
            context,
            t: 0,
        })
    }
}

#[inline]
fn head_logit(w: &[f64], b: &[f64], v: usize, h: &[f64]) -> f64 {
    let hd = h.len();
    let s: f64 = w[v * hd..(v + 1) * hd].iter().zip(h).map(|(a, x)| a * x).sum();
    s + b[v]
}

fn targets(frames: &FrameSequence) -> Vec<usize> {
    frames.melody().iter().map(|&m| m as usize).collect()
}

/// Produces the same logits as [`LstmModel::forward`], one frame at a time.
#[derive(Debug, Clone)]
pub struct LstmStepper {
    state: StackState,
    start: Vec<f64>,
    head_w: Vec<f64>,
    head_b: Vec<f64>,
    input_dim: usize,
    chords: Vec<u8>,
    context: Option<Tensor>,
    t: usize,
}

impl LstmStepper {
    pub fn position(&self) -> usize {
        self.t
    }

    pub fn horizon(&self) -> usize {
        self.chords.len()
    }

    /// Logits for the next frame given the previous frame's melody label
    /// (`None` at position 0).
    pub fn step(&mut self, previous: Option<u8>) -> Result<Vec<f64>, LstmError> {
        if self.t >= self.chords.len() {
            return Err(LstmError::Config(format!("stepper exhausted after {} frames", self.t)));
        }
        let mut x = vec![0.0; self.input_dim];
        match previous {
            _ if self.t == 0 => x[..MELODY_VOCAB].copy_from_slice(&self.start),
            Some(m) => x[m as usize] = 1.0,
            None => return Err(LstmError::Config("missing previous label".into())),
        }
        match &self.context {
            Some(e) => x[MELODY_VOCAB..].copy_from_slice(e.row(self.t)),
            None => x[MELODY_VOCAB + self.chords[self.t] as usize] = 1.0,
        }
        let top = self.state.step(&x);
        self.t += 1;
        let logits: Vec<f64> = (0..MELODY_VOCAB).map(|v| head_logit(&self.head_w, &self.head_b, v, &top)).collect();
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(LstmError::NonFinite("logits"));
        }
        Ok(logits)
    }
}
