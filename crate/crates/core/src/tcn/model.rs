use rand::Rng;

use crate::encoding::{WaveNetFrames, CHORD_VOCAB, WAVENET_VOCAB};
use crate::numerics::{softmax_xent, sigmoid, xavier_uniform, ParamId, ParamStore, ParamView, Tensor};

use super::conv::{dilated_causal_conv, dilated_causal_conv_backward, pointwise, pointwise_backward};
use super::{receptive_field, TcnConfig, TcnError};

/// Parameter handles of one gated residual block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GatedBlock {
    pub filter: ParamId,
    pub gate: ParamId,
    pub cond_filter: ParamId,
    pub cond_gate: ParamId,
    pub res_w: ParamId,
    pub res_b: ParamId,
    pub skip_w: ParamId,
    pub skip_b: ParamId,
    pub dilation: usize,
}

#[derive(Debug, Clone)]
pub struct BlockCache {
    x: Tensor,
    condition: Option<Tensor>,
    tanh_f: Tensor,
    sig_g: Tensor,
    z: Tensor,
}

impl BlockCache {
    /// Gated activation `z` of every frame.
    pub fn activation(&self) -> &Tensor {
        &self.z
    }
}

fn lookup(store: &ParamStore, name: &str, shape: &[usize]) -> Result<ParamId, TcnError> {
    let id = store.id(name).ok_or_else(|| TcnError::MissingParam(name.to_string()))?;
    if store.value(id).shape() != shape {
        return Err(TcnError::Shape { expected: shape.to_vec(), found: store.value(id).shape().to_vec() });
    }
    Ok(id)
}

fn block_shapes(cfg: &TcnConfig) -> [(&'static str, Vec<usize>); 8] {
    let (r, s, k, c) = (cfg.residual_channels, cfg.skip_channels, cfg.kernel, cfg.condition_dim);
    [
        ("filter", vec![r, r, k]),
        ("gate", vec![r, r, k]),
        ("cond_filter", vec![r, c]),
        ("cond_gate", vec![r, c]),
        ("res.w", vec![r, r]),
        ("res.b", vec![r]),
        ("skip.w", vec![s, r]),
        ("skip.b", vec![s]),
    ]
}

fn init_tensor<R: Rng + ?Sized>(rng: &mut R, shape: &[usize]) -> Tensor {
    match shape {
        [_] => Tensor::zeros(shape),
        [o, i] => xavier_uniform(rng, shape, *i, *o),
        [o, i, k] => xavier_uniform(rng, shape, i * k, o * k),
        _ => Tensor::zeros(shape),
    }
}

impl GatedBlock {
    fn from_ids(ids: &[ParamId], dilation: usize) -> Self {
        Self {
            filter: ids[0],
            gate: ids[1],
            cond_filter: ids[2],
            cond_gate: ids[3],
            res_w: ids[4],
            res_b: ids[5],
            skip_w: ids[6],
            skip_b: ids[7],
            dilation,
        }
    }

    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        prefix: &str,
        cfg: &TcnConfig,
        dilation: usize,
    ) -> Result<Self, TcnError> {
        let mut ids = Vec::with_capacity(8);
        for (name, shape) in block_shapes(cfg) {
            let full = format!("{prefix}.{name}");
            let value = init_tensor(rng, &shape);
            ids.push(store.add(full, value)?);
        }
        Ok(Self::from_ids(&ids, dilation))
    }

    pub fn bind(store: &ParamStore, prefix: &str, cfg: &TcnConfig, dilation: usize) -> Result<Self, TcnError> {
        let ids = block_shapes(cfg)
            .iter()
            .map(|(name, shape)| lookup(store, &format!("{prefix}.{name}"), shape))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_ids(&ids, dilation))
    }

    fn params(&self) -> [ParamId; 8] {
        [self.filter, self.gate, self.cond_filter, self.cond_gate, self.res_w, self.res_b, self.skip_w, self.skip_b]
    }

    /// `z = tanh(W_f ∗ x + V_f c) ⊙ σ(W_g ∗ x + V_g c)`; returns
    /// `(x + W_res z + b_res, W_skip z + b_skip)`.
    pub fn forward(&self, view: &ParamView<'_>, x: &Tensor, condition: Option<&Tensor>) -> Result<(Tensor, Tensor, BlockCache), TcnError> {
        if let Some(c) = condition {
            if c.rows() != x.rows() {
                return Err(TcnError::ConditionLength { melody: x.rows(), condition: c.rows() });
            }
        }
        let mut af = dilated_causal_conv(x, view.get(self.filter), self.dilation)?;
        let mut ag = dilated_causal_conv(x, view.get(self.gate), self.dilation)?;
        if let Some(c) = condition {
            af.add_assign(&pointwise(c, view.get(self.cond_filter), None))?;
            ag.add_assign(&pointwise(c, view.get(self.cond_gate), None))?;
        }
        af.data_mut().iter_mut().for_each(|v| *v = v.tanh());
        ag.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v));
        let mut z = af.clone();
        for (zv, g) in z.data_mut().iter_mut().zip(ag.data()) {
            *zv *= g;
        }
        let mut res = pointwise(&z, view.get(self.res_w), Some(view.get(self.res_b)));
        res.add_assign(x)?;
        let skip = pointwise(&z, view.get(self.skip_w), Some(view.get(self.skip_b)));
        let cache = BlockCache { x: x.clone(), condition: condition.cloned(), tanh_f: af, sig_g: ag, z };
        Ok((res, skip, cache))
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&self, store: &mut ParamStore, cache: &BlockCache, dres: &Tensor, dskip: &Tensor) -> Result<Tensor, TcnError> {
        let (view, mut grads) = store.split();
        let z = &cache.z;
        let mut dz = pointwise_backward(z, view.get(self.res_w), dres, grads.get_mut(self.res_w), None);
        add_bias_grad(grads.get_mut(self.res_b), dres);
        let dz_skip = pointwise_backward(z, view.get(self.skip_w), dskip, grads.get_mut(self.skip_w), None);
        add_bias_grad(grads.get_mut(self.skip_b), dskip);
        dz.add_assign(&dz_skip)?;

        let mut daf = dz.clone();
        let mut dag = dz;
        for i in 0..daf.len() {
            let (tf, sg) = (cache.tanh_f.data()[i], cache.sig_g.data()[i]);
            daf.data_mut()[i] *= sg * (1.0 - tf * tf);
            dag.data_mut()[i] *= tf * sg * (1.0 - sg);
        }
        if let Some(c) = &cache.condition {
            pointwise_backward(c, view.get(self.cond_filter), &daf, grads.get_mut(self.cond_filter), None);
            pointwise_backward(c, view.get(self.cond_gate), &dag, grads.get_mut(self.cond_gate), None);
        }
        let mut dx = dres.clone();
        dx.add_assign(&dilated_causal_conv_backward(&cache.x, view.get(self.filter), self.dilation, &daf, grads.get_mut(self.filter))?)?;
        dx.add_assign(&dilated_causal_conv_backward(&cache.x, view.get(self.gate), self.dilation, &dag, grads.get_mut(self.gate))?)?;
        Ok(dx)
    }
}

fn add_bias_grad(db: &mut Tensor, dout: &Tensor) {
    for t in 0..dout.rows() {
        for (a, g) in db.data_mut().iter_mut().zip(dout.row(t)) {
            *a += g;
        }
    }
}

/// Dilated convolutional melody model over the 128-symbol alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct TcnModel {
    config: TcnConfig,
    in_w: ParamId,
    in_b: ParamId,
    blocks: Vec<GatedBlock>,
    head1_w: ParamId,
    head1_b: ParamId,
    head2_w: ParamId,
    head2_b: ParamId,
}

#[derive(Debug, Clone)]
pub struct TcnCache {
    x0: Tensor,
    features: Tensor,
    blocks: Vec<BlockCache>,
    skip_sum: Tensor,
    h1: Tensor,
}

impl TcnCache {
    /// Output of the input projection, before any block.
    pub fn projected_input(&self) -> &Tensor {
        self.blocks.first().map_or(&self.features, |b| &b.x)
    }

    /// Residual stream after the last block.
    pub fn features(&self) -> &Tensor {
        &self.features
    }
}

fn head_shapes(cfg: &TcnConfig) -> [(&'static str, Vec<usize>); 6] {
    let (r, s) = (cfg.residual_channels, cfg.skip_channels);
    [
        ("in.w", vec![r, WAVENET_VOCAB]),
        ("in.b", vec![r]),
        ("head.1.w", vec![s, s]),
        ("head.1.b", vec![s]),
        ("head.2.w", vec![WAVENET_VOCAB, s]),
        ("head.2.b", vec![WAVENET_VOCAB]),
    ]
}

fn relu(t: &Tensor) -> Tensor {
    let mut out = t.clone();
    out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

fn relu_backward(pre: &Tensor, grad: &mut Tensor) {
    for (g, &p) in grad.data_mut().iter_mut().zip(pre.data()) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
}

impl TcnModel {
    pub fn new<R: Rng + ?Sized>(config: TcnConfig, store: &mut ParamStore, rng: &mut R) -> Result<Self, TcnError> {
        config.validate()?;
        let shapes = head_shapes(&config);
        let mut ids = Vec::new();
        for (name, shape) in &shapes[..2] {
            ids.push(store.add(*name, init_tensor(rng, shape))?);
        }
        let blocks = config
            .dilations
            .iter()
            .enumerate()
            .map(|(k, &d)| GatedBlock::register(store, rng, &format!("block.{k}"), &config, d))
            .collect::<Result<Vec<_>, _>>()?;
        for (name, shape) in &shapes[2..] {
            ids.push(store.add(*name, init_tensor(rng, shape))?);
        }
        Ok(Self::assemble(config, &ids, blocks))
    }

    pub fn bind(config: TcnConfig, store: &ParamStore) -> Result<Self, TcnError> {
        config.validate()?;
        let ids = head_shapes(&config)
            .iter()
            .map(|(name, shape)| lookup(store, name, shape))
            .collect::<Result<Vec<_>, _>>()?;
        let blocks = config
            .dilations
            .iter()
            .enumerate()
            .map(|(k, &d)| GatedBlock::bind(store, &format!("block.{k}"), &config, d))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::assemble(config, &ids, blocks))
    }

    fn assemble(config: TcnConfig, ids: &[ParamId], blocks: Vec<GatedBlock>) -> Self {
        Self {
            config,
            in_w: ids[0],
            in_b: ids[1],
            blocks,
            head1_w: ids[2],
            head1_b: ids[3],
            head2_w: ids[4],
            head2_b: ids[5],
        }
    }

    pub fn config(&self) -> &TcnConfig {
        &self.config
    }

    pub fn blocks(&self) -> &[GatedBlock] {
        &self.blocks
    }

    pub fn receptive_field(&self) -> usize {
        receptive_field(&self.config)
    }

    /// Every parameter belonging to a gated block.
    pub fn block_params(&self) -> Vec<ParamId> {
        self.blocks.iter().flat_map(|b| b.params()).collect()
    }

    /// Logits `(T, 128)` for melody `m` (labels) conditioned on chords `c`.
    pub fn forward_labels(&self, store: &ParamStore, melody: &[u8], chords: &[u8]) -> Result<(Tensor, TcnCache), TcnError> {
        if melody.len() != chords.len() {
            return Err(TcnError::ConditionLength { melody: melody.len(), condition: chords.len() });
        }
        let t_len = melody.len();
        let mut x0 = Tensor::zeros(&[t_len, WAVENET_VOCAB]);
        for t in 1..t_len {
            x0.row_mut(t)[melody[t - 1] as usize] = 1.0;
        }
        let mut cond = Tensor::zeros(&[t_len, CHORD_VOCAB]);
        for (t, &c) in chords.iter().enumerate() {
            cond.row_mut(t)[c as usize] = 1.0;
        }
        self.forward_inputs(store, x0, &cond)
    }

    pub fn forward(&self, store: &ParamStore, frames: &WaveNetFrames) -> Result<(Tensor, TcnCache), TcnError> {
        self.forward_labels(store, frames.melody(), frames.chords())
    }

    fn forward_inputs(&self, store: &ParamStore, x0: Tensor, cond: &Tensor) -> Result<(Tensor, TcnCache), TcnError> {
        let view = store.view();
        let t_len = x0.rows();
        let mut x = pointwise(&x0, view.get(self.in_w), Some(view.get(self.in_b)));
        let mut skip_sum = Tensor::zeros(&[t_len, self.config.skip_channels]);
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (res, skip, cache) = block.forward(&view, &x, Some(cond))?;
            skip_sum.add_assign(&skip)?;
            caches.push(cache);
            x = res;
        }
        let h1 = pointwise(&relu(&skip_sum), view.get(self.head1_w), Some(view.get(self.head1_b)));
        let logits = pointwise(&relu(&h1), view.get(self.head2_w), Some(view.get(self.head2_b)));
        if !logits.is_finite() {
            return Err(TcnError::NonFinite("logits"));
        }
        Ok((logits, TcnCache { x0, features: x, blocks: caches, skip_sum, h1 }))
    }

    pub fn backward(&self, store: &mut ParamStore, cache: &TcnCache, dlogits: &Tensor) -> Result<(), TcnError> {
        let t_len = cache.x0.rows();
        if dlogits.shape() != [t_len, WAVENET_VOCAB] {
            return Err(TcnError::Shape { expected: vec![t_len, WAVENET_VOCAB], found: dlogits.shape().to_vec() });
        }
        let mut dskip = {
            let (view, mut grads) = store.split();
            let r2 = relu(&cache.h1);
            let mut dh1 = pointwise_backward(&r2, view.get(self.head2_w), dlogits, grads.get_mut(self.head2_w), None);
            add_bias_grad(grads.get_mut(self.head2_b), dlogits);
            relu_backward(&cache.h1, &mut dh1);
            let r1 = relu(&cache.skip_sum);
            let mut ds = pointwise_backward(&r1, view.get(self.head1_w), &dh1, grads.get_mut(self.head1_w), None);
            add_bias_grad(grads.get_mut(self.head1_b), &dh1);
            relu_backward(&cache.skip_sum, &mut ds);
            ds
        };
        let mut dx = Tensor::zeros(&[t_len, self.config.residual_channels]);
        for (block, bc) in self.blocks.iter().zip(&cache.blocks).rev() {
            dx = block.backward(store, bc, &dx, &dskip)?;
        }
        dskip = dx;
        let (view, mut grads) = store.split();
        pointwise_backward(&cache.x0, view.get(self.in_w), &dskip, grads.get_mut(self.in_w), None);
        add_bias_grad(grads.get_mut(self.in_b), &dskip);
        Ok(())
    }

    pub fn loss(&self, store: &ParamStore, frames: &WaveNetFrames) -> Result<f64, TcnError> {
        let (logits, _) = self.forward(store, frames)?;
        Ok(softmax_xent(&logits, &targets(frames.melody()))?.0)
    }

    pub fn loss_and_grad(&self, store: &mut ParamStore, frames: &WaveNetFrames) -> Result<f64, TcnError> {
        let (logits, cache) = self.forward(store, frames)?;
        let (loss, dlogits) = softmax_xent(&logits, &targets(frames.melody()))?;
        self.backward(store, &cache, &dlogits)?;
        Ok(loss)
    }

    /// Logits for frame `melody.len()` from the preceding labels, computed on
    /// the last receptive-field window only. Identical to the corresponding
    /// row of a full forward pass.
    pub fn next_logits(&self, store: &ParamStore, melody: &[u8], chords: &[u8]) -> Result<Vec<f64>, TcnError> {
        let t = melody.len();
        if chords.len() <= t {
            return Err(TcnError::ConditionLength { melody: t + 1, condition: chords.len() });
        }
        let start = (t + 1).saturating_sub(self.receptive_field());
        let len = t + 1 - start;
        let mut x0 = Tensor::zeros(&[len, WAVENET_VOCAB]);
        let mut cond = Tensor::zeros(&[len, CHORD_VOCAB]);
        for i in 0..len {
            let s = start + i;
            if s > 0 {
                x0.row_mut(i)[melody[s - 1] as usize] = 1.0;
            }
            cond.row_mut(i)[chords[s] as usize] = 1.0;
        }
        let (logits, _) = self.forward_inputs(store, x0, &cond)?;
        Ok(logits.row(len - 1).to_vec())
    }
}

fn targets(melody: &[u8]) -> Vec<usize> {
    melody.iter().map(|&m| m as usize).collect()
}
