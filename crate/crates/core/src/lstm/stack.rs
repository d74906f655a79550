use rand::Rng;

use crate::numerics::{GradView, ParamStore, ParamView, Tensor};

use super::layer::{LayerCache, LstmLayer, Packed};
use super::LstmError;

/// Layers of equal width; every layer after the first adds its input to its
/// output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LstmStack {
    layers: Vec<LstmLayer>,
}

#[derive(Debug, Clone)]
pub struct StackCache {
    layers: Vec<LayerCache>,
}

impl StackCache {
    pub fn layer(&self, k: usize) -> &LayerCache {
        &self.layers[k]
    }
}

impl LstmStack {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        prefix: &str,
        input: usize,
        hidden: usize,
        layers: usize,
    ) -> Result<Self, LstmError> {
        let layers = (0..layers)
            .map(|k| {
                let d = if k == 0 { input } else { hidden };
                LstmLayer::register(store, rng, &format!("{prefix}.{k}"), d, hidden)
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { layers })
    }

    pub fn bind(store: &ParamStore, prefix: &str, input: usize, hidden: usize, layers: usize) -> Result<Self, LstmError> {
        let layers = (0..layers)
            .map(|k| {
                let d = if k == 0 { input } else { hidden };
                LstmLayer::bind(store, &format!("{prefix}.{k}"), d, hidden)
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[LstmLayer] {
        &self.layers
    }

    /// The first `n` layers as a stack of their own.
    pub fn truncated(&self, n: usize) -> Self {
        Self { layers: self.layers[..n].to_vec() }
    }

    pub fn hidden(&self) -> usize {
        self.layers.first().map_or(0, |l| l.hidden)
    }

    pub fn forward(&self, view: &ParamView<'_>, x: &Tensor) -> Result<(Tensor, StackCache), LstmError> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut y = x.clone();
        for (k, layer) in self.layers.iter().enumerate() {
            let (mut h, cache) = layer.forward(view, &y)?;
            if k > 0 {
                h.add_assign(&y)?;
            }
            caches.push(cache);
            y = h;
        }
        Ok((y, StackCache { layers: caches }))
    }

    /// Returns the gradient w.r.t. the first `dx_rows` input rows.
    pub fn backward(&self, grads: &mut GradView<'_>, cache: &StackCache, dy: &Tensor, dx_rows: usize) -> Result<Tensor, LstmError> {
        let mut dy = dy.clone();
        for k in (1..self.layers.len()).rev() {
            let t = dy.rows();
            let dx = self.layers[k].backward(grads, &cache.layers[k], &dy, t);
            dy.add_assign(&dx)?;
        }
        match self.layers.first() {
            Some(first) => Ok(first.backward(grads, &cache.layers[0], &dy, dx_rows)),
            None => Ok(dy),
        }
    }

    pub(crate) fn packed(&self, view: &ParamView<'_>) -> Vec<Packed> {
        self.layers.iter().map(|l| l.packed(view)).collect()
    }
}

/// Incremental state of a stack for step-by-step decoding.
#[derive(Debug, Clone)]
pub(crate) struct StackState {
    packed: Vec<Packed>,
    h: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl StackState {
    pub(crate) fn new(stack: &LstmStack, view: &ParamView<'_>) -> Self {
        let hd = stack.hidden();
        let n = stack.layers.len();
        Self {
            packed: stack.packed(view),
            h: vec![vec![0.0; hd]; n],
            c: vec![vec![0.0; hd]; n],
            gates: vec![0.0; 4 * hd],
            tanh_c: vec![0.0; hd],
        }
    }

    /// Advances one step and returns the top output.
    pub(crate) fn step(&mut self, x: &[f64]) -> Vec<f64> {
        let hd = self.tanh_c.len();
        let mut y = x.to_vec();
        for k in 0..self.packed.len() {
            let mut h = vec![0.0; hd];
            let mut c = vec![0.0; hd];
            self.packed[k].step(&y, &self.h[k], &self.c[k], &mut self.gates, &mut c, &mut self.tanh_c, &mut h);
            self.h[k].copy_from_slice(&h);
            self.c[k] = c;
            if k > 0 {
                for (hv, yv) in h.iter_mut().zip(&y) {
                    *hv += yv;
                }
            }
            y = h;
        }
        y
    }
}
