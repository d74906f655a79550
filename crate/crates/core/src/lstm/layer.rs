use rand::Rng;

use crate::numerics::{sigmoid, xavier_uniform, GradView, ParamId, ParamStore, ParamView, Tensor};

use super::LstmError;

/// One LSTM layer. `w` is `(4H, D)`, `u` is `(4H, H)`, `b` is `(4H)`, with
/// gate blocks in the order input, forget, output, candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmLayer {
    pub w: ParamId,
    pub u: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

/// Transposed copies of a layer's weights so both matrix-vector products
/// become contiguous row updates.
#[derive(Debug, Clone)]
pub(crate) struct Packed {
    wt: Vec<f64>,
    ut: Vec<f64>,
    b: Vec<f64>,
    hidden: usize,
}

#[derive(Debug, Clone)]
pub struct LayerCache {
    x: Tensor,
    /// Post-activation gates per step, `[i, f, o, g]` blocks.
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Tensor,
    packed: Packed,
}

impl LayerCache {
    pub fn output(&self) -> &Tensor {
        &self.h
    }

    /// Post-activation gates of step `t` as `[i, f, o, g]` blocks.
    pub fn gates(&self, t: usize) -> &[f64] {
        let g = 4 * self.packed.hidden;
        &self.gates[t * g..(t + 1) * g]
    }

    pub fn cell(&self, t: usize) -> &[f64] {
        let h = self.packed.hidden;
        &self.c[t * h..(t + 1) * h]
    }
}

fn transpose(src: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = src[r * cols + c];
        }
    }
    out
}

/// `out += Σ_d x[d] · rows[d]`, skipping zero coefficients.
#[inline]
pub(crate) fn axpy_rows(out: &mut [f64], rows: &[f64], x: &[f64]) {
    let n = out.len();
    for (d, &xv) in x.iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        for (o, r) in out.iter_mut().zip(&rows[d * n..(d + 1) * n]) {
            *o += xv * r;
        }
    }
}

impl Packed {
    fn new(view: &ParamView<'_>, layer: &LstmLayer) -> Self {
        let g = 4 * layer.hidden;
        Self {
            wt: transpose(view.get(layer.w).data(), g, layer.input),
            ut: transpose(view.get(layer.u).data(), g, layer.hidden),
            b: view.get(layer.b).data().to_vec(),
            hidden: layer.hidden,
        }
    }

    /// One recurrence step. `gates` receives the post-activation gates.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn step(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64], gates: &mut [f64], c: &mut [f64], tanh_c: &mut [f64], h: &mut [f64]) {
        let hd = self.hidden;
        gates.copy_from_slice(&self.b);
        axpy_rows(gates, &self.wt, x);
        axpy_rows(gates, &self.ut, h_prev);
        for v in &mut gates[..3 * hd] {
            *v = sigmoid(*v);
        }
        for v in &mut gates[3 * hd..] {
            *v = v.tanh();
        }
        for j in 0..hd {
            let (i, f, o, g) = (gates[j], gates[hd + j], gates[2 * hd + j], gates[3 * hd + j]);
            c[j] = f * c_prev[j] + i * g;
            tanh_c[j] = c[j].tanh();
            h[j] = o * tanh_c[j];
        }
    }
}

impl LstmLayer {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        prefix: &str,
        input: usize,
        hidden: usize,
    ) -> Result<Self, LstmError> {
        let g = 4 * hidden;
        let w = store.add(format!("{prefix}.w"), xavier_uniform(rng, &[g, input], input, g))?;
        let u = store.add(format!("{prefix}.u"), xavier_uniform(rng, &[g, hidden], hidden, g))?;
        let mut bias = Tensor::zeros(&[g]);
        bias.data_mut()[hidden..2 * hidden].fill(1.0);
        let b = store.add(format!("{prefix}.b"), bias)?;
        Ok(Self { w, u, b, input, hidden })
    }

    /// Looks up an existing layer by name and checks its shapes.
    pub fn bind(store: &ParamStore, prefix: &str, input: usize, hidden: usize) -> Result<Self, LstmError> {
        let g = 4 * hidden;
        let w = lookup(store, &format!("{prefix}.w"), &[g, input])?;
        let u = lookup(store, &format!("{prefix}.u"), &[g, hidden])?;
        let b = lookup(store, &format!("{prefix}.b"), &[g])?;
        Ok(Self { w, u, b, input, hidden })
    }

    pub(crate) fn packed(&self, view: &ParamView<'_>) -> Packed {
        Packed::new(view, self)
    }

    /// Runs the layer over `x` (T, D) from zero state.
    pub fn forward(&self, view: &ParamView<'_>, x: &Tensor) -> Result<(Tensor, LayerCache), LstmError> {
        if x.shape().len() != 2 || x.cols() != self.input {
            return Err(LstmError::Shape { expected: vec![x.rows(), self.input], found: x.shape().to_vec() });
        }
        let (t_len, hd) = (x.rows(), self.hidden);
        let g = 4 * hd;
        let packed = self.packed(view);
        let mut gates = vec![0.0; t_len * g];
        let mut c = vec![0.0; t_len * hd];
        let mut tanh_c = vec![0.0; t_len * hd];
        let mut h = vec![0.0; t_len * hd];
        let zeros = vec![0.0; hd];
        for t in 0..t_len {
            let (h_done, h_rest) = h.split_at_mut(t * hd);
            let (c_done, c_rest) = c.split_at_mut(t * hd);
            let h_prev = if t == 0 { &zeros[..] } else { &h_done[(t - 1) * hd..] };
            let c_prev = if t == 0 { &zeros[..] } else { &c_done[(t - 1) * hd..] };
            packed.step(
                x.row(t),
                h_prev,
                c_prev,
                &mut gates[t * g..(t + 1) * g],
                &mut c_rest[..hd],
                &mut tanh_c[t * hd..(t + 1) * hd],
                &mut h_rest[..hd],
            );
        }
        let h = Tensor::from_vec(&[t_len, hd], h)?;
        if !h.is_finite() {
            return Err(LstmError::NonFinite("lstm hidden state"));
        }
        let cache = LayerCache { x: x.clone(), gates, c, tanh_c, h: h.clone(), packed };
        Ok((h, cache))
    }

    /// Backpropagation through time. `dh` is the loss gradient w.r.t. this
    /// layer's hidden outputs. Parameter gradients are accumulated into
    /// `grads`; the input gradient is returned for the first `dx_rows` rows
    /// (remaining rows are zero).
    pub fn backward(&self, grads: &mut GradView<'_>, cache: &LayerCache, dh: &Tensor, dx_rows: usize) -> Tensor {
        let (t_len, hd, d) = (cache.h.rows(), self.hidden, self.input);
        let g = 4 * hd;
        let mut dwt = vec![0.0; d * g];
        let mut dut = vec![0.0; hd * g];
        let mut db = vec![0.0; g];
        let mut dx = Tensor::zeros(&[t_len, d]);
        let mut dh_next = vec![0.0; hd];
        let mut dc_next = vec![0.0; hd];
        let mut dz = vec![0.0; g];
        for t in (0..t_len).rev() {
            let gt = &cache.gates[t * g..(t + 1) * g];
            let tc = &cache.tanh_c[t * hd..(t + 1) * hd];
            for j in 0..hd {
                let (i, f, o, gg) = (gt[j], gt[hd + j], gt[2 * hd + j], gt[3 * hd + j]);
                let c_prev = if t == 0 { 0.0 } else { cache.c[(t - 1) * hd + j] };
                let dhj = dh.row(t)[j] + dh_next[j];
                let dc = dhj * o * (1.0 - tc[j] * tc[j]) + dc_next[j];
                dz[j] = dc * gg * i * (1.0 - i);
                dz[hd + j] = dc * c_prev * f * (1.0 - f);
                dz[2 * hd + j] = dhj * tc[j] * o * (1.0 - o);
                dz[3 * hd + j] = dc * i * (1.0 - gg * gg);
                dc_next[j] = dc * f;
            }
            for (dbv, dzv) in db.iter_mut().zip(&dz) {
                *dbv += dzv;
            }
            axpy_outer(&mut dwt, cache.x.row(t), &dz);
            if t > 0 {
                axpy_outer(&mut dut, cache.h.row(t - 1), &dz);
            }
            for (j, dn) in dh_next.iter_mut().enumerate() {
                *dn = dot(&cache.packed.ut[j * g..(j + 1) * g], &dz);
            }
            if t < dx_rows {
                for (k, dxv) in dx.row_mut(t).iter_mut().enumerate() {
                    *dxv = dot(&cache.packed.wt[k * g..(k + 1) * g], &dz);
                }
            }
        }
        add_transposed(grads.get_mut(self.w).data_mut(), &dwt, d, g);
        add_transposed(grads.get_mut(self.u).data_mut(), &dut, hd, g);
        for (gb, v) in grads.get_mut(self.b).data_mut().iter_mut().zip(&db) {
            *gb += v;
        }
        dx
    }
}

pub(crate) fn lookup(store: &ParamStore, name: &str, shape: &[usize]) -> Result<ParamId, LstmError> {
    let id = store.id(name).ok_or_else(|| LstmError::MissingParam(name.to_string()))?;
    if store.value(id).shape() != shape {
        return Err(LstmError::Shape { expected: shape.to_vec(), found: store.value(id).shape().to_vec() });
    }
    Ok(id)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `acc[d] += x[d] · dz` for every row `d` with non-zero `x[d]`.
#[inline]
fn axpy_outer(acc: &mut [f64], x: &[f64], dz: &[f64]) {
    let g = dz.len();
    for (k, &xv) in x.iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        for (a, z) in acc[k * g..(k + 1) * g].iter_mut().zip(dz) {
            *a += xv * z;
        }
    }
}

/// `dst[r×c] += src[c×r]ᵀ`
fn add_transposed(dst: &mut [f64], src: &[f64], src_rows: usize, src_cols: usize) {
    for k in 0..src_rows {
        for r in 0..src_cols {
            dst[r * src_rows + k] += src[k * src_cols + r];
        }
    }
}

/// A single cell update from explicit state.
pub fn lstm_cell(
    store: &ParamStore,
    layer: &LstmLayer,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), LstmError> {
    let hd = layer.hidden;
    if x.len() != layer.input || h_prev.len() != hd || c_prev.len() != hd {
        return Err(LstmError::Shape {
            expected: vec![layer.input, hd, hd],
            found: vec![x.len(), h_prev.len(), c_prev.len()],
        });
    }
    let packed = layer.packed(&store.view());
    let mut gates = vec![0.0; 4 * hd];
    let (mut c, mut tc, mut h) = (vec![0.0; hd], vec![0.0; hd], vec![0.0; hd]);
    packed.step(x, h_prev, c_prev, &mut gates, &mut c, &mut tc, &mut h);
    if h.iter().chain(&c).any(|v| !v.is_finite()) {
        return Err(LstmError::NonFinite("lstm cell"));
    }
    Ok((h, c))
}
