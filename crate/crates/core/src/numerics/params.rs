use std::collections::HashMap;

use rand::Rng;

use super::{NumericsError, Tensor};

/// Handle to a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameters with gradients and optimizer moments, in insertion order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    grads: Vec<Tensor>,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
    step: u64,
}

/// Read-only view of parameter values.
#[derive(Clone, Copy)]
pub struct ParamView<'a>(&'a [Tensor]);

impl<'a> ParamView<'a> {
    pub fn get(&self, id: ParamId) -> &'a Tensor {
        &self.0[id.0]
    }
}

/// Mutable view of gradients.
pub struct GradView<'a>(&'a mut [Tensor]);

impl GradView<'_> {
    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.0[id.0]
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId, NumericsError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(NumericsError::DuplicateParam(name));
        }
        let id = self.values.len();
        self.index.insert(name.clone(), id);
        self.grads.push(Tensor::zeros(value.shape()));
        self.first_moment.push(vec![0.0; value.len()]);
        self.second_moment.push(vec![0.0; value.len()]);
        self.values.push(value);
        self.names.push(name);
        Ok(ParamId(id))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.grads[id.0]
    }

    /// Simultaneous read access to values and write access to gradients.
    pub fn split(&mut self) -> (ParamView<'_>, GradView<'_>) {
        (ParamView(&self.values), GradView(&mut self.grads))
    }

    pub fn view(&self) -> ParamView<'_> {
        ParamView(&self.values)
    }

    /// Replaces a parameter's value, keeping its shape.
    pub fn set_value(&mut self, id: ParamId, value: Tensor) -> Result<(), NumericsError> {
        if value.shape() != self.values[id.0].shape() {
            return Err(NumericsError::ShapeMismatch {
                op: "set_value",
                left: self.values[id.0].shape().to_vec(),
                right: value.shape().to_vec(),
            });
        }
        self.values[id.0] = value;
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| g.fill(0.0));
    }

    pub fn scale_grads(&mut self, factor: f64) {
        self.grads.iter_mut().for_each(|g| g.scale(factor));
    }

    pub fn grad_norm(&self) -> f64 {
        self.grads.iter().flat_map(|g| g.data()).map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Rescales gradients so their global L2 norm is at most `max_norm`.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm.is_finite() {
            self.scale_grads(max_norm / norm);
        }
        norm
    }

    pub fn num_values(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Number of optimizer steps applied so far.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    fn check_grads(&self) -> Result<(), NumericsError> {
        match self.grads.iter().position(|g| !g.is_finite()) {
            Some(i) => Err(NumericsError::NonFiniteGrad(self.names[i].clone())),
            None => Ok(()),
        }
    }

    pub fn apply(&mut self, optimizer: &Optimizer) -> Result<(), NumericsError> {
        match optimizer {
            Optimizer::Adam(cfg) => adam_step(self, cfg),
            Optimizer::Sgd { lr } => sgd_step(self, *lr),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Adam(AdamConfig),
    Sgd { lr: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Self::Adam(AdamConfig::default())
    }
}

/// Bias-corrected Adam update; gradients are zeroed afterwards. A non-finite
/// gradient aborts the step before any parameter changes.
pub fn adam_step(store: &mut ParamStore, cfg: &AdamConfig) -> Result<(), NumericsError> {
    store.check_grads()?;
    store.step += 1;
    let t = store.step as f64;
    let c1 = 1.0 - cfg.beta1.powf(t);
    let c2 = 1.0 - cfg.beta2.powf(t);
    for i in 0..store.values.len() {
        let g = store.grads[i].data();
        let m = &mut store.first_moment[i];
        let v = &mut store.second_moment[i];
        let w = store.values[i].data_mut();
        for j in 0..w.len() {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            w[j] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    store.zero_grads();
    Ok(())
}

pub fn sgd_step(store: &mut ParamStore, lr: f64) -> Result<(), NumericsError> {
    store.check_grads()?;
    store.step += 1;
    for (w, g) in store.values.iter_mut().zip(&store.grads) {
        for (wv, gv) in w.data_mut().iter_mut().zip(g.data()) {
            *wv -= lr * gv;
        }
    }
    store.zero_grads();
    Ok(())
}

/// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
pub fn xavier_uniform<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let a = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-a..a)).collect();
    Tensor::from_vec(shape, data).expect("shape product matches")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(v: f64) -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::from_vec(&[1], vec![v]).unwrap()).unwrap();
        (s, id)
    }

    #[test]
    fn zero_grads_leave_params() {
        let (mut s, id) = scalar_store(0.7);
        adam_step(&mut s, &AdamConfig::default()).unwrap();
        assert_eq!(s.value(id).data(), &[0.7]);
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        let (mut s, id) = scalar_store(0.0);
        s.grad_mut(id).data_mut()[0] = 1.0;
        let cfg = AdamConfig { lr: 0.1, ..AdamConfig::default() };
        adam_step(&mut s, &cfg).unwrap();
        // m_hat = v_hat = 1, so the step is lr / (1 + eps).
        assert!((s.value(id).data()[0] + 0.1 / (1.0 + 1e-8)).abs() < 1e-15);
        assert_eq!(s.grad(id).data(), &[0.0]);
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn identical_stores_stay_identical() {
        let (mut a, ia) = scalar_store(0.3);
        let (mut b, ib) = scalar_store(0.3);
        for k in 0..5 {
            a.grad_mut(ia).data_mut()[0] = (k as f64).sin();
            b.grad_mut(ib).data_mut()[0] = (k as f64).sin();
            adam_step(&mut a, &AdamConfig::default()).unwrap();
            adam_step(&mut b, &AdamConfig::default()).unwrap();
        }
        assert_eq!(a.value(ia).data()[0].to_bits(), b.value(ib).data()[0].to_bits());
    }

    #[test]
    fn non_finite_grad_aborts() {
        let (mut s, id) = scalar_store(1.0);
        s.grad_mut(id).data_mut()[0] = f64::INFINITY;
        assert_eq!(
            adam_step(&mut s, &AdamConfig::default()),
            Err(NumericsError::NonFiniteGrad("w".into()))
        );
        assert_eq!(s.value(id).data(), &[1.0]);
        assert_eq!(s.step_count(), 0);
    }

    #[test]
    fn duplicate_names_rejected() {
        let (mut s, _) = scalar_store(1.0);
        assert!(s.add("w", Tensor::zeros(&[1])).is_err());
    }

    #[test]
    fn sgd_and_clipping() {
        let (mut s, id) = scalar_store(1.0);
        s.grad_mut(id).data_mut()[0] = 10.0;
        assert_eq!(s.clip_grad_norm(2.0), 10.0);
        sgd_step(&mut s, 0.5).unwrap();
        assert!((s.value(id).data()[0] - 0.0).abs() < 1e-15);
    }
}
