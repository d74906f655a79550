use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    pub tolerance: f64,
    /// Coordinates checked per parameter; all of them when the tensor is smaller.
    pub coords_per_param: usize,
    /// Lower bound on the relative-error denominator so that coordinates whose
    /// true gradient is ~0 are judged by absolute agreement.
    pub denominator_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { epsilon: 1e-5, tolerance: 1e-4, coords_per_param: 24, denominator_floor: 1e-5, seed: 0 }
    }
}

/// Worst coordinate found for one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
    pub coords_checked: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.passed)
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params.iter().max_by(|a, b| a.relative_error.total_cmp(&b.relative_error))
    }

    pub fn failures(&self) -> impl Iterator<Item = &ParamCheck> {
        self.params.iter().filter(|p| !p.passed)
    }
}

/// `|a - n| / max(|a| + |n|, floor)`
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(floor)
}

/// Compares the gradients currently held in `store` against central
/// differences of `loss`. Values are perturbed in place and restored.
pub fn grad_check<F>(store: &mut ParamStore, mut loss: F, cfg: &GradCheckConfig) -> GradCheckReport
where
    F: FnMut(&ParamStore) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ids: Vec<ParamId> = store.ids().collect();
    let mut params = Vec::with_capacity(ids.len());
    for id in ids {
        let n = store.value(id).len();
        if n == 0 {
            continue;
        }
        let coords: Vec<usize> = if n <= cfg.coords_per_param {
            (0..n).collect()
        } else {
            let mut c = sample(&mut rng, n, cfg.coords_per_param).into_vec();
            c.sort_unstable();
            c
        };
        let mut worst: Option<ParamCheck> = None;
        for &index in &coords {
            let original = store.value(id).data()[index];
            store.value_mut(id).data_mut()[index] = original + cfg.epsilon;
            let plus = loss(store);
            store.value_mut(id).data_mut()[index] = original - cfg.epsilon;
            let minus = loss(store);
            store.value_mut(id).data_mut()[index] = original;

            let numeric = (plus - minus) / (2.0 * cfg.epsilon);
            let analytic = store.grad(id).data()[index];
            let err = relative_error(analytic, numeric, cfg.denominator_floor);
            if worst.as_ref().is_none_or(|w| err > w.relative_error || err.is_nan()) {
                worst = Some(ParamCheck {
                    name: store.name(id).to_string(),
                    index,
                    analytic,
                    numeric,
                    relative_error: err,
                    coords_checked: coords.len(),
                    passed: err < cfg.tolerance,
                });
            }
        }
        params.extend(worst);
    }
    GradCheckReport { params, tolerance: cfg.tolerance }
}
