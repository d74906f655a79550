use super::{NumericsError, Tensor};

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let mut out = logits.clone();
    let cols = logits.cols();
    if cols == 0 {
        return out;
    }
    for row in out.data_mut().chunks_exact_mut(cols) {
        softmax_in_place(row);
    }
    out
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Mean natural-log cross-entropy over rows and its gradient
/// `(softmax - onehot) / T`.
pub fn softmax_xent(logits: &Tensor, targets: &[usize]) -> Result<(f64, Tensor), NumericsError> {
    let (rows, vocab) = (logits.rows(), logits.cols());
    if logits.shape().len() != 2 || targets.len() != rows {
        return Err(NumericsError::ShapeMismatch {
            op: "softmax_xent",
            left: logits.shape().to_vec(),
            right: vec![targets.len()],
        });
    }
    if !logits.is_finite() {
        return Err(NumericsError::NonFinite("logits"));
    }
    if let Some((row, &label)) = targets.iter().enumerate().find(|(_, &l)| l >= vocab) {
        return Err(NumericsError::LabelOutOfRange { row, label, vocab });
    }
    if rows == 0 {
        return Ok((0.0, logits.clone()));
    }
    let mut grad = logits.clone();
    let scale = 1.0 / rows as f64;
    let mut total = 0.0;
    for (row, &target) in grad.data_mut().chunks_exact_mut(vocab).zip(targets) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        total += log_sum - row[target];
        for v in row.iter_mut() {
            *v = (*v - log_sum).exp() * scale;
        }
        row[target] -= scale;
    }
    Ok((total * scale, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_vocab() {
        let logits = Tensor::zeros(&[4, 130]);
        let (loss, grad) = softmax_xent(&logits, &[0, 5, 129, 60]).unwrap();
        assert!((loss - 130f64.ln()).abs() < 1e-12);
        for r in 0..4 {
            assert!(grad.row(r).iter().sum::<f64>().abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_target_gives_zero_loss() {
        let mut logits = Tensor::zeros(&[1, 10]);
        logits.data_mut()[3] = 1000.0;
        let (loss, _) = softmax_xent(&logits, &[3]).unwrap();
        assert!((0.0..1e-12).contains(&loss));
    }

    #[test]
    fn matches_scalar_oracle() {
        // Fixed pseudo-random logits; the oracle sums exp directly (no shift)
        // with compensated summation.
        let values = [
            0.3, -1.2, 2.5, 0.0, -0.7, 1.1, 0.9, -2.2, 0.4, 1.8, -0.5, -0.1, 0.6, 2.0, -1.4,
        ];
        let targets = [2usize, 4, 3];
        let logits = Tensor::from_vec(&[3, 5], values.to_vec()).unwrap();
        let (loss, grad) = softmax_xent(&logits, &targets).unwrap();

        let mut oracle = 0.0;
        let mut oracle_grad = [0.0; 15];
        for r in 0..3 {
            let row = &values[r * 5..r * 5 + 5];
            let (mut s, mut c) = (0.0f64, 0.0f64);
            for v in row {
                let y = v.exp() - c;
                let t = s + y;
                c = (t - s) - y;
                s = t;
            }
            oracle += -(row[targets[r]].exp() / s).ln() / 3.0;
            for j in 0..5 {
                let p = row[j].exp() / s;
                oracle_grad[r * 5 + j] = (p - if j == targets[r] { 1.0 } else { 0.0 }) / 3.0;
            }
        }
        assert!((loss - oracle).abs() < 1e-12, "{loss} vs {oracle}");
        for (g, o) in grad.data().iter().zip(&oracle_grad) {
            assert!((g - o).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let logits = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, -50.0, 0.0, 50.0]).unwrap();
        let p = softmax_rows(&logits);
        for r in 0..2 {
            assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn errors() {
        let mut logits = Tensor::zeros(&[1, 3]);
        assert!(matches!(softmax_xent(&logits, &[3]), Err(NumericsError::LabelOutOfRange { .. })));
        logits.data_mut()[0] = f64::NAN;
        assert_eq!(softmax_xent(&logits, &[0]).unwrap_err(), NumericsError::NonFinite("logits"));
    }
}
