use crate::numerics::{gemm_nn, gemm_nt, gemm_tn, Tensor};

use super::TcnError;

fn check_kernel(x: &Tensor, kernel: &Tensor, dilation: usize) -> Result<(usize, usize, usize), TcnError> {
    let ks = kernel.shape();
    if ks.len() != 3 || x.shape().len() != 2 || ks[1] != x.cols() {
        return Err(TcnError::Shape { expected: vec![ks.first().copied().unwrap_or(0), x.cols(), 0], found: ks.to_vec() });
    }
    if dilation == 0 {
        return Err(TcnError::Config("dilation must be at least 1".into()));
    }
    Ok((ks[0], ks[1], ks[2]))
}

/// Tap `j` of a `(C_out, C_in, K)` kernel as a `(C_in, C_out)` row-major block.
fn tap_transposed(kernel: &[f64], c_out: usize, c_in: usize, k: usize, j: usize) -> Vec<f64> {
    let mut out = vec![0.0; c_in * c_out];
    for co in 0..c_out {
        for ci in 0..c_in {
            out[ci * c_out + co] = kernel[(co * c_in + ci) * k + j];
        }
    }
    out
}

/// `out[t] = Σ_j kernel[:, :, j] · x[t - (K-1-j)·dilation]`, zero before the
/// first frame.
pub fn dilated_causal_conv(x: &Tensor, kernel: &Tensor, dilation: usize) -> Result<Tensor, TcnError> {
    let (c_out, c_in, k) = check_kernel(x, kernel, dilation)?;
    let t_len = x.rows();
    let mut out = Tensor::zeros(&[t_len, c_out]);
    for j in 0..k {
        let shift = (k - 1 - j) * dilation;
        if shift >= t_len {
            continue;
        }
        let tap = tap_transposed(kernel.data(), c_out, c_in, k, j);
        for t in shift..t_len {
            let src = x.row(t - shift);
            let dst = out.row_mut(t);
            for (ci, &xv) in src.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                for (o, w) in dst.iter_mut().zip(&tap[ci * c_out..(ci + 1) * c_out]) {
                    *o += xv * w;
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of [`dilated_causal_conv`]: returns `dx` and adds the kernel
/// gradient into `dkernel`.
pub fn dilated_causal_conv_backward(
    x: &Tensor,
    kernel: &Tensor,
    dilation: usize,
    dout: &Tensor,
    dkernel: &mut Tensor,
) -> Result<Tensor, TcnError> {
    let (c_out, c_in, k) = check_kernel(x, kernel, dilation)?;
    let t_len = x.rows();
    let mut dx = Tensor::zeros(&[t_len, c_in]);
    for j in 0..k {
        let shift = (k - 1 - j) * dilation;
        if shift >= t_len {
            continue;
        }
        let tap = tap_transposed(kernel.data(), c_out, c_in, k, j);
        let mut dtap = vec![0.0; c_in * c_out];
        for t in shift..t_len {
            let g = dout.row(t);
            let src = x.row(t - shift);
            for (ci, &xv) in src.iter().enumerate() {
                if xv != 0.0 {
                    for (a, gv) in dtap[ci * c_out..(ci + 1) * c_out].iter_mut().zip(g) {
                        *a += xv * gv;
                    }
                }
            }
            let dst = dx.row_mut(t - shift);
            for (ci, d) in dst.iter_mut().enumerate() {
                *d += tap[ci * c_out..(ci + 1) * c_out].iter().zip(g).map(|(w, gv)| w * gv).sum::<f64>();
            }
        }
        let dk = dkernel.data_mut();
        for co in 0..c_out {
            for ci in 0..c_in {
                dk[(co * c_in + ci) * k + j] += dtap[ci * c_out + co];
            }
        }
    }
    Ok(dx)
}

/// Per-frame affine map `x · Wᵀ + b` with `W` of shape `(C_out, C_in)`.
pub(crate) fn pointwise(x: &Tensor, w: &Tensor, b: Option<&Tensor>) -> Tensor {
    let (t_len, c_in, c_out) = (x.rows(), x.cols(), w.rows());
    let mut out = Tensor::zeros(&[t_len, c_out]);
    gemm_nt(out.data_mut(), x.data(), w.data(), t_len, c_in, c_out);
    if let Some(b) = b {
        for t in 0..t_len {
            for (o, bv) in out.row_mut(t).iter_mut().zip(b.data()) {
                *o += bv;
            }
        }
    }
    out
}

/// Backward of [`pointwise`]; accumulates `dW`, `db` and returns `dx`.
pub(crate) fn pointwise_backward(x: &Tensor, w: &Tensor, dout: &Tensor, dw: &mut Tensor, db: Option<&mut Tensor>) -> Tensor {
    let (t_len, c_in, c_out) = (x.rows(), x.cols(), w.rows());
    gemm_tn(dw.data_mut(), dout.data(), x.data(), c_out, t_len, c_in);
    if let Some(db) = db {
        for t in 0..t_len {
            for (a, g) in db.data_mut().iter_mut().zip(dout.row(t)) {
                *a += g;
            }
        }
    }
    let mut dx = Tensor::zeros(&[t_len, c_in]);
    gemm_nn(dx.data_mut(), dout.data(), w.data(), t_len, c_out, c_in);
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Direct evaluation of the defining sum.
    fn conv_oracle(x: &Tensor, kernel: &Tensor, d: usize) -> Tensor {
        let (c_out, c_in, k) = (kernel.shape()[0], kernel.shape()[1], kernel.shape()[2]);
        let mut out = Tensor::zeros(&[x.rows(), c_out]);
        for t in 0..x.rows() {
            for co in 0..c_out {
                let mut s = 0.0;
                for j in 0..k {
                    let back = (k - 1 - j) * d;
                    if back > t {
                        continue;
                    }
                    for ci in 0..c_in {
                        s += kernel.data()[(co * c_in + ci) * k + j] * x.get2(t - back, ci);
                    }
                }
                out.row_mut(t)[co] = s;
            }
        }
        out
    }

    #[test]
    fn impulse_through_unit_kernel() {
        let mut x = Tensor::zeros(&[10, 1]);
        x.data_mut()[5] = 1.0;
        let kernel = Tensor::from_vec(&[1, 1, 2], vec![1.0, 1.0]).unwrap();
        let out = dilated_causal_conv(&x, &kernel, 1).unwrap();
        let expected: Vec<f64> = (0..10).map(|t| if t == 5 || t == 6 { 1.0 } else { 0.0 }).collect();
        assert_eq!(out.data(), expected.as_slice());
    }

    #[test]
    fn kernel_one_ignores_dilation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&mut rng, &[7, 3]);
        let kernel = random(&mut rng, &[2, 3, 1]);
        let a = dilated_causal_conv(&x, &kernel, 1).unwrap();
        let b = dilated_causal_conv(&x, &kernel, 16).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn matches_direct_sum_and_is_causal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (k, d) in [(2, 1), (2, 4), (3, 2), (2, 32)] {
            let x = random(&mut rng, &[20, 3]);
            let kernel = random(&mut rng, &[4, 3, k]);
            let out = dilated_causal_conv(&x, &kernel, d).unwrap();
            assert!(out.max_abs_diff(&conv_oracle(&x, &kernel, d)) < 1e-12);
            let mut y = x.clone();
            for v in &mut y.data_mut()[9 * 3..] {
                *v += 1.0;
            }
            let out2 = dilated_causal_conv(&y, &kernel, d).unwrap();
            assert_eq!(&out.data()[..9 * 4], &out2.data()[..9 * 4]);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&mut rng, &[9, 2]);
        let kernel = random(&mut rng, &[3, 2, 2]);
        let r = random(&mut rng, &[9, 3]);
        let f = |x: &Tensor, k: &Tensor| -> f64 {
            let o = dilated_causal_conv(x, k, 2).unwrap();
            o.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
        };
        let mut dk = Tensor::zeros(kernel.shape());
        let dx = dilated_causal_conv_backward(&x, &kernel, 2, &r, &mut dk).unwrap();
        let eps = 1e-6;
        for i in 0..x.len() {
            let (mut p, mut m) = (x.clone(), x.clone());
            p.data_mut()[i] += eps;
            m.data_mut()[i] -= eps;
            assert!(((f(&p, &kernel) - f(&m, &kernel)) / (2.0 * eps) - dx.data()[i]).abs() < 1e-8);
        }
        for i in 0..kernel.len() {
            let (mut p, mut m) = (kernel.clone(), kernel.clone());
            p.data_mut()[i] += eps;
            m.data_mut()[i] -= eps;
            assert!(((f(&x, &p) - f(&x, &m)) / (2.0 * eps) - dk.data()[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        let x = Tensor::zeros(&[4, 3]);
        assert!(dilated_causal_conv(&x, &Tensor::zeros(&[2, 2, 2]), 1).is_err());
        assert!(dilated_causal_conv(&x, &Tensor::zeros(&[2, 3, 2]), 0).is_err());
    }
}
