//! Layer normalization and the SiLU activation.

use crate::scalar::{sigmoid, Scalar};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Normalize `x` to zero mean and unit variance, then apply `gain` and `bias`.
pub fn layer_norm<T: Scalar>(x: &[T], gain: &[T], bias: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    normalize_row(x, gain, bias, &mut out);
    out
}

/// Returns `(mean, 1/sqrt(var + eps))` and writes the affine output.
fn normalize_row<T: Scalar>(x: &[T], gain: &[T], bias: &[T], out: &mut [T]) -> (T, T) {
    let n = T::from_usize(x.len()).expect("row length fits");
    let mean = x.iter().copied().sum::<T>() / n;
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    let rstd = T::one() / (var + T::lit(LAYER_NORM_EPS)).sqrt();
    for (((o, &v), &g), &b) in out.iter_mut().zip(x).zip(gain).zip(bias) {
        *o = (v - mean) * rstd * g + b;
    }
    (mean, rstd)
}

/// Row statistics recorded for the backward pass.
#[derive(Debug, Clone)]
pub struct NormTrace<T> {
    pub mean: Vec<T>,
    pub rstd: Vec<T>,
}

/// Layer-normalize every row of an `L×D` matrix.
pub fn layer_norm_rows<T: Scalar>(
    x: &[T],
    dim: usize,
    gain: &[T],
    bias: &[T],
) -> (Vec<T>, NormTrace<T>) {
    let rows = x.len() / dim;
    let mut out = vec![T::zero(); x.len()];
    let mut mean = Vec::with_capacity(rows);
    let mut rstd = Vec::with_capacity(rows);
    for (xr, or) in x.chunks_exact(dim).zip(out.chunks_exact_mut(dim)) {
        let (m, r) = normalize_row(xr, gain, bias, or);
        mean.push(m);
        rstd.push(r);
    }
    (out, NormTrace { mean, rstd })
}

/// Backward of [`layer_norm_rows`]; accumulates into `dgain`/`dbias` and returns `dx`.
pub fn layer_norm_rows_backward<T: Scalar>(
    x: &[T],
    dim: usize,
    gain: &[T],
    trace: &NormTrace<T>,
    dy: &[T],
    dgain: &mut [T],
    dbias: &mut [T],
) -> Vec<T> {
    let n = T::from_usize(dim).expect("row length fits");
    let mut dx = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); dim];
    let mut dxhat = vec![T::zero(); dim];
    for (r, ((xr, dyr), dxr)) in x
        .chunks_exact(dim)
        .zip(dy.chunks_exact(dim))
        .zip(dx.chunks_exact_mut(dim))
        .enumerate()
    {
        let (mean, rstd) = (trace.mean[r], trace.rstd[r]);
        let mut sum_d = T::zero();
        let mut sum_dx = T::zero();
        for k in 0..dim {
            xhat[k] = (xr[k] - mean) * rstd;
            dxhat[k] = dyr[k] * gain[k];
            dgain[k] += dyr[k] * xhat[k];
            dbias[k] += dyr[k];
            sum_d += dxhat[k];
            sum_dx += dxhat[k] * xhat[k];
        }
        let (mean_d, mean_dx) = (sum_d / n, sum_dx / n);
        for k in 0..dim {
            dxr[k] = rstd * (dxhat[k] - mean_d - xhat[k] * mean_dx);
        }
    }
    dx
}

pub fn silu<T: Scalar>(x: T) -> T {
    x * sigmoid(x)
}

pub fn silu_grad<T: Scalar>(x: T) -> T {
    let s = sigmoid(x);
    s * (T::one() + x * (T::one() - s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_input_maps_to_bias() {
        let out = layer_norm(&[3.0f64; 6], &[1.0; 6], &[0.0; 6]);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn already_normalized_pair() {
        let out = layer_norm(&[1.0f64, -1.0], &[1.0; 2], &[0.0; 2]);
        // variance 1, so only epsilon perturbs the result
        let expect = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!((out[0] - expect).abs() < 1e-12);
        assert!((out[1] + expect).abs() < 1e-12);
        assert!((out[0] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn matches_two_pass_oracle() {
        let mut r = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let d = r.gen_range(1..12);
            let x: Vec<f64> = (0..d).map(|_| r.gen_range(-5.0..5.0)).collect();
            let g: Vec<f64> = (0..d).map(|_| r.gen_range(0.5..1.5)).collect();
            let b: Vec<f64> = (0..d).map(|_| r.gen_range(-1.0..1.0)).collect();
            let out = layer_norm(&x, &g, &b);
            let mean = x.iter().sum::<f64>() / d as f64;
            let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
            for k in 0..d {
                let expect = (x[k] - mean) / (var + 1e-5).sqrt() * g[k] + b[k];
                assert!((out[k] - expect).abs() < 1e-12);
            }
            // unit gain: output mean equals the mean of the bias
            let plain = layer_norm(&x, &vec![1.0; d], &b);
            let bias_mean = b.iter().sum::<f64>() / d as f64;
            assert!((plain.iter().sum::<f64>() / d as f64 - bias_mean).abs() < 1e-12);
        }
    }

    #[test]
    fn silu_values() {
        assert_eq!(silu(0.0f64), 0.0);
        assert!((silu(1.0f64) - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-15);
        assert!((silu(1.0f64) - 0.731059).abs() < 1e-6);
        assert!((silu_grad(0.0f64) - 0.5).abs() < 1e-15);
        let mut r = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x: f64 = r.gen_range(-10.0..10.0);
            let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
            let lhs = silu(-x) + silu(x);
            let rhs = x * (sig(x) - sig(-x));
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn norm_backward_matches_finite_differences() {
        let mut r = ChaCha8Rng::seed_from_u64(8);
        let (rows, dim) = (3, 5);
        let x: Vec<f64> = (0..rows * dim).map(|_| r.gen_range(-2.0..2.0)).collect();
        let g: Vec<f64> = (0..dim).map(|_| r.gen_range(0.5..1.5)).collect();
        let b: Vec<f64> = (0..dim).map(|_| r.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..rows * dim).map(|_| r.gen_range(-1.0..1.0)).collect();
        let loss = |x: &[f64]| -> f64 {
            let (y, _) = layer_norm_rows(x, dim, &g, &b);
            y.iter().zip(&w).map(|(a, b)| a * b).sum()
        };
        let (_, tr) = layer_norm_rows(&x, dim, &g, &b);
        let mut dg = vec![0.0; dim];
        let mut db = vec![0.0; dim];
        let dx = layer_norm_rows_backward(&x, dim, &g, &tr, &w, &mut dg, &mut db);
        for k in 0..x.len() {
            let mut p = x.clone();
            let mut m = x.clone();
            p[k] += 1e-6;
            m[k] -= 1e-6;
            let fd = (loss(&p) - loss(&m)) / 2e-6;
            assert!((fd - dx[k]).abs() < 1e-7, "{fd} vs {}", dx[k]);
        }
    }
}
