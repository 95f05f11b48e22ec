//! Forward kernels with their hand-derived backward passes.

use super::{NumericsError, Tensor2};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrads {
    pub dx: Tensor2,
    pub dw: Tensor2,
    pub db: Vec<f64>,
}

/// `y = x·W + b`, with `W` shaped (in, out) and `b` broadcast over rows.
pub fn linear_forward(x: &Tensor2, w: &Tensor2, b: &[f64]) -> Result<Tensor2, NumericsError> {
    if b.len() != w.cols() {
        return Err(NumericsError::DimensionMismatch(format!("bias {} for {} outputs", b.len(), w.cols())));
    }
    let mut y = x.matmul(w)?;
    for r in 0..y.rows() {
        for (v, bias) in y.row_mut(r).iter_mut().zip(b) {
            *v += bias;
        }
    }
    Ok(y)
}

pub fn linear_backward(x: &Tensor2, w: &Tensor2, dy: &Tensor2) -> Result<LinearGrads, NumericsError> {
    if dy.shape() != (x.rows(), w.cols()) {
        return Err(NumericsError::DimensionMismatch(format!(
            "linear dy {:?}, expected ({}, {})",
            dy.shape(),
            x.rows(),
            w.cols()
        )));
    }
    Ok(LinearGrads { dx: dy.matmul_t(w)?, dw: x.t_matmul(dy)?, db: dy.column_sums() })
}

/// `softmax(logits / tau)` with max subtraction.
pub fn softmax_temp(logits: &[f64], tau: f64) -> Result<Vec<f64>, NumericsError> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(NumericsError::InvalidTemperature(tau));
    }
    Ok(softmax_scaled(logits, 1.0 / tau))
}

pub(crate) fn softmax_scaled(logits: &[f64], scale: f64) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| ((z - max) * scale).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    out
}

/// Gradient w.r.t. the logits given the softmax output `probs` and upstream `dprobs`.
pub fn softmax_temp_backward(probs: &[f64], dprobs: &[f64], tau: f64) -> Result<Vec<f64>, NumericsError> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(NumericsError::InvalidTemperature(tau));
    }
    Ok(softmax_backward_scaled(probs, dprobs, 1.0 / tau))
}

pub(crate) fn softmax_backward_scaled(probs: &[f64], dprobs: &[f64], scale: f64) -> Vec<f64> {
    let inner: f64 = probs.iter().zip(dprobs).map(|(p, d)| p * d).sum();
    probs.iter().zip(dprobs).map(|(p, d)| p * (d - inner) * scale).collect()
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    normalized: Tensor2,
    inv_std: Vec<f64>,
}

pub fn layer_norm(x: &Tensor2, gain: &[f64], bias: &[f64]) -> Result<(Tensor2, LayerNormCache), NumericsError> {
    let d = x.cols();
    if gain.len() != d || bias.len() != d {
        return Err(NumericsError::DimensionMismatch(format!(
            "layer norm gain/bias {}/{} for width {d}",
            gain.len(),
            bias.len()
        )));
    }
    let mut normalized = Tensor2::zeros(x.rows(), d);
    let mut out = Tensor2::zeros(x.rows(), d);
    let mut inv_std = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let istd = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        inv_std.push(istd);
        for c in 0..d {
            let n = (row[c] - mean) * istd;
            normalized.set(r, c, n);
            out.set(r, c, n * gain[c] + bias[c]);
        }
    }
    Ok((out, LayerNormCache { normalized, inv_std }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormGrads {
    pub dx: Tensor2,
    pub dgain: Vec<f64>,
    pub dbias: Vec<f64>,
}

pub fn layer_norm_backward(cache: &LayerNormCache, gain: &[f64], dy: &Tensor2) -> Result<LayerNormGrads, NumericsError> {
    let (rows, d) = cache.normalized.shape();
    if dy.shape() != (rows, d) || gain.len() != d {
        return Err(NumericsError::DimensionMismatch("layer norm backward".into()));
    }
    let mut dx = Tensor2::zeros(rows, d);
    let mut dgain = vec![0.0; d];
    let mut dbias = vec![0.0; d];
    for r in 0..rows {
        let n = cache.normalized.row(r);
        let g = dy.row(r);
        let mut dn = vec![0.0; d];
        for c in 0..d {
            dgain[c] += g[c] * n[c];
            dbias[c] += g[c];
            dn[c] = g[c] * gain[c];
        }
        let mean_dn = dn.iter().sum::<f64>() / d as f64;
        let mean_dn_n = dn.iter().zip(n).map(|(a, b)| a * b).sum::<f64>() / d as f64;
        let istd = cache.inv_std[r];
        for c in 0..d {
            dx.set(r, c, istd * (dn[c] - mean_dn - n[c] * mean_dn_n));
        }
    }
    Ok(LayerNormGrads { dx, dgain, dbias })
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Tanh-approximated GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::super::gradcheck::{finite_diff_grad, max_relative_error};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor2 {
        Tensor2::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn linear_examples() {
        let x = Tensor2::from_fn(2, 3, |r, c| (r + 2 * c) as f64);
        assert_eq!(linear_forward(&x, &Tensor2::identity(3), &[0.0; 3]).unwrap(), x);
        let y = linear_forward(&Tensor2::zeros(2, 3), &Tensor2::from_fn(3, 2, |r, c| (r + c) as f64), &[1.5, -2.0]).unwrap();
        assert_eq!(y.data(), &[1.5, -2.0, 1.5, -2.0]);
        assert!(linear_forward(&x, &Tensor2::zeros(2, 2), &[0.0; 2]).is_err());
    }

    #[test]
    fn linear_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&mut rng, 3, 4);
        let w = random(&mut rng, 4, 2);
        let b = vec![0.3, -0.1];
        let probe = random(&mut rng, 3, 2);
        let loss = |x: &Tensor2, w: &Tensor2, b: &[f64]| {
            let y = linear_forward(x, w, b).unwrap();
            y.data().iter().zip(probe.data()).map(|(a, p)| a * p).sum::<f64>()
        };
        let g = linear_backward(&x, &w, &probe).unwrap();

        let nx = finite_diff_grad(|v| loss(&Tensor2::new(3, 4, v.to_vec()).unwrap(), &w, &b), x.data(), 1e-5).unwrap();
        let nw = finite_diff_grad(|v| loss(&x, &Tensor2::new(4, 2, v.to_vec()).unwrap(), &b), w.data(), 1e-5).unwrap();
        let nb = finite_diff_grad(|v| loss(&x, &w, v), &b, 1e-5).unwrap();
        assert!(max_relative_error(g.dx.data(), &nx) < 1e-5);
        assert!(max_relative_error(g.dw.data(), &nw) < 1e-5);
        assert!(max_relative_error(&g.db, &nb) < 1e-5);
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax_temp(&[2.0, 2.0, 2.0], 0.3).unwrap(), vec![1.0 / 3.0; 3]);
        let p = softmax_temp(&[1.0, 0.0], 1.0).unwrap();
        // e / (1 + e)
        let expected = std::f64::consts::E / (1.0 + std::f64::consts::E);
        assert!((p[0] - expected).abs() < 1e-15);
        assert!((p[0] - 0.7311).abs() < 1e-4 && (p[1] - 0.2689).abs() < 1e-4);
        assert!(matches!(softmax_temp(&[1.0], 0.0), Err(NumericsError::InvalidTemperature(_))));
        assert!(matches!(softmax_temp(&[1.0], -1.0), Err(NumericsError::InvalidTemperature(_))));
        let big = softmax_temp(&[1000.0, 0.0], 0.01).unwrap();
        assert_eq!(big, vec![1.0, 0.0]);
    }

    #[test]
    fn softmax_backward_matches_finite_differences() {
        let z = [0.2, -0.7, 1.1, 0.05];
        let w = [0.3, 1.0, -2.0, 0.5];
        let tau = 0.7;
        let f = |z: &[f64]| softmax_temp(z, tau).unwrap().iter().zip(&w).map(|(p, w)| p * w).sum::<f64>();
        let p = softmax_temp(&z, tau).unwrap();
        let analytic = softmax_temp_backward(&p, &w, tau).unwrap();
        let numeric = finite_diff_grad(f, &z, 1e-5).unwrap();
        assert!(max_relative_error(&analytic, &numeric) < 1e-6);
    }

    #[test]
    fn layer_norm_examples() {
        let x = Tensor2::from_rows(&[vec![3.0; 4]]).unwrap();
        let bias = [0.1, 0.2, 0.3, 0.4];
        let (y, _) = layer_norm(&x, &[2.0; 4], &bias).unwrap();
        assert_eq!(y.data(), &bias);

        // Zero mean, unit population variance. The epsilon inside the square
        // root shrinks the output by 1/sqrt(1 + 1e-5), about 5e-6.
        let x = Tensor2::from_rows(&[vec![1.0, -1.0, 1.0, -1.0]]).unwrap();
        let (y, _) = layer_norm(&x, &[1.0; 4], &[0.0; 4]).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-5);
        }
        assert!(layer_norm(&x, &[1.0; 3], &[0.0; 4]).is_err());
    }

    #[test]
    fn layer_norm_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random(&mut rng, 3, 5);
        let gain: Vec<f64> = (0..5).map(|_| rng.random_range(0.5..1.5)).collect();
        let bias: Vec<f64> = (0..5).map(|_| rng.random_range(-0.5..0.5)).collect();
        let probe = random(&mut rng, 3, 5);
        let loss = |x: &Tensor2, g: &[f64], b: &[f64]| {
            let (y, _) = layer_norm(x, g, b).unwrap();
            y.data().iter().zip(probe.data()).map(|(a, p)| a * p).sum::<f64>()
        };
        let (_, cache) = layer_norm(&x, &gain, &bias).unwrap();
        let g = layer_norm_backward(&cache, &gain, &probe).unwrap();
        let nx = finite_diff_grad(|v| loss(&Tensor2::new(3, 5, v.to_vec()).unwrap(), &gain, &bias), x.data(), 1e-5).unwrap();
        let ng = finite_diff_grad(|v| loss(&x, v, &bias), &gain, 1e-5).unwrap();
        let nb = finite_diff_grad(|v| loss(&x, &gain, v), &bias, 1e-5).unwrap();
        assert!(max_relative_error(g.dx.data(), &nx) < 1e-5);
        assert!(max_relative_error(&g.dgain, &ng) < 1e-5);
        assert!(max_relative_error(&g.dbias, &nb) < 1e-5);
    }

    #[test]
    fn activations() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert_eq!(gelu(0.0), 0.0);
        for &x in &[-2.0, -0.3, 0.0, 0.7, 3.0] {
            let h = 1e-6;
            let numeric = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((gelu_grad(x) - numeric).abs() < 1e-8);
        }
    }
}
