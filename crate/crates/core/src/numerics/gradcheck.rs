//! Central finite differences, used as the independent oracle for every
//! hand-written backward pass.

use super::NumericsError;

/// Magnitude below which a gradient entry is compared absolutely rather than
/// relatively. Keeps round-off on near-zero entries from reading as error.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate `i`.
pub fn finite_diff_grad<F>(f: F, point: &[f64], h: f64) -> Result<Vec<f64>, NumericsError>
where
    F: FnMut(&[f64]) -> f64,
{
    finite_diff_with(f, point, |_| h)
}

/// Central differences with a per-coordinate step `rel_h * max(1, |x_i|)`.
pub fn finite_diff_grad_scaled<F>(f: F, point: &[f64], rel_h: f64) -> Result<Vec<f64>, NumericsError>
where
    F: FnMut(&[f64]) -> f64,
{
    finite_diff_with(f, point, |x| rel_h * x.abs().max(1.0))
}

fn finite_diff_with<F, S>(mut f: F, point: &[f64], step: S) -> Result<Vec<f64>, NumericsError>
where
    F: FnMut(&[f64]) -> f64,
    S: Fn(f64) -> f64,
{
    let mut x = point.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x[i];
        let h = step(orig);
        if !(h > 0.0) {
            return Err(NumericsError::InvalidStep(h));
        }
        x[i] = orig + h;
        let plus = f(&x);
        x[i] = orig - h;
        let minus = f(&x);
        x[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(NumericsError::NonFiniteEvaluation { index: i });
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// `|a - n| / max(|a|, |n|, RELATIVE_ERROR_FLOOR)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
    (analytic - numeric).abs() / denom
}

pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    analytic.iter().zip(numeric).map(|(&a, &n)| relative_error(a, n)).fold(0.0, f64::max)
}
