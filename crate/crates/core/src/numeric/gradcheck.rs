//! Central-difference gradient estimates, used as an independent oracle for
//! the analytic backward passes.

use super::matrix::RealMatrix;
use super::param::ParamTensor;

/// Estimates `d loss / d p.value` entry by entry as `(f(x+h) - f(x-h)) / 2h`.
pub fn finite_difference_gradient<F>(mut loss_fn: F, p: &ParamTensor, h: f64) -> RealMatrix
where
    F: FnMut(&ParamTensor) -> f64,
{
    let mut probe = p.clone();
    let mut grad = RealMatrix::zeros(p.value.rows(), p.value.cols());
    for idx in 0..p.value.as_slice().len() {
        let x = p.value.as_slice()[idx];
        probe.value.as_mut_slice()[idx] = x + h;
        let plus = loss_fn(&probe);
        probe.value.as_mut_slice()[idx] = x - h;
        let minus = loss_fn(&probe);
        probe.value.as_mut_slice()[idx] = x;
        grad.as_mut_slice()[idx] = (plus - minus) / (2.0 * h);
    }
    grad
}

/// Same as [`finite_difference_gradient`] for a function of a bare matrix.
pub fn finite_difference_matrix<F>(mut f: F, x: &RealMatrix, h: f64) -> RealMatrix
where
    F: FnMut(&RealMatrix) -> f64,
{
    let p = ParamTensor::new(x.clone());
    finite_difference_gradient(|p| f(&p.value), &p, h)
}

/// Entries whose magnitudes are both below this are compared on an absolute scale.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-5;

/// `max_i |a_i - b_i| / max(|a_i|, |b_i|, RELATIVE_ERROR_FLOOR)`.
pub fn max_relative_error(analytic: &RealMatrix, numeric: &RealMatrix) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    analytic
        .as_slice()
        .iter()
        .zip(numeric.as_slice())
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(RELATIVE_ERROR_FLOOR))
        .fold(0.0, f64::max)
}
