//! Activation and normalization primitives with their analytic backward passes.

use super::matrix::{dot, RealMatrix};
use crate::error::{Error, Result};

/// Guard for zero rows in [`l2_normalize_rows`].
pub const NORM_EPSILON: f64 = 1e-12;

/// Divides each row by `max(||row||, epsilon)`.
pub fn l2_normalize_rows(m: &RealMatrix, epsilon: f64) -> RealMatrix {
    let mut out = m.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let norm = dot(row, row).sqrt().max(epsilon);
        row.iter_mut().for_each(|x| *x /= norm);
    }
    out
}

/// Backward pass of [`l2_normalize_rows`].
///
/// `input` is the pre-normalization matrix, `output` the normalized one and
/// `grad_output` the upstream gradient. For a row with norm `n > epsilon`,
/// `dx = (dy - y * <y, dy>) / n`; guarded rows are a plain scale by `1/epsilon`.
pub fn l2_normalize_rows_backward(
    input: &RealMatrix,
    output: &RealMatrix,
    grad_output: &RealMatrix,
    epsilon: f64,
) -> Result<RealMatrix> {
    if input.shape() != grad_output.shape() || output.shape() != grad_output.shape() {
        return Err(Error::dimension(
            "l2_normalize_rows_backward",
            input.shape(),
            grad_output.shape(),
        ));
    }
    let mut grad = RealMatrix::zeros(input.rows(), input.cols());
    for i in 0..input.rows() {
        let x = input.row(i);
        let y = output.row(i);
        let dy = grad_output.row(i);
        let norm = dot(x, x).sqrt();
        let g = grad.row_mut(i);
        if norm > epsilon {
            let proj = dot(y, dy);
            for ((gj, &dyj), &yj) in g.iter_mut().zip(dy).zip(y) {
                *gj = (dyj - yj * proj) / norm;
            }
        } else {
            for (gj, &dyj) in g.iter_mut().zip(dy) {
                *gj = dyj / epsilon;
            }
        }
    }
    Ok(grad)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(m: &RealMatrix) -> RealMatrix {
    let mut out = m.clone();
    for i in 0..out.rows() {
        softmax_in_place(out.row_mut(i));
    }
    out
}

/// Softmax of a slice, in place. Entries equal to `-inf` receive probability zero.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return;
    }
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    row.iter_mut().for_each(|x| *x /= sum);
}

/// `log(sum(exp(xs)))` computed stably.
pub fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub fn relu(m: &RealMatrix) -> RealMatrix {
    m.map(|x| x.max(0.0))
}

/// Masks `grad_output` where the pre-activation was not positive.
pub fn relu_backward(pre_activation: &RealMatrix, grad_output: &RealMatrix) -> Result<RealMatrix> {
    if pre_activation.shape() != grad_output.shape() {
        return Err(Error::dimension(
            "relu_backward",
            pre_activation.shape(),
            grad_output.shape(),
        ));
    }
    let data = pre_activation
        .as_slice()
        .iter()
        .zip(grad_output.as_slice())
        .map(|(&z, &g)| if z > 0.0 { g } else { 0.0 })
        .collect();
    RealMatrix::from_vec(grad_output.rows(), grad_output.cols(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::finite_difference_matrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> RealMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        RealMatrix::from_vec(rows, cols, data).unwrap()
    }

    fn row_norm(r: &[f64]) -> f64 {
        r.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn normalizes_three_four_five() {
        let m = RealMatrix::from_rows(&[[3.0, 4.0]]).unwrap();
        let n = l2_normalize_rows(&m, NORM_EPSILON);
        assert!((n[(0, 0)] - 0.6).abs() < 1e-15);
        assert!((n[(0, 1)] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_row_stays_zero() {
        let m = RealMatrix::zeros(1, 3);
        let n = l2_normalize_rows(&m, 1e-12);
        assert_eq!(n.as_slice(), &[0.0, 0.0, 0.0]);
        assert!(n.is_finite());
    }

    #[test]
    fn random_rows_are_unit_norm() {
        let n = l2_normalize_rows(&random(4, 8, 1), NORM_EPSILON);
        for row in n.iter_rows() {
            assert!((row_norm(row) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn softmax_examples() {
        let s = softmax_rows(&RealMatrix::from_rows(&[[0.0, 0.0]]).unwrap());
        assert_eq!(s.as_slice(), &[0.5, 0.5]);
        let s = softmax_rows(&RealMatrix::from_rows(&[[1000.0, 1000.0]]).unwrap());
        assert_eq!(s.as_slice(), &[0.5, 0.5]);

        let s = softmax_rows(&RealMatrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap());
        let z: f64 = [1.0f64, 2.0, 3.0].iter().map(|x| x.exp()).sum();
        for (j, x) in [1.0f64, 2.0, 3.0].iter().enumerate() {
            assert!((s[(0, j)] - x.exp() / z).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_ignores_negative_infinity() {
        let mut row = [0.0, f64::NEG_INFINITY, 0.0];
        softmax_in_place(&mut row);
        assert_eq!(row, [0.5, 0.0, 0.5]);
    }

    #[test]
    fn normalize_backward_matches_finite_differences() {
        let x = random(4, 5, 3);
        let w = random(4, 5, 4);
        // f(x) = <w, normalize(x)>
        let f = |m: &RealMatrix| {
            let y = l2_normalize_rows(m, NORM_EPSILON);
            dot(y.as_slice(), w.as_slice())
        };
        let y = l2_normalize_rows(&x, NORM_EPSILON);
        let analytic = l2_normalize_rows_backward(&x, &y, &w, NORM_EPSILON).unwrap();
        let numeric = finite_difference_matrix(f, &x, 1e-5);
        assert!(crate::numeric::max_relative_error(&analytic, &numeric) < 1e-4);
    }

    #[test]
    fn relu_backward_masks() {
        let z = RealMatrix::from_rows(&[[-1.0, 0.0, 2.0]]).unwrap();
        let g = RealMatrix::from_rows(&[[5.0, 5.0, 5.0]]).unwrap();
        assert_eq!(relu_backward(&z, &g).unwrap().as_slice(), &[0.0, 0.0, 5.0]);
    }

    proptest! {
        #[test]
        fn softmax_shift_invariant(
            row in proptest::collection::vec(-50.0f64..50.0, 1..8),
            shift in -100.0f64..100.0,
        ) {
            let m = RealMatrix::from_rows(std::slice::from_ref(&row)).unwrap();
            let shifted = m.map(|x| x + shift);
            let a = softmax_rows(&m);
            let b = softmax_rows(&shifted);
            prop_assert!(a.max_abs_diff(&b) < 1e-12);
            prop_assert!((a.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn normalize_idempotent(
            data in proptest::collection::vec(-10.0f64..10.0, 12),
        ) {
            let m = RealMatrix::from_vec(3, 4, data).unwrap();
            let once = l2_normalize_rows(&m, NORM_EPSILON);
            let twice = l2_normalize_rows(&once, NORM_EPSILON);
            prop_assert!(once.max_abs_diff(&twice) < 1e-12);
        }
    }
}
