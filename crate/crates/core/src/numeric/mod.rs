//! Dense matrices, activation primitives, parameters and the SGD updater.

mod gradcheck;
mod matrix;
mod ops;
mod param;

pub use gradcheck::{
    finite_difference_gradient, finite_difference_matrix, max_relative_error, RELATIVE_ERROR_FLOOR,
};
pub use matrix::{dot, matmul, matmul_nt, matmul_tn, RealMatrix};
pub use ops::{
    l2_normalize_rows, l2_normalize_rows_backward, log_sum_exp, relu, relu_backward,
    softmax_in_place, softmax_rows, NORM_EPSILON,
};
pub use param::{sgd_step, ParamTensor, SgdConfig};
