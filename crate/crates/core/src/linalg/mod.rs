//! Dense tensor arithmetic, Frobenius norms, rank-1 low-rank factorization,
//! and convolution-kernel slicing.
//!
//! Everything here is a pure function of its inputs; random starts for the
//! power iteration are either passed in explicitly or derived from a fixed
//! seed, so results are reproducible across calls and threads.

mod rank1;
mod slicing;
mod tensor;

use thiserror::Error;

pub use rank1::{
    lrf_simplify, rank1_factorize, top_singular_triplet, Rank1Pair, SingularTriplet, DEFAULT_MAX_ITER,
    DEFAULT_TOL,
};
pub use slicing::{slice_conv_kernel, unslice_conv_kernel, KernelLayout, KernelSlices};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("empty tensor")]
    Empty,
    #[error("tensor rank {rank} outside supported range 1..=4")]
    Rank { rank: usize },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
    #[error("power iteration did not converge within {max_iter} iterations")]
    NonConvergence { max_iter: usize },
}

/// Frobenius norm: square root of the sum of squared entries.
pub fn frobenius_norm(t: &Tensor) -> f64 {
    t.frobenius_norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frobenius_identity_is_sqrt2() {
        let eye = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((frobenius_norm(&eye) - 2.0_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn frobenius_zero_matrix_is_zero() {
        assert_eq!(frobenius_norm(&Tensor::zeros(&[3, 4])), 0.0);
    }

    #[test]
    fn frobenius_three_four_five() {
        let a = Tensor::matrix(2, 2, vec![3.0, 0.0, 0.0, 4.0]).unwrap();
        assert_eq!(frobenius_norm(&a), 5.0);
    }
}
