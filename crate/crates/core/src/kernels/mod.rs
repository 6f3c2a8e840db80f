//! Inner-loop compute kernels: rational activations and dense /
//! block-sparse int8 matrix-vector products.

pub mod activations;
pub mod matrix;

pub use activations::{sigmoid_approx, tanh_approx, ActivationCoeffs};
pub use matrix::{
    dense_gemv, pack_block_sparse, pack_block_sparse_with_scale, sparse_q8_gemv,
    unpack_block_sparse, BlockSparseMatrix, DenseMatrix, KernelError, Q8_SCALE,
};
