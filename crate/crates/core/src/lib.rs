//! Training-time regularization by adaptive low-rank weight simplification.
//!
//! The crate trains small feedforward networks while watching the
//! validation-to-train error ratio. When that ratio stays high for a few
//! epochs, it ranks layers by a nonlinear condition number, picks layers
//! with a Bernoulli draw gated on the normalized condition number, and
//! replaces their weights by the best rank-1 reconstruction. Convolution
//! kernels are sliced per input channel so the same matrix factorization
//! applies to them.
//!
//! Module map:
//! - [`linalg`]: tensors, Frobenius norms, rank-1 factorization, kernel slicing
//! - [`net`]: dense/conv layers, losses, exact backprop, checkpoints
//! - [`conditioning`]: per-layer condition numbers and the SNCN diagnostic
//! - [`adaptlrf`]: the overfit-triggered simplification controller
//! - [`trainer`]: Adam loop, evaluation metrics, best-validation snapshots
//! - [`harness`]: datasets, experiment configs, run matrices, file exports

pub mod adaptlrf;
pub mod conditioning;
pub mod harness;
pub mod linalg;
pub mod net;
pub mod trainer;

pub use adaptlrf::{AdaptiveLrf, OverfitSignal, SimplifyMode, Strategy};
pub use conditioning::ConditionReport;
pub use harness::{Dataset, HarnessError, RunConfig};
pub use linalg::{
    frobenius_norm, lrf_simplify, rank1_factorize, slice_conv_kernel, top_singular_triplet,
    unslice_conv_kernel, KernelLayout, KernelSlices, LinalgError, Rank1Pair, SingularTriplet,
    Tensor,
};
pub use net::{Activation, LayerSpec, LossKind, NetError, Network, PenaltyConfig};
pub use trainer::{evaluate, fit, Regularizer, RunHistory, TrainConfig, TrainError};
