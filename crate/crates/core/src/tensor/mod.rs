//! Dense `f64` tensors and a reverse-mode tape covering the layers the
//! models need: convolution, batch/layer normalization, pooling, affine
//! maps, activations, dropout and a label-smoothed cross-entropy.
//!
//! A [`Tape`] is built fresh for every forward pass. Parameters enter as
//! [`Tape::param`] leaves; after [`Tape::backward`] their gradients are read
//! back with [`Tape::grad`]. Operations computed outside the tape (the
//! quantum circuits) plug in through [`CustomOp`].

mod dense;
pub(crate) mod kernels;
mod tape;

pub use dense::Tensor;
pub use tape::{
    softmax_in_place, CustomOp, Mode, RunningStats, Tape, Var, BATCHNORM_EPS, BATCHNORM_MOMENTUM,
    LAYERNORM_EPS,
};
