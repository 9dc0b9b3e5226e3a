//! Minimal dense autodiff, layers, losses, optimizers and checkpoints.

pub mod checkpoint;
pub mod loss;
pub mod optim;
mod params;
mod scalar;
pub mod schedule;
mod tape;
mod tensor;

pub use params::{kaiming_uniform, Bound, ParamSet};
pub use scalar::{gemm, Scalar};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use crate::error::Result;

/// `x · w + b` for `x` [N, in], `w` [in, out], `b` [out].
pub fn affine<T: Scalar>(tape: &mut Tape<T>, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = tape.matmul(x, w)?;
    tape.add_row(y, b)
}
