//! Regression and classification losses built from tape primitives.

use super::{Scalar, Tape, Var};
use crate::error::Result;

/// Mean squared error against a target of the same shape.
pub fn mse<T: Scalar>(tape: &mut Tape<T>, pred: Var, target: Var) -> Result<Var> {
    let d = tape.sub(pred, target)?;
    let sq = tape.mul(d, d)?;
    Ok(tape.mean(sq))
}

/// Mean cross-entropy of `logits` [N, C] against class indices.
pub fn cross_entropy<T: Scalar>(tape: &mut Tape<T>, logits: Var, labels: &[usize]) -> Result<Var> {
    let logp = tape.log_softmax(logits)?;
    let picked = tape.gather(logp, labels)?;
    let m = tape.mean(picked);
    Ok(tape.scale(m, -T::one()))
}
