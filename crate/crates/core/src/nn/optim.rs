//! Adam and LARS-with-momentum. Each tensor of a [`ParamSet`] is one
//! parameter group.

use super::{ParamSet, Scalar};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
    step: u64,
}

fn check_grads<T: Scalar>(params: &ParamSet<T>, grads: &[Vec<T>]) -> Result<()> {
    if grads.len() != params.len()
        || params.iter().zip(grads).any(|((_, t), g)| t.numel() != g.len())
    {
        return Err(Error::dim("optimizer", "gradient buffers do not match parameters"));
    }
    Ok(())
}

fn finite_or_err<T: Scalar>(params: &ParamSet<T>) -> Result<()> {
    if params.all_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            what: "parameter",
            epoch: 0,
            step: 0,
        })
    }
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &ParamSet<T>) -> Self {
        let zeros: Vec<Vec<T>> = params.iter().map(|(_, t)| vec![T::zero(); t.numel()]).collect();
        Adam {
            config,
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update with learning rate `lr`.
    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &[Vec<T>], lr: f64) -> Result<()> {
        check_grads(params, grads)?;
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let (b1, b2) = (T::from_f64_lossy(c.beta1), T::from_f64_lossy(c.beta2));
        let bc1 = T::from_f64_lossy(1.0 - c.beta1.powi(t));
        let bc2 = T::from_f64_lossy(1.0 - c.beta2.powi(t));
        let (lr, eps) = (T::from_f64_lossy(lr), T::from_f64_lossy(c.eps));
        for (((w, g), m), v) in params
            .tensors_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for (((wi, &gi), mi), vi) in w.data.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (T::one() - b1) * gi;
                *vi = b2 * *vi + (T::one() - b2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *wi = *wi - lr * mhat / (vhat.sqrt() + eps);
            }
        }
        finite_or_err(params)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LarsConfig {
    pub momentum: f64,
    pub trust_coefficient: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for LarsConfig {
    fn default() -> Self {
        LarsConfig {
            momentum: 0.9,
            trust_coefficient: 0.001,
            eps: 1e-9,
            weight_decay: 0.0,
        }
    }
}

/// Layer-wise adaptive rate scaling with heavy-ball momentum:
///
/// ```text
/// local_lr = trust · ‖w‖ / (‖g‖ + eps)      (global lr alone when ‖w‖ = 0)
/// v ← momentum · v + lr · local_lr · (g + wd · w)
/// w ← w − v
/// ```
#[derive(Clone, Debug)]
pub struct Lars<T> {
    pub config: LarsConfig,
    velocity: Vec<Vec<T>>,
    step: u64,
}

impl<T: Scalar> Lars<T> {
    pub fn new(config: LarsConfig, params: &ParamSet<T>) -> Self {
        Lars {
            config,
            velocity: params.iter().map(|(_, t)| vec![T::zero(); t.numel()]).collect(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Local learning-rate multiplier for one parameter group.
    pub fn local_lr(&self, weight_norm: f64, grad_norm: f64) -> f64 {
        if weight_norm == 0.0 {
            1.0
        } else {
            self.config.trust_coefficient * weight_norm / (grad_norm + self.config.eps)
        }
    }

    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &[Vec<T>], lr: f64) -> Result<()> {
        check_grads(params, grads)?;
        self.step += 1;
        let mom = T::from_f64_lossy(self.config.momentum);
        let wd = T::from_f64_lossy(self.config.weight_decay);
        for (i, (w, g)) in params.tensors_mut().zip(grads).enumerate() {
            let wn = w.norm().to_f64().unwrap();
            let gn = g.iter().map(|&x| x * x).sum::<T>().sqrt().to_f64().unwrap();
            let rate = T::from_f64_lossy(lr * self.local_lr(wn, gn));
            for ((wi, &gi), vi) in w.data.iter_mut().zip(g).zip(self.velocity[i].iter_mut()) {
                *vi = mom * *vi + rate * (gi + wd * *wi);
                *wi = *wi - *vi;
            }
        }
        finite_or_err(params)
    }
}
