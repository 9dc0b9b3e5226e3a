use super::{Scalar, Tape, Tensor, Var};
use crate::error::{Error, Result};
use rand::Rng;
use sha2::{Digest, Sha256};

/// Ordered collection of named parameter tensors.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamSet<T> {
    entries: Vec<(String, Tensor<T>)>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet {
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor<T>) {
        self.entries.push((name.into(), t));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar count across all tensors.
    pub fn num_params(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), t.cast()))
                .collect(),
        }
    }

    /// Puts every tensor on the tape, as leaves when `trainable`.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Bound {
        let vars = self
            .entries
            .iter()
            .map(|(_, t)| {
                if trainable {
                    tape.leaf(t.clone())
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect();
        Bound {
            names: self.names(),
            vars,
        }
    }

    /// SHA-256 over names, shapes and the bit patterns of every value.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for (n, t) in &self.entries {
            h.update(n.as_bytes());
            for d in &t.shape {
                h.update((*d as u64).to_le_bytes());
            }
            for v in &t.data {
                h.update(v.to_f64().unwrap().to_bits().to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.all_finite())
    }

    /// Checks the other set has the same names and shapes in the same order.
    pub fn check_layout(&self, other: &ParamSet<T>) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                self.len(),
                other.len()
            )));
        }
        for ((a, ta), (b, tb)) in self.entries.iter().zip(&other.entries) {
            if a != b || ta.shape != tb.shape {
                return Err(Error::Checkpoint(format!(
                    "tensor `{b}` {:?} does not match expected `{a}` {:?}",
                    tb.shape, ta.shape
                )));
            }
        }
        Ok(())
    }
}

/// A [`ParamSet`] placed on a tape.
#[derive(Clone, Debug)]
pub struct Bound {
    names: Vec<String>,
    pub vars: Vec<Var>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.vars[i])
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))
    }
}

/// Uniform He-style initialization: U(−√(6/fan_in), √(6/fan_in)).
pub fn kaiming_uniform<T: Scalar>(rng: &mut impl Rng, shape: &[usize], fan_in: usize) -> Tensor<T> {
    let bound = (6.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    Tensor {
        shape: shape.to_vec(),
        data: (0..n)
            .map(|_| T::from_f64_lossy(rng.random_range(-bound..bound)))
            .collect(),
    }
}
