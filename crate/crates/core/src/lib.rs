//! Contrastive representation learning for 15-joint skeleton sequences.

pub mod augment;
pub mod contrastive;
pub mod downstream;
pub mod encoders;
pub mod error;
pub mod experiment;
pub mod nn;
pub mod preprocess;
pub mod skeleton;
pub mod synth;

pub use error::{Error, Result};
pub use skeleton::{JointId, SkeletonFrame, SkeletonGraph, SkeletonSequence};
