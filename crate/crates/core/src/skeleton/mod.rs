//! Canonical 15-joint skeleton types, the joint graph and sequence windowing.

mod graph;
pub mod io;

pub use graph::{build_adjacency, SkeletonGraph, EDGES};

use serde::{Deserialize, Serialize};
use std::fmt;

/// Number of joints in the canonical skeleton.
pub const NUM_JOINTS: usize = 15;
/// Coordinates per joint.
pub const NUM_COORDS: usize = 3;
/// Frames per encoder window.
pub const WINDOW_LEN: usize = 50;
/// Scalars in one flattened window (50 × 15 × 3).
pub const WINDOW_SIZE: usize = WINDOW_LEN * NUM_JOINTS * NUM_COORDS;

/// One of the 15 canonical joints, in canonical order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum JointId {
    Head = 0,
    Neck,
    RightShoulder,
    RightElbow,
    RightWrist,
    LeftShoulder,
    LeftElbow,
    LeftWrist,
    RightHip,
    RightKnee,
    RightAnkle,
    LeftHip,
    LeftKnee,
    LeftAnkle,
    Torso,
}

impl JointId {
    pub const ALL: [JointId; NUM_JOINTS] = [
        JointId::Head,
        JointId::Neck,
        JointId::RightShoulder,
        JointId::RightElbow,
        JointId::RightWrist,
        JointId::LeftShoulder,
        JointId::LeftElbow,
        JointId::LeftWrist,
        JointId::RightHip,
        JointId::RightKnee,
        JointId::RightAnkle,
        JointId::LeftHip,
        JointId::LeftKnee,
        JointId::LeftAnkle,
        JointId::Torso,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<JointId> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            JointId::Head => "head",
            JointId::Neck => "neck",
            JointId::RightShoulder => "right_shoulder",
            JointId::RightElbow => "right_elbow",
            JointId::RightWrist => "right_wrist",
            JointId::LeftShoulder => "left_shoulder",
            JointId::LeftElbow => "left_elbow",
            JointId::LeftWrist => "left_wrist",
            JointId::RightHip => "right_hip",
            JointId::RightKnee => "right_knee",
            JointId::RightAnkle => "right_ankle",
            JointId::LeftHip => "left_hip",
            JointId::LeftKnee => "left_knee",
            JointId::LeftAnkle => "left_ankle",
            JointId::Torso => "torso",
        }
    }

    /// Parses a joint name; spaces, hyphens and case are ignored
    /// ("Right Shoulder", "right-shoulder" and "right_shoulder" all match).
    pub fn from_name(name: &str) -> Option<JointId> {
        let key: String = name
            .trim()
            .chars()
            .map(|c| match c {
                ' ' | '-' => '_',
                c => c.to_ascii_lowercase(),
            })
            .collect();
        Self::ALL.iter().copied().find(|j| j.name() == key)
    }
}

impl fmt::Display for JointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub type Point3 = [f64; NUM_COORDS];

/// One frame: 15 joints × (x, y, z). A frame with every coordinate exactly
/// zero is the "dropped" sentinel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SkeletonFrame {
    pub joints: [Point3; NUM_JOINTS],
}

impl Default for SkeletonFrame {
    fn default() -> Self {
        Self::zeros()
    }
}

impl SkeletonFrame {
    pub const fn zeros() -> Self {
        SkeletonFrame {
            joints: [[0.0; NUM_COORDS]; NUM_JOINTS],
        }
    }

    pub fn new(joints: [Point3; NUM_JOINTS]) -> Self {
        SkeletonFrame { joints }
    }

    pub fn joint(&self, id: JointId) -> Point3 {
        self.joints[id.index()]
    }

    pub fn joint_mut(&mut self, id: JointId) -> &mut Point3 {
        &mut self.joints[id.index()]
    }

    pub fn is_dropped(&self) -> bool {
        self.joints.iter().flatten().all(|&v| v == 0.0)
    }

    /// Applies `f` to every joint position.
    pub fn map_points(&self, mut f: impl FnMut(Point3) -> Point3) -> SkeletonFrame {
        let mut out = *self;
        for p in out.joints.iter_mut() {
            *p = f(*p);
        }
        out
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let (p, q) = (self.joints[a], self.joints[b]);
        ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
    }

    /// (min z, max z) over all joints.
    pub fn z_range(&self) -> (f64, f64) {
        self.joints
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p[2]), hi.max(p[2]))
            })
    }
}

/// An ordered run of frames with capture metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkeletonSequence {
    pub frames: Vec<SkeletonFrame>,
    pub fps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject_id: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u32>,
}

impl SkeletonSequence {
    pub fn new(frames: Vec<SkeletonFrame>, fps: f64) -> Self {
        SkeletonSequence {
            frames,
            fps,
            subject_id: None,
            label: None,
        }
    }

    pub fn with_label(mut self, label: Option<u32>) -> Self {
        self.label = label;
        self
    }

    pub fn with_subject(mut self, subject_id: Option<i32>) -> Self {
        self.subject_id = subject_id;
        self
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Copy of this sequence's metadata around a different frame list.
    pub fn with_frames(&self, frames: Vec<SkeletonFrame>) -> SkeletonSequence {
        SkeletonSequence {
            frames,
            fps: self.fps,
            subject_id: self.subject_id,
            label: self.label,
        }
    }

    /// Row-major (frame, joint, coord) copy as 32-bit floats.
    pub fn to_f32(&self) -> Vec<f32> {
        flatten_frames(&self.frames)
    }
}

pub fn flatten_frames(frames: &[SkeletonFrame]) -> Vec<f32> {
    frames
        .iter()
        .flat_map(|f| f.joints.iter().flatten().map(|&v| v as f32))
        .collect()
}

/// A single failed invariant reported by [`validate_sequence`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    EmptyFrames,
    NonPositiveFps(f64),
    NonFinite {
        frame: usize,
        joint: JointId,
        axis: usize,
    },
    LabelOutOfRange {
        label: u32,
        classes: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyFrames => write!(f, "sequence has no frames"),
            Violation::NonPositiveFps(fps) => write!(f, "fps must be positive (got {fps})"),
            Violation::NonFinite { frame, joint, axis } => write!(
                f,
                "non-finite {} coordinate at frame {frame}, joint {joint}",
                ["x", "y", "z"][*axis]
            ),
            Violation::LabelOutOfRange { label, classes } => {
                write!(f, "label {label} outside label set of {classes} classes")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every sequence invariant and lists what is wrong. Never fails.
///
/// `classes` is the size of the attached label set, when there is one.
pub fn validate_sequence(seq: &SkeletonSequence, classes: Option<usize>) -> ValidationReport {
    let mut violations = Vec::new();
    if seq.frames.is_empty() {
        violations.push(Violation::EmptyFrames);
    }
    if !(seq.fps > 0.0) {
        violations.push(Violation::NonPositiveFps(seq.fps));
    }
    for (fi, frame) in seq.frames.iter().enumerate() {
        for (ji, p) in frame.joints.iter().enumerate() {
            for (axis, v) in p.iter().enumerate() {
                if !v.is_finite() {
                    violations.push(Violation::NonFinite {
                        frame: fi,
                        joint: JointId::ALL[ji],
                        axis,
                    });
                }
            }
        }
    }
    if let (Some(label), Some(classes)) = (seq.label, classes) {
        if label as usize >= classes {
            violations.push(Violation::LabelOutOfRange { label, classes });
        }
    }
    ValidationReport { violations }
}

/// Start frames of the windows [`window`] produces.
pub fn window_starts(len: usize, length: usize, stride: usize) -> Vec<usize> {
    assert!(length >= 1 && stride >= 1, "window length and stride must be >= 1");
    if len < length {
        return Vec::new();
    }
    (0..=(len - length) / stride).map(|k| k * stride).collect()
}

/// Cuts `seq` into windows of exactly `length` frames every `stride` frames.
pub fn window(seq: &SkeletonSequence, length: usize, stride: usize) -> Vec<SkeletonSequence> {
    window_starts(seq.len(), length, stride)
        .into_iter()
        .map(|s| seq.with_frames(seq.frames[s..s + length].to_vec()))
        .collect()
}
