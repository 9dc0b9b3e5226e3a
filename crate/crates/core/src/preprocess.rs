//! Normalization of global 3D joint data into the canonical 15-joint frame:
//! joint-space reduction, uniform scaling to a 2 m tall body, torso centering
//! and camera-facing rotation.

use crate::error::{Error, Result};
use crate::skeleton::{JointId, Point3, SkeletonFrame, SkeletonSequence, NUM_JOINTS};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;

/// Target body height in normalized units (metres).
pub const TARGET_HEIGHT: f64 = 2.0;

/// Scale factors within this distance of 1 and angles within this many
/// radians of 0 are treated as exact identities by [`normalize_sequence`],
/// so re-normalizing data that went through 32-bit storage is a no-op.
pub const IDENTITY_SNAP: f64 = 1e-6;

/// How each canonical joint is produced from source joints: the mean of one
/// or more named source positions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointMapping {
    pub entries: Vec<(String, Vec<String>)>,
}

impl JointMapping {
    /// Every canonical joint mapped from the source joint of the same name.
    pub fn identity() -> JointMapping {
        JointMapping {
            entries: JointId::ALL
                .iter()
                .map(|j| (j.name().to_string(), vec![j.name().to_string()]))
                .collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<JointMapping> {
        let mapping: JointMapping = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("joint mapping: {e}")))?;
        mapping.check()?;
        Ok(mapping)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<JointMapping> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Every canonical joint produced exactly once, each from ≥ 1 sources.
    pub fn check(&self) -> Result<()> {
        let mut seen = [false; NUM_JOINTS];
        for (target, sources) in &self.entries {
            let id = JointId::from_name(target)
                .ok_or_else(|| Error::Config(format!("unknown target joint `{target}`")))?;
            if std::mem::replace(&mut seen[id.index()], true) {
                return Err(Error::Config(format!("target joint `{id}` mapped twice")));
            }
            if sources.is_empty() {
                return Err(Error::Config(format!("target joint `{id}` has no sources")));
            }
        }
        if let Some(missing) = JointId::ALL.iter().find(|j| !seen[j.index()]) {
            return Err(Error::Config(format!(
                "mapping does not produce target joint `{missing}`"
            )));
        }
        Ok(())
    }

    /// Resolves source names against a source skeleton's joint list.
    pub fn resolve(&self, source_names: &[String]) -> Result<ResolvedMapping> {
        self.check()?;
        let index: HashMap<&str, usize> = source_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let mut sources: [Vec<usize>; NUM_JOINTS] = Default::default();
        for (target, names) in &self.entries {
            let id = JointId::from_name(target).expect("checked");
            for name in names {
                let i = index.get(name.as_str()).ok_or_else(|| Error::MissingJoint {
                    joint: name.clone(),
                })?;
                sources[id.index()].push(*i);
            }
        }
        Ok(ResolvedMapping { sources })
    }
}

/// A [`JointMapping`] bound to source joint indices.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedMapping {
    sources: [Vec<usize>; NUM_JOINTS],
}

impl ResolvedMapping {
    pub fn apply(&self, positions: &[Point3]) -> Result<SkeletonFrame> {
        let mut frame = SkeletonFrame::zeros();
        for (out, srcs) in frame.joints.iter_mut().zip(&self.sources) {
            let mut acc = [0.0; 3];
            for &s in srcs {
                let p = positions.get(s).ok_or_else(|| Error::MissingJoint {
                    joint: format!("#{s}"),
                })?;
                for a in 0..3 {
                    acc[a] += p[a];
                }
            }
            let n = srcs.len() as f64;
            *out = [acc[0] / n, acc[1] / n, acc[2] / n];
        }
        Ok(frame)
    }
}

/// Global 3D joint data in some source layout, prior to normalization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawSequence {
    pub joint_names: Vec<String>,
    pub frames: Vec<Vec<Point3>>,
    pub fps: f64,
    #[serde(default)]
    pub subject_id: Option<i32>,
    #[serde(default)]
    pub label: Option<u32>,
}

impl RawSequence {
    /// A canonical sequence viewed as raw data with canonical joint names.
    pub fn from_canonical(seq: &SkeletonSequence) -> RawSequence {
        RawSequence {
            joint_names: JointId::ALL.iter().map(|j| j.name().to_string()).collect(),
            frames: seq.frames.iter().map(|f| f.joints.to_vec()).collect(),
            fps: seq.fps,
            subject_id: seq.subject_id,
            label: seq.label,
        }
    }
}

/// Maps one frame of named source joints down to the canonical 15.
pub fn map_joints(
    names: &[String],
    positions: &[Point3],
    mapping: &JointMapping,
) -> Result<SkeletonFrame> {
    mapping.resolve(names)?.apply(positions)
}

/// Scales every coordinate by one factor so the tallest frame spans exactly
/// 2 units along z.
pub fn scale_to_height(seq: &SkeletonSequence) -> Result<(SkeletonSequence, f64)> {
    let extent = seq
        .frames
        .iter()
        .map(|f| {
            let (lo, hi) = f.z_range();
            hi - lo
        })
        .fold(0.0f64, f64::max);
    if !(extent > 0.0) || !extent.is_finite() {
        return Err(Error::DegenerateInput(
            "every frame has zero z-extent".into(),
        ));
    }
    let s = TARGET_HEIGHT / extent;
    Ok((scale_sequence(seq, s), s))
}

fn scale_sequence(seq: &SkeletonSequence, s: f64) -> SkeletonSequence {
    seq.with_frames(
        seq.frames
            .iter()
            .map(|f| f.map_points(|p| [p[0] * s, p[1] * s, p[2] * s]))
            .collect(),
    )
}

/// Translates the frame so the torso sits at the origin. Dropped frames are
/// returned unchanged.
pub fn center_torso(frame: &SkeletonFrame) -> SkeletonFrame {
    if frame.is_dropped() {
        return *frame;
    }
    let t = frame.joint(JointId::Torso);
    let mut out = frame.map_points(|p| [p[0] - t[0], p[1] - t[1], p[2] - t[2]]);
    *out.joint_mut(JointId::Torso) = [0.0; 3];
    out
}

pub fn rotate_z(angle: f64, p: Point3) -> Point3 {
    let (s, c) = angle.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]]
}

pub fn rotate_x(angle: f64, p: Point3) -> Point3 {
    let (s, c) = angle.sin_cos();
    [p[0], c * p[1] - s * p[2], s * p[1] + c * p[2]]
}

pub fn rotate_y(angle: f64, p: Point3) -> Point3 {
    let (s, c) = angle.sin_cos();
    [c * p[0] + s * p[2], p[1], -s * p[0] + c * p[2]]
}

/// Wraps an angle into (−π, π].
fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

fn cross(a: Point3, b: Point3) -> Point3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn yaw_pitch(frame: &SkeletonFrame, yaw: f64, pitch: f64) -> SkeletonFrame {
    match (yaw == 0.0, pitch == 0.0) {
        (true, true) => *frame,
        (false, true) => frame.map_points(|p| rotate_z(yaw, p)),
        (true, false) => frame.map_points(|p| rotate_x(pitch, p)),
        (false, false) => frame.map_points(|p| rotate_x(pitch, rotate_z(yaw, p))),
    }
}

fn face_camera_snapped(frame: &SkeletonFrame, snap: f64) -> Result<(SkeletonFrame, f64, f64)> {
    if frame.is_dropped() {
        return Ok((*frame, 0.0, 0.0));
    }
    let sub = |a: Point3, b: Point3| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    let norm = |v: Point3| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let hips = sub(frame.joint(JointId::LeftHip), frame.joint(JointId::RightHip));
    let up = sub(frame.joint(JointId::Neck), frame.joint(JointId::Torso));
    let degenerate = |reason: &str| Error::DegeneratePose {
        frame: None,
        reason: reason.into(),
    };
    if norm(hips) < 1e-12 {
        return Err(degenerate("left and right hip coincide"));
    }
    if norm(up) < 1e-12 {
        return Err(degenerate("neck and torso coincide"));
    }
    // The body normal hips × up must end on −y, which puts both vectors in
    // the x-z plane. Two rotations Rx·Rz do that; they differ by a half turn
    // about y, and the one leaving the hips on +x wins.
    let normal = cross(hips, up);
    let len = norm(normal);
    if len < 1e-12 * norm(hips) * norm(up) {
        return Err(degenerate("hip and torso-neck vectors are parallel"));
    }
    let rho = normal[0].hypot(normal[1]);
    let phi = normal[1].atan2(normal[0]);
    let candidate = |flip: bool| {
        let yaw = wrap_angle(-PI / 2.0 - phi + if flip { PI } else { 0.0 });
        let y = if flip { rho } else { -rho };
        let pitch = wrap_angle(PI - normal[2].atan2(y));
        (yaw, pitch)
    };
    let (mut yaw, mut pitch) = candidate(false);
    let hips_x = rotate_x(pitch, rotate_z(yaw, hips))[0];
    let up_z = rotate_x(pitch, rotate_z(yaw, up))[2];
    if hips_x < 0.0 || (hips_x == 0.0 && up_z < 0.0) {
        (yaw, pitch) = candidate(true);
    }
    if yaw.abs() <= snap {
        yaw = 0.0;
    }
    if pitch.abs() <= snap {
        pitch = 0.0;
    }
    Ok((yaw_pitch(frame, yaw, pitch), yaw, pitch))
}

/// Rotates about z by `yaw`, then about x by `pitch`, with the unique such
/// pair that brings the right→left hip vector into the x-z plane pointing
/// along +x and the torso→neck vector into the x-z plane. For an upright
/// body the neck lands above the torso. Returns the applied yaw and pitch.
///
/// Aligning the hips with a yaw and then the spine with a pitch would tilt
/// the hips back out of the x-z plane whenever they are not level, so a
/// second pass would rotate again; solving for both angles at once makes
/// the step idempotent.
pub fn face_camera(frame: &SkeletonFrame) -> Result<(SkeletonFrame, f64, f64)> {
    face_camera_snapped(frame, 0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationReport {
    pub scale_factor: f64,
    pub yaw: Vec<f64>,
    pub pitch: Vec<f64>,
}

/// Full pipeline on raw data: joint mapping, uniform height scaling, torso
/// centering and camera-facing rotation. The frame rate is passed through.
///
/// Uniform scaling about the origin commutes with centering and with
/// rotations about the origin, so the rigid steps run first and the scale
/// factor is measured on the oriented body. The result equals
/// scale → center → rotate, and the pipeline is idempotent.
pub fn normalize_sequence(
    raw: &RawSequence,
    mapping: &JointMapping,
) -> Result<(SkeletonSequence, NormalizationReport)> {
    let resolved = mapping.resolve(&raw.joint_names)?;
    let mut frames = Vec::with_capacity(raw.frames.len());
    let mut yaw = Vec::with_capacity(raw.frames.len());
    let mut pitch = Vec::with_capacity(raw.frames.len());
    for (i, positions) in raw.frames.iter().enumerate() {
        let mapped = resolved.apply(positions)?;
        let (f, y, p) =
            face_camera_snapped(&center_torso(&mapped), IDENTITY_SNAP).map_err(|e| e.at_frame(i))?;
        frames.push(f);
        yaw.push(y);
        pitch.push(p);
    }
    let oriented = SkeletonSequence {
        frames,
        fps: raw.fps,
        subject_id: raw.subject_id,
        label: raw.label,
    };
    let (mut seq, mut s) = scale_to_height(&oriented)?;
    if (s - 1.0).abs() <= IDENTITY_SNAP {
        seq = oriented;
        s = 1.0;
    }
    // Rotating exact zeros can yield −0.0, which re-centering turns back
    // into +0.0; one sign for zero keeps reruns byte-identical.
    for f in &mut seq.frames {
        f.joints.iter_mut().flatten().for_each(|v| *v += 0.0);
    }
    Ok((
        seq,
        NormalizationReport {
            scale_factor: s,
            yaw,
            pitch,
        },
    ))
}

/// [`normalize_sequence`] for data already in the canonical joint layout.
pub fn normalize_canonical(seq: &SkeletonSequence) -> Result<(SkeletonSequence, NormalizationReport)> {
    normalize_sequence(&RawSequence::from_canonical(seq), &JointMapping::identity())
}

/// Linearly resamples a sequence to `fps`; frame `k` of the output sits at
/// time `k / fps`. Dropped frames interpolate like any other.
pub fn resample_fps(seq: &SkeletonSequence, fps: f64) -> Result<SkeletonSequence> {
    if !(fps > 0.0 && fps.is_finite()) || !(seq.fps > 0.0) {
        return Err(Error::Config(format!("cannot resample {} fps to {fps} fps", seq.fps)));
    }
    if seq.frames.is_empty() || fps == seq.fps {
        return Ok(SkeletonSequence { fps, ..seq.clone() });
    }
    let last = (seq.frames.len() - 1) as f64;
    let ratio = seq.fps / fps;
    let count = (last / ratio + 1e-9).floor() as usize + 1;
    let frames = (0..count)
        .map(|k| {
            let t = (k as f64 * ratio).min(last);
            let lo = t.floor() as usize;
            let hi = (lo + 1).min(seq.frames.len() - 1);
            let w = t - lo as f64;
            let (a, b) = (&seq.frames[lo], &seq.frames[hi]);
            let mut f = *a;
            for (p, q) in f.joints.iter_mut().zip(&b.joints) {
                for c in 0..3 {
                    p[c] += w * (q[c] - p[c]);
                }
            }
            f
        })
        .collect();
    Ok(SkeletonSequence {
        frames,
        fps,
        ..seq.clone()
    })
}
