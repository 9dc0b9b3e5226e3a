//! Procedural labeled motion corpus.
//!
//! Each class is a parametric motion family driven by joint angles on a
//! simple forward-kinematic body. Sequences come out in global 3D
//! coordinates (z up, arbitrary heading and position), ready for
//! [`crate::preprocess`].
//!
//! Per-sequence nuisance (body proportions, heading, tempo, amplitude,
//! idle fidgeting, which arm leads) scales with `variability`; sensor noise
//! is a separate Gaussian term. With both at zero, sequences of one class
//! differ only in phase.

use crate::error::{Error, Result};
use crate::skeleton::{JointId, Point3, SkeletonFrame, SkeletonSequence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

/// Reference standing height in metres at scale 1.
pub const REFERENCE_HEIGHT: f64 = 1.75;

/// Number of distinct motion families; classes beyond this reuse a family
/// at a faster tempo.
pub const NUM_FAMILIES: usize = 5;

const FAMILY_NAMES: [&str; NUM_FAMILIES] = ["gait", "arm-wave", "squat", "jumping-jack", "punch"];
const SUBJECTS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub sequences_per_class: usize,
    pub frames: usize,
    pub fps: f64,
    /// Standard deviation of additive per-coordinate noise, metres.
    pub noise: f64,
    /// 0 = identical bodies and tempo; 1 = full nuisance range.
    pub variability: f64,
    /// Base oscillation frequency of every family, Hz.
    pub frequency: f64,
    /// Multiplier on every family's joint-angle amplitudes.
    pub amplitude: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            classes: 3,
            sequences_per_class: 100,
            frames: 120,
            fps: 30.0,
            noise: 0.12,
            variability: 1.0,
            frequency: 1.0,
            amplitude: 1.0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.fps, self.frequency, self.amplitude];
        if self.classes < 2 {
            return Err(Error::Config("synthetic corpus needs at least 2 classes".into()));
        }
        if self.sequences_per_class == 0 || self.frames == 0 {
            return Err(Error::Config("sequences per class and frames must be positive".into()));
        }
        if positive.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::Config("fps, frequency and amplitude must be positive".into()));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::Config("noise must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.variability) {
            return Err(Error::Config("variability must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Class names in label order.
    pub fn class_names(&self) -> Vec<String> {
        (0..self.classes)
            .map(|c| {
                let base = FAMILY_NAMES[c % NUM_FAMILIES];
                match c / NUM_FAMILIES {
                    0 => base.to_string(),
                    k => format!("{base}-x{}", k + 1),
                }
            })
            .collect()
    }
}

/// Segment lengths in metres.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Body {
    pub ankle_height: f64,
    pub shin: f64,
    pub thigh: f64,
    pub hip_half_width: f64,
    pub torso_center: f64,
    pub spine: f64,
    pub head: f64,
    pub shoulder_half_width: f64,
    pub upper_arm: f64,
    pub forearm: f64,
}

impl Body {
    pub fn with_height(height: f64) -> Body {
        Body {
            ankle_height: 0.04 * height,
            shin: 0.246 * height,
            thigh: 0.245 * height,
            hip_half_width: 0.055 * height,
            torso_center: 0.12 * height,
            spine: 0.29 * height,
            head: 0.1 * height,
            shoulder_half_width: 0.13 * height,
            upper_arm: 0.186 * height,
            forearm: 0.146 * height,
        }
    }

    fn jittered(height: f64, v: f64, rng: &mut impl Rng) -> Body {
        let mut b = Body::with_height(height);
        let mut j = |x: &mut f64| *x *= 1.0 + 0.08 * v * rng.random_range(-1.0..=1.0);
        j(&mut b.shin);
        j(&mut b.thigh);
        j(&mut b.hip_half_width);
        j(&mut b.torso_center);
        j(&mut b.spine);
        j(&mut b.head);
        j(&mut b.shoulder_half_width);
        j(&mut b.upper_arm);
        j(&mut b.forearm);
        b
    }
}

/// Joint angles in radians; index 0 is the right side, 1 the left.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Pose {
    pub hip_flex: [f64; 2],
    pub hip_abduct: [f64; 2],
    pub knee: [f64; 2],
    pub shoulder_flex: [f64; 2],
    pub shoulder_abduct: [f64; 2],
    pub elbow: [f64; 2],
    /// Forward trunk lean.
    pub lean: f64,
}

const REST_ABDUCTION: f64 = 0.1;
const SIDE: [f64; 2] = [-1.0, 1.0];

fn add(a: Point3, b: Point3) -> Point3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn along(a: Point3, d: Point3, len: f64) -> Point3 {
    [a[0] + d[0] * len, a[1] + d[1] * len, a[2] + d[2] * len]
}

/// Unit limb direction hanging down, swung forward by `flex` and out to
/// `side` by `abduct`.
fn limb_dir(flex: f64, abduct: f64, side: f64) -> Point3 {
    [side * abduct.sin(), flex.sin() * abduct.cos(), -flex.cos() * abduct.cos()]
}

/// Forward kinematics in the body frame: x towards the left hip, y forward,
/// z up, ankles resting at `ankle_height` when the legs are straight.
pub fn pose_frame(body: &Body, pose: &Pose) -> SkeletonFrame {
    let leg = |s: usize| {
        let thigh = limb_dir(pose.hip_flex[s], pose.hip_abduct[s], SIDE[s]);
        let shin = limb_dir(pose.hip_flex[s] - pose.knee[s], pose.hip_abduct[s], SIDE[s]);
        (thigh, shin)
    };
    let legs = [leg(0), leg(1)];
    let reach = |s: usize| -(legs[s].0[2] * body.thigh + legs[s].1[2] * body.shin);
    let pelvis_z = body.ankle_height + reach(0).max(reach(1));
    let pelvis = [0.0, 0.0, pelvis_z];
    let trunk = [0.0, pose.lean.sin(), pose.lean.cos()];

    let mut f = SkeletonFrame::zeros();
    let torso = along(pelvis, trunk, body.torso_center);
    let neck = along(pelvis, trunk, body.spine);
    *f.joint_mut(JointId::Torso) = torso;
    *f.joint_mut(JointId::Neck) = neck;
    *f.joint_mut(JointId::Head) = along(neck, trunk, body.head);

    let hips = [JointId::RightHip, JointId::LeftHip];
    let knees = [JointId::RightKnee, JointId::LeftKnee];
    let ankles = [JointId::RightAnkle, JointId::LeftAnkle];
    let shoulders = [JointId::RightShoulder, JointId::LeftShoulder];
    let elbows = [JointId::RightElbow, JointId::LeftElbow];
    let wrists = [JointId::RightWrist, JointId::LeftWrist];
    for s in 0..2 {
        let hip = add(pelvis, [SIDE[s] * body.hip_half_width, 0.0, 0.0]);
        let knee = along(hip, legs[s].0, body.thigh);
        *f.joint_mut(hips[s]) = hip;
        *f.joint_mut(knees[s]) = knee;
        *f.joint_mut(ankles[s]) = along(knee, legs[s].1, body.shin);

        let shoulder = add(neck, [SIDE[s] * body.shoulder_half_width, 0.0, 0.0]);
        let abduct = REST_ABDUCTION + pose.shoulder_abduct[s];
        let upper = limb_dir(pose.shoulder_flex[s] + pose.lean, abduct, SIDE[s]);
        let fore = limb_dir(pose.shoulder_flex[s] + pose.lean + pose.elbow[s], abduct, SIDE[s]);
        let elbow = along(shoulder, upper, body.upper_arm);
        *f.joint_mut(shoulders[s]) = shoulder;
        *f.joint_mut(elbows[s]) = elbow;
        *f.joint_mut(wrists[s]) = along(elbow, fore, body.forearm);
    }
    f
}

/// Upright rest pose with the torso at the origin, hips on the x axis and
/// the spine along +z.
pub fn standing_pose(scale: f64) -> SkeletonFrame {
    let f = pose_frame(&Body::with_height(REFERENCE_HEIGHT * scale), &Pose::default());
    let t = f.joint(JointId::Torso);
    f.map_points(|p| [p[0] - t[0], p[1] - t[1], p[2] - t[2]])
}

/// Every random choice behind one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionInstance {
    pub class: usize,
    pub subject: usize,
    pub phase: f64,
    pub body: Body,
    pub frequency: f64,
    pub amplitude: f64,
    /// Which side leads one-sided motions (0 right, 1 left).
    pub lead: usize,
    pub heading: f64,
    pub offset: [f64; 2],
    /// (amplitude, frequency, phase) of a small idle oscillation added to
    /// each of the 13 angle channels.
    pub fidget: Vec<(f64, f64, f64)>,
}

const ANGLE_CHANNELS: usize = 13;

fn rise(x: f64) -> f64 {
    0.5 * (1.0 - x.cos())
}

impl MotionInstance {
    pub fn pose_at(&self, t: f64) -> Pose {
        let a = self.amplitude;
        let x = TAU * self.frequency * t + self.phase;
        let s = x.sin();
        let l = self.lead;
        let o = 1 - l;
        let mut p = Pose::default();
        match self.class % NUM_FAMILIES {
            0 => {
                p.hip_flex = [0.45 * a * s, -0.45 * a * s];
                p.knee = [0.6 * a * (x + 0.5 * PI).sin().max(0.0), 0.6 * a * (x - 0.5 * PI).sin().max(0.0)];
                p.shoulder_flex = [-0.4 * a * s, 0.4 * a * s];
                p.elbow = [0.3, 0.3];
                p.lean = 0.05;
            }
            1 => {
                p.shoulder_abduct[l] = 2.3 + 0.35 * a * s;
                p.elbow[l] = 0.5 + 0.4 * a * (2.0 * x).sin();
            }
            2 => {
                let u = rise(x);
                p.hip_flex = [1.1 * a * u; 2];
                p.knee = [2.2 * a * u; 2];
                p.lean = 0.4 * a * u;
                p.shoulder_flex = [1.2 * u; 2];
            }
            3 => {
                let u = rise(x);
                p.shoulder_abduct = [2.6 * a * u; 2];
                p.hip_abduct = [0.3 * a * u; 2];
            }
            _ => {
                let ext = [s.max(0.0), (-s).max(0.0)];
                for (side, e) in [(l, ext[0]), (o, ext[1])] {
                    p.shoulder_flex[side] = 0.3 + 1.2 * a * e;
                    p.elbow[side] = 1.8 * (1.0 - e);
                }
                p.knee = [0.2; 2];
                p.hip_flex = [0.1; 2];
            }
        }
        let channels: [&mut f64; ANGLE_CHANNELS] = {
            let Pose {
                hip_flex: [h0, h1],
                hip_abduct: [b0, b1],
                knee: [k0, k1],
                shoulder_flex: [s0, s1],
                shoulder_abduct: [a0, a1],
                elbow: [e0, e1],
                lean,
            } = &mut p;
            [h0, h1, b0, b1, k0, k1, s0, s1, a0, a1, e0, e1, lean]
        };
        for (c, &(amp, freq, ph)) in channels.into_iter().zip(&self.fidget) {
            *c += amp * (TAU * freq * t + ph).sin();
        }
        p.knee = p.knee.map(|k| k.max(0.0));
        p.elbow = p.elbow.map(|e| e.max(0.0));
        p
    }

    /// Global-coordinate frame at time `t` seconds.
    pub fn frame_at(&self, t: f64) -> SkeletonFrame {
        let local = pose_frame(&self.body, &self.pose_at(t));
        let (sin, cos) = self.heading.sin_cos();
        local.map_points(|p| {
            [
                cos * p[0] - sin * p[1] + self.offset[0],
                sin * p[0] + cos * p[1] + self.offset[1],
                p[2],
            ]
        })
    }
}

fn subject_body(spec: &SyntheticSpec, subject: usize, seed: u64) -> Body {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 << 32 | subject as u64);
    let v = spec.variability;
    let height = REFERENCE_HEIGHT * (1.0 + 0.1 * v * rng.random_range(-1.0..=1.0));
    Body::jittered(height, v, &mut rng)
}

/// Draws the nuisance parameters of sequence `index` (class-major order).
pub fn sample_instance(spec: &SyntheticSpec, index: usize, seed: u64) -> MotionInstance {
    let class = index / spec.sequences_per_class;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let v = spec.variability;
    let sym = |rng: &mut ChaCha8Rng, w: f64| 1.0 + w * v * rng.random_range(-1.0..=1.0);
    let phase = rng.random_range(0.0..TAU);
    let subject = rng.random_range(0..SUBJECTS);
    let tempo = 1.0 + 0.5 * (class / NUM_FAMILIES) as f64;
    let frequency = spec.frequency * tempo * sym(&mut rng, 0.3);
    let amplitude = spec.amplitude * sym(&mut rng, 0.3);
    let lead = if v > 0.0 { rng.random_range(0..2) } else { 0 };
    let heading = v * rng.random_range(0.0..TAU);
    let offset = [v * rng.random_range(-2.0..=2.0), v * rng.random_range(-2.0..=2.0)];
    let fidget = (0..ANGLE_CHANNELS)
        .map(|_| {
            (
                0.2 * v * rng.random::<f64>(),
                rng.random_range(0.2..1.5),
                rng.random_range(0.0..TAU),
            )
        })
        .collect();
    MotionInstance {
        class,
        subject,
        phase,
        body: subject_body(spec, subject, seed),
        frequency,
        amplitude,
        lead,
        heading,
        offset,
        fidget,
    }
}

/// Renders one sequence, adding sensor noise from the same stream family.
pub fn render(spec: &SyntheticSpec, inst: &MotionInstance, index: usize, seed: u64) -> SkeletonSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 << 32 | index as u64);
    let noise = Normal::new(0.0, spec.noise).expect("noise validated");
    let frames = (0..spec.frames)
        .map(|k| {
            let f = inst.frame_at(k as f64 / spec.fps);
            if spec.noise == 0.0 {
                f
            } else {
                f.map_points(|p| p.map(|c| c + noise.sample(&mut rng)))
            }
        })
        .collect();
    SkeletonSequence::new(frames, spec.fps)
        .with_label(Some(inst.class as u32))
        .with_subject(Some(inst.subject as i32))
}

/// Generates `classes × sequences_per_class` labeled sequences in
/// class-major order. Deterministic per seed.
pub fn synth_generate(spec: &SyntheticSpec, seed: u64) -> Result<Vec<SkeletonSequence>> {
    spec.validate()?;
    Ok((0..spec.classes * spec.sequences_per_class)
        .map(|i| render(spec, &sample_instance(spec, i, seed), i, seed))
        .collect())
}
