//! The eight view augmentations and the fixed-order stack that builds the
//! two contrastive views of a window.
//!
//! Every random op comes in two layers: a deterministic `*_with` function
//! taking the drawn parameters explicitly, and a sampling wrapper that draws
//! a trigger and the parameters from an RNG. Ops never change the view
//! length.

mod config;

pub use config::{
    AugmentationConfig, AugmentationKind, DropoutParams, MirrorParams, NoiseParams,
    RotationParams, SpeedParams, BUILTIN_PROFILES,
};

use crate::preprocess::{rotate_x, rotate_y, rotate_z};
use crate::skeleton::{SkeletonFrame, SkeletonSequence, NUM_COORDS, NUM_JOINTS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Identifies one augmentation draw: which epoch, which sample, which view.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub epoch: u32,
    pub sample: u32,
    pub view: u8,
}

impl StreamKey {
    pub fn new(epoch: usize, sample: usize, view: u8) -> Self {
        StreamKey {
            epoch: epoch as u32,
            sample: sample as u32,
            view,
        }
    }

    /// Injective packing into a ChaCha stream id (epoch < 2^24).
    fn stream_id(self) -> u64 {
        assert!(self.epoch < 1 << 24, "epoch index too large for stream key");
        ((self.epoch as u64) << 40) | ((self.sample as u64) << 8) | self.view as u64
    }
}

/// Counter-based random source: every (seed, key) pair maps to its own
/// ChaCha stream, so views can be generated in any order on any thread.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngStream {
    pub seed: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream { seed }
    }

    pub fn rng(&self, key: StreamKey) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(key.stream_id());
        rng
    }
}

fn fires(rng: &mut impl Rng, enabled: bool, probability: f64) -> bool {
    let draw: f64 = rng.random();
    enabled && draw < probability
}

/// Negates one coordinate axis (0 = x, 1 = y, 2 = z) everywhere.
pub fn mirror_axis(view: &[SkeletonFrame], axis: usize) -> Vec<SkeletonFrame> {
    view.iter()
        .map(|f| {
            f.map_points(|mut p| {
                p[axis] = -p[axis];
                p
            })
        })
        .collect()
}

pub fn axis_mirror(view: &[SkeletonFrame], p: &MirrorParams, rng: &mut impl Rng) -> Vec<SkeletonFrame> {
    if !fires(rng, p.enabled, p.probability) {
        return view.to_vec();
    }
    let axis = rng.random_range(0..NUM_COORDS);
    mirror_axis(view, axis)
}

/// Multiplies coordinate `a` of joint `j` by `factors[j][a]` in every frame.
pub fn scale_with(view: &[SkeletonFrame], factors: &[[f64; NUM_COORDS]; NUM_JOINTS]) -> Vec<SkeletonFrame> {
    view.iter()
        .map(|f| {
            let mut out = *f;
            for (p, s) in out.joints.iter_mut().zip(factors) {
                for a in 0..NUM_COORDS {
                    p[a] *= s[a];
                }
            }
            out
        })
        .collect()
}

fn normal(variance: f64) -> Normal<f64> {
    Normal::new(0.0, variance.sqrt()).expect("variance validated as finite and >= 0")
}

/// Draws one time-constant factor 1 + N(0, σ²) per (joint, axis).
pub fn draw_scale_factors(variance: f64, rng: &mut impl Rng) -> [[f64; NUM_COORDS]; NUM_JOINTS] {
    let dist = normal(variance);
    let mut factors = [[1.0; NUM_COORDS]; NUM_JOINTS];
    for f in factors.iter_mut().flatten() {
        *f = 1.0 + dist.sample(rng);
    }
    factors
}

pub fn random_scale(view: &[SkeletonFrame], p: &NoiseParams, rng: &mut impl Rng) -> Vec<SkeletonFrame> {
    if !fires(rng, p.enabled, p.probability) {
        return view.to_vec();
    }
    let factors = draw_scale_factors(p.variance, rng);
    scale_with(view, &factors)
}

/// Adds independent N(0, σ²) noise to every coordinate of every frame.
/// Dropped (all-zero) joints are perturbed too.
pub fn joint_jitter(view: &[SkeletonFrame], p: &NoiseParams, rng: &mut impl Rng) -> Vec<SkeletonFrame> {
    if !fires(rng, p.enabled, p.probability) {
        return view.to_vec();
    }
    let dist = normal(p.variance);
    view.iter()
        .map(|f| f.map_points(|q| [q[0] + dist.sample(rng), q[1] + dist.sample(rng), q[2] + dist.sample(rng)]))
        .collect()
}

fn lerp_frame(a: &SkeletonFrame, b: &SkeletonFrame, w: f64) -> SkeletonFrame {
    let mut out = *a;
    for (o, q) in out.joints.iter_mut().zip(&b.joints) {
        for k in 0..NUM_COORDS {
            o[k] += w * (q[k] - o[k]);
        }
    }
    out
}

/// Number of frames after stretching `len` frames by speed factor `r` < 1.
pub fn stretched_len(len: usize, r: f64) -> usize {
    (len as f64 / r).ceil() as usize
}

/// Resamples the view at times 0, r, 2r, … (linear interpolation, clamped
/// at the last frame) giving ⌈len/r⌉ frames, then keeps `len` frames from
/// `start`.
pub fn slow_down_with(view: &[SkeletonFrame], r: f64, start: usize) -> Vec<SkeletonFrame> {
    let len = view.len();
    if len == 0 {
        return Vec::new();
    }
    let total = stretched_len(len, r).max(len);
    assert!(start + len <= total, "slow-down window out of range");
    (start..start + len)
        .map(|i| {
            let t = (i as f64 * r).min((len - 1) as f64);
            let lo = t.floor() as usize;
            let hi = (lo + 1).min(len - 1);
            lerp_frame(&view[lo], &view[hi], t - lo as f64)
        })
        .collect()
}

pub fn slow_down(view: &[SkeletonFrame], p: &SpeedParams, rng: &mut impl Rng) -> Vec<SkeletonFrame> {
    if !fires(rng, p.enabled, p.probability) {
        return view.to_vec();
    }
    let r = rng.random_range(p.min_factor..=p.max_factor);
    let total = stretched_len(view.len(), r).max(view.len());
    let start = rng.random_range(0..=total - view.len());
    slow_down_with(view, r, start)
}

/// Frame indices kept when speeding up by `r`: round(k·r) while < len.
pub fn speed_up_indices(len: usize, r: f64) -> Vec<usize> {
    (0..)
        .map(|k| (k as f64 * r).round() as usize)
        .take_while(|&i| i < len)
        .collect()
}

/// Keeps frames at [`speed_up_indices`] and pads with zero frames.
pub fn speed_up_with(view: &[SkeletonFrame], r: f64) -> Vec<SkeletonFrame> {
    let mut out: Vec<SkeletonFrame> = speed_up_indices(view.len(), r)
        .into_iter()
        .map(|i| view[i])
        .collect();
    out.resize(view.len(), SkeletonFrame::zeros());
    out
}

pub fn speed_up(view: &[SkeletonFrame], p: &SpeedParams, rng: &mut impl Rng) -> Vec<SkeletonFrame> {
    if !fires(rng, p.enabled, p.probability) {
        return view.to_vec();
    }
    let r = rng.random_range(p.min_factor..=p.max_factor);
    speed_up_with(view, r)
}

/// Zeroes the frames whose mask entry is true.
pub fn drop_frames(view: &[SkeletonFrame], mask: &[bool]) -> Vec<SkeletonFrame> {
    view.iter()
        .zip(mask)
        .map(|(f, &drop)| if drop { SkeletonFrame::zeros() } else { *f })
        .collect()
}

pub fn frame_dropout(view: &[SkeletonFrame], p: &DropoutParams, rng: &mut impl Rng) -> Vec<SkeletonFrame> {
    if !fires(rng, p.enabled, p.probability) {
        return view.to_vec();
    }
    let mask: Vec<bool> = (0..view.len()).map(|_| rng.random_bool(p.rate)).collect();
    drop_frames(view, &mask)
}

/// Zeroes the selected joints in every frame.
pub fn drop_joints(view: &[SkeletonFrame], mask: &[bool; NUM_JOINTS]) -> Vec<SkeletonFrame> {
    view.iter()
        .map(|f| {
            let mut out = *f;
            for (p, &drop) in out.joints.iter_mut().zip(mask) {
                if drop {
                    *p = [0.0; NUM_COORDS];
                }
            }
            out
        })
        .collect()
}

pub fn joint_dropout(view: &[SkeletonFrame], p: &DropoutParams, rng: &mut impl Rng) -> Vec<SkeletonFrame> {
    if !fires(rng, p.enabled, p.probability) {
        return view.to_vec();
    }
    let mut mask = [false; NUM_JOINTS];
    mask.iter_mut().for_each(|m| *m = rng.random_bool(p.rate));
    drop_joints(view, &mask)
}

/// Applies Rz(θz)·Ry(θy)·Rx(θx) to every joint of every frame.
pub fn rotate_with(view: &[SkeletonFrame], angles: [f64; 3]) -> Vec<SkeletonFrame> {
    let [ax, ay, az] = angles;
    view.iter()
        .map(|f| f.map_points(|p| rotate_z(az, rotate_y(ay, rotate_x(ax, p)))))
        .collect()
}

pub fn random_rotation(view: &[SkeletonFrame], p: &RotationParams, rng: &mut impl Rng) -> Vec<SkeletonFrame> {
    if !fires(rng, p.enabled, p.probability) {
        return view.to_vec();
    }
    let b = p.max_angle;
    let mut draw = || if b > 0.0 { rng.random_range(-b..=b) } else { 0.0 };
    let angles = [draw(), draw(), draw()];
    rotate_with(view, angles)
}

/// Runs every augmentation in the fixed order, each gated by its own
/// trigger probability.
pub fn apply_stack(view: &[SkeletonFrame], cfg: &AugmentationConfig, rng: &mut impl Rng) -> Vec<SkeletonFrame> {
    let v = axis_mirror(view, &cfg.axis_mirror, rng);
    let v = random_scale(&v, &cfg.random_scale, rng);
    let v = joint_jitter(&v, &cfg.joint_jitter, rng);
    let v = slow_down(&v, &cfg.slow_down, rng);
    let v = speed_up(&v, &cfg.speed_up, rng);
    let v = frame_dropout(&v, &cfg.frame_dropout, rng);
    let v = joint_dropout(&v, &cfg.joint_dropout, rng);
    random_rotation(&v, &cfg.random_rotation, rng)
}

/// One augmented view of `window` drawn from the stream at `key`.
pub fn make_view(
    window: &[SkeletonFrame],
    cfg: &AugmentationConfig,
    stream: RngStream,
    key: StreamKey,
) -> Vec<SkeletonFrame> {
    apply_stack(window, cfg, &mut stream.rng(key))
}

/// The two contrastive views of one window (view keys 0 and 1).
pub fn make_views(
    window: &SkeletonSequence,
    cfg: &AugmentationConfig,
    stream: RngStream,
    epoch: usize,
    sample: usize,
) -> (Vec<SkeletonFrame>, Vec<SkeletonFrame>) {
    (
        make_view(&window.frames, cfg, stream, StreamKey::new(epoch, sample, 0)),
        make_view(&window.frames, cfg, stream, StreamKey::new(epoch, sample, 1)),
    )
}
