//! ST-GCN and MLP window encoders plus the projection head.
//!
//! Inputs are batches of windows laid out `[B, T, J, 3]` (frame-major, as
//! produced by [`crate::skeleton::flatten_frames`]). Both encoders map a
//! window to a 128-vector.

use crate::error::{Error, Result};
use crate::nn::{affine, checkpoint, kaiming_uniform, Bound, ParamSet, Scalar, Tape, Tensor, Var};
use crate::skeleton::{SkeletonGraph, NUM_COORDS, NUM_JOINTS, WINDOW_LEN, WINDOW_SIZE};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const FEATURE_DIM: usize = 128;

/// Encoder architecture, stored in checkpoint manifests.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "architecture", rename_all = "lowercase")]
pub enum EncoderPlan {
    Stgcn {
        /// Channel widths, input first: one block per consecutive pair.
        channels: Vec<usize>,
        /// Temporal stride per block.
        strides: Vec<usize>,
        kernel: usize,
        feature: usize,
    },
    Mlp {
        widths: Vec<usize>,
    },
}

impl EncoderPlan {
    pub fn stgcn() -> Self {
        EncoderPlan::Stgcn {
            channels: vec![NUM_COORDS, 32, 64, 128],
            strides: vec![1, 2, 2],
            kernel: 9,
            feature: FEATURE_DIM,
        }
    }

    pub fn mlp() -> Self {
        EncoderPlan::Mlp {
            widths: vec![WINDOW_SIZE, 512, 256, FEATURE_DIM],
        }
    }

    /// `stgcn` or `mlp`.
    pub fn tag(&self) -> &'static str {
        match self {
            EncoderPlan::Stgcn { .. } => "stgcn",
            EncoderPlan::Mlp { .. } => "mlp",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "stgcn" => Ok(Self::stgcn()),
            "mlp" => Ok(Self::mlp()),
            other => Err(Error::Config(format!("unknown encoder `{other}` (stgcn | mlp)"))),
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            EncoderPlan::Stgcn { feature, .. } => *feature,
            EncoderPlan::Mlp { widths } => *widths.last().unwrap(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            EncoderPlan::Stgcn {
                channels,
                strides,
                kernel,
                feature,
            } => {
                channels.len() >= 2
                    && channels[0] == NUM_COORDS
                    && strides.len() == channels.len() - 1
                    && channels.iter().chain(strides).all(|&c| c > 0)
                    && *kernel > 0
                    && *feature > 0
            }
            EncoderPlan::Mlp { widths } => {
                widths.len() >= 2 && widths[0] == WINDOW_SIZE && widths.iter().all(|&w| w > 0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid encoder plan {self:?}")))
        }
    }
}

/// Widths of the MLP projection head.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectionPlan {
    pub widths: Vec<usize>,
}

impl Default for ProjectionPlan {
    fn default() -> Self {
        ProjectionPlan {
            widths: vec![FEATURE_DIM, 256, 256, FEATURE_DIM],
        }
    }
}

fn push_affine<T: Scalar>(p: &mut ParamSet<T>, rng: &mut impl Rng, name: &str, fan_in: usize, w_shape: &[usize]) {
    p.push(format!("{name}.w"), kaiming_uniform(rng, w_shape, fan_in));
    p.push(format!("{name}.b"), Tensor::zeros(&[*w_shape.last().unwrap()]));
}

/// Encoder weights together with the plan they were built for.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder<T> {
    pub plan: EncoderPlan,
    pub params: ParamSet<T>,
}

impl<T: Scalar> Encoder<T> {
    /// Kaiming-uniform weights, zero biases.
    pub fn init(plan: EncoderPlan, rng: &mut impl Rng) -> Result<Self> {
        plan.validate()?;
        let mut p = ParamSet::new();
        match &plan {
            EncoderPlan::Stgcn {
                channels,
                kernel,
                feature,
                ..
            } => {
                for (i, pair) in channels.windows(2).enumerate() {
                    let (cin, cout) = (pair[0], pair[1]);
                    push_affine(&mut p, rng, &format!("block{i}.spatial"), cin, &[cin, cout]);
                    push_affine(&mut p, rng, &format!("block{i}.temporal"), kernel * cout, &[kernel * cout, cout]);
                }
                let last = *channels.last().unwrap();
                push_affine(&mut p, rng, "fc", last, &[last, *feature]);
            }
            EncoderPlan::Mlp { widths } => {
                for (i, pair) in widths.windows(2).enumerate() {
                    push_affine(&mut p, rng, &format!("layer{i}"), pair[0], &[pair[0], pair[1]]);
                }
            }
        }
        Ok(Encoder { plan, params: p })
    }

    pub fn cast<U: Scalar>(&self) -> Encoder<U> {
        Encoder {
            plan: self.plan.clone(),
            params: self.params.cast(),
        }
    }

    /// Encodes `x` [B, 50, 15, 3] to [B, 128] using weights bound on `tape`.
    pub fn forward(&self, tape: &mut Tape<T>, bound: &Bound, x: Var, graph: &SkeletonGraph) -> Result<Var> {
        match &self.plan {
            EncoderPlan::Stgcn { .. } => stgcn_forward(tape, bound, &self.plan, x, graph),
            EncoderPlan::Mlp { .. } => mlp_encoder_forward(tape, bound, &self.plan, x),
        }
    }

    /// Features of flattened windows without recording gradients, in
    /// chunks of `chunk` windows.
    pub fn features(&self, windows: &[&[T]], graph: &SkeletonGraph, chunk: usize) -> Result<Vec<Vec<T>>> {
        let mut out = Vec::with_capacity(windows.len());
        for part in windows.chunks(chunk.max(1)) {
            let mut tape = Tape::new();
            let bound = self.params.bind(&mut tape, false);
            let x = batch_input(&mut tape, part, false)?;
            let h = self.forward(&mut tape, &bound, x, graph)?;
            let dim = self.plan.feature_dim();
            out.extend(tape.value(h).data.chunks_exact(dim).map(<[T]>::to_vec));
        }
        Ok(out)
    }
}

/// Stacks flattened windows into a `[B, 50, 15, 3]` tape input.
pub fn batch_input<T: Scalar>(tape: &mut Tape<T>, windows: &[&[T]], trainable: bool) -> Result<Var> {
    let mut data = Vec::with_capacity(windows.len() * WINDOW_SIZE);
    for w in windows {
        if w.len() != WINDOW_SIZE {
            return Err(Error::dim("encoder input", format!("window of {} values, expected {WINDOW_SIZE}", w.len())));
        }
        data.extend_from_slice(w);
    }
    let t = Tensor::new(&[windows.len(), WINDOW_LEN, NUM_JOINTS, NUM_COORDS], data)?;
    Ok(if trainable { tape.leaf(t) } else { tape.constant(t) })
}

fn check_input<T: Scalar>(tape: &Tape<T>, x: Var) -> Result<[usize; 4]> {
    let s = tape.shape(x);
    match <[usize; 4]>::try_from(s) {
        Ok(dims @ [_, _, NUM_JOINTS, NUM_COORDS]) => Ok(dims),
        _ => Err(Error::dim("encoder", format!("input {s:?}, expected [B, T, 15, 3]"))),
    }
}

/// Graph encoder. Each block applies the spatial graph convolution
/// relu(Â X W + b) followed by a temporal convolution (with bias and relu);
/// the result is mean-pooled over frames and joints and mapped to the
/// feature width.
pub fn stgcn_forward<T: Scalar>(
    tape: &mut Tape<T>,
    bound: &Bound,
    plan: &EncoderPlan,
    x: Var,
    graph: &SkeletonGraph,
) -> Result<Var> {
    let EncoderPlan::Stgcn {
        channels,
        strides,
        kernel,
        ..
    } = plan
    else {
        return Err(Error::Config("stgcn_forward needs an stgcn plan".into()));
    };
    let [batch, mut frames, joints, _] = check_input(tape, x)?;
    let adj = tape.constant(Tensor::new(&[1, joints, joints], graph.adjacency_flat())?);
    let mut h = x;
    for (i, pair) in channels.windows(2).enumerate() {
        let (cin, cout) = (pair[0], pair[1]);
        let rows = tape.reshape(h, &[batch * frames, joints, cin])?;
        let mixed = tape.bmm(adj, rows)?;
        let flat = tape.reshape(mixed, &[batch * frames * joints, cin])?;
        let w = bound.get(&format!("block{i}.spatial.w"))?;
        let b = bound.get(&format!("block{i}.spatial.b"))?;
        let s = affine(tape, flat, w, b)?;
        let s = tape.relu(s);
        let s = tape.reshape(s, &[batch, frames, joints, cout])?;
        let w = bound.get(&format!("block{i}.temporal.w"))?;
        let b = bound.get(&format!("block{i}.temporal.b"))?;
        let t = tape.temporal_conv(s, w, *kernel, strides[i])?;
        let t = tape.add_row(t, b)?;
        h = tape.relu(t);
        frames = tape.shape(h)[1];
    }
    let pooled = tape.mean_axes(h, 1..3)?;
    affine(tape, pooled, bound.get("fc.w")?, bound.get("fc.b")?)
}

fn mlp_stack<T: Scalar>(tape: &mut Tape<T>, bound: &Bound, prefix: &str, layers: usize, mut h: Var) -> Result<Var> {
    for i in 0..layers {
        let w = bound.get(&format!("{prefix}{i}.w"))?;
        let b = bound.get(&format!("{prefix}{i}.b"))?;
        h = affine(tape, h, w, b)?;
        if i + 1 < layers {
            h = tape.relu(h);
        }
    }
    Ok(h)
}

/// Flattens each window to 2250 values and applies the affine/relu stack.
pub fn mlp_encoder_forward<T: Scalar>(tape: &mut Tape<T>, bound: &Bound, plan: &EncoderPlan, x: Var) -> Result<Var> {
    let EncoderPlan::Mlp { widths } = plan else {
        return Err(Error::Config("mlp_encoder_forward needs an mlp plan".into()));
    };
    let s = tape.shape(x).to_vec();
    let batch = s.first().copied().unwrap_or(0);
    let per: usize = s.iter().skip(1).product();
    if s.len() < 2 || per != widths[0] {
        return Err(Error::dim("mlp encoder", format!("input {s:?}, expected {} values per window", widths[0])));
    }
    let flat = tape.reshape(x, &[batch, per])?;
    mlp_stack(tape, bound, "layer", widths.len() - 1, flat)
}

/// Projection head weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection<T> {
    pub plan: ProjectionPlan,
    pub params: ParamSet<T>,
}

impl<T: Scalar> Projection<T> {
    pub fn init(plan: ProjectionPlan, rng: &mut impl Rng) -> Self {
        let mut p = ParamSet::new();
        for (i, pair) in plan.widths.windows(2).enumerate() {
            push_affine(&mut p, rng, &format!("head{i}"), pair[0], &[pair[0], pair[1]]);
        }
        Projection { plan, params: p }
    }

    pub fn cast<U: Scalar>(&self) -> Projection<U> {
        Projection {
            plan: self.plan.clone(),
            params: self.params.cast(),
        }
    }
}

/// 128→256→256→128 with relu between layers. The output is not normalized.
pub fn project<T: Scalar>(tape: &mut Tape<T>, bound: &Bound, plan: &ProjectionPlan, h: Var) -> Result<Var> {
    mlp_stack(tape, bound, "head", plan.widths.len() - 1, h)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Manifest {
    encoder: EncoderPlan,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    head: Option<ProjectionPlan>,
    #[serde(default)]
    meta: serde_json::Value,
}

const ENC: &str = "encoder.";
const HEAD: &str = "projection.";

/// Everything a checkpoint file holds.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderCheckpoint {
    pub encoder: Encoder<f32>,
    pub head: Option<Projection<f32>>,
    /// Free-form run metadata (seed, epochs, profile).
    pub meta: serde_json::Value,
}

impl EncoderCheckpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let manifest = Manifest {
            encoder: self.encoder.plan.clone(),
            head: self.head.as_ref().map(|h| h.plan.clone()),
            meta: self.meta.clone(),
        };
        let mut all = ParamSet::new();
        for (n, t) in self.encoder.params.iter() {
            all.push(format!("{ENC}{n}"), t.clone());
        }
        for (n, t) in self.head.iter().flat_map(|h| h.params.iter()) {
            all.push(format!("{HEAD}{n}"), t.clone());
        }
        checkpoint::encode(&serde_json::to_string(&manifest)?, &all)
    }

    /// Decodes and checks every tensor against the manifest's plans.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (text, all) = checkpoint::decode(bytes)?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("bad manifest: {e}")))?;
        manifest.encoder.validate()?;
        let mut enc = ParamSet::new();
        let mut head = ParamSet::new();
        for (n, t) in all.iter() {
            if let Some(rest) = n.strip_prefix(ENC) {
                enc.push(rest, t.clone());
            } else if let Some(rest) = n.strip_prefix(HEAD) {
                head.push(rest, t.clone());
            } else {
                return Err(Error::Checkpoint(format!("unexpected tensor `{n}`")));
            }
        }
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let expected = Encoder::<f32>::init(manifest.encoder.clone(), &mut rng)?;
        expected.params.check_layout(&enc)?;
        let head = match manifest.head {
            Some(plan) => {
                let expected = Projection::<f32>::init(plan.clone(), &mut rng);
                expected.params.check_layout(&head)?;
                Some(Projection { plan, params: head })
            }
            None if head.is_empty() => None,
            None => return Err(Error::Checkpoint("projection tensors without a head plan".into())),
        };
        Ok(EncoderCheckpoint {
            encoder: Encoder {
                plan: manifest.encoder,
                params: enc,
            },
            head,
            meta: manifest.meta,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Loads and refuses weights built for a different architecture.
    pub fn load_expecting(path: impl AsRef<Path>, plan: &EncoderPlan) -> Result<Self> {
        let ck = Self::load(path)?;
        if &ck.encoder.plan != plan {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds a {} encoder {:?}, expected {:?}",
                ck.encoder.plan.tag(),
                ck.encoder.plan,
                plan
            )));
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::build_adjacency;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_window(seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..WINDOW_SIZE).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn encode(enc: &Encoder<f64>, w: &[f64]) -> Vec<f64> {
        enc.features(&[w], &build_adjacency(), 1).unwrap().remove(0)
    }

    #[test]
    fn parameter_layouts() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let st = Encoder::<f32>::init(EncoderPlan::stgcn(), &mut rng).unwrap();
        let expected = (3 * 32 + 32 + 9 * 32 * 32 + 32)
            + (32 * 64 + 64 + 9 * 64 * 64 + 64)
            + (64 * 128 + 128 + 9 * 128 * 128 + 128)
            + (128 * 128 + 128);
        assert_eq!(st.params.num_params(), expected);
        let mlp = Encoder::<f32>::init(EncoderPlan::mlp(), &mut rng).unwrap();
        assert_eq!(mlp.params.num_params(), 2250 * 512 + 512 + 512 * 256 + 256 + 256 * 128 + 128);
        let head = Projection::<f32>::init(ProjectionPlan::default(), &mut rng);
        assert_eq!(head.params.get("head0.w").unwrap().shape, vec![128, 256]);
        assert_eq!(head.params.get("head1.w").unwrap().shape, vec![256, 256]);
        assert_eq!(head.params.get("head2.w").unwrap().shape, vec![256, 128]);
    }

    #[test]
    fn output_width_is_128() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for plan in [EncoderPlan::stgcn(), EncoderPlan::mlp()] {
            let enc = Encoder::<f64>::init(plan, &mut rng).unwrap();
            assert_eq!(encode(&enc, &rand_window(2)).len(), FEATURE_DIM);
        }
    }

    fn zero_biases(p: &mut ParamSet<f64>) {
        let names = p.names();
        for n in names.iter().filter(|n| n.ends_with(".b")) {
            p.get_mut(n).unwrap().data.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    #[test]
    fn zero_view_gives_zero_feature() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for plan in [EncoderPlan::stgcn(), EncoderPlan::mlp()] {
            let mut enc = Encoder::<f64>::init(plan, &mut rng).unwrap();
            zero_biases(&mut enc.params);
            assert!(encode(&enc, &vec![0.0; WINDOW_SIZE]).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn stgcn_uses_the_graph_and_time() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let enc = Encoder::<f64>::init(EncoderPlan::stgcn(), &mut rng).unwrap();
        let w = rand_window(5);
        let base = encode(&enc, &w);
        // Head and left ankle are not adjacent.
        let mut swapped = w.clone();
        for t in 0..WINDOW_LEN {
            for c in 0..3 {
                swapped.swap((t * 15) * 3 + c, (t * 15 + 13) * 3 + c);
            }
        }
        assert_ne!(encode(&enc, &swapped), base);
        let mut reversed = Vec::with_capacity(WINDOW_SIZE);
        for t in (0..WINDOW_LEN).rev() {
            reversed.extend_from_slice(&w[t * 45..(t + 1) * 45]);
        }
        assert_ne!(encode(&enc, &reversed), base);
    }

    #[test]
    fn mlp_is_sensitive_to_one_coordinate() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let enc = Encoder::<f64>::init(EncoderPlan::mlp(), &mut rng).unwrap();
        let w = rand_window(7);
        let mut v = w.clone();
        v[1234] += 0.5;
        assert_ne!(encode(&enc, &w), encode(&enc, &v));
    }

    #[test]
    fn bad_input_shape_is_dimension_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let enc = Encoder::<f64>::init(EncoderPlan::stgcn(), &mut rng).unwrap();
        let mut tape = Tape::new();
        let bound = enc.params.bind(&mut tape, false);
        let x = tape.constant(Tensor::zeros(&[1, 50, 14, 3]));
        assert!(matches!(enc.forward(&mut tape, &bound, x, &build_adjacency()), Err(Error::Dimension { .. })));
        let short = vec![0.0; 100];
        assert!(enc.features(&[&short], &build_adjacency(), 1).is_err());
    }

    #[test]
    fn projection_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let head = Projection::<f64>::init(ProjectionPlan::default(), &mut rng);
        let mut tape = Tape::new();
        let bound = head.params.bind(&mut tape, false);
        let h = tape.constant(Tensor::new(&[2, 128], (0..256).map(|i| i as f64 / 256.0).collect()).unwrap());
        let z = project(&mut tape, &bound, &head.plan, h).unwrap();
        assert_eq!(tape.shape(z), [2, 128]);
        let hidden = affine(&mut tape, h, bound.get("head0.w").unwrap(), bound.get("head0.b").unwrap()).unwrap();
        assert_eq!(tape.shape(hidden), [2, 256]);
    }

    #[test]
    fn checkpoint_round_trip_and_plan_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let ck = EncoderCheckpoint {
            encoder: Encoder::init(EncoderPlan::stgcn(), &mut rng).unwrap(),
            head: Some(Projection::init(ProjectionPlan::default(), &mut rng)),
            meta: serde_json::json!({"seed": 3}),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("enc.skck");
        ck.save(&path).unwrap();
        let back = EncoderCheckpoint::load_expecting(&path, &EncoderPlan::stgcn()).unwrap();
        assert_eq!(back, ck);
        let w: Vec<f32> = rand_window(11).iter().map(|&v| v as f32).collect();
        let g = build_adjacency();
        assert_eq!(
            ck.encoder.features(&[&w], &g, 1).unwrap(),
            back.encoder.features(&[&w], &g, 1).unwrap()
        );
        assert!(matches!(
            EncoderCheckpoint::load_expecting(&path, &EncoderPlan::mlp()),
            Err(Error::Checkpoint(_))
        ));
    }
}
