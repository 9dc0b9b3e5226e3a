//! Downstream evaluation: reconstruction of heavily dropped windows, motion
//! prediction of the next window, and linear-probe classification.

use crate::encoders::{batch_input, Encoder, FEATURE_DIM};
use crate::error::{Error, Result};
use crate::nn::loss::{cross_entropy, mse};
use crate::nn::optim::{Adam, AdamConfig};
use crate::nn::{affine, kaiming_uniform, Bound, ParamSet, Tape, Tensor, Var};
use crate::skeleton::{
    build_adjacency, flatten_frames, window_starts, SkeletonFrame, SkeletonGraph, SkeletonSequence, WINDOW_LEN,
    WINDOW_SIZE,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Reconstruction,
    MotionPrediction,
    Classification,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::Reconstruction, TaskKind::MotionPrediction, TaskKind::Classification];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Reconstruction => "reconstruction",
            TaskKind::MotionPrediction => "motion-prediction",
            TaskKind::Classification => "classification",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown task `{name}`")))
    }

    /// `mae_mm` for the regression tasks, `accuracy_pct` for classification.
    pub fn metric_name(self) -> &'static str {
        match self {
            TaskKind::Classification => "accuracy_pct",
            _ => "mae_mm",
        }
    }

    pub fn higher_is_better(self) -> bool {
        self == TaskKind::Classification
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Frozen,
    Finetune,
}

/// How regression error is averaged.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaeKind {
    /// Mean absolute error per coordinate.
    #[default]
    Coordinate,
    /// Mean Euclidean distance per joint.
    Euclidean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub mode: Mode,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Fraction of frames zeroed in reconstruction inputs.
    pub corruption_rate: f64,
    pub mae: MaeKind,
    /// Class count; taken from the training labels when absent.
    pub classes: Option<usize>,
    pub adam: AdamConfig,
}

impl Default for TaskSpec {
    fn default() -> Self {
        TaskSpec {
            kind: TaskKind::Classification,
            mode: Mode::Frozen,
            epochs: 200,
            lr: 0.01,
            batch_size: 128,
            corruption_rate: 0.8,
            mae: MaeKind::Coordinate,
            classes: None,
            adam: AdamConfig::default(),
        }
    }
}

impl TaskSpec {
    pub fn new(kind: TaskKind) -> Self {
        TaskSpec {
            kind,
            ..TaskSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || !(self.lr > 0.0) {
            return Err(Error::Config("task batch size and learning rate must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.corruption_rate) {
            return Err(Error::Config("corruption rate must lie in [0, 1]".into()));
        }
        if self.classes.is_some_and(|c| c < 2) {
            return Err(Error::Config("classification needs at least 2 classes".into()));
        }
        Ok(())
    }
}

/// Zeroes exactly round(rate · len) distinct frames chosen uniformly.
pub fn corrupt_for_reconstruction(window: &[SkeletonFrame], rate: f64, rng: &mut impl Rng) -> Vec<SkeletonFrame> {
    let drop = ((rate * window.len() as f64).round() as usize).min(window.len());
    let mut out = window.to_vec();
    for i in rand::seq::index::sample(rng, window.len(), drop) {
        out[i] = SkeletonFrame::zeros();
    }
    out
}

fn same_len(pred: &[f32], target: &[f32]) -> Result<()> {
    if pred.len() != target.len() || pred.is_empty() || !pred.len().is_multiple_of(3) {
        return Err(Error::dim(
            "mae",
            format!("{} vs {} values; need equal, nonzero multiples of 3", pred.len(), target.len()),
        ));
    }
    Ok(())
}

/// Mean absolute coordinate error in millimetres (1 unit = 1 m).
pub fn mae_mm(pred: &[f32], target: &[f32]) -> Result<f64> {
    same_len(pred, target)?;
    let s: f64 = pred.iter().zip(target).map(|(&p, &t)| (p as f64 - t as f64).abs()).sum();
    Ok(1000.0 * s / pred.len() as f64)
}

/// Mean per-joint Euclidean error in millimetres.
pub fn mae_mm_euclidean(pred: &[f32], target: &[f32]) -> Result<f64> {
    same_len(pred, target)?;
    let s: f64 = pred
        .chunks_exact(3)
        .zip(target.chunks_exact(3))
        .map(|(p, t)| {
            p.iter()
                .zip(t)
                .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .sum();
    Ok(1000.0 * s / (pred.len() / 3) as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    Class(usize),
    Window(Vec<f32>),
}

/// One encoder input (a flattened 50-frame window) with its target.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub input: Vec<f32>,
    pub target: Target,
}

fn check_window(w: &SkeletonSequence) -> Result<()> {
    if w.len() != WINDOW_LEN {
        return Err(Error::dim("task window", format!("{} frames, expected {WINDOW_LEN}", w.len())));
    }
    Ok(())
}

pub fn classification_samples(windows: &[SkeletonSequence]) -> Result<Vec<Sample>> {
    windows
        .iter()
        .map(|w| {
            check_window(w)?;
            let label = w
                .label
                .ok_or_else(|| Error::Config("classification needs labeled windows".into()))?;
            Ok(Sample {
                input: w.to_f32(),
                target: Target::Class(label as usize),
            })
        })
        .collect()
}

/// Corrupted inputs with the clean window as target. Window `i` draws its
/// dropped frames from its own stream of `seed`.
pub fn reconstruction_samples(windows: &[SkeletonSequence], rate: f64, seed: u64) -> Result<Vec<Sample>> {
    windows
        .iter()
        .enumerate()
        .map(|(i, w)| {
            check_window(w)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(3 << 40 | i as u64);
            Ok(Sample {
                input: flatten_frames(&corrupt_for_reconstruction(&w.frames, rate, &mut rng)),
                target: Target::Window(w.to_f32()),
            })
        })
        .collect()
}

/// Start frames of (input, target) pairs: input `[s, s+50)`, target
/// `[s+50, s+100)`.
pub fn prediction_starts(len: usize, stride: usize) -> Vec<usize> {
    window_starts(len, 2 * WINDOW_LEN, stride)
}

pub fn prediction_samples(sequences: &[SkeletonSequence], stride: usize) -> Vec<Sample> {
    sequences
        .iter()
        .flat_map(|s| {
            prediction_starts(s.len(), stride).into_iter().map(move |k| Sample {
                input: flatten_frames(&s.frames[k..k + WINDOW_LEN]),
                target: Target::Window(flatten_frames(&s.frames[k + WINDOW_LEN..k + 2 * WINDOW_LEN])),
            })
        })
        .collect()
}

/// Linear probe for classification, 128→512→1024→2250 decoder otherwise.
pub fn head_widths(kind: TaskKind, classes: usize) -> Vec<usize> {
    match kind {
        TaskKind::Classification => vec![FEATURE_DIM, classes],
        _ => vec![FEATURE_DIM, 512, 1024, WINDOW_SIZE],
    }
}

pub fn init_head(kind: TaskKind, classes: usize, rng: &mut impl Rng) -> ParamSet<f32> {
    let mut p = ParamSet::new();
    for (i, pair) in head_widths(kind, classes).windows(2).enumerate() {
        p.push(format!("dec{i}.w"), kaiming_uniform(rng, &[pair[0], pair[1]], pair[0]));
        p.push(format!("dec{i}.b"), Tensor::zeros(&[pair[1]]));
    }
    p
}

fn head_forward(tape: &mut Tape<f32>, bound: &Bound, layers: usize, mut h: Var) -> Result<Var> {
    for i in 0..layers {
        h = affine(tape, h, bound.get(&format!("dec{i}.w"))?, bound.get(&format!("dec{i}.b"))?)?;
        if i + 1 < layers {
            h = tape.relu(h);
        }
    }
    Ok(h)
}

fn class_count(spec: &TaskSpec, samples: &[Sample]) -> Result<usize> {
    if let Some(c) = spec.classes {
        return Ok(c);
    }
    let max = samples
        .iter()
        .map(|s| match s.target {
            Target::Class(c) => Ok(c),
            Target::Window(_) => Err(Error::Config("classification needs class targets".into())),
        })
        .try_fold(0usize, |m, c| c.map(|c| m.max(c)))?;
    Ok((max + 1).max(2))
}

fn check_targets(kind: TaskKind, samples: &[Sample], classes: usize) -> Result<()> {
    for s in samples {
        if s.input.len() != WINDOW_SIZE {
            return Err(Error::dim("task input", format!("{} values, expected {WINDOW_SIZE}", s.input.len())));
        }
        match (&s.target, kind) {
            (Target::Class(c), TaskKind::Classification) if *c < classes => {}
            (Target::Class(c), TaskKind::Classification) => {
                return Err(Error::Config(format!("label {c} outside {classes} classes")))
            }
            (Target::Window(w), TaskKind::Reconstruction | TaskKind::MotionPrediction) if w.len() == WINDOW_SIZE => {}
            _ => return Err(Error::Config(format!("sample targets do not fit the {kind} task"))),
        }
    }
    Ok(())
}

/// A trained downstream head and the encoder it sits on.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedHead {
    pub kind: TaskKind,
    pub classes: usize,
    pub head: ParamSet<f32>,
    pub encoder: Encoder<f32>,
    /// Mean training loss per epoch.
    pub losses: Vec<f64>,
    pub trainable_params: usize,
}

fn head_loss(tape: &mut Tape<f32>, kind: TaskKind, out: Var, batch: &[&Sample]) -> Result<Var> {
    match kind {
        TaskKind::Classification => {
            let labels: Vec<usize> = batch
                .iter()
                .map(|s| match s.target {
                    Target::Class(c) => c,
                    Target::Window(_) => unreachable!("targets checked"),
                })
                .collect();
            cross_entropy(tape, out, &labels)
        }
        _ => {
            let mut data = Vec::with_capacity(batch.len() * WINDOW_SIZE);
            for s in batch {
                if let Target::Window(w) = &s.target {
                    data.extend_from_slice(w);
                }
            }
            let target = tape.constant(Tensor::new(&[batch.len(), WINDOW_SIZE], data)?);
            mse(tape, out, target)
        }
    }
}

/// Trains the task head with Adam. Frozen mode encodes every input once and
/// never touches the encoder; finetune mode back-propagates into it.
pub fn train_head(spec: &TaskSpec, encoder: &Encoder<f32>, train: &[Sample], seed: u64) -> Result<TrainedHead> {
    spec.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("no training samples".into()));
    }
    let classes = match spec.kind {
        TaskKind::Classification => class_count(spec, train)?,
        _ => 0,
    };
    check_targets(spec.kind, train, classes)?;
    let graph = build_adjacency();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x4ead);
    let mut head = init_head(spec.kind, classes, &mut rng);
    let layers = head.len() / 2;
    let mut encoder = encoder.clone();
    let finetune = spec.mode == Mode::Finetune;
    let features = if finetune {
        Vec::new()
    } else {
        let inputs: Vec<&[f32]> = train.iter().map(|s| s.input.as_slice()).collect();
        encoder.features(&inputs, &graph, 256)?
    };
    let mut head_opt = Adam::new(spec.adam, &head);
    let mut enc_opt = Adam::new(spec.adam, &encoder.params);
    let trainable_params = head.num_params() + if finetune { encoder.params.num_params() } else { 0 };
    let mut losses = Vec::with_capacity(spec.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..spec.epochs {
        let mut shuffle = ChaCha8Rng::seed_from_u64(seed);
        shuffle.set_stream(5 << 40 | epoch as u64);
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        for idx in order.chunks(spec.batch_size) {
            let batch: Vec<&Sample> = idx.iter().map(|&i| &train[i]).collect();
            let mut tape = Tape::new();
            let hb = head.bind(&mut tape, true);
            let (h, eb) = if finetune {
                let eb = encoder.params.bind(&mut tape, true);
                let inputs: Vec<&[f32]> = batch.iter().map(|s| s.input.as_slice()).collect();
                let x = batch_input(&mut tape, &inputs, false)?;
                (encoder.forward(&mut tape, &eb, x, &graph)?, Some(eb))
            } else {
                let data: Vec<f32> = idx.iter().flat_map(|&i| features[i].iter().copied()).collect();
                (tape.constant(Tensor::new(&[idx.len(), FEATURE_DIM], data)?), None)
            };
            let out = head_forward(&mut tape, &hb, layers, h)?;
            let loss = head_loss(&mut tape, spec.kind, out, &batch)?;
            let value = tape.value(loss).data[0] as f64;
            if !value.is_finite() {
                return Err(Error::NonFinite { what: "task loss", epoch, step: head_opt.steps() as usize });
            }
            total += value * idx.len() as f64;
            let mut g = tape.backward(loss)?;
            let grads = |vars: &[Var], params: &ParamSet<f32>, g: &mut crate::nn::Gradients<f32>| -> Vec<Vec<f32>> {
                vars.iter()
                    .zip(params.iter())
                    .map(|(&v, (_, t))| g.take_or_zeros(v, t.numel()))
                    .collect()
            };
            let hg = grads(&hb.vars, &head, &mut g);
            head_opt.step(&mut head, &hg, spec.lr)?;
            if let Some(eb) = eb {
                let eg = grads(&eb.vars, &encoder.params, &mut g);
                enc_opt.step(&mut encoder.params, &eg, spec.lr)?;
            }
        }
        losses.push(total / train.len() as f64);
    }
    Ok(TrainedHead {
        kind: spec.kind,
        classes,
        head,
        encoder,
        losses,
        trainable_params,
    })
}

/// Raw head outputs (logits or flattened windows) for every sample.
pub fn predict(trained: &TrainedHead, samples: &[Sample], graph: &SkeletonGraph) -> Result<Vec<Vec<f32>>> {
    let inputs: Vec<&[f32]> = samples.iter().map(|s| s.input.as_slice()).collect();
    let feats = trained.encoder.features(&inputs, graph, 256)?;
    let width = *head_widths(trained.kind, trained.classes).last().unwrap();
    let mut out = Vec::with_capacity(samples.len());
    for chunk in feats.chunks(256) {
        let mut tape = Tape::new();
        let hb = trained.head.bind(&mut tape, false);
        let data: Vec<f32> = chunk.iter().flatten().copied().collect();
        let h = tape.constant(Tensor::new(&[chunk.len(), FEATURE_DIM], data)?);
        let y = head_forward(&mut tape, &hb, trained.head.len() / 2, h)?;
        out.extend(tape.value(y).data.chunks_exact(width).map(<[f32]>::to_vec));
    }
    Ok(out)
}

/// Accuracy % for logits against class targets, MAE mm for windows.
pub fn score(kind: TaskKind, mae: MaeKind, outputs: &[Vec<f32>], samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("no test samples".into()));
    }
    if outputs.len() != samples.len() {
        return Err(Error::dim("score", format!("{} outputs for {} samples", outputs.len(), samples.len())));
    }
    let mut acc = 0.0;
    for (o, s) in outputs.iter().zip(samples) {
        acc += match (&s.target, kind) {
            (Target::Class(c), TaskKind::Classification) => {
                let best = o
                    .iter()
                    .enumerate()
                    .fold((0, f32::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b })
                    .0;
                if best == *c {
                    100.0
                } else {
                    0.0
                }
            }
            (Target::Window(w), TaskKind::Reconstruction | TaskKind::MotionPrediction) => match mae {
                MaeKind::Coordinate => mae_mm(o, w)?,
                MaeKind::Euclidean => mae_mm_euclidean(o, w)?,
            },
            _ => return Err(Error::Config(format!("sample targets do not fit the {kind} task"))),
        };
    }
    Ok(acc / samples.len() as f64)
}

pub fn evaluate(spec: &TaskSpec, trained: &TrainedHead, test: &[Sample]) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Empty("no test samples".into()));
    }
    check_targets(spec.kind, test, trained.classes)?;
    let outputs = predict(trained, test, &build_adjacency())?;
    score(spec.kind, spec.mae, &outputs, test)
}

/// One downstream result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: TaskKind,
    pub mode: Mode,
    pub metric: String,
    pub value: f64,
    /// Standard deviation across seeds, when aggregated.
    pub std: Option<f64>,
    pub profile: String,
    pub encoder: String,
    pub seed: u64,
    pub epochs: usize,
    pub trainable_params: usize,
    pub train_samples: usize,
    pub test_samples: usize,
}

impl TaskReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub const LEDGER_HEADER: &str = "profile,task,mode,encoder,seed,metric,value,std_eligible";

/// Appends one row per report, writing the header when the file is new.
pub fn append_ledger(path: impl AsRef<Path>, reports: &[TaskReport]) -> Result<()> {
    let path = path.as_ref();
    let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "{LEDGER_HEADER}")?;
    }
    for r in reports {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{}",
            r.profile,
            r.task,
            serde_json::to_value(r.mode)?.as_str().unwrap_or_default(),
            r.encoder,
            r.seed,
            r.metric,
            r.value,
            r.std.is_none()
        )?;
    }
    Ok(())
}

/// One parsed line of the per-seed ledger.
#[derive(Clone, Debug, PartialEq)]
pub struct LedgerRow {
    pub profile: String,
    pub task: TaskKind,
    pub mode: Mode,
    pub encoder: String,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

impl From<&TaskReport> for LedgerRow {
    fn from(r: &TaskReport) -> Self {
        LedgerRow {
            profile: r.profile.clone(),
            task: r.task,
            mode: r.mode,
            encoder: r.encoder.clone(),
            seed: r.seed,
            metric: r.metric.clone(),
            value: r.value,
        }
    }
}

/// Parses a ledger written by [`append_ledger`]. Values are printed in
/// shortest round-trip form, so they parse back to the same bits.
pub fn parse_ledger(text: &str) -> Result<Vec<LedgerRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(LEDGER_HEADER) {
        return Err(Error::Format("ledger header mismatch".into()));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let bad = |what: &str| Error::Format(format!("ledger line {}: bad {what}", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(bad("field count"));
            }
            Ok(LedgerRow {
                profile: f[0].to_string(),
                task: TaskKind::from_name(f[1])?,
                mode: serde_json::from_value(serde_json::Value::String(f[2].into())).map_err(|_| bad("mode"))?,
                encoder: f[3].to_string(),
                seed: f[4].parse().map_err(|_| bad("seed"))?,
                metric: f[5].to_string(),
                value: f[6].parse().map_err(|_| bad("value"))?,
            })
        })
        .collect()
}

pub fn read_ledger(path: impl AsRef<Path>) -> Result<Vec<LedgerRow>> {
    parse_ledger(&std::fs::read_to_string(path)?)
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::EncoderPlan;

    fn frames(seed: u64) -> Vec<SkeletonFrame> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..WINDOW_LEN)
            .map(|_| {
                let mut f = SkeletonFrame::zeros();
                f.joints.iter_mut().flatten().for_each(|v| *v = rng.random_range(-1.0..1.0));
                f
            })
            .collect()
    }

    #[test]
    fn corruption_counts() {
        let w = frames(1);
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = corrupt_for_reconstruction(&w, 0.8, &mut rng);
            assert_eq!(out.iter().filter(|f| f.is_dropped()).count(), 40);
            let kept: Vec<_> = out.iter().zip(&w).filter(|(o, _)| !o.is_dropped()).collect();
            assert_eq!(kept.len(), 10);
            assert!(kept.iter().all(|(o, i)| o == i));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(corrupt_for_reconstruction(&w, 0.0, &mut rng), w);
        assert!(corrupt_for_reconstruction(&w, 1.0, &mut rng).iter().all(SkeletonFrame::is_dropped));
    }

    #[test]
    fn mae_examples() {
        let t: Vec<f32> = (0..WINDOW_SIZE).map(|i| (i as f32 * 0.37).sin()).collect();
        assert_eq!(mae_mm(&t, &t).unwrap(), 0.0);
        let zero = vec![0.0f32; WINDOW_SIZE];
        let off = vec![0.01f32; WINDOW_SIZE];
        assert!((mae_mm(&off, &zero).unwrap() - 10.0).abs() < 1e-6);
        let mut one = zero.clone();
        one[17] = 2.25;
        assert!((mae_mm(&one, &zero).unwrap() - 1.0).abs() < 1e-9);
        assert!((mae_mm(&t, &off).unwrap() - mae_mm(&off, &t).unwrap()).abs() == 0.0);
        assert!(mae_mm(&t[..30], &t).is_err());
        let expected = 1000.0 * t.iter().map(|v| v.abs() as f64).sum::<f64>() / t.len() as f64;
        assert!((mae_mm(&zero, &t).unwrap() - expected).abs() < 1e-9);
        let mut e = zero.clone();
        e[0] = 0.003;
        e[1] = 0.004;
        assert!((mae_mm_euclidean(&e, &zero).unwrap() - 5.0 / 750.0).abs() < 1e-9);
    }

    #[test]
    fn prediction_pairs_are_adjacent() {
        let frames: Vec<SkeletonFrame> = (0..130)
            .map(|t| SkeletonFrame::new([[t as f64, 0.0, 0.0]; 15]))
            .collect();
        let seq = SkeletonSequence::new(frames, 30.0);
        assert_eq!(prediction_starts(130, 10), vec![0, 10, 20, 30]);
        let samples = prediction_samples(&[seq], 10);
        assert_eq!(samples.len(), 4);
        for (k, s) in samples.iter().enumerate() {
            let Target::Window(t) = &s.target else { panic!() };
            assert_eq!(s.input[0], (10 * k) as f32);
            assert_eq!(t[0], (10 * k + 50) as f32);
        }
    }

    #[test]
    fn probe_has_7740_parameters_for_60_classes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(init_head(TaskKind::Classification, 60, &mut rng).num_params(), 7740);
        let dec = init_head(TaskKind::MotionPrediction, 0, &mut rng);
        assert_eq!(dec.num_params(), 128 * 512 + 512 + 512 * 1024 + 1024 + 1024 * 2250 + 2250);
    }

    #[test]
    fn identity_outputs_score_zero() {
        let samples = reconstruction_samples(
            &[SkeletonSequence::new(frames(2), 30.0), SkeletonSequence::new(frames(3), 30.0)],
            0.8,
            1,
        )
        .unwrap();
        let copies: Vec<Vec<f32>> = samples
            .iter()
            .map(|s| match &s.target {
                Target::Window(w) => w.clone(),
                Target::Class(_) => unreachable!(),
            })
            .collect();
        assert_eq!(score(TaskKind::Reconstruction, MaeKind::Coordinate, &copies, &samples).unwrap(), 0.0);
        assert!(score(TaskKind::Reconstruction, MaeKind::Coordinate, &[], &[]).is_err());
    }

    #[test]
    fn chance_level_classifier() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 20_000;
        let samples: Vec<Sample> = (0..n)
            .map(|_| Sample {
                input: Vec::new(),
                target: Target::Class(rng.random_range(0..60)),
            })
            .collect();
        let outputs: Vec<Vec<f32>> = (0..n).map(|_| (0..60).map(|_| rng.random::<f32>()).collect()).collect();
        let acc = score(TaskKind::Classification, MaeKind::Coordinate, &outputs, &samples).unwrap();
        let p = 1.0 / 60.0;
        let sd = 100.0 * (p * (1.0 - p) / n as f64).sqrt();
        assert!((acc - 100.0 * p).abs() < 4.0 * sd, "acc {acc}");
    }

    fn labeled(n: usize) -> Vec<SkeletonSequence> {
        (0..n)
            .map(|i| {
                let mut f = frames(100 + i as u64);
                let c = i % 3;
                for fr in &mut f {
                    fr.joints[c][2] += 2.0;
                }
                SkeletonSequence::new(f, 30.0).with_label(Some(c as u32))
            })
            .collect()
    }

    #[test]
    fn frozen_training_leaves_encoder_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let enc = Encoder::<f32>::init(EncoderPlan::stgcn(), &mut rng).unwrap();
        let before = enc.params.checksum();
        let train = classification_samples(&labeled(24)).unwrap();
        let spec = TaskSpec {
            epochs: 30,
            batch_size: 8,
            ..TaskSpec::default()
        };
        let out = train_head(&spec, &enc, &train, 3).unwrap();
        assert_eq!(out.encoder.params.checksum(), before);
        assert!(out.losses.last().unwrap() < &out.losses[0]);
        assert_eq!(out.trainable_params, 128 * 3 + 3);
        let acc = evaluate(&spec, &out, &train).unwrap();
        assert!((0.0..=100.0).contains(&acc));
    }

    #[test]
    fn finetune_updates_encoder_and_counts_more_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let enc = Encoder::<f32>::init(EncoderPlan::stgcn(), &mut rng).unwrap();
        let train = classification_samples(&labeled(6)).unwrap();
        let spec = TaskSpec {
            epochs: 2,
            batch_size: 3,
            mode: Mode::Finetune,
            ..TaskSpec::default()
        };
        let out = train_head(&spec, &enc, &train, 3).unwrap();
        assert_ne!(out.encoder.params.checksum(), enc.params.checksum());
        assert_eq!(out.trainable_params, 128 * 3 + 3 + enc.params.num_params());
    }

    #[test]
    fn label_task_without_labels_is_config_error() {
        let w = vec![SkeletonSequence::new(frames(4), 30.0)];
        assert!(matches!(classification_samples(&w), Err(Error::Config(_))));
    }

    #[test]
    fn ledger_appends_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.csv");
        let r = TaskReport {
            task: TaskKind::MotionPrediction,
            mode: Mode::Frozen,
            metric: "mae_mm".into(),
            value: 12.5,
            std: None,
            profile: "baseline".into(),
            encoder: "stgcn".into(),
            seed: 2,
            epochs: 10,
            trainable_params: 1,
            train_samples: 1,
            test_samples: 1,
        };
        append_ledger(&path, std::slice::from_ref(&r)).unwrap();
        append_ledger(&path, &[r]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], LEDGER_HEADER);
        assert_eq!(lines[1], "baseline,motion-prediction,frozen,stgcn,2,mae_mm,12.5,true");
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn mean_std_basics() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }
}
