//! NT-Xent loss and the SimCLR pretraining loop.

use crate::augment::{make_views, AugmentationConfig, RngStream};
use crate::encoders::{Encoder, EncoderPlan, Projection, ProjectionPlan};
use crate::error::{Error, Result};
use crate::nn::optim::{Lars, LarsConfig};
use crate::nn::schedule::lr_schedule;
use crate::nn::{Scalar, Tape, Tensor, Var};
use crate::skeleton::{build_adjacency, flatten_frames, SkeletonGraph, SkeletonSequence, WINDOW_LEN};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Index of the other view of row `i` (views are interleaved: 2k, 2k+1).
pub fn partner(i: usize) -> usize {
    i ^ 1
}

/// Normalized-temperature cross-entropy over `z` [2N, D]:
///
/// ```text
/// loss = 1/2N Σ_i −log( exp(cos(z_i, z_partner)/τ) / Σ_{k≠i} exp(cos(z_i, z_k)/τ) )
/// ```
pub fn nt_xent<T: Scalar>(tape: &mut Tape<T>, z: Var, tau: f64) -> Result<Var> {
    let shape = tape.shape(z).to_vec();
    if shape.len() != 2 || shape[0] < 4 || !shape[0].is_multiple_of(2) {
        return Err(Error::dim("nt_xent", format!("need [2N, D] with N >= 2, got {shape:?}")));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Config(format!("temperature must be positive, got {tau}")));
    }
    let rows = shape[0];
    let zn = tape.l2_normalize(z)?;
    let sim = tape.matmul_t(zn, zn, false, true)?;
    let logits = tape.scale(sim, T::from_f64_lossy(1.0 / tau));
    let masked = tape.mask_diagonal(logits)?;
    let logp = tape.log_softmax(masked)?;
    let index: Vec<usize> = (0..rows).map(partner).collect();
    let picked = tape.gather(logp, &index)?;
    let m = tape.mean(picked);
    Ok(tape.scale(m, -T::one()))
}

/// Loss value of fully collapsed projections.
pub fn collapse_loss(n: usize) -> f64 {
    ((2 * n - 1) as f64).ln()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub peak_lr: f64,
    pub warmup_epochs: usize,
    pub temperature: f64,
    /// Augmentation profile name, see [`AugmentationConfig::profile`].
    pub profile: String,
    /// `stgcn` or `mlp`.
    pub encoder: String,
    pub lars: LarsConfig,
    /// Samples per gradient shard; shards run in parallel.
    pub shard_size: usize,
}

/// LARS trust coefficient used at desk scale, where a few dozen optimizer
/// steps must move the weights.
pub const DESK_TRUST_COEFFICIENT: f64 = 0.1;

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            batch_size: 256,
            epochs: 20,
            peak_lr: 0.01,
            warmup_epochs: 10,
            temperature: 0.1,
            profile: "baseline".into(),
            encoder: "stgcn".into(),
            lars: LarsConfig {
                trust_coefficient: DESK_TRUST_COEFFICIENT,
                ..LarsConfig::default()
            },
            shard_size: 32,
        }
    }
}

impl PretrainConfig {
    /// Batch 8096, 500 epochs, trust coefficient 0.001.
    pub fn large_batch() -> Self {
        PretrainConfig {
            batch_size: 8096,
            epochs: 500,
            lars: LarsConfig::default(),
            ..PretrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 || self.shard_size == 0 {
            return Err(Error::Config("batch size must be >= 2 and shard size >= 1".into()));
        }
        if !(self.peak_lr > 0.0 && self.temperature > 0.0) {
            return Err(Error::Config("learning rate and temperature must be positive".into()));
        }
        if self.epochs > 0 && self.warmup_epochs >= self.epochs {
            return Err(Error::Config(format!(
                "warmup ({}) must be shorter than training ({} epochs)",
                self.warmup_epochs, self.epochs
            )));
        }
        if !(self.lars.trust_coefficient > 0.0 && (0.0..1.0).contains(&self.lars.momentum)) {
            return Err(Error::Config("invalid LARS settings".into()));
        }
        AugmentationConfig::profile(&self.profile)?;
        EncoderPlan::from_tag(&self.encoder)?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStat {
    pub epoch: usize,
    pub mean_loss: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainOutcome {
    pub encoder: Encoder<f32>,
    pub head: Projection<f32>,
    pub curve: Vec<EpochStat>,
}

pub fn write_loss_csv(mut w: impl Write, curve: &[EpochStat]) -> Result<()> {
    writeln!(w, "epoch,mean_loss,lr")?;
    for s in curve {
        writeln!(w, "{},{},{}", s.epoch, s.mean_loss, s.lr)?;
    }
    Ok(())
}

/// Initial encoder and head for `seed`.
pub fn init_models(plan: EncoderPlan, seed: u64) -> Result<(Encoder<f32>, Projection<f32>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0xe0c0de);
    let enc = Encoder::init(plan, &mut rng)?;
    let head = Projection::init(ProjectionPlan::default(), &mut rng);
    Ok((enc, head))
}

struct Shard {
    tape: Tape<f32>,
    z: Var,
    params: Vec<Var>,
}

fn forward_shard(enc: &Encoder<f32>, head: &Projection<f32>, views: &[Vec<f32>], graph: &SkeletonGraph) -> Result<Shard> {
    let mut tape = Tape::new();
    let be = enc.params.bind(&mut tape, true);
    let bh = head.params.bind(&mut tape, true);
    let refs: Vec<&[f32]> = views.iter().map(Vec::as_slice).collect();
    let x = crate::encoders::batch_input(&mut tape, &refs, false)?;
    let h = enc.forward(&mut tape, &be, x, graph)?;
    let z = crate::encoders::project(&mut tape, &bh, &head.plan, h)?;
    let params = be.vars.iter().chain(&bh.vars).copied().collect();
    Ok(Shard { tape, z, params })
}

/// One optimizer step's loss and summed parameter gradients over a batch of
/// interleaved views.
pub fn batch_gradients(
    enc: &Encoder<f32>,
    head: &Projection<f32>,
    views: &[Vec<f32>],
    tau: f64,
    shard_size: usize,
    graph: &SkeletonGraph,
) -> Result<(f64, Vec<Vec<f32>>)> {
    let shards: Vec<Shard> = views
        .par_chunks(2 * shard_size)
        .map(|chunk| forward_shard(enc, head, chunk, graph))
        .collect::<Result<_>>()?;
    let dim = head.plan.widths.last().copied().unwrap_or(0);
    let mut zs = Vec::with_capacity(views.len() * dim);
    for s in &shards {
        zs.extend_from_slice(&s.tape.value(s.z).data);
    }
    let mut lt = Tape::new();
    let z = lt.leaf(Tensor::new(&[views.len(), dim], zs)?);
    let loss = nt_xent(&mut lt, z, tau)?;
    let value = lt.value(loss).data[0] as f64;
    let mut lg = lt.backward(loss)?;
    let dz = lg.take_or_zeros(z, views.len() * dim);
    let mut offset = 0;
    let per_shard: Vec<Vec<Vec<f32>>> = shards
        .iter()
        .map(|s| {
            let n = s.tape.value(s.z).data.len();
            let seed = dz[offset..offset + n].to_vec();
            offset += n;
            (s, seed)
        })
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(s, seed)| -> Result<Vec<Vec<f32>>> {
            let mut g = s.tape.backward_with(s.z, seed)?;
            Ok(s.params
                .iter()
                .map(|&p| {
                    let len = s.tape.value(p).data.len();
                    g.take_or_zeros(p, len)
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut total = per_shard[0].clone();
    for shard in &per_shard[1..] {
        for (acc, g) in total.iter_mut().zip(shard) {
            acc.iter_mut().zip(g).for_each(|(a, &b)| *a += b);
        }
    }
    Ok((value, total))
}

fn check_windows(windows: &[SkeletonSequence]) -> Result<()> {
    if windows.len() < 2 {
        return Err(Error::Empty(format!("pretraining needs at least 2 windows, got {}", windows.len())));
    }
    if let Some(w) = windows.iter().find(|w| w.len() != WINDOW_LEN) {
        return Err(Error::dim("pretrain", format!("window of {} frames, expected {WINDOW_LEN}", w.len())));
    }
    Ok(())
}

pub fn pretrain(config: &PretrainConfig, windows: &[SkeletonSequence], seed: u64) -> Result<PretrainOutcome> {
    pretrain_with(config, windows, seed, |_| {})
}

/// Runs SimCLR pretraining. Batches are drawn from a seeded shuffle each
/// epoch; a trailing batch of one sample is skipped. `on_epoch` sees every
/// epoch's statistics as they complete.
pub fn pretrain_with(
    config: &PretrainConfig,
    windows: &[SkeletonSequence],
    seed: u64,
    mut on_epoch: impl FnMut(&EpochStat),
) -> Result<PretrainOutcome> {
    config.validate()?;
    check_windows(windows)?;
    let aug = AugmentationConfig::profile(&config.profile)?;
    let (mut enc, mut head) = init_models(EncoderPlan::from_tag(&config.encoder)?, seed)?;
    let graph = build_adjacency();
    let stream = RngStream::new(seed);
    let mut enc_opt = Lars::new(config.lars, &enc.params);
    let mut head_opt = Lars::new(config.lars, &head.params);
    let mut curve = Vec::with_capacity(config.epochs);
    let mut step = 0;
    for epoch in 0..config.epochs {
        let lr = lr_schedule(epoch, config.epochs, config.warmup_epochs, config.peak_lr);
        let mut order: Vec<usize> = (0..windows.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1 << 48 | epoch as u64);
        order.shuffle(&mut rng);
        let mut losses = Vec::new();
        for batch in order.chunks(config.batch_size).filter(|b| b.len() >= 2) {
            let views: Vec<Vec<f32>> = batch
                .par_iter()
                .flat_map_iter(|&i| {
                    let (a, b) = make_views(&windows[i], &aug, stream, epoch, i);
                    [flatten_frames(&a), flatten_frames(&b)]
                })
                .collect();
            let (loss, grads) = batch_gradients(&enc, &head, &views, config.temperature, config.shard_size, &graph)?;
            if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite { what: "loss", epoch, step });
            }
            let (ge, gh) = grads.split_at(enc.params.len());
            enc_opt
                .step(&mut enc.params, ge, lr)
                .and_then(|_| head_opt.step(&mut head.params, gh, lr))
                .map_err(|_| Error::NonFinite { what: "parameter", epoch, step })?;
            losses.push(loss);
            step += 1;
        }
        let stat = EpochStat {
            epoch,
            mean_loss: losses.iter().sum::<f64>() / losses.len() as f64,
            lr,
        };
        on_epoch(&stat);
        curve.push(stat);
    }
    Ok(PretrainOutcome {
        encoder: enc,
        head,
        curve,
    })
}
