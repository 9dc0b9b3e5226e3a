//! Experiment configuration, corpus preparation and the ablation grid.

use crate::augment::AugmentationConfig;
use crate::contrastive::{init_models, pretrain_with, EpochStat, PretrainConfig, PretrainOutcome};
use crate::downstream::{
    classification_samples, evaluate, mean_std, LedgerRow, prediction_samples, reconstruction_samples, train_head, Mode,
    Sample, TaskKind, TaskReport, TaskSpec,
};
use crate::encoders::{Encoder, EncoderPlan};
use crate::error::{Error, Result};
use crate::preprocess::{normalize_canonical, resample_fps};
use crate::skeleton::io::read_skseq;
use crate::skeleton::{window, SkeletonSequence, WINDOW_LEN};
use crate::synth::{synth_generate, SyntheticSpec};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Whether training-set fractions subsample task windows or whole sequences.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subsample {
    #[default]
    Windows,
    Sequences,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSpec {
    /// Directory of preprocessed `.skseq` files; the synthetic generator is
    /// used when absent.
    pub input_dir: Option<PathBuf>,
    pub synthetic: SyntheticSpec,
    /// Seed of the corpus and of the train/test split.
    pub seed: u64,
    pub test_fraction: f64,
    pub window_stride: usize,
    pub prediction_stride: usize,
    pub resample_fps: Option<f64>,
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec {
            input_dir: None,
            synthetic: SyntheticSpec::default(),
            seed: 0,
            test_fraction: 0.2,
            window_stride: 25,
            prediction_stride: 10,
            resample_fps: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSpec {
    pub rows: Vec<String>,
}

/// Rows of the full grid, in table order.
pub const ABLATION_ROWS: [&str; 16] = [
    "baseline",
    "finetuning",
    "mlp-backbone",
    "15%",
    "10%",
    "5%",
    "without-axis-mirror",
    "without-random-scale",
    "without-joint-jitter",
    "without-slow-down",
    "without-speed-up",
    "without-frame-dropout",
    "without-joint-dropout",
    "spatial-only",
    "temporal-only",
    "with-rotation",
];

impl Default for AblationSpec {
    fn default() -> Self {
        AblationSpec {
            rows: ABLATION_ROWS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    pub train_fraction: f64,
    pub subsample: Subsample,
    pub pretrain: PretrainConfig,
    pub tasks: Vec<TaskSpec>,
    pub data: DataSpec,
    pub ablation: AblationSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seeds: vec![0, 1, 2],
            output: PathBuf::from("runs"),
            train_fraction: 1.0,
            subsample: Subsample::Windows,
            pretrain: PretrainConfig::default(),
            tasks: TaskKind::ALL.iter().map(|&k| TaskSpec::new(k)).collect(),
            data: DataSpec::default(),
            ablation: AblationSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(format!("experiment config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::Config("train fraction must lie in (0, 1]".into()));
        }
        let d = &self.data;
        if !(0.0..1.0).contains(&d.test_fraction) || d.window_stride == 0 || d.prediction_stride == 0 {
            return Err(Error::Config("invalid data split or stride".into()));
        }
        if d.input_dir.is_none() {
            d.synthetic.validate()?;
        }
        self.pretrain.validate()?;
        for t in &self.tasks {
            t.validate()?;
        }
        for r in &self.ablation.rows {
            RowPlan::resolve(r, self)?;
        }
        Ok(())
    }

    pub fn task(&self, kind: TaskKind) -> TaskSpec {
        self.tasks
            .iter()
            .find(|t| t.kind == kind)
            .cloned()
            .unwrap_or_else(|| TaskSpec::new(kind))
    }
}

/// Normalized sequences split into train and test parts.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub train: Vec<SkeletonSequence>,
    pub test: Vec<SkeletonSequence>,
}

/// `.skseq` files of a directory in file-name order.
pub fn read_skseq_dir(dir: &Path) -> Result<Vec<SkeletonSequence>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "skseq"))
        .collect();
    paths.sort();
    paths.iter().map(read_skseq).collect()
}

/// Loads (or generates and normalizes) every sequence named by `data`.
pub fn load_sequences(data: &DataSpec) -> Result<Vec<SkeletonSequence>> {
    let mut seqs = match &data.input_dir {
        Some(dir) => read_skseq_dir(dir)?,
        None => synth_generate(&data.synthetic, data.seed)?
            .iter()
            .map(|s| normalize_canonical(s).map(|(n, _)| n))
            .collect::<Result<_>>()?,
    };
    if let Some(fps) = data.resample_fps {
        seqs = seqs.iter().map(|s| resample_fps(s, fps)).collect::<Result<_>>()?;
    }
    if seqs.is_empty() {
        return Err(Error::Empty("no input sequences".into()));
    }
    Ok(seqs)
}

/// Seeded split, stratified by label: each class sends
/// round(test_fraction · n) of its sequences to the test side.
pub fn split(seqs: Vec<SkeletonSequence>, test_fraction: f64, seed: u64) -> Corpus {
    let mut groups: BTreeMap<Option<u32>, Vec<SkeletonSequence>> = BTreeMap::new();
    for s in seqs {
        groups.entry(s.label).or_default().push(s);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(7 << 40);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (_, mut g) in groups {
        g.shuffle(&mut rng);
        let k = (test_fraction * g.len() as f64).round() as usize;
        let rest = g.split_off(k);
        test.extend(g);
        train.extend(rest);
    }
    Corpus { train, test }
}

pub fn prepare_corpus(data: &DataSpec) -> Result<Corpus> {
    Ok(split(load_sequences(data)?, data.test_fraction, data.seed))
}

pub fn windows_of(seqs: &[SkeletonSequence], stride: usize) -> Vec<SkeletonSequence> {
    seqs.iter().flat_map(|s| window(s, WINDOW_LEN, stride)).collect()
}

/// Exactly round(fraction · n) items (at least one), chosen with `seed`,
/// in their original order.
pub fn subsample<T: Clone>(items: &[T], fraction: f64, seed: u64) -> Vec<T> {
    if fraction >= 1.0 {
        return items.to_vec();
    }
    let k = ((fraction * items.len() as f64).round() as usize).clamp(1, items.len().max(1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(11 << 40);
    let mut idx = rand::seq::index::sample(&mut rng, items.len(), k.min(items.len())).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| items[i].clone()).collect()
}

/// Training and test samples of one task.
pub fn task_samples(
    spec: &TaskSpec,
    data: &DataSpec,
    seqs: &[SkeletonSequence],
    seed: u64,
) -> Result<Vec<Sample>> {
    match spec.kind {
        TaskKind::Classification => classification_samples(&windows_of(seqs, data.window_stride)),
        TaskKind::Reconstruction => {
            reconstruction_samples(&windows_of(seqs, data.window_stride), spec.corruption_rate, seed)
        }
        TaskKind::MotionPrediction => Ok(prediction_samples(seqs, data.prediction_stride)),
    }
}

/// One configuration of the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RowPlan {
    pub name: String,
    pub profile: String,
    pub encoder: String,
    pub mode: Mode,
    pub fraction: f64,
}

impl RowPlan {
    pub fn resolve(name: &str, cfg: &ExperimentConfig) -> Result<RowPlan> {
        let mut row = RowPlan {
            name: name.to_string(),
            profile: cfg.pretrain.profile.clone(),
            encoder: cfg.pretrain.encoder.clone(),
            mode: Mode::Frozen,
            fraction: cfg.train_fraction,
        };
        match name {
            "baseline" => {}
            "finetuning" => row.mode = Mode::Finetune,
            "mlp-backbone" => row.encoder = "mlp".into(),
            pct if pct.ends_with('%') => {
                let v: f64 = pct
                    .trim_end_matches('%')
                    .parse()
                    .map_err(|_| Error::Config(format!("bad training-set fraction `{pct}`")))?;
                if !(v > 0.0 && v <= 100.0) {
                    return Err(Error::Config(format!("training-set fraction `{pct}` out of range")));
                }
                row.fraction = v / 100.0;
            }
            profile => {
                AugmentationConfig::profile(profile)?;
                row.profile = profile.to_string();
            }
        }
        Ok(row)
    }
}

/// Pretrained models keyed by (profile, encoder, seed), reused across rows
/// that only differ downstream.
#[derive(Default)]
pub struct PretrainCache {
    runs: HashMap<(String, String, u64), PretrainOutcome>,
}

impl PretrainCache {
    pub fn get_or_run(
        &mut self,
        cfg: &PretrainConfig,
        windows: &[SkeletonSequence],
        seed: u64,
        on_epoch: impl FnMut(&EpochStat),
    ) -> Result<&PretrainOutcome> {
        let key = (cfg.profile.clone(), cfg.encoder.clone(), seed);
        if !self.runs.contains_key(&key) {
            let out = pretrain_with(cfg, windows, seed, on_epoch)?;
            self.runs.insert(key.clone(), out);
        }
        Ok(&self.runs[&key])
    }
}

/// Trains and evaluates every task of `cfg` on top of `encoder`.
pub fn probe(
    cfg: &ExperimentConfig,
    corpus: &Corpus,
    encoder: &Encoder<f32>,
    mode: Mode,
    fraction: f64,
    label: &str,
    seed: u64,
) -> Result<Vec<TaskReport>> {
    let mut reports = Vec::new();
    for base in &cfg.tasks {
        let spec = TaskSpec { mode, ..base.clone() };
        let (train, test) = match cfg.subsample {
            Subsample::Windows => {
                let all = task_samples(&spec, &cfg.data, &corpus.train, seed)?;
                (subsample(&all, fraction, seed), task_samples(&spec, &cfg.data, &corpus.test, seed)?)
            }
            Subsample::Sequences => {
                let seqs = subsample(&corpus.train, fraction, seed);
                (task_samples(&spec, &cfg.data, &seqs, seed)?, task_samples(&spec, &cfg.data, &corpus.test, seed)?)
            }
        };
        let trained = train_head(&spec, encoder, &train, seed)?;
        let value = evaluate(&spec, &trained, &test)?;
        reports.push(TaskReport {
            task: spec.kind,
            mode,
            metric: spec.kind.metric_name().into(),
            value,
            std: None,
            profile: label.to_string(),
            encoder: encoder.plan.tag().into(),
            seed,
            epochs: spec.epochs,
            trainable_params: trained.trainable_params,
            train_samples: train.len(),
            test_samples: test.len(),
        });
    }
    Ok(reports)
}

/// A probe on an untrained encoder initialized exactly as pretraining
/// would for `seed`.
pub fn random_encoder(encoder: &str, seed: u64) -> Result<Encoder<f32>> {
    Ok(init_models(EncoderPlan::from_tag(encoder)?, seed)?.0)
}

/// Progress events of a grid run.
#[derive(Clone, Debug)]
pub enum Progress<'a> {
    Epoch { row: &'a str, seed: u64, stat: EpochStat },
    Report(&'a TaskReport),
}

/// Runs every row × seed of the grid. Rows are resolved before any work
/// starts, so an unknown name fails fast.
pub fn run_ablation(
    cfg: &ExperimentConfig,
    rows: &[String],
    mut on_progress: impl FnMut(Progress<'_>),
) -> Result<Vec<TaskReport>> {
    let plans: Vec<RowPlan> = rows.iter().map(|r| RowPlan::resolve(r, cfg)).collect::<Result<_>>()?;
    let corpus = prepare_corpus(&cfg.data)?;
    let windows = windows_of(&corpus.train, cfg.data.window_stride);
    let mut cache = PretrainCache::default();
    let mut reports = Vec::new();
    for plan in &plans {
        let pcfg = PretrainConfig {
            profile: plan.profile.clone(),
            encoder: plan.encoder.clone(),
            ..cfg.pretrain.clone()
        };
        for &seed in &cfg.seeds {
            let name = plan.name.as_str();
            let pre = cache.get_or_run(&pcfg, &windows, seed, |s| {
                on_progress(Progress::Epoch { row: name, seed, stat: *s })
            })?;
            let encoder = pre.encoder.clone();
            for r in probe(cfg, &corpus, &encoder, plan.mode, plan.fraction, name, seed)? {
                on_progress(Progress::Report(&r));
                reports.push(r);
            }
        }
    }
    Ok(reports)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Cell {
    pub task: TaskKind,
    pub mean: f64,
    pub std: f64,
    pub seeds: usize,
    /// Difference to the baseline row's mean.
    pub delta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableRow {
    pub name: String,
    pub cells: Vec<Option<Cell>>,
}

/// Rows × task metrics, aggregated over seeds from raw per-seed reports.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationTable {
    pub tasks: Vec<TaskKind>,
    pub rows: Vec<TableRow>,
}

impl AblationTable {
    pub fn from_reports(reports: &[TaskReport], row_order: &[String]) -> AblationTable {
        let rows: Vec<LedgerRow> = reports.iter().map(LedgerRow::from).collect();
        Self::from_ledger(&rows, row_order)
    }

    pub fn from_ledger(reports: &[LedgerRow], row_order: &[String]) -> AblationTable {
        let mut tasks: Vec<TaskKind> = Vec::new();
        for r in reports {
            if !tasks.contains(&r.task) {
                tasks.push(r.task);
            }
        }
        tasks.sort_by_key(|t| TaskKind::ALL.iter().position(|k| k == t));
        let stats = |row: &str, task: TaskKind| {
            let vals: Vec<f64> = reports
                .iter()
                .filter(|r| r.profile == row && r.task == task)
                .map(|r| r.value)
                .collect();
            (!vals.is_empty()).then(|| {
                let (m, s) = mean_std(&vals);
                (m, s, vals.len())
            })
        };
        let rows = row_order
            .iter()
            .map(|name| TableRow {
                name: name.clone(),
                cells: tasks
                    .iter()
                    .map(|&task| {
                        stats(name, task).map(|(mean, std, seeds)| Cell {
                            task,
                            mean,
                            std,
                            seeds,
                            delta: stats("baseline", task).map(|(b, _, _)| mean - b),
                        })
                    })
                    .collect(),
            })
            .collect();
        AblationTable { tasks, rows }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,task,metric,mean,std,delta,seeds\n");
        for row in &self.rows {
            for c in row.cells.iter().flatten() {
                let delta = c.delta.map(|d| d.to_string()).unwrap_or_default();
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    row.name,
                    c.task,
                    c.task.metric_name(),
                    c.mean,
                    c.std,
                    delta,
                    c.seeds
                );
            }
        }
        out
    }

    /// Fixed-width table with one mean ± std and one Δ column per task.
    pub fn to_text(&self) -> String {
        let mut header = vec!["Row".to_string()];
        for t in &self.tasks {
            let unit = if t.higher_is_better() { "acc %" } else { "MAE mm" };
            header.push(format!("{t} ({unit})"));
            header.push("Δ".into());
        }
        let mut lines = vec![header];
        for row in &self.rows {
            let mut line = vec![row.name.clone()];
            for c in &row.cells {
                match c {
                    Some(c) => {
                        line.push(format!("{:.2} ± {:.2}", c.mean, c.std));
                        line.push(c.delta.map(|d| format!("{d:+.2}")).unwrap_or_else(|| "-".into()));
                    }
                    None => line.extend(["-".to_string(), "-".to_string()]),
                }
            }
            lines.push(line);
        }
        let cols = lines[0].len();
        let widths: Vec<usize> = (0..cols)
            .map(|i| lines.iter().map(|l| l[i].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (n, l) in lines.iter().enumerate() {
            let cells: Vec<String> = l
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, &w))| {
                    let pad = w - c.chars().count();
                    if i == 0 {
                        format!("{c}{}", " ".repeat(pad))
                    } else {
                        format!("{}{c}", " ".repeat(pad))
                    }
                })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
            if n == 0 {
                let total = widths.iter().sum::<usize>() + 2 * (cols - 1);
                out.push_str(&"-".repeat(total));
                out.push('\n');
            }
        }
        out
    }
}
