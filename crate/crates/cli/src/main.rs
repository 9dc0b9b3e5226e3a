use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use skelrep_core::augment::{AugmentationConfig, AugmentationKind};
use skelrep_core::contrastive::{pretrain_with, write_loss_csv};
use skelrep_core::downstream::{append_ledger, mean_std, read_ledger, Mode, TaskKind, TaskReport};
use skelrep_core::encoders::EncoderCheckpoint;
use skelrep_core::experiment::{
    prepare_corpus, probe, run_ablation, windows_of, AblationTable, ExperimentConfig, Progress,
};
use skelrep_core::preprocess::{normalize_sequence, resample_fps, JointMapping, RawSequence};
use skelrep_core::skeleton::io::{read_skseq, write_skseq};
use skelrep_core::synth::synth_generate;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "skelrep", version, about = "Contrastive pretraining of 15-joint skeleton encoders")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment config (TOML); defaults apply to missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output root. Each command writes into its own subdirectory.
    #[arg(long, global = true, env = "SKELREP_OUT")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Args, Default)]
struct Overrides {
    /// Comma-separated seed list.
    #[arg(long = "seed", value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Augmentation profile used for pretraining.
    #[arg(long)]
    profile: Option<String>,
    /// Encoder architecture: stgcn or mlp.
    #[arg(long)]
    encoder: Option<String>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    /// Directory of preprocessed .skseq files instead of synthetic data.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    resample_fps: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic labeled corpus as raw global-coordinate .skseq files.
    Synth {
        #[arg(long = "seed")]
        seed: Option<u64>,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        per_class: Option<usize>,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        /// Write RawSequence JSON instead of .skseq.
        #[arg(long)]
        json: bool,
    },
    /// Normalize a directory of .json (RawSequence) or .skseq files.
    Preprocess {
        input: PathBuf,
        /// JSON list of [canonical joint, [source joints...]] pairs.
        #[arg(long)]
        mapping: Option<PathBuf>,
        #[arg(long)]
        resample_fps: Option<f64>,
    },
    /// Contrastive pretraining; writes one checkpoint and loss curve per seed.
    Pretrain {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Train and evaluate downstream heads on a pretrained encoder.
    Probe {
        #[arg(long)]
        checkpoint: PathBuf,
        /// classification, reconstruction, motion-prediction or all.
        #[arg(long, default_value = "all")]
        task: String,
        #[arg(long)]
        finetune: bool,
        /// Downstream training epochs.
        #[arg(long)]
        epochs: Option<usize>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the ablation grid and print the results table.
    Ablate {
        #[command(flatten)]
        overrides: Overrides,
        /// Pretraining epochs.
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        probe_epochs: Option<usize>,
        /// Comma-separated row names; defaults to the config's grid.
        #[arg(long, value_delimiter = ',')]
        rows: Vec<String>,
    },
    /// List augmentation profiles.
    Profiles,
    /// Print the effective experiment config.
    Config,
}

/// Error carrying its exit code: 2 for usage and configuration problems,
/// 1 for failures while running.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn usage(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 2,
        error: error.into(),
    }
}

impl From<skelrep_core::Error> for Failure {
    fn from(e: skelrep_core::Error) -> Self {
        let code = if matches!(e, skelrep_core::Error::Config(_)) { 2 } else { 1 };
        Failure {
            code,
            error: e.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure { code: 1, error }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure {
            code: 1,
            error: e.into(),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let g = &cli.global;
    match cli.command {
        Command::Synth {
            seed,
            classes,
            per_class,
            frames,
            noise,
            json,
        } => {
            let mut cfg = load_config(g)?;
            let s = &mut cfg.data.synthetic;
            classes.inspect(|&v| s.classes = v);
            per_class.inspect(|&v| s.sequences_per_class = v);
            frames.inspect(|&v| s.frames = v);
            noise.inspect(|&v| s.noise = v);
            seed.inspect(|&v| cfg.data.seed = v);
            cfg.data.synthetic.validate()?;
            cmd_synth(&cfg, &out_dir(g, &cfg, "synth"), json)
        }
        Command::Preprocess {
            input,
            mapping,
            resample_fps,
        } => {
            let cfg = load_config(g)?;
            let mapping = match mapping {
                Some(p) => JointMapping::read(&p)
                    .map_err(|e| usage(anyhow!(e).context(format!("mapping file {}", p.display()))))?,
                None => JointMapping::identity(),
            };
            cmd_preprocess(&input, &out_dir(g, &cfg, "preprocessed"), &mapping, resample_fps)
        }
        Command::Pretrain { overrides, epochs } => {
            let mut cfg = load_config(g)?;
            apply(&mut cfg, &overrides);
            epochs.inspect(|&e| cfg.pretrain.epochs = e);
            fit_warmup(&mut cfg);
            cfg.validate()?;
            cmd_pretrain(&cfg, &out_dir(g, &cfg, "pretrain"), g.format)
        }
        Command::Probe {
            checkpoint,
            task,
            finetune,
            epochs,
            overrides,
        } => {
            let mut cfg = load_config(g)?;
            apply(&mut cfg, &overrides);
            if task != "all" {
                let kind = TaskKind::from_name(&task)?;
                cfg.tasks = vec![cfg.task(kind)];
            }
            for t in &mut cfg.tasks {
                epochs.inspect(|&e| t.epochs = e);
            }
            cfg.validate()?;
            if !checkpoint.is_file() {
                return Err(usage(anyhow!("checkpoint {} not found", checkpoint.display())));
            }
            let mode = if finetune { Mode::Finetune } else { Mode::Frozen };
            cmd_probe(&cfg, &checkpoint, mode, &out_dir(g, &cfg, "probe"), g.format)
        }
        Command::Ablate {
            overrides,
            epochs,
            probe_epochs,
            rows,
        } => {
            let mut cfg = load_config(g)?;
            apply(&mut cfg, &overrides);
            epochs.inspect(|&e| cfg.pretrain.epochs = e);
            fit_warmup(&mut cfg);
            for t in &mut cfg.tasks {
                probe_epochs.inspect(|&e| t.epochs = e);
            }
            if !rows.is_empty() {
                cfg.ablation.rows = rows;
            }
            cfg.validate()?;
            cmd_ablate(&cfg, &out_dir(g, &cfg, "ablate"), g.format)
        }
        Command::Profiles => {
            for name in AugmentationConfig::profile_names() {
                let p = AugmentationConfig::profile(&name)?;
                let on: Vec<&str> = AugmentationKind::ORDER
                    .iter()
                    .filter(|&&k| p.is_enabled(k))
                    .map(|k| k.name())
                    .collect();
                println!("{name:<24} {}", if on.is_empty() { "(none)".into() } else { on.join(", ") });
            }
            Ok(())
        }
        Command::Config => {
            print!("{}", load_config(g)?.to_toml());
            Ok(())
        }
    }
}

fn load_config(g: &Global) -> CliResult<ExperimentConfig> {
    match &g.config {
        Some(p) => Ok(ExperimentConfig::read(p)?),
        None => Ok(ExperimentConfig::default()),
    }
}

fn apply(cfg: &mut ExperimentConfig, o: &Overrides) {
    if !o.seeds.is_empty() {
        cfg.seeds = o.seeds.clone();
    }
    let p = &mut cfg.pretrain;
    if let Some(v) = &o.profile {
        p.profile = v.clone();
    }
    if let Some(v) = &o.encoder {
        p.encoder = v.clone();
    }
    o.batch.inspect(|&v| p.batch_size = v);
    o.temperature.inspect(|&v| p.temperature = v);
    if let Some(v) = &o.input {
        cfg.data.input_dir = Some(v.clone());
    }
    o.resample_fps.inspect(|&v| cfg.data.resample_fps = Some(v));
}

/// Keeps a shortened run valid: warmup is clipped to half the epochs.
fn fit_warmup(cfg: &mut ExperimentConfig) {
    let p = &mut cfg.pretrain;
    if p.epochs > 0 && p.warmup_epochs >= p.epochs {
        p.warmup_epochs = p.epochs / 2;
    }
}

fn out_dir(g: &Global, cfg: &ExperimentConfig, sub: &str) -> PathBuf {
    g.out.clone().unwrap_or_else(|| cfg.output.clone()).join(sub)
}

fn cmd_synth(cfg: &ExperimentConfig, dir: &Path, as_json: bool) -> CliResult {
    fs::create_dir_all(dir)?;
    let spec = &cfg.data.synthetic;
    let seqs = synth_generate(spec, cfg.data.seed)?;
    for (i, s) in seqs.iter().enumerate() {
        if as_json {
            let raw = RawSequence::from_canonical(s);
            fs::write(dir.join(format!("{i:05}.json")), serde_json::to_vec(&raw).context("serialize")?)?;
        } else {
            write_skseq(dir.join(format!("{i:05}.skseq")), s)?;
        }
    }
    fs::write(dir.join("labels.txt"), spec.class_names().join("\n") + "\n")?;
    println!("wrote {} sequences ({} classes) to {}", seqs.len(), spec.classes, dir.display());
    Ok(())
}

fn cmd_preprocess(input: &Path, dir: &Path, mapping: &JointMapping, fps: Option<f64>) -> CliResult {
    let mut files: Vec<PathBuf> = fs::read_dir(input)
        .with_context(|| format!("input directory {}", input.display()))
        .map_err(usage)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json" || x == "skseq"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(usage(anyhow!("no .json or .skseq files in {}", input.display())));
    }
    fs::create_dir_all(dir)?;
    let mut log = fs::File::create(dir.join("normalization.jsonl"))?;
    let mut failed = 0;
    for path in &files {
        let name = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let result = (|| -> skelrep_core::Result<(usize, f64)> {
            let raw = if path.extension().is_some_and(|x| x == "json") {
                serde_json::from_str::<RawSequence>(&fs::read_to_string(path)?)?
            } else {
                RawSequence::from_canonical(&read_skseq(path)?)
            };
            let (mut seq, report) = normalize_sequence(&raw, mapping)?;
            if let Some(f) = fps {
                seq = resample_fps(&seq, f)?;
            }
            write_skseq(dir.join(format!("{name}.skseq")), &seq)?;
            Ok((seq.len(), report.scale_factor))
        })();
        let line = match result {
            Ok((frames, scale)) => {
                println!("{name}: scale {scale:.6}, {frames} frames");
                json!({"file": name, "frames": frames, "scale_factor": scale})
            }
            Err(e) => {
                failed += 1;
                eprintln!("{name}: failed: {e}");
                json!({"file": name, "error": e.to_string()})
            }
        };
        writeln!(log, "{line}")?;
    }
    println!("{} of {} files normalized into {}", files.len() - failed, files.len(), dir.display());
    if failed > 0 {
        return Err(anyhow!("{failed} file(s) failed").into());
    }
    Ok(())
}

fn cmd_pretrain(cfg: &ExperimentConfig, dir: &Path, format: Format) -> CliResult {
    let corpus = prepare_corpus(&cfg.data)?;
    let windows = windows_of(&corpus.train, cfg.data.window_stride);
    let p = &cfg.pretrain;
    let mut summary = Vec::new();
    for &seed in &cfg.seeds {
        let run_dir = dir.join(format!("{}-{}-seed{seed}", p.profile, p.encoder));
        fs::create_dir_all(&run_dir)?;
        let out = pretrain_with(p, &windows, seed, |s| {
            if format == Format::Text {
                eprintln!("seed {seed} epoch {:>3}  loss {:.4}  lr {:.5}", s.epoch, s.mean_loss, s.lr);
            }
        })?;
        let final_loss = out.curve.last().map(|s| s.mean_loss);
        let ckpt = EncoderCheckpoint {
            encoder: out.encoder,
            head: Some(out.head),
            meta: json!({
                "profile": p.profile,
                "encoder": p.encoder,
                "seed": seed,
                "epochs": p.epochs,
                "batch_size": p.batch_size,
                "temperature": p.temperature,
                "windows": windows.len(),
            }),
        };
        let ckpt_path = run_dir.join("encoder.ckpt");
        ckpt.save(&ckpt_path)?;
        write_loss_csv(fs::File::create(run_dir.join("loss.csv"))?, &out.curve)?;
        fs::write(run_dir.join("config.toml"), cfg.to_toml())?;
        summary.push(json!({"seed": seed, "checkpoint": ckpt_path, "final_loss": final_loss}));
        if format == Format::Text {
            println!("seed {seed}: checkpoint {}", ckpt_path.display());
        }
    }
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&summary).context("serialize")?),
        Format::Csv => {
            println!("seed,checkpoint,final_loss");
            for s in &summary {
                println!("{},{},{}", s["seed"], s["checkpoint"].as_str().unwrap_or(""), s["final_loss"]);
            }
        }
        Format::Text => {}
    }
    Ok(())
}

fn cmd_probe(cfg: &ExperimentConfig, checkpoint: &Path, mode: Mode, dir: &Path, format: Format) -> CliResult {
    let ckpt = EncoderCheckpoint::load(checkpoint)?;
    let label = ckpt.meta["profile"].as_str().unwrap_or("checkpoint").to_string();
    let corpus = prepare_corpus(&cfg.data)?;
    fs::create_dir_all(dir)?;
    let mut reports = Vec::new();
    for &seed in &cfg.seeds {
        let rs = probe(cfg, &corpus, &ckpt.encoder, mode, cfg.train_fraction, &label, seed)?;
        append_ledger(dir.join("ledger.csv"), &rs)?;
        reports.extend(rs);
    }
    let summary = aggregate(&reports);
    fs::write(dir.join("reports.json"), serde_json::to_string_pretty(&summary).context("serialize")?)?;
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&summary).context("serialize")?),
        Format::Csv => {
            println!("task,mode,metric,mean,std,seeds,trainable_params");
            for r in &summary {
                println!(
                    "{},{},{},{},{},{},{}",
                    r.task,
                    mode_name(r.mode),
                    r.metric,
                    r.value,
                    r.std.unwrap_or(0.0),
                    cfg.seeds.len(),
                    r.trainable_params
                );
            }
        }
        Format::Text => {
            for r in &summary {
                println!(
                    "{:<18} {:<8} {:<12} {:>8.2} ± {:.2}  ({} seeds, {} trainable parameters)",
                    r.task.name(),
                    mode_name(r.mode),
                    r.metric,
                    r.value,
                    r.std.unwrap_or(0.0),
                    cfg.seeds.len(),
                    r.trainable_params
                );
            }
        }
    }
    Ok(())
}

/// One report per task with the mean over seeds and its sample std.
fn aggregate(reports: &[TaskReport]) -> Vec<TaskReport> {
    let mut out: Vec<TaskReport> = Vec::new();
    for r in reports {
        if out.iter().any(|o| o.task == r.task) {
            continue;
        }
        let vals: Vec<f64> = reports.iter().filter(|o| o.task == r.task).map(|o| o.value).collect();
        let (mean, std) = mean_std(&vals);
        out.push(TaskReport {
            value: mean,
            std: Some(std),
            ..r.clone()
        });
    }
    out
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Frozen => "frozen",
        Mode::Finetune => "finetune",
    }
}

fn cmd_ablate(cfg: &ExperimentConfig, dir: &Path, format: Format) -> CliResult {
    fs::create_dir_all(dir)?;
    let ledger = dir.join("ledger.csv");
    if ledger.exists() {
        fs::remove_file(&ledger)?;
    }
    let mut write_err = None;
    run_ablation(cfg, &cfg.ablation.rows, |p| match p {
        Progress::Epoch { row, seed, stat } => {
            if format == Format::Text && (stat.epoch + 1) % 5 == 0 {
                eprintln!("{row} seed {seed} epoch {:>3}  loss {:.4}", stat.epoch, stat.mean_loss);
            }
        }
        Progress::Report(r) => {
            if format == Format::Text {
                eprintln!("{} seed {} {} {:.3}", r.profile, r.seed, r.task, r.value);
            }
            if let Err(e) = append_ledger(&ledger, std::slice::from_ref(r)) {
                write_err.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    let table = AblationTable::from_ledger(&read_ledger(&ledger)?, &cfg.ablation.rows);
    fs::write(dir.join("table.csv"), table.to_csv())?;
    fs::write(dir.join("table.txt"), table.to_text())?;
    match format {
        Format::Text => print!("{}", table.to_text()),
        Format::Csv => print!("{}", table.to_csv()),
        Format::Json => println!("{}", serde_json::to_string_pretty(&table).context("serialize")?),
    }
    Ok(())
}
