//! `beats` command line: corpus generation, training, evaluation, the
//! loss-weight ablation and the invariant suite.

pub mod config;
pub mod report;


use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use config::{ParseError, RunConfig, Seeds};

use crate::checks::{registry, run_check, CheckOptions};
use crate::data::{augment_examples, generate_dataset, DataError, DatasetManifest, Split, MANIFEST_FILE};
use crate::model::{ablation_sweep, evaluate, train, Example, Metrics, Model, ModelError, ModelVariant};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, configuration or inputs; nothing was written.
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Config(_) | DataError::Modality { .. } | DataError::Manifest { .. } => Self::Validation(e.to_string()),
            _ => Self::Runtime(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(_) | ModelError::Weights(_) | ModelError::EmptySplit(_) => Self::Validation(e.to_string()),
            _ => Self::Runtime(e.to_string()),
        }
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "beats", version, about = "Speech-act classification with audio/text fusion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic corpus (WAV files and manifest).
    GenData(Common),
    /// Train the configured variants and report held-out metrics.
    Train(Common),
    /// Evaluate saved (or freshly initialized) models.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Directory holding `model-<variant>.json`; defaults to the output directory.
        #[arg(long)]
        models: Option<PathBuf>,
        /// Evaluate randomly initialized parameters instead of saved ones.
        #[arg(long)]
        untrained: bool,
    },
    /// Sweep the speech/text loss weight for both fusion schemes.
    Ablate(Common),
    /// Run the invariant suite.
    Verify {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run only checks whose name starts with this prefix.
        #[arg(long)]
        only: Option<String>,
        /// Sinkhorn tolerance used by the contract check (fault injection).
        #[arg(long)]
        inject_sinkhorn_tol: Option<f64>,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (the dataset directory for gen-data).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::from_file(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if code == 0 { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    match run(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let kind = if e.exit_code() == 1 { "invalid input" } else { "error" };
            let _ = writeln!(err, "beats: {kind}: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::GenData(c) => {
            let mut cfg = c.load()?;
            if let Some(dir) = c.out {
                cfg.data_dir = dir;
            }
            cmd_gen_data(&cfg, out).map(|_| ())
        }
        Command::Train(c) => {
            let cfg = with_out(c.load()?, c.out);
            cmd_train(&cfg, out).map(|_| ())
        }
        Command::Eval { common, models, untrained } => {
            let cfg = with_out(common.load()?, common.out);
            let models = if untrained { None } else { Some(models.unwrap_or_else(|| cfg.out_dir.clone())) };
            cmd_eval(&cfg, models.as_deref(), out).map(|_| ())
        }
        Command::Ablate(c) => {
            let cfg = with_out(c.load()?, c.out);
            cmd_ablate(&cfg, threads_from_env()?, out).map(|_| ())
        }
        Command::Verify {
            config,
            only,
            inject_sinkhorn_tol,
        } => {
            let cfg = match config {
                Some(p) => {
                    let c = RunConfig::from_file(&p)?;
                    c.validate()?;
                    c
                }
                None => RunConfig::default(),
            };
            let mut opts = CheckOptions {
                seeds: cfg.verify_seeds,
                ..CheckOptions::default()
            };
            if let Some(tol) = inject_sinkhorn_tol {
                if !(tol > 0.0 && tol.is_finite()) {
                    return Err(CliError::Validation(format!("--inject-sinkhorn-tol must be positive, got {tol}")));
                }
                opts.sinkhorn_tol = tol;
            }
            cmd_verify(&opts, only.as_deref(), out)
        }
    }
}

fn with_out(mut cfg: RunConfig, out: Option<PathBuf>) -> RunConfig {
    if let Some(dir) = out {
        cfg.out_dir = dir;
    }
    cfg
}

fn threads_from_env() -> Result<usize, CliError> {
    let available = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    match std::env::var("BEATS_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n.min(available)),
            _ => Err(CliError::Validation(format!("BEATS_THREADS must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(available),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(io_error(path))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(io_error(path))
}

pub struct GenSummary {
    pub manifest: PathBuf,
    pub counts: [usize; 3],
    pub checksum: String,
}

pub fn cmd_gen_data(cfg: &RunConfig, out: &mut dyn Write) -> Result<GenSummary, CliError> {
    let gen = cfg.generator_config();
    gen.validate()?;
    let manifest = generate_dataset(&gen, &cfg.data_dir)?;
    let counts = manifest.class_counts();
    let checksum = manifest.checksum()?;
    let total: usize = counts.iter().sum();
    let _ = writeln!(out, "{total} records ({}/{}/{})", counts[0], counts[1], counts[2]);
    let _ = writeln!(out, "manifest {}", manifest.path().display());
    let _ = writeln!(out, "sha256 {checksum}");
    Ok(GenSummary {
        manifest: manifest.path(),
        counts,
        checksum,
    })
}

/// Reads the manifest and both example sets; fails before any output is
/// written when the dataset is missing or a split is empty.
fn load_splits(cfg: &RunConfig) -> Result<(Vec<Example>, Vec<Example>), CliError> {
    let path = cfg.data_dir.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(CliError::Validation(format!(
            "no dataset at {} (run `beats gen-data` first)",
            path.display()
        )));
    }
    let manifest = DatasetManifest::read(&path)?;
    let train_set = manifest.examples(Split::Train)?;
    let mut eval_set = Vec::new();
    for &split in &cfg.eval_splits {
        eval_set.extend(manifest.examples(split)?);
    }
    if train_set.is_empty() {
        return Err(CliError::Validation(format!("{}: the train split is empty", path.display())));
    }
    if eval_set.is_empty() {
        return Err(CliError::Validation(format!("{}: the evaluation splits are empty", path.display())));
    }
    Ok((train_set, eval_set))
}

fn model_path(dir: &Path, variant: ModelVariant) -> PathBuf {
    dir.join(format!("model-{variant}.json"))
}

fn write_metrics(cfg: &RunConfig, rows: &[(ModelVariant, Metrics)], out: &mut dyn Write) -> Result<(), CliError> {
    let metrics = report::metrics_tsv(rows);
    let comparison = report::comparison_tsv(rows);
    write_file(&cfg.out_dir.join("metrics.tsv"), &metrics)?;
    write_file(&cfg.out_dir.join("comparison.tsv"), &comparison)?;
    let _ = write!(out, "{}", report::align(&comparison));
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig, out: &mut dyn Write) -> Result<Vec<(ModelVariant, Metrics)>, CliError> {
    let (train_set, eval_set) = load_splits(cfg)?;
    let train_set = augment_examples(&train_set, &cfg.augment, cfg.seeds().augment)?;
    create_dir(&cfg.out_dir)?;
    let mut rows = Vec::new();
    for &variant in &cfg.variants {
        let mut model = Model::new(cfg.model_config(variant))?;
        let log = train(&mut model, &train_set, &cfg.train_config())?;
        model.save(&model_path(&cfg.out_dir, variant))?;
        let mut curve = String::from("epoch\tloss\n");
        for (i, l) in log.epoch_losses.iter().enumerate() {
            curve.push_str(&format!("{}\t{l:.6}\n", i + 1));
        }
        write_file(&cfg.out_dir.join(format!("train-{variant}.tsv")), &curve)?;
        let eval = evaluate(&model, &eval_set)?;
        let _ = writeln!(
            out,
            "{variant}: {} training examples, final loss {:.4}, held-out macro-F1 {:.4}",
            train_set.len(),
            log.epoch_losses.last().copied().unwrap_or(f64::NAN),
            eval.metrics.macro_f1
        );
        rows.push((variant, eval.metrics));
    }
    write_metrics(cfg, &rows, out)?;
    Ok(rows)
}

pub fn cmd_eval(cfg: &RunConfig, models: Option<&Path>, out: &mut dyn Write) -> Result<Vec<(ModelVariant, Metrics)>, CliError> {
    let (_, eval_set) = load_splits(cfg)?;
    let mut loaded = Vec::new();
    for &variant in &cfg.variants {
        let model = match models {
            Some(dir) => {
                let path = model_path(dir, variant);
                if !path.is_file() {
                    return Err(CliError::Validation(format!("no saved model at {}", path.display())));
                }
                let m = Model::load(&path)?;
                if m.config.variant != variant {
                    return Err(CliError::Validation(format!("{} holds a {} model", path.display(), m.config.variant)));
                }
                m
            }
            None => Model::new(cfg.model_config(variant))?,
        };
        loaded.push((variant, model));
    }
    create_dir(&cfg.out_dir)?;
    let mut rows = Vec::new();
    for (variant, model) in &loaded {
        rows.push((*variant, evaluate(model, &eval_set)?.metrics));
    }
    write_metrics(cfg, &rows, out)?;
    Ok(rows)
}

pub fn cmd_ablate(cfg: &RunConfig, threads: usize, out: &mut dyn Write) -> Result<crate::model::AblationTable, CliError> {
    let (train_set, eval_set) = load_splits(cfg)?;
    let train_set = augment_examples(&train_set, &cfg.augment, cfg.seeds().augment)?;
    let base = cfg.model_config(ModelVariant::beats(cfg.schemes[0]));
    create_dir(&cfg.out_dir)?;
    let table = ablation_sweep(&base, &cfg.train_config(), &train_set, &eval_set, &cfg.grid, &cfg.schemes, threads)?;
    let grid = report::grid_tsv(&table);
    let best = report::best_alpha_tsv(&table);
    write_file(&cfg.out_dir.join("grid.tsv"), &grid)?;
    write_file(&cfg.out_dir.join("best_alpha.tsv"), &best)?;
    let _ = write!(out, "{}\n{}", report::align(&grid), report::align(&best));
    Ok(table)
}

pub fn cmd_verify(opts: &CheckOptions, only: Option<&str>, out: &mut dyn Write) -> Result<(), CliError> {
    let checks: Vec<_> = registry()
        .into_iter()
        .filter(|c| only.is_none_or(|p| c.name.starts_with(p)))
        .collect();
    if checks.is_empty() {
        return Err(CliError::Validation(format!("no check matches {:?}", only.unwrap_or(""))));
    }
    let mut failed = Vec::new();
    for check in &checks {
        let r = run_check(check, opts);
        let status = if r.passed { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "{status} {:<28} {:>7.2}s  {}", r.name, r.elapsed.as_secs_f64(), r.detail);
        if !r.passed {
            failed.push(r.name);
        }
    }
    let _ = writeln!(out, "{} of {} checks passed", checks.len() - failed.len(), checks.len());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(format!("failed checks: {}", failed.join(", "))))
    }
}
