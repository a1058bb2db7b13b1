//! Command-line front end: `gen-data`, `train`, `sample`, `evaluate` and
//! `ablate`.
//!
//! Exit codes are 0 on success, 1 on runtime failure and 2 on usage errors.
//! Every command overwrites its outputs, and identical flags produce
//! byte-identical files.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::checkpoint::TrainedModel;
use crate::error::{Error, Result};
use crate::experiment::{evaluate_points, guidance_for, run_sweep, Sweep, SweepContext};
use crate::numerics::Rng;
use crate::records::{
    fmt_f64, read_candidates, read_dataset, sidecar_path, write_candidates, write_dataset, write_results,
    write_sweep, write_train_log, write_trajectory, ExperimentResult, Metadata,
};
use crate::sampler::{sample_candidates, Integrator, SamplerConfig, DEFAULT_BUDGET, DEFAULT_GAMMA, DEFAULT_STEPS};
use crate::sde::{NoiseSchedule, DEFAULT_BETA_MAX, DEFAULT_BETA_MIN, DEFAULT_T_EPS};
use crate::tasks::{gen_dataset, DatasetKind, DatasetSpec, Task};
use crate::training::{train_with_progress, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "ddom", version, about = "Denoising diffusion models for offline black-box optimization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an offline dataset for a synthetic task.
    GenData(GenDataArgs),
    /// Train a score network on a dataset CSV.
    Train(TrainArgs),
    /// Draw candidates from a trained checkpoint.
    Sample(SampleArgs),
    /// Score candidates with the true objective.
    Evaluate(EvaluateArgs),
    /// Run a built-in ablation sweep.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, default_value = "branin")]
    pub task: Task,
    #[arg(long, default_value = "uniform")]
    pub kind: DatasetKind,
    #[arg(long, default_value_t = 5000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Share of the best points removed by `uniform_truncated`, in percent.
    #[arg(long, default_value_t = 10.0)]
    pub percentile: f64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Training hyperparameters shared by `train` and the retraining sweeps.
#[derive(Debug, Clone, Args)]
pub struct TrainFlags {
    #[arg(long, default_value_t = 1000)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    /// Probability of dropping the conditioning value during training.
    #[arg(long, default_value_t = 0.15)]
    pub dropout: f64,
    /// Bin smoothing K; defaults to 1% of the dataset size.
    #[arg(long)]
    pub smoothing: Option<f64>,
    /// Reweighting temperature tau.
    #[arg(long, default_value_t = 0.1)]
    pub temperature: f64,
    #[arg(long, default_value_t = 64)]
    pub n_bins: usize,
    /// Train with uniform weights.
    #[arg(long)]
    pub no_reweight: bool,
    /// Train without the conditioning value.
    #[arg(long)]
    pub unconditional: bool,
    #[arg(long, default_value_t = crate::score_net::DEFAULT_HIDDEN_WIDTH)]
    pub hidden_width: usize,
    #[arg(long, default_value_t = crate::score_net::DEFAULT_HIDDEN_LAYERS)]
    pub hidden_layers: usize,
    #[arg(long, default_value_t = crate::score_net::DEFAULT_FOURIER_FEATURES)]
    pub fourier_features: usize,
    #[arg(long, default_value_t = DEFAULT_BETA_MIN)]
    pub beta_min: f64,
    #[arg(long, default_value_t = DEFAULT_BETA_MAX)]
    pub beta_max: f64,
}

impl TrainFlags {
    pub fn to_config(&self, seed: u64, t_eps: f64) -> Result<TrainConfig> {
        Ok(TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            dropout: self.dropout,
            smoothing: self.smoothing,
            temperature: self.temperature,
            n_bins: self.n_bins,
            reweight: !self.no_reweight,
            conditional: !self.unconditional,
            hidden_width: self.hidden_width,
            hidden_layers: self.hidden_layers,
            fourier_features: self.fourier_features,
            schedule: NoiseSchedule::new(self.beta_min, self.beta_max)?,
            t_eps,
            seed,
        })
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Receives `model.ckpt` and `train_log.csv`.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub flags: TrainFlags,
    #[arg(long, default_value_t = DEFAULT_T_EPS)]
    pub t_eps: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Record wall-clock seconds in the training log.
    #[arg(long)]
    pub timing: bool,
}

/// Reverse-SDE settings shared by `sample` and `ablate`.
#[derive(Debug, Clone, Args)]
pub struct SamplerFlags {
    #[arg(long, default_value_t = DEFAULT_BUDGET, value_parser = positive)]
    pub q: usize,
    /// Guidance strength; -1 is unconditional, 0 is purely conditional.
    #[arg(long, default_value_t = DEFAULT_GAMMA, allow_negative_numbers = true, value_parser = guidance_strength)]
    pub gamma: f64,
    #[arg(long, default_value_t = DEFAULT_STEPS, value_parser = positive)]
    pub steps: usize,
    #[arg(long, default_value = "heun")]
    pub integrator: Integrator,
}

impl SamplerFlags {
    fn config(&self, t_eps: f64, record_trajectory: bool) -> SamplerConfig {
        SamplerConfig {
            steps: self.steps,
            integrator: self.integrator,
            t_eps,
            record_trajectory,
        }
    }
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub sampler: SamplerFlags,
    /// Conditioning value on the objective's scale; defaults to the dataset maximum.
    #[arg(long, allow_negative_numbers = true)]
    pub y_test: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_T_EPS)]
    pub t_eps: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write every intermediate state to this CSV.
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    /// Record sampling wall-clock seconds in the sidecar.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub candidates: PathBuf,
    #[arg(long, default_value = "branin")]
    pub task: Task,
    #[arg(long)]
    pub out: PathBuf,
    /// Append to an existing results file instead of overwriting it.
    #[arg(long)]
    pub append: bool,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// One of: conditioning, guidance, budget, k-tau, bins, timestep.
    #[arg(long)]
    pub sweep: String,
    #[arg(long, default_value = "branin")]
    pub task: Task,
    /// Model to sample from (conditioning, guidance, budget, timestep).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Training data (conditioning, k-tau, bins).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub sampler: SamplerFlags,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long, default_value_t = DEFAULT_T_EPS)]
    pub t_eps: f64,
    /// Seed for sampling and for any retraining.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn positive(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn guidance_strength(s: &str) -> std::result::Result<f64, String> {
    let g: f64 = s.parse().map_err(|e: std::num::ParseFloatError| e.to_string())?;
    if !g.is_finite() || g < -1.0 {
        return Err(format!("guidance strength must be a finite number >= -1, got {s}"));
    }
    Ok(g)
}

pub fn gen_data(args: &GenDataArgs, out: &mut dyn Write) -> Result<()> {
    let spec = DatasetSpec {
        kind: args.kind,
        n: args.n,
        seed: args.seed,
        percentile: args.percentile,
    };
    let dataset = gen_dataset(&spec, &args.task)?;
    write_dataset(&args.out, &dataset)?;
    let mut meta = Metadata::new()
        .with("task", args.task)
        .with("kind", args.kind)
        .with("n_requested", args.n)
        .with("n", dataset.len())
        .with("d", dataset.dim())
        .with("seed", args.seed);
    if args.kind == DatasetKind::UniformTruncated {
        meta.set("percentile", args.percentile);
    }
    meta.write(sidecar_path(&args.out))?;
    say(
        out,
        &format!("wrote {} points to {} (max y = {})", dataset.len(), args.out.display(), dataset.best_value()),
    )
}

pub fn train(args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let dataset = read_dataset(&args.data)?;
    let config = args.flags.to_config(args.seed, args.t_eps)?;
    let report_every = (config.epochs / 10).max(1);
    let outcome = train_with_progress(&dataset, &config, |r| {
        if r.epoch % report_every == 0 {
            eprintln!("epoch {:>6}  loss {:.6}", r.epoch, r.mean_loss);
        }
    })?;
    fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    let ckpt = args.out_dir.join("model.ckpt");
    outcome.model.save(&ckpt)?;
    write_train_log(args.out_dir.join("train_log.csv"), &outcome.log, args.timing)?;
    let last = outcome.log.last().map_or(f64::NAN, |r| r.mean_loss);
    say(out, &format!("wrote {} (final loss {last:.6})", ckpt.display()))
}

pub fn sample(args: &SampleArgs, out: &mut dyn Write) -> Result<()> {
    let model = TrainedModel::load(&args.checkpoint)?;
    let y_norm = match args.y_test {
        Some(y) => model.normalizer.normalize_value(y),
        None => model.best_value,
    };
    let guidance = guidance_for(&model, args.sampler.gamma, y_norm)?;
    let config = args.sampler.config(args.t_eps, args.trajectory.is_some());
    let start = Instant::now();
    let set = sample_candidates(&model, args.sampler.q, &guidance, &config, &Rng::new(args.seed))?;
    let elapsed = start.elapsed().as_secs_f64();
    write_candidates(&args.out, &set.points)?;
    if let (Some(path), Some(traj)) = (&args.trajectory, &set.trajectory) {
        write_trajectory(path, traj)?;
    }
    let mut meta = Metadata::new()
        .with("q", args.sampler.q)
        .with("gamma", fmt_f64(guidance.gamma()))
        .with("steps", args.sampler.steps)
        .with("integrator", args.sampler.integrator)
        .with("t_eps", fmt_f64(args.t_eps))
        .with("seed", args.seed)
        .with("y_test", fmt_f64(model.normalizer.denormalize_value(y_norm)))
        .with("conditional", model.info.conditional)
        .with("reweighted", model.info.reweighted)
        .with("train_seed", model.info.seed);
    if args.timing {
        meta.set("wall_seconds", fmt_f64(elapsed));
    }
    meta.write(sidecar_path(&args.out))?;
    say(out, &format!("wrote {} candidates to {}", set.len(), args.out.display()))
}

fn meta_value<T: std::str::FromStr>(meta: &Metadata, key: &str, fallback: T) -> Result<T> {
    match meta.get(key) {
        None => Ok(fallback),
        Some(v) => v
            .parse()
            .map_err(|_| Error::invalid(format!("sidecar value {key}={v} does not parse"))),
    }
}

pub fn evaluate(args: &EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let points = read_candidates(&args.candidates)?;
    let eval = evaluate_points(&args.task, &points)?;
    let meta_path = sidecar_path(&args.candidates);
    let meta = if meta_path.exists() {
        Metadata::read(&meta_path)?
    } else {
        Metadata::new()
    };
    let result = ExperimentResult {
        task: args.task.to_string(),
        seed: meta_value(&meta, "seed", 0)?,
        gamma: meta_value(&meta, "gamma", f64::NAN)?,
        steps: meta_value(&meta, "steps", 0)?,
        q: points.rows(),
        reweight: meta_value(&meta, "reweighted", false)?,
        conditioning_y: meta_value(&meta, "y_test", f64::NAN)?,
        max_f: eval.max,
        mean_f: eval.mean,
        wall_seconds: meta.get("wall_seconds").map(|_| meta_value(&meta, "wall_seconds", 0.0)).transpose()?,
    };
    write_results(&args.out, &[result], args.append)?;
    say(
        out,
        &format!("{} candidates: max f = {:.6}, mean f = {:.6}", points.rows(), eval.max, eval.mean),
    )
}

pub fn ablate(args: &AblateArgs, out: &mut dyn Write) -> Result<()> {
    let sweep: Sweep = args.sweep.parse()?;
    let model = match &args.checkpoint {
        Some(p) if sweep.needs_model() => Some(TrainedModel::load(p)?),
        _ => None,
    };
    let dataset = match &args.data {
        Some(p) if sweep.needs_data() => Some(read_dataset(p)?),
        _ => None,
    };
    let ctx = SweepContext {
        task: args.task,
        model: model.as_ref(),
        dataset: dataset.as_ref(),
        train: args.train.to_config(args.seed, args.t_eps)?,
        sampler: args.sampler.config(args.t_eps, false),
        gamma: args.sampler.gamma,
        q: args.sampler.q,
        seed: args.seed,
    };
    let rows = run_sweep(sweep, &ctx)?;
    write_sweep(&args.out, &rows)?;
    say(out, &format!("wrote {} {sweep} rows to {}", rows.len(), args.out.display()))
}

fn say(out: &mut dyn Write, line: &str) -> Result<()> {
    writeln!(out, "{line}").map_err(|e| Error::io("<stdout>", e))
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::GenData(a) => gen_data(a, out),
        Command::Train(a) => train(a, out),
        Command::Sample(a) => sample(a, out),
        Command::Evaluate(a) => evaluate(a, out),
        Command::Ablate(a) => ablate(a, out),
    }
}

/// Parses `std::env::args`, runs the command and maps the outcome to an
/// exit code.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli, &mut std::io::stdout().lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
