//! Evaluation and the built-in ablation sweeps.
//!
//! This is the only place, besides user code, where the true objective is
//! queried; training never sees it.

use std::fmt;
use std::str::FromStr;

use crate::checkpoint::TrainedModel;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};
use crate::records::SweepRow;
use crate::sampler::{sample_candidates, GuidanceConfig, SamplerConfig, Snapshot};
use crate::tasks::{Objective, Task};
use crate::training::{train, OfflineDataset, TrainConfig};

/// True objective values of a candidate batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub values: Vec<f64>,
    pub max: f64,
    pub mean: f64,
}

pub fn evaluate_points(task: &impl Objective, points: &Matrix) -> Result<Evaluation> {
    if points.rows() == 0 {
        return Err(Error::invalid("no candidates to evaluate"));
    }
    if points.cols() != task.dim() {
        return Err(Error::invalid(format!(
            "task {} takes {} inputs, candidates have {}",
            task.name(),
            task.dim(),
            points.cols()
        )));
    }
    let values: Vec<f64> = points.iter_rows().map(|x| task.evaluate(x)).collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(Evaluation { values, max, mean })
}

/// Max and mean of the objective at every recorded sampler step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub step: usize,
    pub t: f64,
    pub max: f64,
    pub mean: f64,
}

pub fn per_step_stats(task: &impl Objective, trajectory: &[Snapshot]) -> Result<Vec<StepStats>> {
    trajectory
        .iter()
        .map(|s| {
            let e = evaluate_points(task, &s.points)?;
            Ok(StepStats {
                step: s.step,
                t: s.t,
                max: e.max,
                mean: e.mean,
            })
        })
        .collect()
}

/// `n` evenly spaced values from `lo` to `hi`, both included.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

pub const CONDITIONING_GRID_POINTS: usize = 20;

/// Normalized conditioning values from the dataset minimum to 1.5× the
/// normalized dataset maximum.
pub fn conditioning_grid(model: &TrainedModel, dataset: &OfflineDataset, n: usize) -> Vec<f64> {
    let lo = dataset
        .values()
        .iter()
        .map(|&y| model.normalizer.normalize_value(y))
        .fold(f64::INFINITY, f64::min);
    linspace(lo, 1.5 * model.best_value, n)
}

pub const GUIDANCE_GRID: [f64; 4] = [0.0, 1.0, 2.0, 4.0];
pub const BUDGET_GRID: [usize; 6] = [16, 32, 64, 128, 256, 512];
/// Multiples of the dataset size.
pub const SMOOTHING_GRID: [f64; 4] = [0.001, 0.01, 0.1, 1.0];
pub const TEMPERATURE_GRID: [f64; 4] = [0.01, 0.1, 1.0, 10.0];
pub const BIN_GRID: [usize; 3] = [1, 32, 64];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    Conditioning,
    Guidance,
    Budget,
    KTau,
    Bins,
    Timestep,
}

impl Sweep {
    pub const ALL: [Sweep; 6] = [
        Sweep::Conditioning,
        Sweep::Guidance,
        Sweep::Budget,
        Sweep::KTau,
        Sweep::Bins,
        Sweep::Timestep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Sweep::Conditioning => "conditioning",
            Sweep::Guidance => "guidance",
            Sweep::Budget => "budget",
            Sweep::KTau => "k-tau",
            Sweep::Bins => "bins",
            Sweep::Timestep => "timestep",
        }
    }

    /// Whether the sweep samples from a given checkpoint.
    pub fn needs_model(self) -> bool {
        matches!(self, Sweep::Conditioning | Sweep::Guidance | Sweep::Budget | Sweep::Timestep)
    }

    /// Whether the sweep needs the training data.
    pub fn needs_data(self) -> bool {
        matches!(self, Sweep::Conditioning | Sweep::KTau | Sweep::Bins)
    }
}

impl fmt::Display for Sweep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Sweep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Sweep::ALL
            .into_iter()
            .find(|w| w.name() == s || (s == "k_tau" && *w == Sweep::KTau))
            .ok_or_else(|| Error::Unknown {
                kind: "sweep",
                name: s.to_string(),
                available: Sweep::ALL.map(Sweep::name).join(", "),
            })
    }
}

/// Inputs shared by all sweeps. `model` and `dataset` are required by the
/// sweeps that use them; see [`Sweep::needs_model`] and [`Sweep::needs_data`].
#[derive(Debug, Clone)]
pub struct SweepContext<'a> {
    pub task: Task,
    pub model: Option<&'a TrainedModel>,
    pub dataset: Option<&'a OfflineDataset>,
    /// Base configuration for the sweeps that retrain.
    pub train: TrainConfig,
    pub sampler: SamplerConfig,
    pub gamma: f64,
    pub q: usize,
    /// Sampling seed; every grid point reuses it.
    pub seed: u64,
}

impl SweepContext<'_> {
    fn model(&self, sweep: Sweep) -> Result<&TrainedModel> {
        self.model
            .ok_or_else(|| Error::invalid(format!("the {sweep} sweep needs a checkpoint")))
    }

    fn dataset(&self, sweep: Sweep) -> Result<&OfflineDataset> {
        self.dataset
            .ok_or_else(|| Error::invalid(format!("the {sweep} sweep needs a dataset")))
    }
}

struct RowBase<'a> {
    sweep: Sweep,
    ctx: &'a SweepContext<'a>,
    model: &'a TrainedModel,
}

impl RowBase<'_> {
    fn row(&self, gamma: f64, q: usize, y_norm: f64, step: Option<usize>, max_f: f64, mean_f: f64) -> SweepRow {
        SweepRow {
            sweep: self.sweep.name().into(),
            task: self.ctx.task.to_string(),
            seed: self.ctx.seed,
            gamma,
            steps: self.ctx.sampler.steps,
            q,
            reweight: self.model.info.reweighted,
            k: None,
            tau: None,
            n_bins: None,
            conditioning_y: self.model.normalizer.denormalize_value(y_norm),
            step,
            max_f,
            mean_f,
        }
    }
}

/// Guidance for `model`, falling back to the unconditional score when the
/// model was trained without conditioning.
pub fn guidance_for(model: &TrainedModel, gamma: f64, y_norm: f64) -> Result<GuidanceConfig> {
    if model.info.conditional {
        GuidanceConfig::new(gamma, y_norm)
    } else {
        Ok(GuidanceConfig::unconditional())
    }
}

fn sample_and_score(
    ctx: &SweepContext<'_>,
    model: &TrainedModel,
    q: usize,
    gamma: f64,
    y_norm: f64,
    sampler: &SamplerConfig,
) -> Result<(Evaluation, Option<Vec<Snapshot>>)> {
    let guidance = guidance_for(model, gamma, y_norm)?;
    let set = sample_candidates(model, q, &guidance, sampler, &Rng::new(ctx.seed))?;
    Ok((evaluate_points(&ctx.task, &set.points)?, set.trajectory))
}

fn step_rows(
    base: &RowBase<'_>,
    ctx: &SweepContext<'_>,
    gamma: f64,
    y_norm: f64,
    rows: &mut Vec<SweepRow>,
) -> Result<()> {
    let sampler = SamplerConfig {
        record_trajectory: true,
        ..ctx.sampler
    };
    let (_, traj) = sample_and_score(ctx, base.model, ctx.q, gamma, y_norm, &sampler)?;
    let traj = traj.expect("trajectory was requested");
    for s in per_step_stats(&ctx.task, &traj)? {
        rows.push(base.row(gamma, ctx.q, y_norm, Some(s.step), s.max, s.mean));
    }
    Ok(())
}

fn retrain_row(
    ctx: &SweepContext<'_>,
    sweep: Sweep,
    config: TrainConfig,
    k_multiple: Option<f64>,
) -> Result<SweepRow> {
    let dataset = ctx.dataset(sweep)?;
    let outcome = train(dataset, &config)?;
    let model = &outcome.model;
    let y = model.best_value;
    let (eval, _) = sample_and_score(ctx, model, ctx.q, ctx.gamma, y, &ctx.sampler)?;
    let base = RowBase { sweep, ctx, model };
    let mut row = base.row(ctx.gamma, ctx.q, y, None, eval.max, eval.mean);
    row.k = Some(k_multiple.unwrap_or_else(|| config.smoothing_for(dataset.len()) / dataset.len() as f64));
    row.tau = Some(config.temperature);
    row.n_bins = Some(config.n_bins);
    Ok(row)
}

/// Runs one sweep and returns its rows in a fixed order.
///
/// Smoothing is reported as a multiple of the dataset size in the `k`
/// column.
pub fn run_sweep(sweep: Sweep, ctx: &SweepContext<'_>) -> Result<Vec<SweepRow>> {
    ctx.sampler.validate()?;
    let mut rows = Vec::new();
    match sweep {
        Sweep::Conditioning => {
            let model = ctx.model(sweep)?;
            let dataset = ctx.dataset(sweep)?;
            let base = RowBase { sweep, ctx, model };
            for y in conditioning_grid(model, dataset, CONDITIONING_GRID_POINTS) {
                let (e, _) = sample_and_score(ctx, model, ctx.q, ctx.gamma, y, &ctx.sampler)?;
                rows.push(base.row(ctx.gamma, ctx.q, y, None, e.max, e.mean));
            }
        }
        Sweep::Guidance => {
            let model = ctx.model(sweep)?;
            let base = RowBase { sweep, ctx, model };
            for gamma in GUIDANCE_GRID {
                step_rows(&base, ctx, gamma, model.best_value, &mut rows)?;
            }
        }
        Sweep::Timestep => {
            let model = ctx.model(sweep)?;
            let base = RowBase { sweep, ctx, model };
            step_rows(&base, ctx, ctx.gamma, model.best_value, &mut rows)?;
        }
        Sweep::Budget => {
            let model = ctx.model(sweep)?;
            let base = RowBase { sweep, ctx, model };
            for q in BUDGET_GRID {
                let (e, _) = sample_and_score(ctx, model, q, ctx.gamma, model.best_value, &ctx.sampler)?;
                rows.push(base.row(ctx.gamma, q, model.best_value, None, e.max, e.mean));
            }
        }
        Sweep::KTau => {
            let n = ctx.dataset(sweep)?.len() as f64;
            for k in SMOOTHING_GRID {
                let config = TrainConfig {
                    smoothing: Some(k * n),
                    reweight: true,
                    ..ctx.train.clone()
                };
                rows.push(retrain_row(ctx, sweep, config, Some(k))?);
            }
            for tau in TEMPERATURE_GRID {
                let config = TrainConfig {
                    temperature: tau,
                    reweight: true,
                    ..ctx.train.clone()
                };
                rows.push(retrain_row(ctx, sweep, config, None)?);
            }
        }
        Sweep::Bins => {
            for n_bins in BIN_GRID {
                let config = TrainConfig {
                    n_bins,
                    reweight: true,
                    ..ctx.train.clone()
                };
                rows.push(retrain_row(ctx, sweep, config, None)?);
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::BRANIN_MAXIMIZERS;

    #[test]
    fn evaluation_at_the_maxima() {
        let pts = Matrix::from_rows(&BRANIN_MAXIMIZERS.map(|m| m.to_vec())).unwrap();
        let e = evaluate_points(&Task::Branin, &pts).unwrap();
        assert!((e.max + 0.397887).abs() < 1e-5);
        assert!(e.max >= e.mean);
        assert!(evaluate_points(&Task::Branin, &Matrix::zeros(0, 2)).is_err());
        assert!(evaluate_points(&Task::Branin, &Matrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn linspace_endpoints() {
        let g = linspace(-1.0, 2.0, 20);
        assert_eq!(g.len(), 20);
        assert_eq!(g[0], -1.0);
        assert_eq!(g[19], 2.0);
        assert!(linspace(0.0, 1.0, 0).is_empty());
    }

    #[test]
    fn sweep_names_parse() {
        for s in Sweep::ALL {
            assert_eq!(s.name().parse::<Sweep>().unwrap(), s);
        }
        match "nope".parse::<Sweep>() {
            Err(Error::Unknown { available, .. }) => assert!(available.contains("guidance")),
            other => panic!("{other:?}"),
        }
    }
}
