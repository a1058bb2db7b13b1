//! Reverse-time SDE sampling with classifier-free guidance.
//!
//! Trajectories run on a uniform grid from `t = 1` down to `t_eps`. Each
//! candidate owns a random stream split off the caller's generator by its
//! index, so candidate `i` is the same whether it is sampled alone or in a
//! batch.

use std::fmt;
use std::str::FromStr;

use crate::checkpoint::TrainedModel;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};
use crate::score_net::{Conditioning, ScoreNetwork};
use crate::sde::{NoiseSchedule, DEFAULT_T_EPS};

pub const DEFAULT_GAMMA: f64 = 2.0;
pub const DEFAULT_STEPS: usize = 1000;
pub const DEFAULT_BUDGET: usize = 256;

/// Guidance weight and the normalized value to condition on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidanceConfig {
    gamma: f64,
    y_test: f64,
}

impl GuidanceConfig {
    pub fn new(gamma: f64, y_test: f64) -> Result<Self> {
        if !(gamma >= -1.0) || !gamma.is_finite() {
            return Err(Error::invalid(format!(
                "guidance weight must be at least -1, got {gamma}"
            )));
        }
        if !y_test.is_finite() {
            return Err(Error::invalid("conditioning value must be finite"));
        }
        Ok(GuidanceConfig { gamma, y_test })
    }

    /// Guidance that reduces to the unconditional model.
    pub fn unconditional() -> Self {
        GuidanceConfig {
            gamma: -1.0,
            y_test: 0.0,
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn y_test(&self) -> f64 {
        self.y_test
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    EulerMaruyama,
    Heun,
}

impl FromStr for Integrator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler_maruyama" | "euler-maruyama" | "euler" => Ok(Integrator::EulerMaruyama),
            "heun" => Ok(Integrator::Heun),
            other => Err(Error::Unknown {
                kind: "integrator",
                name: other.to_string(),
                available: "euler_maruyama, heun".into(),
            }),
        }
    }
}

impl fmt::Display for Integrator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Integrator::EulerMaruyama => "euler_maruyama",
            Integrator::Heun => "heun",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub steps: usize,
    pub integrator: Integrator,
    pub t_eps: f64,
    pub record_trajectory: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            steps: DEFAULT_STEPS,
            integrator: Integrator::Heun,
            t_eps: DEFAULT_T_EPS,
            record_trajectory: false,
        }
    }
}

impl SamplerConfig {
    /// Heun with 100 steps, the counterpart of [`TrainConfig::small`].
    ///
    /// [`TrainConfig::small`]: crate::training::TrainConfig::small
    pub fn small() -> Self {
        SamplerConfig {
            steps: 100,
            ..SamplerConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("sampler needs at least one step"));
        }
        if !(self.t_eps > 0.0 && self.t_eps < 1.0) {
            return Err(Error::invalid("t_eps must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Times `1 = t_0 > t_1 > … > t_T = t_eps`.
    pub fn time_grid(&self) -> Vec<f64> {
        let h = (1.0 - self.t_eps) / self.steps as f64;
        (0..=self.steps)
            .map(|k| if k == self.steps { self.t_eps } else { 1.0 - k as f64 * h })
            .collect()
    }
}

/// Anything that returns a batch of score estimates at a given time.
pub trait ScoreModel {
    fn score(&self, x: &Matrix, t: f64) -> Result<Matrix>;
}

/// `(1 + γ) ε_cond − γ ε_uncond` from a single network.
///
/// `γ = 0` returns the conditional pass and `γ = −1` the unconditional pass
/// untouched, without evaluating the other branch.
pub fn guided_score(net: &ScoreNetwork, x: &Matrix, t: f64, guidance: &GuidanceConfig) -> Result<Matrix> {
    let n = x.rows();
    let cond = || net.forward_batch(x, &vec![Conditioning::conditional(t, guidance.y_test); n]);
    let uncond = || net.forward_batch(x, &vec![Conditioning::unconditional(t); n]);
    let gamma = guidance.gamma;
    if gamma == 0.0 {
        return cond();
    }
    if gamma == -1.0 {
        return uncond();
    }
    let c = cond()?;
    let u = uncond()?;
    let data = c
        .as_slice()
        .iter()
        .zip(u.as_slice())
        .map(|(c, u)| (1.0 + gamma) * c - gamma * u)
        .collect();
    Matrix::new(c.rows(), c.cols(), data)
}

/// A network paired with fixed guidance.
#[derive(Debug, Clone, Copy)]
pub struct GuidedScore<'a> {
    pub net: &'a ScoreNetwork,
    pub guidance: GuidanceConfig,
}

impl ScoreModel for GuidedScore<'_> {
    fn score(&self, x: &Matrix, t: f64) -> Result<Matrix> {
        guided_score(self.net, x, t, &self.guidance)
    }
}

/// Exact score of the noised marginals when the data is `N(mean, variance · I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianScore {
    pub mean: Vec<f64>,
    pub variance: f64,
    pub schedule: NoiseSchedule,
}

impl GaussianScore {
    /// Mean vector and per-coordinate variance of `p_t`.
    pub fn marginal(&self, t: f64) -> Result<(Vec<f64>, f64)> {
        let k = self.schedule.kernel(t)?;
        let mean = self.mean.iter().map(|m| k.mean_coeff * m).collect();
        Ok((mean, k.mean_coeff * k.mean_coeff * self.variance + k.variance))
    }
}

impl ScoreModel for GaussianScore {
    fn score(&self, x: &Matrix, t: f64) -> Result<Matrix> {
        if x.cols() != self.mean.len() {
            return Err(Error::ShapeMismatch {
                op: "gaussian score",
                left: x.shape(),
                right: (x.rows(), self.mean.len()),
            });
        }
        let (mean, var) = self.marginal(t)?;
        let mut out = x.clone();
        for i in 0..out.rows() {
            for (v, m) in out.row_mut(i).iter_mut().zip(&mean) {
                *v = -(*v - m) / var;
            }
        }
        Ok(out)
    }
}

/// `x − drift(x, t) dt + scale · z`.
pub fn euler_update<F>(x: &Matrix, t: f64, dt: f64, drift: F, noise_scale: f64, z: &Matrix) -> Result<Matrix>
where
    F: Fn(&Matrix, f64) -> Result<Matrix>,
{
    let d = drift(x, t)?;
    let mut out = x.clone();
    out.axpy(-dt, &d)?;
    out.axpy(noise_scale, z)?;
    Ok(out)
}

/// Stochastic improved Euler: an Euler predictor to `t − dt`, then a
/// corrector that averages the drift at both ends. Both stages reuse `z`.
pub fn heun_update<F>(x: &Matrix, t: f64, dt: f64, drift: F, noise_scale: f64, z: &Matrix) -> Result<Matrix>
where
    F: Fn(&Matrix, f64) -> Result<Matrix>,
{
    let d1 = drift(x, t)?;
    let mut pred = x.clone();
    pred.axpy(-dt, &d1)?;
    pred.axpy(noise_scale, z)?;
    let d2 = drift(&pred, t - dt)?;
    let mut out = x.clone();
    out.axpy(-0.5 * dt, &d1)?;
    out.axpy(-0.5 * dt, &d2)?;
    out.axpy(noise_scale, z)?;
    Ok(out)
}

fn check_step(t: f64, dt: f64, t_eps: f64) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("step size must be positive, got {dt}")));
    }
    if t - dt < t_eps - 1e-12 || t > 1.0 {
        return Err(Error::invalid(format!(
            "step from t = {t} by {dt} leaves [{t_eps}, 1]"
        )));
    }
    Ok(())
}

fn reverse_sde_drift<'a>(
    model: &'a dyn ScoreModel,
    schedule: &'a NoiseSchedule,
) -> impl Fn(&Matrix, f64) -> Result<Matrix> + 'a {
    move |x: &Matrix, t: f64| {
        let s = model.score(x, t)?;
        schedule.reverse_drift_batch(x, t, &s)
    }
}

/// One Euler–Maruyama step of the reverse SDE from `t` to `t − dt`.
pub fn euler_maruyama_step(
    x: &Matrix,
    t: f64,
    dt: f64,
    model: &dyn ScoreModel,
    schedule: &NoiseSchedule,
    t_eps: f64,
    z: &Matrix,
) -> Result<Matrix> {
    check_step(t, dt, t_eps)?;
    let scale = (schedule.beta(t)? * dt).sqrt();
    euler_update(x, t, dt, reverse_sde_drift(model, schedule), scale, z)
}

/// One Heun step of the reverse SDE from `t` to `t − dt`. The noise variance
/// is the trapezoidal `½(β(t) + β(t − dt)) dt`, exact for the linear schedule.
pub fn heun_step(
    x: &Matrix,
    t: f64,
    dt: f64,
    model: &dyn ScoreModel,
    schedule: &NoiseSchedule,
    t_eps: f64,
    z: &Matrix,
) -> Result<Matrix> {
    check_step(t, dt, t_eps)?;
    let t_next = (t - dt).max(0.0);
    let scale = (0.5 * (schedule.beta(t)? + schedule.beta(t_next)?) * dt).sqrt();
    heun_update(x, t, dt, reverse_sde_drift(model, schedule), scale, z)
}

/// One row of standard normal noise per candidate stream.
pub fn draw_noise(rngs: &mut [Rng], dim: usize) -> Matrix {
    let mut data = Vec::with_capacity(rngs.len() * dim);
    for rng in rngs.iter_mut() {
        for _ in 0..dim {
            data.push(rng.normal());
        }
    }
    Matrix::new(rngs.len(), dim, data).expect("sized by construction")
}

/// Points at one grid time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    /// 0 is the initial state at `t = 1`.
    pub step: usize,
    pub t: f64,
    pub points: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReverseRun {
    pub final_points: Matrix,
    pub trajectory: Option<Vec<Snapshot>>,
}

/// Integrates the reverse SDE for every row of `init`, with `rngs[i]` driving
/// row `i`.
pub fn integrate_reverse(
    model: &dyn ScoreModel,
    schedule: &NoiseSchedule,
    init: Matrix,
    config: &SamplerConfig,
    rngs: &mut [Rng],
) -> Result<ReverseRun> {
    config.validate()?;
    if rngs.len() != init.rows() {
        return Err(Error::invalid("need one random stream per trajectory"));
    }
    let grid = config.time_grid();
    let mut x = init;
    let mut trajectory = config.record_trajectory.then(|| {
        vec![Snapshot {
            step: 0,
            t: grid[0],
            points: x.clone(),
        }]
    });
    for (k, pair) in grid.windows(2).enumerate() {
        let (t, t_next) = (pair[0], pair[1]);
        let z = draw_noise(rngs, x.cols());
        x = match config.integrator {
            Integrator::EulerMaruyama => euler_maruyama_step(&x, t, t - t_next, model, schedule, config.t_eps, &z)?,
            Integrator::Heun => heun_step(&x, t, t - t_next, model, schedule, config.t_eps, &z)?,
        };
        if let Some(traj) = trajectory.as_mut() {
            traj.push(Snapshot {
                step: k + 1,
                t: t_next,
                points: x.clone(),
            });
        }
    }
    Ok(ReverseRun {
        final_points: x,
        trajectory,
    })
}

/// Proposed points on the original (de-normalized) scale.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub points: Matrix,
    /// De-normalized snapshots when trajectory recording was requested.
    pub trajectory: Option<Vec<Snapshot>>,
    /// True objective values, filled in only at evaluation time.
    pub values: Option<Vec<f64>>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }
}

/// Draws `q` candidates from `x_T ~ N(0, I)` down to `t_eps`.
pub fn sample_candidates(
    model: &TrainedModel,
    q: usize,
    guidance: &GuidanceConfig,
    config: &SamplerConfig,
    rng: &Rng,
) -> Result<CandidateSet> {
    if q == 0 {
        return Err(Error::invalid("query budget must be at least 1"));
    }
    config.validate()?;
    let dim = model.dim();
    let mut rngs: Vec<Rng> = (0..q as u64).map(|i| rng.split(i)).collect();
    let init = draw_noise(&mut rngs, dim);
    let score = GuidedScore {
        net: &model.net,
        guidance: *guidance,
    };
    let run = integrate_reverse(&score, &model.schedule, init, config, &mut rngs)?;
    let points = model.normalizer.denormalize_points(&run.final_points)?;
    let trajectory = match run.trajectory {
        Some(snaps) => Some(
            snaps
                .into_iter()
                .map(|s| {
                    Ok(Snapshot {
                        step: s.step,
                        t: s.t,
                        points: model.normalizer.denormalize_points(&s.points)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    Ok(CandidateSet {
        points,
        trajectory,
        values: None,
    })
}
