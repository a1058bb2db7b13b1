//! Offline dataset handling, bin reweighting and the denoising score matching
//! loop.
//!
//! Everything is computed in normalized coordinates: points are standardized
//! per dimension and values are standardized as a whole, so the bin
//! temperature acts on a unit scale regardless of the task.

use std::time::Instant;

use crate::checkpoint::{ModelInfo, TrainedModel};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};
use crate::score_net::{
    adam_step, AdamConfig, AdamState, Conditioning, Gradients, NetConfig, ScoreNetwork,
    DEFAULT_FOURIER_FEATURES, DEFAULT_HIDDEN_LAYERS, DEFAULT_HIDDEN_WIDTH, DEFAULT_MAX_FREQUENCY,
};
use crate::sde::{NoiseSchedule, DEFAULT_T_EPS};

/// Fixed set of `(x, y)` observations.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineDataset {
    points: Matrix,
    values: Vec<f64>,
}

impl OfflineDataset {
    pub fn new(points: Matrix, values: Vec<f64>) -> Result<Self> {
        if points.rows() != values.len() {
            return Err(Error::invalid(format!(
                "{} points but {} values",
                points.rows(),
                values.len()
            )));
        }
        if values.len() < 2 {
            return Err(Error::invalid("an offline dataset needs at least 2 points"));
        }
        if points.cols() == 0 {
            return Err(Error::invalid("points must have at least one dimension"));
        }
        if !points.as_slice().iter().chain(&values).all(|v| v.is_finite()) {
            return Err(Error::invalid("dataset contains non-finite entries"));
        }
        Ok(OfflineDataset { points, values })
    }

    pub fn points(&self) -> &Matrix {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn best_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Keeps the rows at `indices`, in order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        OfflineDataset::new(
            self.points.select_rows(indices),
            indices.iter().map(|&i| self.values[i]).collect(),
        )
    }
}

/// Per-dimension standardization of points plus standardization of values.
///
/// Standard deviations use the population (`1/n`) convention. A constant
/// column keeps a scale of 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    pub y_mean: f64,
    pub y_std: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 0.0 { std } else { 1.0 })
}

impl Normalizer {
    pub fn fit(dataset: &OfflineDataset) -> Self {
        let d = dataset.dim();
        let mut x_mean = Vec::with_capacity(d);
        let mut x_std = Vec::with_capacity(d);
        for j in 0..d {
            let (m, s) = mean_std(&dataset.points.iter_rows().map(|r| r[j]).collect::<Vec<_>>());
            x_mean.push(m);
            x_std.push(s);
        }
        let (y_mean, y_std) = mean_std(&dataset.values);
        Normalizer {
            x_mean,
            x_std,
            y_mean,
            y_std,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Normalizer {
            x_mean: vec![0.0; dim],
            x_std: vec![1.0; dim],
            y_mean: 0.0,
            y_std: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.x_mean.len()
    }

    pub fn normalize_points(&self, points: &Matrix) -> Result<Matrix> {
        self.map_points(points, |v, m, s| (v - m) / s)
    }

    pub fn denormalize_points(&self, points: &Matrix) -> Result<Matrix> {
        self.map_points(points, |v, m, s| v * s + m)
    }

    pub fn normalize_value(&self, y: f64) -> f64 {
        (y - self.y_mean) / self.y_std
    }

    pub fn denormalize_value(&self, y: f64) -> f64 {
        y * self.y_std + self.y_mean
    }

    fn map_points(&self, points: &Matrix, f: impl Fn(f64, f64, f64) -> f64) -> Result<Matrix> {
        if points.cols() != self.dim() {
            return Err(Error::ShapeMismatch {
                op: "normalizer",
                left: points.shape(),
                right: (points.rows(), self.dim()),
            });
        }
        let mut out = points.clone();
        for i in 0..out.rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = f(*v, self.x_mean[j], self.x_std[j]);
            }
        }
        Ok(out)
    }
}

/// Equal-width bins over `y` with per-bin training weights
/// `w_i = |B_i| / (|B_i| + K) · exp(−|ŷ − m_i| / τ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinWeights {
    lower: f64,
    width: f64,
    counts: Vec<usize>,
    midpoints: Vec<f64>,
    weights: Vec<f64>,
    best: f64,
    smoothing: f64,
    temperature: f64,
}

/// Bins `values` into `n_bins` equal-width bins spanning their range and
/// weights each bin. The last bin is closed on the right; a value sitting
/// exactly on an interior edge belongs to the bin above it. When every value
/// is identical there is a single bin.
pub fn compute_bin_weights(values: &[f64], n_bins: usize, smoothing: f64, temperature: f64) -> Result<BinWeights> {
    if values.is_empty() {
        return Err(Error::invalid("cannot bin an empty set of values"));
    }
    if n_bins == 0 {
        return Err(Error::invalid("need at least one bin"));
    }
    if !(smoothing >= 0.0 && smoothing.is_finite()) {
        return Err(Error::invalid(format!("smoothing K must be non-negative, got {smoothing}")));
    }
    if !(temperature > 0.0) {
        return Err(Error::invalid(format!("temperature must be positive, got {temperature}")));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (n_bins, width) = if hi > lo {
        (n_bins, (hi - lo) / n_bins as f64)
    } else {
        (1, 0.0)
    };
    let mut bins = BinWeights {
        lower: lo,
        width,
        counts: vec![0; n_bins],
        midpoints: (0..n_bins).map(|i| lo + (i as f64 + 0.5) * width).collect(),
        weights: vec![0.0; n_bins],
        best: hi,
        smoothing,
        temperature,
    };
    for &y in values {
        let b = bins.bin_index(y);
        bins.counts[b] += 1;
    }
    for i in 0..n_bins {
        let c = bins.counts[i] as f64;
        bins.weights[i] = if bins.counts[i] == 0 {
            0.0
        } else {
            c / (c + smoothing) * (-(hi - bins.midpoints[i]).abs() / temperature).exp()
        };
    }
    Ok(bins)
}

impl BinWeights {
    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    /// Left edge of bin `i`; `edge(n_bins)` is the right end of the range.
    pub fn edge(&self, i: usize) -> f64 {
        if i == self.n_bins() {
            self.best
        } else {
            self.lower + i as f64 * self.width
        }
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn midpoints(&self) -> &[f64] {
        &self.midpoints
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// Bin holding `y`, clamped into the binned range.
    pub fn bin_index(&self, y: f64) -> usize {
        let n = self.n_bins();
        if self.width == 0.0 || n == 1 {
            return 0;
        }
        let raw = ((y - self.lower) / self.width).floor();
        let mut i = if raw <= 0.0 { 0 } else { (raw as usize).min(n - 1) };
        // floating-point division can land one bin off near an edge
        while i + 1 < n && y >= self.edge(i + 1) {
            i += 1;
        }
        while i > 0 && y < self.edge(i) {
            i -= 1;
        }
        i
    }

    pub fn weight_of(&self, y: f64) -> f64 {
        self.weights[self.bin_index(y)]
    }

    /// Per-point weights rescaled so their mean over `values` is 1.
    pub fn normalized_point_weights(&self, values: &[f64]) -> Result<Vec<f64>> {
        let raw: Vec<f64> = values.iter().map(|&y| self.weight_of(y)).collect();
        let mean = raw.iter().sum::<f64>() / raw.len().max(1) as f64;
        if !(mean > 0.0 && mean.is_finite()) {
            return Err(Error::invalid("bin weights vanish on every point"));
        }
        Ok(raw.into_iter().map(|w| w / mean).collect())
    }
}

/// Hyperparameters of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Probability that an example is trained on the unconditional branch.
    pub dropout: f64,
    /// Bin smoothing `K`; `None` means `0.01 · n`.
    pub smoothing: Option<f64>,
    pub temperature: f64,
    pub n_bins: usize,
    /// When false every example has weight 1.
    pub reweight: bool,
    /// When false the network only ever sees the unconditional branch.
    pub conditional: bool,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub fourier_features: usize,
    pub schedule: NoiseSchedule,
    pub t_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1000,
            batch_size: 128,
            learning_rate: 1e-3,
            dropout: 0.15,
            smoothing: None,
            temperature: 0.1,
            n_bins: 64,
            reweight: true,
            conditional: true,
            hidden_width: DEFAULT_HIDDEN_WIDTH,
            hidden_layers: DEFAULT_HIDDEN_LAYERS,
            fourier_features: DEFAULT_FOURIER_FEATURES,
            schedule: NoiseSchedule::default(),
            t_eps: DEFAULT_T_EPS,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// A reduced network and schedule that trains a 5000-point 2-D task in
    /// well under a minute on one CPU core.
    pub fn small(seed: u64) -> Self {
        TrainConfig {
            epochs: 200,
            hidden_width: 128,
            fourier_features: 16,
            seed,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.n_bins == 0 {
            return Err(Error::invalid("epochs, batch size and bin count must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!(
                "dropout probability must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::invalid("temperature must be positive"));
        }
        if let Some(k) = self.smoothing {
            if !(k >= 0.0) {
                return Err(Error::invalid("smoothing K must be non-negative"));
            }
        }
        if !(self.t_eps > 0.0 && self.t_eps < 1.0) {
            return Err(Error::invalid("t_eps must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn smoothing_for(&self, n: usize) -> f64 {
        self.smoothing.unwrap_or(0.01 * n as f64)
    }

    pub fn net_config(&self, dim: usize) -> NetConfig {
        NetConfig {
            dim,
            hidden_width: self.hidden_width,
            hidden_layers: self.hidden_layers,
            fourier_features: self.fourier_features,
            max_frequency: DEFAULT_MAX_FREQUENCY,
        }
    }
}

/// How training examples are noised and which branch they train.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DsmSettings {
    pub schedule: NoiseSchedule,
    pub t_eps: f64,
    pub dropout: f64,
    pub conditional: bool,
}

impl DsmSettings {
    pub fn from_config(config: &TrainConfig) -> Self {
        DsmSettings {
            schedule: config.schedule,
            t_eps: config.t_eps,
            dropout: config.dropout,
            conditional: config.conditional,
        }
    }
}

/// A batch of noised examples with their regression targets.
#[derive(Debug, Clone)]
pub struct DsmBatch {
    pub xt: Matrix,
    pub targets: Matrix,
    pub conditioning: Vec<Conditioning>,
    /// Time weighting `λ(t)`, equal to the kernel variance.
    pub lambdas: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Noises each clean example. Per example, in order: `t ~ U(t_eps, 1]`, the
/// Gaussian draw for every coordinate, then the conditioning-dropout coin.
pub fn draw_dsm_batch(x0: &Matrix, y: &[f64], weights: &[f64], settings: &DsmSettings, rng: &mut Rng) -> Result<DsmBatch> {
    let b = x0.rows();
    if b == 0 {
        return Err(Error::invalid("empty training batch"));
    }
    if y.len() != b || weights.len() != b {
        return Err(Error::invalid("batch points, values and weights differ in length"));
    }
    let d = x0.cols();
    let mut xt = Vec::with_capacity(b * d);
    let mut targets = Vec::with_capacity(b * d);
    let mut conditioning = Vec::with_capacity(b);
    let mut lambdas = Vec::with_capacity(b);
    for (i, row) in x0.iter_rows().enumerate() {
        let t = 1.0 - rng.uniform() * (1.0 - settings.t_eps);
        let p = settings.schedule.perturb(row, t, rng)?;
        let dropped = rng.uniform() < settings.dropout;
        xt.extend_from_slice(&p.xt);
        targets.extend_from_slice(&p.score_target);
        conditioning.push(if settings.conditional && !dropped {
            Conditioning::conditional(t, y[i])
        } else {
            Conditioning::unconditional(t)
        });
        lambdas.push(settings.schedule.variance(t)?);
    }
    Ok(DsmBatch {
        xt: Matrix::new(b, d, xt)?,
        targets: Matrix::new(b, d, targets)?,
        conditioning,
        lambdas,
        weights: weights.to_vec(),
    })
}

/// Mean of `λ(t) w(y) ‖pred − target‖²` over the batch and its gradient with
/// respect to `pred`.
pub fn weighted_dsm(pred: &Matrix, batch: &DsmBatch) -> Result<(f64, Matrix)> {
    if pred.shape() != batch.targets.shape() {
        return Err(Error::ShapeMismatch {
            op: "weighted_dsm",
            left: pred.shape(),
            right: batch.targets.shape(),
        });
    }
    let b = pred.rows() as f64;
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(pred.rows(), pred.cols());
    for i in 0..pred.rows() {
        let scale = batch.lambdas[i] * batch.weights[i];
        let mut sq = 0.0;
        for ((g, p), t) in grad.row_mut(i).iter_mut().zip(pred.row(i)).zip(batch.targets.row(i)) {
            let r = p - t;
            sq += r * r;
            *g = 2.0 * scale * r / b;
        }
        loss += scale * sq;
    }
    Ok((loss / b, grad))
}

/// Reweighted denoising score-matching loss of `net` on one batch, with exact
/// parameter gradients.
pub fn dsm_loss(
    net: &ScoreNetwork,
    x0: &Matrix,
    y: &[f64],
    weights: &[f64],
    settings: &DsmSettings,
    rng: &mut Rng,
) -> Result<(f64, Gradients)> {
    let batch = draw_dsm_batch(x0, y, weights, settings, rng)?;
    let trace = net.forward_trace(&batch.xt, &batch.conditioning)?;
    let (loss, out_grad) = weighted_dsm(trace.output(), &batch)?;
    let grads = net.backward(&trace, &out_grad)?;
    Ok((loss, grads))
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub mean_loss: f64,
    /// Elapsed since training started.
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub log: Vec<EpochRecord>,
    /// `None` when reweighting is disabled.
    pub bin_weights: Option<BinWeights>,
}

/// Per-point training weights for `values` (already normalized).
pub fn training_weights(values: &[f64], config: &TrainConfig) -> Result<(Vec<f64>, Option<BinWeights>)> {
    if !config.reweight {
        return Ok((vec![1.0; values.len()], None));
    }
    let bins = compute_bin_weights(
        values,
        config.n_bins,
        config.smoothing_for(values.len()),
        config.temperature,
    )?;
    Ok((bins.normalized_point_weights(values)?, Some(bins)))
}

pub fn train(dataset: &OfflineDataset, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with_progress(dataset, config, |_| {})
}

/// Runs `epochs × ⌈n / batch⌉` Adam steps over reshuffled batches, calling
/// `on_epoch` after each epoch.
///
/// Randomness comes from three streams split off `config.seed`: network
/// initialization, batch shuffling, and the per-example noise.
pub fn train_with_progress(
    dataset: &OfflineDataset,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    let start = Instant::now();
    let normalizer = Normalizer::fit(dataset);
    let points = normalizer.normalize_points(dataset.points())?;
    let values: Vec<f64> = dataset.values().iter().map(|&y| normalizer.normalize_value(y)).collect();
    let (weights, bin_weights) = training_weights(&values, config)?;

    let root = Rng::new(config.seed);
    let mut init_rng = root.split(0);
    let mut shuffle_rng = root.split(1);
    let mut noise_rng = root.split(2);

    let mut net = ScoreNetwork::new(config.net_config(dataset.dim()), &mut init_rng)?;
    let mut adam = AdamState::new(
        &net,
        AdamConfig {
            learning_rate: config.learning_rate,
            ..AdamConfig::default()
        },
    );
    let settings = DsmSettings::from_config(config);
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut step = 0usize;

    for epoch in 1..=config.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let x0 = points.select_rows(chunk);
            let y: Vec<f64> = chunk.iter().map(|&i| values[i]).collect();
            let w: Vec<f64> = chunk.iter().map(|&i| weights[i]).collect();
            let (loss, grads) = dsm_loss(&net, &x0, &y, &w, &settings, &mut noise_rng)?;
            step += 1;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step,
                    parameter_norm: net.parameter_norm(),
                    batch: chunk.to_vec(),
                });
            }
            adam_step(&mut net, &grads, &mut adam)?;
            loss_sum += loss * chunk.len() as f64;
        }
        let record = EpochRecord {
            epoch,
            mean_loss: loss_sum / n as f64,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        log.push(record);
    }

    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let model = TrainedModel {
        net,
        schedule: config.schedule,
        normalizer,
        best_value: best,
        info: ModelInfo {
            conditional: config.conditional,
            reweighted: config.reweight,
            seed: config.seed,
        },
    };
    Ok(TrainOutcome {
        model,
        log,
        bin_weights,
    })
}
