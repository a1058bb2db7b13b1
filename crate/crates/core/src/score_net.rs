//! Conditional score estimator `ε_θ(x, t, y)`.
//!
//! A plain ReLU multilayer perceptron. Its input is the point `x` concatenated
//! with sinusoidal features of `t` and the raw (normalized) conditioning value
//! `y`. The unconditional branch is the same network with the `y` channel set
//! to exactly zero.
//!
//! Gradients are computed by hand: [`ScoreNetwork::forward_trace`] keeps the
//! layer activations and [`ScoreNetwork::backward`] runs reverse mode over
//! them. Parameters are always visited in the same order: layer by layer,
//! weights row-major (`fan_in × fan_out`), then the bias.

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng, Vector};

pub const DEFAULT_HIDDEN_WIDTH: usize = 1024;
pub const DEFAULT_HIDDEN_LAYERS: usize = 2;
pub const DEFAULT_FOURIER_FEATURES: usize = 128;
pub const DEFAULT_MAX_FREQUENCY: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetConfig {
    /// Dimension of the points being modelled.
    pub dim: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    /// Number of sinusoidal time channels (half sine, half cosine).
    pub fourier_features: usize,
    pub max_frequency: f64,
}

impl NetConfig {
    pub fn new(dim: usize) -> Self {
        NetConfig {
            dim,
            hidden_width: DEFAULT_HIDDEN_WIDTH,
            hidden_layers: DEFAULT_HIDDEN_LAYERS,
            fourier_features: DEFAULT_FOURIER_FEATURES,
            max_frequency: DEFAULT_MAX_FREQUENCY,
        }
    }

    pub fn with_hidden(mut self, width: usize, layers: usize) -> Self {
        self.hidden_width = width;
        self.hidden_layers = layers;
        self
    }

    pub fn with_fourier_features(mut self, n: usize) -> Self {
        self.fourier_features = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.hidden_width == 0 {
            return Err(Error::invalid("network dimension and hidden width must be positive"));
        }
        if self.fourier_features == 0 || self.fourier_features % 2 != 0 {
            return Err(Error::invalid(format!(
                "fourier feature count must be a positive even number, got {}",
                self.fourier_features
            )));
        }
        if !(self.max_frequency >= 1.0 && self.max_frequency.is_finite()) {
            return Err(Error::invalid("max frequency must be finite and at least 1"));
        }
        Ok(())
    }

    /// Width of the first layer's input: point, time features, one `y` channel.
    pub fn input_width(&self) -> usize {
        self.dim + self.fourier_features + 1
    }
}

/// `(t, y)` pair fed to the network, plus the branch selector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conditioning {
    pub t: f64,
    pub y: f64,
    pub unconditional: bool,
}

impl Conditioning {
    pub fn conditional(t: f64, y: f64) -> Self {
        Conditioning {
            t,
            y,
            unconditional: false,
        }
    }

    pub fn unconditional(t: f64) -> Self {
        Conditioning {
            t,
            y: 0.0,
            unconditional: true,
        }
    }

    /// The value that actually reaches the network's `y` channel.
    pub fn y_channel(&self) -> f64 {
        if self.unconditional {
            0.0
        } else {
            self.y
        }
    }
}

/// Log-spaced sinusoidal features of `t` followed by the `y` channel.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeEmbedding {
    frequencies: Vec<f64>,
}

impl TimeEmbedding {
    pub fn new(features: usize, max_frequency: f64) -> Self {
        let m = features / 2;
        let frequencies = if m <= 1 {
            vec![1.0; m]
        } else {
            let log_max = max_frequency.ln();
            (0..m).map(|k| (log_max * k as f64 / (m - 1) as f64).exp()).collect()
        };
        TimeEmbedding { frequencies }
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    /// Number of channels written by [`embed_into`](Self::embed_into).
    pub fn width(&self) -> usize {
        2 * self.frequencies.len() + 1
    }

    pub fn embed(&self, cond: &Conditioning) -> Result<Vector> {
        let mut out = Vec::with_capacity(self.width());
        self.embed_into(cond, &mut out)?;
        Ok(out.into())
    }

    /// Appends `[sin(ω t)…, cos(ω t)…, y]` to `out`.
    pub fn embed_into(&self, cond: &Conditioning, out: &mut Vec<f64>) -> Result<()> {
        if !(0.0..=1.0).contains(&cond.t) {
            return Err(Error::TimeOutOfRange {
                t: cond.t,
                domain: "[0, 1]",
            });
        }
        out.extend(self.frequencies.iter().map(|w| (w * cond.t).sin()));
        out.extend(self.frequencies.iter().map(|w| (w * cond.t).cos()));
        out.push(cond.y_channel());
        Ok(())
    }
}

/// One affine layer: `out = input · weights + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Dense {
            weights: Matrix::zeros(fan_in, fan_out),
            bias: vec![0.0; fan_out],
        }
    }

    /// He-style uniform init scaled by fan-in, zero bias.
    pub fn he_uniform(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let bound = (6.0 / fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| rng.uniform_range(-bound, bound)).collect();
        Dense {
            weights: Matrix::new(fan_in, fan_out, data).expect("sized by construction"),
            bias: vec![0.0; fan_out],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.cols()
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.rows() * self.weights.cols() + self.bias.len()
    }

    fn apply(&self, input: &Matrix) -> Result<Matrix> {
        let mut out = input.matmul(&self.weights)?;
        out.add_row_vector(&self.bias)?;
        Ok(out)
    }
}

/// Parameter-shaped buffers: gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(net: &ScoreNetwork) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| Dense::zeros(l.fan_in(), l.fan_out()))
                .collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weights.as_mut_slice().iter_mut().for_each(|v| *v *= s);
            l.bias.iter_mut().for_each(|v| *v *= s);
        }
    }

    /// All entries in parameter order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn norm_squared(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weights.norm_squared() + l.bias.iter().map(|b| b * b).sum::<f64>())
            .sum()
    }

    fn check_matches(&self, net: &ScoreNetwork) -> Result<()> {
        let same = self.layers.len() == net.layers.len()
            && self
                .layers
                .iter()
                .zip(&net.layers)
                .all(|(g, p)| g.weights.shape() == p.weights.shape() && g.bias.len() == p.bias.len());
        if same {
            Ok(())
        } else {
            Err(Error::invalid("gradient buffers do not match the network's parameter shapes"))
        }
    }
}

/// Activations cached by a forward pass, consumed by [`ScoreNetwork::backward`].
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Input to each layer: the embedded batch, then each hidden activation.
    layer_inputs: Vec<Matrix>,
    output: Matrix,
}

impl ForwardTrace {
    pub fn output(&self) -> &Matrix {
        &self.output
    }

    pub fn into_output(self) -> Matrix {
        self.output
    }

    pub fn batch_size(&self) -> usize {
        self.output.rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreNetwork {
    config: NetConfig,
    embedding: TimeEmbedding,
    layers: Vec<Dense>,
}

impl ScoreNetwork {
    /// He-initialized hidden layers and a zero output layer, so the initial
    /// score estimate is identically zero.
    pub fn new(config: NetConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut layers = Vec::with_capacity(config.hidden_layers + 1);
        let mut fan_in = config.input_width();
        for _ in 0..config.hidden_layers {
            layers.push(Dense::he_uniform(fan_in, config.hidden_width, rng));
            fan_in = config.hidden_width;
        }
        layers.push(Dense::zeros(fan_in, config.dim));
        Ok(Self::assemble(config, layers))
    }

    /// Builds a network from explicit layers, checking that they chain.
    pub fn from_layers(config: NetConfig, layers: Vec<Dense>) -> Result<Self> {
        config.validate()?;
        if layers.len() != config.hidden_layers + 1 {
            return Err(Error::invalid(format!(
                "expected {} layers, got {}",
                config.hidden_layers + 1,
                layers.len()
            )));
        }
        let mut fan_in = config.input_width();
        for (i, l) in layers.iter().enumerate() {
            let fan_out = if i == config.hidden_layers {
                config.dim
            } else {
                config.hidden_width
            };
            if l.fan_in() != fan_in || l.fan_out() != fan_out || l.bias.len() != fan_out {
                return Err(Error::invalid(format!(
                    "layer {i} has shape {:?} with {} biases, expected ({fan_in}, {fan_out})",
                    l.weights.shape(),
                    l.bias.len()
                )));
            }
            fan_in = fan_out;
        }
        Ok(Self::assemble(config, layers))
    }

    fn assemble(config: NetConfig, layers: Vec<Dense>) -> Self {
        ScoreNetwork {
            embedding: TimeEmbedding::new(config.fourier_features, config.max_frequency),
            config,
            layers,
        }
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn embedding(&self) -> &TimeEmbedding {
        &self.embedding
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    /// Mutable access to parameter values. Shapes cannot change through this.
    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(Dense::parameter_count).sum()
    }

    pub fn parameter_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weights.norm_squared() + l.bias.iter().map(|b| b * b).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    fn embed_batch(&self, x: &Matrix, conds: &[Conditioning]) -> Result<Matrix> {
        if x.cols() != self.config.dim {
            return Err(Error::ShapeMismatch {
                op: "score network input",
                left: x.shape(),
                right: (x.rows(), self.config.dim),
            });
        }
        if conds.len() != x.rows() {
            return Err(Error::invalid(format!(
                "{} conditioning inputs for a batch of {} points",
                conds.len(),
                x.rows()
            )));
        }
        let width = self.config.input_width();
        let mut data = Vec::with_capacity(x.rows() * width);
        for (row, cond) in x.iter_rows().zip(conds) {
            data.extend_from_slice(row);
            self.embedding.embed_into(cond, &mut data)?;
        }
        Matrix::new(x.rows(), width, data)
    }

    /// Score estimate for a single point.
    pub fn forward(&self, x: &[f64], cond: &Conditioning) -> Result<Vector> {
        let batch = Matrix::new(1, x.len(), x.to_vec())?;
        Ok(self.forward_batch(&batch, std::slice::from_ref(cond))?.into_vec().into())
    }

    /// Score estimates for a batch of points, one conditioning input per row.
    pub fn forward_batch(&self, x: &Matrix, conds: &[Conditioning]) -> Result<Matrix> {
        let mut a = self.embed_batch(x, conds)?;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            a = layer.apply(&a)?;
            if i < last {
                relu_in_place(&mut a);
            }
        }
        Ok(a)
    }

    /// Forward pass that keeps the activations needed by [`backward`](Self::backward).
    pub fn forward_trace(&self, x: &Matrix, conds: &[Conditioning]) -> Result<ForwardTrace> {
        let mut a = self.embed_batch(x, conds)?;
        let last = self.layers.len() - 1;
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut next = layer.apply(&a)?;
            if i < last {
                relu_in_place(&mut next);
            }
            layer_inputs.push(a);
            a = next;
        }
        Ok(ForwardTrace {
            layer_inputs,
            output: a,
        })
    }

    /// Gradient of `Σ ⟨output, output_grad⟩` over the traced batch with
    /// respect to every parameter.
    pub fn backward(&self, trace: &ForwardTrace, output_grad: &Matrix) -> Result<Gradients> {
        if trace.layer_inputs.len() != self.layers.len() {
            return Err(Error::invalid(
                "forward trace was not produced by a network of this architecture",
            ));
        }
        if output_grad.shape() != trace.output.shape() {
            return Err(Error::ShapeMismatch {
                op: "backward",
                left: trace.output.shape(),
                right: output_grad.shape(),
            });
        }
        for (input, layer) in trace.layer_inputs.iter().zip(&self.layers) {
            if input.cols() != layer.fan_in() {
                return Err(Error::invalid(
                    "forward trace was not produced by a network of this architecture",
                ));
            }
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = output_grad.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.layer_inputs[i];
            grads.push(Dense {
                weights: input.transpose_matmul(&delta)?,
                bias: delta.column_sums(),
            });
            if i > 0 {
                let mut back = delta.matmul_transpose(&layer.weights)?;
                // layer i's input is the post-ReLU output of layer i - 1
                for (g, &a) in back.as_mut_slice().iter_mut().zip(input.as_slice()) {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                }
                delta = back;
            }
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }
}

fn relu_in_place(m: &mut Matrix) {
    for v in m.as_mut_slice() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment accumulators for Adam with bias correction.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Gradients,
    second: Gradients,
    step: u64,
}

impl AdamState {
    pub fn new(net: &ScoreNetwork, config: AdamConfig) -> Self {
        AdamState {
            config,
            first: Gradients::zeros_like(net),
            second: Gradients::zeros_like(net),
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &Gradients {
        &self.first
    }

    pub fn second_moment(&self) -> &Gradients {
        &self.second
    }
}

/// One Adam update of `net` using `grads`.
pub fn adam_step(net: &mut ScoreNetwork, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    grads.check_matches(net)?;
    state.first.check_matches(net)?;
    state.step += 1;
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let c1 = 1.0 - beta1.powf(state.step as f64);
    let c2 = 1.0 - beta2.powf(state.step as f64);

    let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
        for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    };

    for (((layer, g), m), v) in net
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut state.first.layers)
        .zip(&mut state.second.layers)
    {
        update(
            layer.weights.as_mut_slice(),
            g.weights.as_slice(),
            m.weights.as_mut_slice(),
            v.weights.as_mut_slice(),
        );
        update(&mut layer.bias, &g.bias, &mut m.bias, &mut v.bias);
    }
    Ok(())
}
