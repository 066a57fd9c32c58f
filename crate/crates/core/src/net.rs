//! Small MLP predictor with manual backpropagation and Adam.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputKind {
    /// Class probabilities through a softmax.
    SoftmaxProbs,
    /// Raw real outputs.
    Linear,
}

/// Dense layer; `weight` is `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Matrix::zeros(output, input),
            bias: vec![0.0; output],
        }
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for weights and biases.
    pub fn init<R: Rng>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (input.max(1) as f64).sqrt();
        let mut layer = Self::zeros(input, output);
        for w in layer.weight.as_mut_slice() {
            *w = rng.random_range(-bound..=bound);
        }
        for b in &mut layer.bias {
            *b = rng.random_range(-bound..=bound);
        }
        layer
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    fn apply(&self, x: &Matrix) -> Matrix {
        let mut z = Matrix::zeros(x.rows(), self.output_dim());
        for i in 0..x.rows() {
            let xi = x.row(i);
            for (o, zv) in z.row_mut(i).iter_mut().enumerate() {
                *zv = dot(xi, self.weight.row(o)) + self.bias[o];
            }
        }
        z
    }
}

/// Gradients for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
    /// W.r.t. the (masked) input batch.
    pub input: Matrix,
}

impl Gradients {
    /// Parameter gradients in the order of `Predictor::parameters_mut`.
    pub fn parameter_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Input to each layer; the first is the batch itself (column subset if given).
    inputs: Vec<Matrix>,
    /// Column subset used for the first layer, if any.
    columns: Option<Vec<usize>>,
    /// Pre-softmax values for classification, outputs for regression.
    pub logits: Matrix,
    /// Probabilities (classification) or outputs (regression).
    pub output: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictor {
    layers: Vec<Layer>,
    hidden_activation: Activation,
    output: OutputKind,
}

pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut p = logits.clone();
    for i in 0..p.rows() {
        let row = p.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    p
}

/// Maps a gradient w.r.t. softmax probabilities to one w.r.t. logits.
pub fn softmax_backward(probs: &Matrix, grad_probs: &Matrix) -> Matrix {
    let mut g = Matrix::zeros(probs.rows(), probs.cols());
    for i in 0..probs.rows() {
        let p = probs.row(i);
        let gp = grad_probs.row(i);
        let inner = dot(p, gp);
        for (c, gv) in g.row_mut(i).iter_mut().enumerate() {
            *gv = p[c] * (gp[c] - inner);
        }
    }
    g
}

/// Mean cross-entropy and its gradient w.r.t. the logits.
pub fn softmax_cross_entropy(probs: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    if probs.rows() != labels.len() {
        return Err(Error::DimensionMismatch {
            what: "probability rows vs labels",
            expected: labels.len(),
            found: probs.rows(),
        });
    }
    if labels.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let b = labels.len() as f64;
    let mut loss = 0.0;
    let mut g = probs.clone();
    for (i, &y) in labels.iter().enumerate() {
        if y >= probs.cols() {
            return Err(Error::invalid(format!("label {y} out of range")));
        }
        loss -= probs.get(i, y).max(f64::MIN_POSITIVE).ln();
        g.set(i, y, g.get(i, y) - 1.0);
    }
    for v in g.as_mut_slice() {
        *v /= b;
    }
    Ok((loss / b, g))
}

/// Mean absolute error and its (sub)gradient w.r.t. the outputs.
pub fn mean_absolute_error(outputs: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    if outputs.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            what: "outputs vs targets",
            expected: targets.len(),
            found: outputs.len(),
        });
    }
    if outputs.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let b = outputs.len() as f64;
    let loss = outputs.iter().zip(targets).map(|(o, t)| (o - t).abs()).sum::<f64>() / b;
    let grad = outputs
        .iter()
        .zip(targets)
        .map(|(o, t)| {
            if o > t {
                1.0 / b
            } else if o < t {
                -1.0 / b
            } else {
                0.0
            }
        })
        .collect();
    Ok((loss, grad))
}

impl Predictor {
    /// `n_layers` hidden layers of `hidden` units each, seeded uniform init.
    pub fn new(
        input: usize,
        hidden: usize,
        n_layers: usize,
        output_dim: usize,
        output: OutputKind,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::with_rng(input, hidden, n_layers, output_dim, output, &mut rng)
    }

    pub fn with_rng<R: Rng>(
        input: usize,
        hidden: usize,
        n_layers: usize,
        output_dim: usize,
        output: OutputKind,
        rng: &mut R,
    ) -> Result<Self> {
        if input == 0 || output_dim == 0 || (n_layers > 0 && hidden == 0) {
            return Err(Error::invalid("network dimensions must be positive"));
        }
        if output == OutputKind::Linear && output_dim != 1 {
            return Err(Error::invalid("linear output must be one-dimensional"));
        }
        let mut dims = vec![input];
        dims.extend(std::iter::repeat_n(hidden, n_layers));
        dims.push(output_dim);
        let layers = dims.windows(2).map(|w| Layer::init(w[0], w[1], rng)).collect();
        Ok(Self {
            layers,
            hidden_activation: Activation::Relu,
            output,
        })
    }

    pub fn from_layers(layers: Vec<Layer>, output: OutputKind) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("predictor needs at least one layer"));
        }
        for w in layers.windows(2) {
            if w[0].output_dim() != w[1].input_dim() {
                return Err(Error::DimensionMismatch {
                    what: "layer chain",
                    expected: w[0].output_dim(),
                    found: w[1].input_dim(),
                });
            }
        }
        for l in &layers {
            if l.bias.len() != l.output_dim() {
                return Err(Error::DimensionMismatch {
                    what: "bias length",
                    expected: l.output_dim(),
                    found: l.bias.len(),
                });
            }
        }
        Ok(Self {
            layers,
            hidden_activation: Activation::Relu,
            output,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn output_kind(&self) -> OutputKind {
        self.output
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(Layer::output_dim).unwrap_or(0)
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    /// Flat views of every parameter tensor, in layer order (weight, bias).
    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &mut self.layers {
            out.push(l.weight.as_mut_slice());
            out.push(l.bias.as_mut_slice());
        }
        out
    }

    pub fn parameter_sizes(&self) -> Vec<usize> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice().len(), l.bias.len()])
            .collect()
    }

    pub fn forward(&self, x: &Matrix) -> Result<ForwardPass> {
        if x.cols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "input columns",
                expected: self.input_dim(),
                found: x.cols(),
            });
        }
        self.forward_impl(x.clone(), None)
    }

    /// Forward pass where `x` holds only the listed input columns; every other
    /// input is taken to be zero.
    pub fn forward_columns(&self, x: &Matrix, columns: &[usize]) -> Result<ForwardPass> {
        if x.cols() != columns.len() {
            return Err(Error::DimensionMismatch {
                what: "input columns",
                expected: columns.len(),
                found: x.cols(),
            });
        }
        if columns.iter().any(|&c| c >= self.input_dim()) {
            return Err(Error::invalid("column index out of range"));
        }
        self.forward_impl(x.clone(), Some(columns.to_vec()))
    }

    fn forward_impl(&self, x: Matrix, columns: Option<Vec<usize>>) -> Result<ForwardPass> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut current = x;
        let last = self.layers.len() - 1;
        let mut z = Matrix::zeros(0, 0);
        for (li, layer) in self.layers.iter().enumerate() {
            z = match (&columns, li) {
                (Some(cols), 0) => Layer {
                    weight: layer.weight.select_cols(cols),
                    bias: layer.bias.clone(),
                }
                .apply(&current),
                _ => layer.apply(&current),
            };
            inputs.push(current);
            if li < last {
                let mut a = z.clone();
                a.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
                current = a;
            } else {
                current = Matrix::zeros(0, 0);
            }
        }
        let output = match self.output {
            OutputKind::SoftmaxProbs => softmax_rows(&z),
            OutputKind::Linear => z.clone(),
        };
        Ok(ForwardPass {
            inputs,
            columns,
            logits: z,
            output,
        })
    }

    /// Output only.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward(x)?.output)
    }

    /// Backpropagates a gradient w.r.t. the last layer's pre-activation
    /// (logits for classification, outputs for regression). For a column
    /// subset forward pass, the first-layer weight gradient is scattered back
    /// to full width and the input gradient covers only the subset.
    pub fn backward(&self, pass: &ForwardPass, grad_logits: &Matrix) -> Result<Gradients> {
        let b = pass.logits.rows();
        if grad_logits.rows() != b || grad_logits.cols() != pass.logits.cols() {
            return Err(Error::DimensionMismatch {
                what: "output gradient shape",
                expected: b * pass.logits.cols(),
                found: grad_logits.rows() * grad_logits.cols(),
            });
        }
        let mut grads: Vec<LayerGrad> = Vec::with_capacity(self.layers.len());
        let mut upstream = grad_logits.clone();
        let mut input_grad = Matrix::zeros(0, 0);
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let x = &pass.inputs[li];
            let sub;
            let weight = match (&pass.columns, li) {
                (Some(cols), 0) => {
                    sub = layer.weight.select_cols(cols);
                    &sub
                }
                _ => &layer.weight,
            };
            let mut gw = Matrix::zeros(weight.rows(), weight.cols());
            let mut gb = vec![0.0; weight.rows()];
            let mut gx = Matrix::zeros(b, weight.cols());
            for i in 0..b {
                let xi = x.row(i);
                let ui = upstream.row(i);
                let gxi = gx.row_mut(i);
                for (o, &u) in ui.iter().enumerate() {
                    if u == 0.0 {
                        continue;
                    }
                    gb[o] += u;
                    axpy(u, xi, gw.row_mut(o));
                    axpy(u, weight.row(o), gxi);
                }
            }
            if let (Some(cols), 0) = (&pass.columns, li) {
                let mut full = Matrix::zeros(layer.weight.rows(), layer.weight.cols());
                for o in 0..gw.rows() {
                    let src = gw.row(o);
                    let dst = full.row_mut(o);
                    for (s, &c) in cols.iter().enumerate() {
                        dst[c] = src[s];
                    }
                }
                gw = full;
            }
            grads.push(LayerGrad { weight: gw, bias: gb });
            if li > 0 {
                // Through the ReLU of the previous layer: its output is `x` here.
                for (g, &a) in gx.as_mut_slice().iter_mut().zip(x.as_slice()) {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                }
                upstream = gx;
            } else {
                input_grad = gx;
            }
        }
        grads.reverse();
        Ok(Gradients {
            layers: grads,
            input: input_grad,
        })
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        Checkpoint::new(self.clone()).save(path)
    }
}

/// Adam hyperparameters with exponential learning-rate decay
/// `lr_t = lr * decay_rate^(t / decay_steps)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub decay_steps: f64,
    pub decay_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64, decay_steps: f64, decay_rate: f64) -> Self {
        Self {
            learning_rate,
            decay_steps,
            decay_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    config: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl OptimizerState {
    /// One moment buffer per parameter tensor of the given sizes.
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Result<Self> {
        if !(config.learning_rate > 0.0 && config.decay_steps > 0.0 && config.decay_rate > 0.0) {
            return Err(Error::invalid(
                "learning rate, decay steps and decay rate must be positive",
            ));
        }
        Ok(Self {
            config,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        })
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn learning_rate_at(&self, t: u64) -> f64 {
        self.config.learning_rate * self.config.decay_rate.powf(t as f64 / self.config.decay_steps)
    }

    /// One Adam update over matching parameter and gradient tensors.
    pub fn adam_step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::DimensionMismatch {
                what: "parameter tensor count",
                expected: self.first.len(),
                found: params.len().min(grads.len()),
            });
        }
        let c = self.config;
        let lr = self.learning_rate_at(self.step);
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for k in 0..params.len() {
            let (p, g) = (&mut params[k], grads[k]);
            let (m, v) = (&mut self.first[k], &mut self.second[k]);
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::DimensionMismatch {
                    what: "parameter tensor size",
                    expected: m.len(),
                    found: p.len(),
                });
            }
            for i in 0..m.len() {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] -= lr * mh / (vh.sqrt() + c.epsilon);
            }
        }
        Ok(())
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Versioned JSON checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub predictor: Predictor,
    pub optimizer: Option<OptimizerState>,
    pub mask_argument: Option<Vec<f64>>,
}

impl Checkpoint {
    pub fn new(predictor: Predictor) -> Self {
        Self {
            format_version: CHECKPOINT_VERSION,
            predictor,
            optimizer: None,
            mask_argument: None,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        crate::io::write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint version {}",
                ck.format_version
            )));
        }
        Ok(ck)
    }
}
