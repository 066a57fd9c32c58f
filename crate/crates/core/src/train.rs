//! End-to-end training of the sparse mask jointly with the predictor.
//!
//! Each step picks the target feature count from the tempering schedule,
//! projects the mask argument to a sparse mask with exactly that support,
//! feeds the masked batch through the MLP and updates both the network and
//! the mask argument from the task loss plus the MI objective.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Labels, Split};
use crate::error::{Error, Result};
use crate::linalg::{mean, std_dev, Matrix};
use crate::mask::{MaskState, TemperingSchedule};
use crate::metrics;
use crate::miloss::{
    hsic_scale_gradient, miloss_gradients, one_hot, FeatureScope, LossBreakdown, MiOptions,
    PairReduction, PredictionBatch, RcsOptions,
};
use crate::net::{
    mean_absolute_error, softmax_backward, softmax_cross_entropy, AdamConfig, LayerGrad,
    OptimizerState, OutputKind, Predictor,
};
use crate::simplex::SimplexProjection;

/// Which loss terms drive the mask argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum MaskGradSource {
    #[default]
    Both,
    TaskOnly,
    MiOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub decay_steps: f64,
    pub decay_rate: f64,
    pub hidden_units: usize,
    pub n_layers: usize,
    pub target_features: usize,
    pub tempering: bool,
    /// Step at which tempering reaches the target; half the run when unset.
    pub n_tmp: Option<usize>,
    pub mi_weight: f64,
    pub mi_enabled: bool,
    /// Use HSIC between masked features and labels in place of the MI objective.
    pub hsic_enabled: bool,
    pub rcs_enabled: bool,
    pub rcs_reduction: PairReduction,
    /// Rescale the mask argument so the support has exactly the target size.
    pub mask_scaling: bool,
    pub mask_grad_source: MaskGradSource,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 256,
            learning_rate: 0.001,
            decay_steps: 1000.0,
            decay_rate: 0.95,
            hidden_units: 100,
            n_layers: 1,
            target_features: 50,
            tempering: true,
            n_tmp: None,
            mi_weight: 1.0,
            mi_enabled: true,
            hsic_enabled: false,
            rcs_enabled: true,
            rcs_reduction: PairReduction::MeanOverPairs,
            mask_scaling: true,
            mask_grad_source: MaskGradSource::Both,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if self.target_features == 0 || self.target_features > n_features {
            return Err(Error::Config(format!(
                "target features {} must be in [1, {n_features}]",
                self.target_features
            )));
        }
        if self.n_layers > 0 && self.hidden_units == 0 {
            return Err(Error::Config("hidden units must be positive".into()));
        }
        if !(self.mi_weight >= 0.0 && self.mi_weight.is_finite()) {
            return Err(Error::Config("mi weight must be finite and non-negative".into()));
        }
        if !(self.learning_rate > 0.0 && self.decay_steps > 0.0 && self.decay_rate > 0.0) {
            return Err(Error::Config(
                "learning rate, decay steps and decay rate must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig::new(self.learning_rate, self.decay_steps, self.decay_rate)
    }

    fn mi_options(&self) -> MiOptions {
        MiOptions {
            include_rcs: self.rcs_enabled,
            rcs: RcsOptions {
                reduction: self.rcs_reduction,
                scope: FeatureScope::AllFeatures,
                ..Default::default()
            },
        }
    }
}

/// Per-step training log entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub epoch: usize,
    pub target_count: usize,
    pub support_size: usize,
    pub learning_rate: f64,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub n_samples: usize,
    pub accuracy: Option<f64>,
    /// Binary classification only.
    pub auc: Option<f64>,
    pub mae: Option<f64>,
}

impl SplitMetrics {
    /// Accuracy for classification, negated MAE for regression.
    pub fn headline(&self) -> f64 {
        self.accuracy
            .or(self.mae.map(|m| -m))
            .unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationFlags {
    pub mi_enabled: bool,
    pub tempering: bool,
    pub hsic_enabled: bool,
    pub rcs_enabled: bool,
    pub mask_scaling: bool,
}

impl From<&TrainConfig> for AblationFlags {
    fn from(c: &TrainConfig) -> Self {
        Self {
            mi_enabled: c.mi_enabled,
            tempering: c.tempering,
            hsic_enabled: c.hsic_enabled,
            rcs_enabled: c.rcs_enabled,
            mask_scaling: c.mask_scaling,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    /// Support of the final sparse mask, ascending.
    pub selected: Vec<usize>,
    pub mask_probs: Vec<f64>,
    /// Feature indices by mask probability, descending.
    pub ranking: Vec<usize>,
    pub metrics: BTreeMap<String, SplitMetrics>,
    pub loss_history: Vec<StepLog>,
    pub flags: AblationFlags,
    pub n_steps: usize,
    /// Steps at which the mask projection fell back to plain sparsemax.
    pub degenerate_steps: Vec<usize>,
}

impl SelectionReport {
    pub fn test_metrics(&self) -> SplitMetrics {
        self.metrics.get("test").copied().unwrap_or_default()
    }

    /// Mean task loss per epoch.
    pub fn epoch_task_loss(&self) -> Vec<f64> {
        let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        for s in &self.loss_history {
            let e = sums.entry(s.epoch).or_insert((0.0, 0));
            e.0 += s.loss.task_loss;
            e.1 += 1;
        }
        sums.values().map(|(s, n)| s / *n as f64).collect()
    }
}

/// Trained predictor with its mask.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub predictor: Predictor,
    pub mask: MaskState,
}

fn output_shape(labels: &Labels) -> Result<(usize, OutputKind)> {
    match labels {
        Labels::Classes { values, .. } => {
            if values.len() < 2 {
                return Err(Error::invalid("classification needs at least two classes"));
            }
            Ok((values.len(), OutputKind::SoftmaxProbs))
        }
        Labels::Reals(_) => Ok((1, OutputKind::Linear)),
    }
}

fn mul_columns(x: &mut Matrix, scale: &[f64]) {
    for r in 0..x.rows() {
        for (v, &s) in x.row_mut(r).iter_mut().zip(scale) {
            *v *= s;
        }
    }
}

fn masked_support_inputs(x: &Matrix, proj: &SimplexProjection) -> (Matrix, Matrix) {
    let support = proj.support();
    let raw = x.select_cols(support);
    let weights: Vec<f64> = support.iter().map(|&j| proj.values()[j]).collect();
    let mut masked = raw.clone();
    mul_columns(&mut masked, &weights);
    (raw, masked)
}

/// Task loss and its gradient w.r.t. the last pre-activation.
fn task_loss(output: &Matrix, labels: &Labels) -> Result<(f64, Matrix)> {
    match labels {
        Labels::Classes { indices, .. } => softmax_cross_entropy(output, indices),
        Labels::Reals(y) => {
            let (l, g) = mean_absolute_error(output.as_slice(), y)?;
            Ok((l, Matrix::from_vec(g.len(), 1, g)?))
        }
    }
}

fn prediction_batch(output: &Matrix, labels: &Labels) -> PredictionBatch {
    match labels {
        Labels::Classes { indices, .. } => PredictionBatch::Classification {
            probs: output.clone(),
            labels: indices.clone(),
        },
        Labels::Reals(y) => PredictionBatch::Regression {
            outputs: output.as_slice().to_vec(),
            targets: y.clone(),
        },
    }
}

fn label_matrix(labels: &Labels) -> Matrix {
    match labels {
        Labels::Classes { indices, values } => one_hot(indices, values.len()),
        Labels::Reals(y) => Matrix::from_vec(y.len(), 1, y.clone()).expect("column vector"),
    }
}

fn add_into(dst: &mut Matrix, src: &Matrix) {
    for (d, s) in dst.as_mut_slice().iter_mut().zip(src.as_slice()) {
        *d += s;
    }
}

/// Gradient w.r.t. the sparse mask values on the support from a gradient
/// w.r.t. the masked support inputs.
fn sparse_value_grad(raw: &Matrix, input_grad: &Matrix) -> Vec<f64> {
    let mut g = vec![0.0; raw.cols()];
    for i in 0..raw.rows() {
        for ((acc, &x), &u) in g.iter_mut().zip(raw.row(i)).zip(input_grad.row(i)) {
            *acc += x * u;
        }
    }
    g
}

/// Loss terms and gradients of the combined objective on one batch.
#[derive(Debug, Clone)]
pub struct BatchGradients {
    pub loss: LossBreakdown,
    /// In the order of `Predictor::layers`.
    pub layers: Vec<LayerGrad>,
    /// W.r.t. the mask argument, with the mask multiplier held fixed.
    pub mask_argument: Vec<f64>,
}

/// Forward and backward pass of `task + mi_weight * (E + r_cs)` (or the HSIC
/// substitute) on the batch `x` (raw features, all columns).
pub fn batch_gradients(
    cfg: &TrainConfig,
    model: &Predictor,
    mask: &MaskState,
    x: &Matrix,
    labels: &Labels,
) -> Result<BatchGradients> {
    let d = mask.len();
    let proj = mask.sparse().clone();
    let support = proj.support().to_vec();
    let (raw, masked) = masked_support_inputs(x, &proj);
    let pass = model.forward_columns(&masked, &support)?;
    let (task, task_grad) = task_loss(&pass.output, labels)?;

    let mut mi_grad_logits: Option<Matrix> = None;
    let mut sparse_grad_mi = vec![0.0; support.len()];
    let mut argument_grad_direct = vec![0.0; d];
    let (mut mi_error, mut r_cs) = (0.0, 0.0);
    if cfg.mi_enabled && cfg.hsic_enabled {
        let (hsic, g) = hsic_scale_gradient(x, mask.argument(), &label_matrix(labels), None, None)?;
        mi_error = hsic.regularizer();
        for (a, gv) in argument_grad_direct.iter_mut().zip(g) {
            *a = cfg.mi_weight * gv;
        }
    } else if cfg.mi_enabled {
        let batch = prediction_batch(&pass.output, labels);
        let p: Vec<f64> = support.iter().map(|&j| proj.values()[j].min(1.0)).collect();
        let g = miloss_gradients(&raw, &batch, &p, cfg.mi_weight, &cfg.mi_options())?;
        mi_error = g.mi_error;
        r_cs = g.r_cs;
        mi_grad_logits = Some(match labels {
            Labels::Classes { .. } => softmax_backward(&pass.output, &g.predictions),
            Labels::Reals(_) => g.predictions,
        });
        sparse_grad_mi = g.p;
    }
    let loss = LossBreakdown::new(task, mi_error, r_cs, if cfg.mi_enabled { cfg.mi_weight } else { 0.0 });

    // Backpropagate. When isolating a source for the mask, run the two
    // upstream gradients separately and recombine for the network.
    let (param_grads, sparse_grad) = match (&mi_grad_logits, cfg.mask_grad_source) {
        (Some(mi), MaskGradSource::TaskOnly | MaskGradSource::MiOnly) => {
            let gt = model.backward(&pass, &task_grad)?;
            let gm = model.backward(&pass, mi)?;
            let mut layers = gt.layers.clone();
            for (l, m) in layers.iter_mut().zip(&gm.layers) {
                add_into(&mut l.weight, &m.weight);
                for (b, mb) in l.bias.iter_mut().zip(&m.bias) {
                    *b += mb;
                }
            }
            let sg = if cfg.mask_grad_source == MaskGradSource::TaskOnly {
                sparse_value_grad(&raw, &gt.input)
            } else {
                let mut s = sparse_value_grad(&raw, &gm.input);
                for (a, b) in s.iter_mut().zip(&sparse_grad_mi) {
                    *a += b;
                }
                s
            };
            (layers, sg)
        }
        _ => {
            let mut upstream = task_grad;
            if let Some(mi) = &mi_grad_logits {
                add_into(&mut upstream, mi);
            }
            let g = model.backward(&pass, &upstream)?;
            let mut s = sparse_value_grad(&raw, &g.input);
            if cfg.mask_grad_source != MaskGradSource::TaskOnly {
                for (a, b) in s.iter_mut().zip(&sparse_grad_mi) {
                    *a += b;
                }
            }
            (g.layers, s)
        }
    };

    let mut sparse_full = vec![0.0; d];
    for (&j, g) in support.iter().zip(&sparse_grad) {
        sparse_full[j] = *g;
    }
    let mut arg_grad = mask.argument_gradient(&sparse_full)?;
    if cfg.mask_grad_source != MaskGradSource::TaskOnly {
        for (a, b) in arg_grad.iter_mut().zip(&argument_grad_direct) {
            *a += b;
        }
    }

    Ok(BatchGradients { loss, layers: param_grads, mask_argument: arg_grad })
}

/// Runs one training step on a batch; updates `model`, `mask` and `opt`.
fn train_step(
    cfg: &TrainConfig,
    model: &mut Predictor,
    mask: &mut MaskState,
    opt: &mut OptimizerState,
    x: &Matrix,
    labels: &Labels,
) -> Result<LossBreakdown> {
    let g = batch_gradients(cfg, model, mask, x, labels)?;
    let mut grad_slices: Vec<&[f64]> = g
        .layers
        .iter()
        .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
        .collect();
    grad_slices.push(&g.mask_argument);
    let mut params = model.parameters_mut();
    params.push(mask.argument_mut());
    opt.adam_step(&mut params, &grad_slices)?;
    Ok(g.loss)
}

/// Steps per epoch for `n` training samples.
pub fn steps_per_epoch(n: usize, batch_size: usize) -> usize {
    n.div_ceil(batch_size)
}

/// Trains and returns the report with the trained model.
pub fn train_slm_with_model(data: &Dataset, cfg: &TrainConfig) -> Result<(SelectionReport, TrainedModel)> {
    let d = data.n_features();
    cfg.validate(d)?;
    let train = data.split_data(Split::Train);
    let n_train = train.x.rows();
    if n_train == 0 {
        return Err(Error::invalid("train split is empty"));
    }
    let (out_dim, kind) = output_shape(&data.labels)?;
    let mut model = Predictor::new(d, cfg.hidden_units, cfg.n_layers, out_dim, kind, cfg.seed)?;
    let mut mask = MaskState::new(d)?;
    let mut sizes = model.parameter_sizes();
    sizes.push(d);
    let mut opt = OptimizerState::new(cfg.adam(), &sizes)?;

    let per_epoch = steps_per_epoch(n_train, cfg.batch_size);
    let n_steps = cfg.epochs * per_epoch;
    let schedule = if cfg.tempering {
        match cfg.n_tmp {
            Some(n_tmp) => TemperingSchedule::with_threshold(d, cfg.target_features, n_steps, n_tmp)?,
            None => TemperingSchedule::new(d, cfg.target_features, n_steps)?,
        }
    } else {
        TemperingSchedule::constant(cfg.target_features, n_steps)?
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_5EED_0000_0001);
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut history = Vec::with_capacity(n_steps);
    let mut degenerate_steps = Vec::new();
    let mut t = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let target = schedule.epoch_aligned_target(t, per_epoch)?;
            mask.refresh_to(target, cfg.mask_scaling)?;
            if mask.degenerate_fallback() {
                degenerate_steps.push(t);
            }
            let xb = train.x.select_rows(chunk);
            let yb = train.labels.select(chunk);
            let lr = opt.learning_rate_at(opt.step_count());
            let loss = train_step(cfg, &mut model, &mut mask, &mut opt, &xb, &yb)?;
            if !loss.is_finite() || !model.is_finite() {
                return Err(Error::Diverged {
                    step: t,
                    message: format!(
                        "non-finite loss (task {}, mi {}, r_cs {})",
                        loss.task_loss, loss.mi_error, loss.r_cs
                    ),
                });
            }
            history.push(StepLog {
                step: t,
                epoch,
                target_count: target,
                support_size: mask.sparse().k(),
                learning_rate: lr,
                loss,
            });
            t += 1;
        }
    }

    // Freeze at the final target.
    mask.refresh_to(cfg.target_features, cfg.mask_scaling)?;
    let mut metrics_by_split = BTreeMap::new();
    for split in [Split::Train, Split::Val, Split::Test] {
        if !data.indices(split).is_empty() {
            metrics_by_split.insert(
                split.name().to_string(),
                evaluate(&model, mask.sparse(), data, split)?,
            );
        }
    }
    let report = SelectionReport {
        selected: mask.sparse().support().to_vec(),
        mask_probs: mask.sparse().values().to_vec(),
        ranking: mask.ranking(),
        metrics: metrics_by_split,
        loss_history: history,
        flags: cfg.into(),
        n_steps,
        degenerate_steps,
    };
    Ok((report, TrainedModel { predictor: model, mask }))
}

pub fn train_slm(data: &Dataset, cfg: &TrainConfig) -> Result<SelectionReport> {
    Ok(train_slm_with_model(data, cfg)?.0)
}

fn metrics_for(output: &Matrix, labels: &Labels) -> Result<SplitMetrics> {
    let mut m = SplitMetrics {
        n_samples: labels.len(),
        ..Default::default()
    };
    match labels {
        Labels::Classes { indices, values } => {
            m.accuracy = Some(metrics::accuracy(output, indices)?);
            if values.len() == 2 {
                let pos: Vec<bool> = indices.iter().map(|&y| y == 1).collect();
                if pos.iter().any(|&p| p) && pos.iter().any(|&p| !p) {
                    m.auc = Some(metrics::auc(&output.column(1), &pos)?);
                }
            }
        }
        Labels::Reals(y) => m.mae = Some(metrics::mean_absolute_error(output.as_slice(), y)?),
    }
    Ok(m)
}

/// Metrics of `model` on one split with inputs multiplied by the sparse mask.
pub fn evaluate(model: &Predictor, mask: &SimplexProjection, data: &Dataset, split: Split) -> Result<SplitMetrics> {
    let part = data.split_data(split);
    if part.x.rows() == 0 {
        return Err(Error::invalid(format!("{} split is empty", split.name())));
    }
    if mask.len() != data.n_features() {
        return Err(Error::DimensionMismatch {
            what: "mask length vs features",
            expected: data.n_features(),
            found: mask.len(),
        });
    }
    let (_, masked) = masked_support_inputs(&part.x, mask);
    let out = model.forward_columns(&masked, mask.support())?.output;
    metrics_for(&out, &part.labels)
}

/// Plain MLP on the given columns with the same optimizer settings; returns
/// metrics on every non-empty split.
pub fn train_predictor(
    data: &Dataset,
    columns: &[usize],
    cfg: &TrainConfig,
) -> Result<BTreeMap<String, SplitMetrics>> {
    let sub = data.select_features(columns)?;
    let train = sub.split_data(Split::Train);
    let n_train = train.x.rows();
    if n_train == 0 {
        return Err(Error::invalid("train split is empty"));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::Config("epochs and batch size must be positive".into()));
    }
    let (out_dim, kind) = output_shape(&sub.labels)?;
    let mut model = Predictor::new(columns.len(), cfg.hidden_units, cfg.n_layers, out_dim, kind, cfg.seed)?;
    let mut opt = OptimizerState::new(cfg.adam(), &model.parameter_sizes())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_5EED_0000_0001);
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut t = 0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let xb = train.x.select_rows(chunk);
            let yb = train.labels.select(chunk);
            let pass = model.forward(&xb)?;
            let (loss, g) = task_loss(&pass.output, &yb)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    step: t,
                    message: "non-finite task loss".into(),
                });
            }
            let grads = model.backward(&pass, &g)?;
            opt.adam_step(&mut model.parameters_mut(), &grads.parameter_slices())?;
            t += 1;
        }
    }
    let mut out = BTreeMap::new();
    for split in [Split::Train, Split::Val, Split::Test] {
        let part = sub.split_data(split);
        if part.x.rows() > 0 {
            let pred = model.predict(&part.x)?;
            out.insert(split.name().to_string(), metrics_for(&pred, &part.labels)?);
        }
    }
    Ok(out)
}

/// One cell of the MI × tempering grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub mi_enabled: bool,
    pub tempering: bool,
    pub seeds: Vec<u64>,
    /// Headline test metric per seed (accuracy, or negated MAE).
    pub scores: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub reports: Vec<SelectionReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub cells: Vec<AblationCell>,
}

impl AblationReport {
    pub fn cell(&self, mi_enabled: bool, tempering: bool) -> Option<&AblationCell> {
        self.cells
            .iter()
            .find(|c| c.mi_enabled == mi_enabled && c.tempering == tempering)
    }
}

/// Runs every MI on/off × tempering on/off combination over the given seeds.
pub fn run_ablation(data: &Dataset, cfg: &TrainConfig, seeds: &[u64]) -> Result<AblationReport> {
    if seeds.is_empty() {
        return Err(Error::invalid("ablation needs at least one seed"));
    }
    let mut cells = Vec::with_capacity(4);
    for (mi, temp) in [(true, true), (false, true), (true, false), (false, false)] {
        let mut scores = Vec::with_capacity(seeds.len());
        let mut reports = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let c = TrainConfig {
                mi_enabled: mi,
                tempering: temp,
                seed,
                ..cfg.clone()
            };
            let r = train_slm(data, &c)?;
            scores.push(r.test_metrics().headline());
            reports.push(r);
        }
        cells.push(AblationCell {
            mi_enabled: mi,
            tempering: temp,
            seeds: seeds.to_vec(),
            mean: mean(&scores),
            sd: std_dev(&scores),
            scores,
            reports,
        });
    }
    Ok(AblationReport { cells })
}
