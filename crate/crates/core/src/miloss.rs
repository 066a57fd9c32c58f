//! Mutual-information-maximizing training objective.
//!
//! The quadratic error of a probabilistic predictor `R(x, y)`,
//! `(1 - R(x, Y))^2 + sum_{y != Y} R(x, y)^2`, is minimized by `R = P(y | x)`
//! with optimum `1 - sum_y P(y)^2 - I_q(X, Y)`, where
//! `I_q = sum_{x,y} P(x,y)^2 / P(x) - sum_y P(y)^2` is the quadratic relaxation
//! of mutual information. On a batch, this objective is paired with a
//! pairwise consistency penalty weighting each sample pair by the probability
//! that they agree on every selected feature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Probability rows must sum to one within this tolerance.
pub const ROW_SUM_TOL: f64 = 1e-6;

/// Feature values closer than this count as equal in the consistency term.
pub const FEATURE_EQ_TOL: f64 = 1e-9;

/// Model outputs for a batch together with the observed labels.
#[derive(Debug, Clone, PartialEq)]
pub enum PredictionBatch {
    /// `probs` is `b × c`, rows on the simplex.
    Classification { probs: Matrix, labels: Vec<usize> },
    /// One real output per sample.
    Regression { outputs: Vec<f64>, targets: Vec<f64> },
}

impl PredictionBatch {
    pub fn len(&self) -> usize {
        match self {
            PredictionBatch::Classification { labels, .. } => labels.len(),
            PredictionBatch::Regression { targets, .. } => targets.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PredictionBatch::Classification { probs, labels } => {
                if probs.rows() != labels.len() {
                    return Err(Error::DimensionMismatch {
                        what: "probability rows vs labels",
                        expected: labels.len(),
                        found: probs.rows(),
                    });
                }
                for (i, row) in probs.iter_rows().enumerate() {
                    if row.iter().any(|&p| !(-ROW_SUM_TOL..=1.0 + ROW_SUM_TOL).contains(&p)) {
                        return Err(Error::invalid(format!("row {i} has entries outside [0, 1]")));
                    }
                    let s: f64 = row.iter().sum();
                    if (s - 1.0).abs() > ROW_SUM_TOL {
                        return Err(Error::invalid(format!("row {i} sums to {s}, not 1")));
                    }
                }
                if let Some(&y) = labels.iter().find(|&&y| y >= probs.cols()) {
                    return Err(Error::invalid(format!(
                        "label {y} out of range for {} classes",
                        probs.cols()
                    )));
                }
                Ok(())
            }
            PredictionBatch::Regression { outputs, targets } => {
                if outputs.len() != targets.len() {
                    return Err(Error::DimensionMismatch {
                        what: "outputs vs targets",
                        expected: targets.len(),
                        found: outputs.len(),
                    });
                }
                Ok(())
            }
        }
    }

    /// `R(x_i, Y_i)` for classification, `R(x_i)` for regression.
    pub fn own_label_scores(&self) -> Vec<f64> {
        match self {
            PredictionBatch::Classification { probs, labels } => labels
                .iter()
                .enumerate()
                .map(|(i, &y)| probs.get(i, y))
                .collect(),
            PredictionBatch::Regression { outputs, .. } => outputs.clone(),
        }
    }
}

/// Per-step loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub task_loss: f64,
    /// Quadratic error (or MSE for regression), without the consistency term.
    pub mi_error: f64,
    pub r_cs: f64,
    pub combined: f64,
    pub mi_weight: f64,
    pub task_weight: f64,
}

impl LossBreakdown {
    pub fn new(task_loss: f64, mi_error: f64, r_cs: f64, mi_weight: f64) -> Self {
        let task_weight = 1.0;
        Self {
            task_loss,
            mi_error,
            r_cs,
            combined: task_weight * task_loss + mi_weight * (mi_error + r_cs),
            mi_weight,
            task_weight,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.task_loss.is_finite()
            && self.mi_error.is_finite()
            && self.r_cs.is_finite()
            && self.combined.is_finite()
    }
}

/// How pair terms of the consistency penalty are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum PairReduction {
    /// Plain sum over unordered pairs.
    Sum,
    /// Sum divided by the number of pairs, keeping the term on the scale of
    /// the per-sample quadratic error regardless of batch size.
    #[default]
    MeanOverPairs,
}

/// Which features enter the agreement product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum FeatureScope {
    /// Every feature. Unselected features (`p_j = 0`) contribute a factor of 1.
    AllFeatures,
    /// Only features with `p_j > 0`. Same value as `AllFeatures`; the gradient
    /// w.r.t. `p_j` is left at zero for the others.
    #[default]
    Support,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RcsOptions {
    pub reduction: PairReduction,
    pub scope: FeatureScope,
    pub feature_eq_tol: f64,
}

impl Default for RcsOptions {
    fn default() -> Self {
        Self {
            reduction: PairReduction::default(),
            scope: FeatureScope::default(),
            feature_eq_tol: FEATURE_EQ_TOL,
        }
    }
}

/// Mean per-sample quadratic error over a classification batch.
pub fn quadratic_error(batch: &PredictionBatch) -> Result<f64> {
    batch.validate()?;
    let PredictionBatch::Classification { probs, labels } = batch else {
        return Err(Error::invalid("quadratic_error expects a classification batch"));
    };
    if labels.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            probs
                .row(i)
                .iter()
                .enumerate()
                .map(|(c, &r)| if c == y { (1.0 - r) * (1.0 - r) } else { r * r })
                .sum::<f64>()
        })
        .sum();
    Ok(total / labels.len() as f64)
}

fn validate_probabilities(p: &[f64]) -> Result<()> {
    if let Some((j, v)) = p
        .iter()
        .enumerate()
        .find(|(_, &v)| !(0.0..=1.0).contains(&v))
    {
        return Err(Error::invalid(format!(
            "mask probability p[{j}] = {v} outside [0, 1]"
        )));
    }
    Ok(())
}

struct RcsOutput {
    value: f64,
    grad_scores: Vec<f64>,
    grad_p: Vec<f64>,
}

/// Unordered pairs `(i, k)`, `i < k`, whose rows agree within `tol` on at
/// least one column. Sorted and deduplicated.
fn agreeing_pairs(cols: &Matrix, tol: f64) -> Vec<(usize, usize)> {
    let b = cols.rows();
    let mut pairs = Vec::new();
    let mut order: Vec<usize> = (0..b).collect();
    for s in 0..cols.cols() {
        order.sort_by(|&a, &c| cols.get(a, s).total_cmp(&cols.get(c, s)));
        for (pos, &a) in order.iter().enumerate() {
            let va = cols.get(a, s);
            for &c in &order[pos + 1..] {
                if cols.get(c, s) - va > tol {
                    break;
                }
                pairs.push((a.min(c), a.max(c)));
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    pairs
}

/// Consistency penalty and (optionally) its gradients w.r.t. the per-sample
/// scores and the mask probabilities. `O(|scope| * b log b)` plus
/// `O(|scope|)` per pair of samples that agree on some feature.
fn rcs_core(
    x: &Matrix,
    scores: &[f64],
    p: &[f64],
    opts: &RcsOptions,
    with_grad: bool,
) -> Result<RcsOutput> {
    let b = scores.len();
    if x.rows() != b {
        return Err(Error::DimensionMismatch {
            what: "feature rows vs batch size",
            expected: b,
            found: x.rows(),
        });
    }
    if x.cols() != p.len() {
        return Err(Error::DimensionMismatch {
            what: "mask length vs feature count",
            expected: x.cols(),
            found: p.len(),
        });
    }
    validate_probabilities(p)?;
    let mut out = RcsOutput {
        value: 0.0,
        grad_scores: vec![0.0; b],
        grad_p: vec![0.0; p.len()],
    };
    if b < 2 {
        log::warn!("consistency term needs at least two samples; batch has {b}");
        return Ok(out);
    }

    let scope: Vec<usize> = match opts.scope {
        FeatureScope::AllFeatures => (0..p.len()).collect(),
        FeatureScope::Support => (0..p.len()).filter(|&j| p[j] > 0.0).collect(),
    };
    let keep: Vec<f64> = scope.iter().map(|&j| 1.0 - p[j]).collect();
    let cols = x.select_cols(&scope);
    let norm = match opts.reduction {
        PairReduction::Sum => 1.0,
        PairReduction::MeanOverPairs => 2.0 / (b * (b - 1)) as f64,
    };

    // Pairs that differ on every feature in scope share the weight
    // prod(1 - p); their total comes from the variance identity
    // sum_{i<k} (r_i - r_k)^2 = b * sum (r_i - mean)^2. Only pairs that agree
    // on some feature are visited one by one.
    let zero_factors = keep.iter().filter(|&&k| k == 0.0).count();
    let nonzero_prod: f64 = keep.iter().filter(|&&k| k != 0.0).product();
    let all_differ = if zero_factors == 0 { nonzero_prod } else { 0.0 };
    let mean_score = scores.iter().sum::<f64>() / b as f64;
    let mut rest_sq = b as f64 * scores.iter().map(|r| (r - mean_score) * (r - mean_score)).sum::<f64>();
    if with_grad {
        for (g, r) in out.grad_scores.iter_mut().zip(scores) {
            *g = 2.0 * all_differ * b as f64 * (r - mean_score) * norm;
        }
    }

    let mut differs = vec![false; scope.len()];
    for (i, k) in agreeing_pairs(&cols, opts.feature_eq_tol) {
        let (xi, xk) = (cols.row(i), cols.row(k));
        let delta = scores[i] - scores[k];
        let sq = delta * delta;
        rest_sq -= sq;
        // Product of non-zero factors and count of zero factors.
        let mut prod = 1.0;
        let mut zeros = 0usize;
        for s in 0..scope.len() {
            let d = (xi[s] - xk[s]).abs() > opts.feature_eq_tol;
            differs[s] = d;
            if d {
                if keep[s] == 0.0 {
                    zeros += 1;
                } else {
                    prod *= keep[s];
                }
            }
        }
        let agree = if zeros == 0 { prod } else { 0.0 };
        out.value += agree * sq;
        if !with_grad {
            continue;
        }
        let g = 2.0 * (agree - all_differ) * delta * norm;
        out.grad_scores[i] += g;
        out.grad_scores[k] -= g;
        match zeros {
            0 => {
                for s in 0..scope.len() {
                    if differs[s] {
                        out.grad_p[scope[s]] -= prod / keep[s] * sq * norm;
                    }
                }
            }
            1 => {
                for s in 0..scope.len() {
                    if differs[s] && keep[s] == 0.0 {
                        out.grad_p[scope[s]] -= prod * sq * norm;
                    }
                }
            }
            _ => {}
        }
    }
    let rest_sq = rest_sq.max(0.0);
    out.value += all_differ * rest_sq;
    if with_grad {
        for (s, &j) in scope.iter().enumerate() {
            let others = match zero_factors {
                0 => nonzero_prod / keep[s],
                1 if keep[s] == 0.0 => nonzero_prod,
                _ => 0.0,
            };
            out.grad_p[j] -= others * rest_sq * norm;
        }
    }
    out.value *= norm;
    Ok(out)
}

/// Pairwise consistency penalty: for each pair of samples, the product over
/// differing features of `(1 - p_j)` times the squared difference of the two
/// samples' scores at their own labels. `x` holds raw (unmasked) features.
pub fn consistency_regularizer(
    x: &Matrix,
    batch: &PredictionBatch,
    p: &[f64],
    opts: &RcsOptions,
) -> Result<f64> {
    batch.validate()?;
    Ok(rcs_core(x, &batch.own_label_scores(), p, opts, false)?.value)
}

/// Which terms enter the MI objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiOptions {
    pub include_rcs: bool,
    pub rcs: RcsOptions,
}

impl Default for MiOptions {
    fn default() -> Self {
        Self {
            include_rcs: true,
            rcs: RcsOptions::default(),
        }
    }
}

/// Quadratic error plus consistency term, combined with the task loss.
pub fn mi_objective(
    x: &Matrix,
    batch: &PredictionBatch,
    p: &[f64],
    task_loss: f64,
    mi_weight: f64,
    opts: &MiOptions,
) -> Result<LossBreakdown> {
    let mi_error = match batch {
        PredictionBatch::Classification { .. } => quadratic_error(batch)?,
        PredictionBatch::Regression { outputs, targets } => {
            batch.validate()?;
            mse(outputs, targets)
        }
    };
    let r_cs = if opts.include_rcs {
        consistency_regularizer(x, batch, p, &opts.rcs)?
    } else {
        0.0
    };
    Ok(LossBreakdown::new(task_loss, mi_error, r_cs, mi_weight))
}

fn mse(outputs: &[f64], targets: &[f64]) -> f64 {
    if outputs.is_empty() {
        return 0.0;
    }
    outputs
        .iter()
        .zip(targets)
        .map(|(o, t)| (t - o) * (t - o))
        .sum::<f64>()
        / outputs.len() as f64
}

/// Continuous-label objective: mean squared error plus the consistency term
/// on the raw outputs.
pub fn mi_objective_regression(
    x: &Matrix,
    outputs: &[f64],
    targets: &[f64],
    p: &[f64],
    opts: &RcsOptions,
) -> Result<f64> {
    if outputs.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            what: "outputs vs targets",
            expected: targets.len(),
            found: outputs.len(),
        });
    }
    let r_cs = rcs_core(x, outputs, p, opts, false)?.value;
    Ok(mse(outputs, targets) + r_cs)
}

/// Gradients of `mi_weight * (E + r_cs)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MiGradients {
    /// Same shape as the predictions: `b × c` probabilities or `b × 1` outputs.
    pub predictions: Matrix,
    /// W.r.t. the mask probabilities.
    pub p: Vec<f64>,
    pub mi_error: f64,
    pub r_cs: f64,
}

/// Objective value terms and closed-form gradients of the weighted MI loss.
pub fn miloss_gradients(
    x: &Matrix,
    batch: &PredictionBatch,
    p: &[f64],
    mi_weight: f64,
    opts: &MiOptions,
) -> Result<MiGradients> {
    batch.validate()?;
    let b = batch.len();
    if b == 0 {
        return Err(Error::invalid("empty batch"));
    }
    let scores = batch.own_label_scores();
    let rcs = if opts.include_rcs {
        Some(rcs_core(x, &scores, p, &opts.rcs, true)?)
    } else {
        validate_probabilities(p)?;
        None
    };
    let inv_b = 1.0 / b as f64;
    let (mut predictions, mi_error) = match batch {
        PredictionBatch::Classification { probs, labels } => {
            let mut g = Matrix::zeros(b, probs.cols());
            for (i, &y) in labels.iter().enumerate() {
                for (c, (gv, &r)) in g.row_mut(i).iter_mut().zip(probs.row(i)).enumerate() {
                    let target = if c == y { 1.0 } else { 0.0 };
                    *gv = 2.0 * (r - target) * inv_b;
                }
                if let Some(rcs) = &rcs {
                    let v = g.get(i, y) + rcs.grad_scores[i];
                    g.set(i, y, v);
                }
            }
            (g, quadratic_error(batch)?)
        }
        PredictionBatch::Regression { outputs, targets } => {
            let mut g = Matrix::zeros(b, 1);
            for i in 0..b {
                let mut v = 2.0 * (outputs[i] - targets[i]) * inv_b;
                if let Some(rcs) = &rcs {
                    v += rcs.grad_scores[i];
                }
                g.set(i, 0, v);
            }
            (g, mse(outputs, targets))
        }
    };
    for v in predictions.as_mut_slice() {
        *v *= mi_weight;
    }
    let (r_cs, p_grad) = match rcs {
        Some(rcs) => (
            rcs.value,
            rcs.grad_p.into_iter().map(|g| g * mi_weight).collect(),
        ),
        None => (0.0, vec![0.0; p.len()]),
    };
    Ok(MiGradients {
        predictions,
        p: p_grad,
        mi_error,
        r_cs,
    })
}

fn validate_joint(joint: &Matrix) -> Result<()> {
    if joint.as_slice().iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::invalid("joint distribution has negative or non-finite entries"));
    }
    let total: f64 = joint.as_slice().iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("joint distribution sums to {total}, not 1")));
    }
    Ok(())
}

fn marginals(joint: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let px: Vec<f64> = joint.iter_rows().map(|r| r.iter().sum()).collect();
    let mut py = vec![0.0; joint.cols()];
    for r in joint.iter_rows() {
        for (acc, &v) in py.iter_mut().zip(r) {
            *acc += v;
        }
    }
    (px, py)
}

/// Quadratic relaxation `I_q` for a joint table with features on rows and
/// labels on columns.
pub fn quadratic_mi(joint: &Matrix) -> Result<f64> {
    validate_joint(joint)?;
    let (px, py) = marginals(joint);
    let mut first = 0.0;
    for (r, &p) in joint.iter_rows().zip(&px) {
        if p > 0.0 {
            first += r.iter().map(|&v| v * v).sum::<f64>() / p;
        }
    }
    Ok(first - py.iter().map(|&v| v * v).sum::<f64>())
}

/// Shannon mutual information in nats.
pub fn mutual_information(joint: &Matrix) -> Result<f64> {
    validate_joint(joint)?;
    let (px, py) = marginals(joint);
    let mut mi = 0.0;
    for (x, r) in joint.iter_rows().enumerate() {
        for (y, &v) in r.iter().enumerate() {
            if v > 0.0 {
                mi += v * (v / (px[x] * py[y])).ln();
            }
        }
    }
    Ok(mi)
}

/// Biased empirical HSIC with Gaussian kernels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hsic {
    pub estimate: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
}

impl Hsic {
    /// Value to minimize: the negated estimate.
    pub fn regularizer(&self) -> f64 {
        -self.estimate
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median of pairwise Euclidean distances; falls back to 1 when it is 0.
pub fn median_pairwise_distance(x: &Matrix) -> f64 {
    let n = x.rows();
    let mut d = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for k in (i + 1)..n {
            d.push(sq_dist(x.row(i), x.row(k)).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let m = if d.len() % 2 == 1 {
        d[d.len() / 2]
    } else {
        0.5 * (d[d.len() / 2 - 1] + d[d.len() / 2])
    };
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

fn gaussian_gram(x: &Matrix, sigma: f64) -> Matrix {
    let n = x.rows();
    let mut k = Matrix::zeros(n, n);
    let denom = 2.0 * sigma * sigma;
    for i in 0..n {
        k.set(i, i, 1.0);
        for j in (i + 1)..n {
            let v = (-sq_dist(x.row(i), x.row(j)) / denom).exp();
            k.set(i, j, v);
            k.set(j, i, v);
        }
    }
    k
}

/// `H L H` with `H = I - 11^T / n`.
fn double_center(l: &Matrix) -> Matrix {
    let n = l.rows();
    let row_means: Vec<f64> = l.iter_rows().map(|r| r.iter().sum::<f64>() / n as f64).collect();
    let total = row_means.iter().sum::<f64>() / n as f64;
    let mut out = l.clone();
    for i in 0..n {
        for j in 0..n {
            // Symmetric input: column mean j equals row mean j.
            out.set(i, j, l.get(i, j) - row_means[i] - row_means[j] + total);
        }
    }
    out
}

/// One-hot encoding of class labels as a `b × c` matrix.
pub fn one_hot(labels: &[usize], classes: usize) -> Matrix {
    let mut m = Matrix::zeros(labels.len(), classes);
    for (i, &y) in labels.iter().enumerate() {
        m.set(i, y, 1.0);
    }
    m
}

/// HSIC between the rows of `x` (already masked) and `y`, using the median
/// pairwise distance as bandwidth when a sigma is not given.
pub fn hsic_gaussian(
    x: &Matrix,
    y: &Matrix,
    sigma_x: Option<f64>,
    sigma_y: Option<f64>,
) -> Result<Hsic> {
    let b = x.rows();
    if b < 2 {
        return Err(Error::invalid("HSIC needs at least two samples"));
    }
    if y.rows() != b {
        return Err(Error::DimensionMismatch {
            what: "HSIC label rows",
            expected: b,
            found: y.rows(),
        });
    }
    let sigma_x = sigma_x.unwrap_or_else(|| median_pairwise_distance(x));
    let sigma_y = sigma_y.unwrap_or_else(|| median_pairwise_distance(y));
    if !(sigma_x > 0.0 && sigma_y > 0.0) {
        return Err(Error::invalid("HSIC bandwidths must be positive"));
    }
    let k = gaussian_gram(x, sigma_x);
    let lc = double_center(&gaussian_gram(y, sigma_y));
    let norm = ((b - 1) * (b - 1)) as f64;
    let estimate = crate::linalg::dot(k.as_slice(), lc.as_slice()) / norm;
    Ok(Hsic {
        estimate,
        sigma_x,
        sigma_y,
    })
}

/// HSIC of `x ⊙ scale` against `y`, with the gradient of the regularizer
/// (`-HSIC`) w.r.t. the per-feature `scale`. Bandwidths are held fixed.
pub fn hsic_scale_gradient(
    x: &Matrix,
    scale: &[f64],
    y: &Matrix,
    sigma_x: Option<f64>,
    sigma_y: Option<f64>,
) -> Result<(Hsic, Vec<f64>)> {
    if scale.len() != x.cols() {
        return Err(Error::DimensionMismatch {
            what: "HSIC scale length",
            expected: x.cols(),
            found: scale.len(),
        });
    }
    let mut xs = x.clone();
    for r in 0..xs.rows() {
        for (v, &s) in xs.row_mut(r).iter_mut().zip(scale) {
            *v *= s;
        }
    }
    let hsic = hsic_gaussian(&xs, y, sigma_x, sigma_y)?;
    let b = x.rows();
    let k = gaussian_gram(&xs, hsic.sigma_x);
    let lc = double_center(&gaussian_gram(y, hsic.sigma_y));
    let norm = ((b - 1) * (b - 1)) as f64;
    let s2 = hsic.sigma_x * hsic.sigma_x;
    let mut grad = vec![0.0; scale.len()];
    for i in 0..b {
        for j in (i + 1)..b {
            // Both (i, j) and (j, i) contribute.
            let w = 2.0 * lc.get(i, j) * k.get(i, j) / (norm * s2);
            if w == 0.0 {
                continue;
            }
            for (f, g) in grad.iter_mut().enumerate() {
                let d = x.get(i, f) - x.get(j, f);
                *g += w * d * d * scale[f];
            }
        }
    }
    Ok((hsic, grad))
}
