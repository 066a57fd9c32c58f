//! Classical filter selectors and the comparison harness.
//!
//! Every selector scores features on the train split; the top `k` columns
//! are then handed to a plain MLP trained with the same settings as SLM.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{bin_labels, salient_columns, Dataset, Labels, Split};
use crate::error::{Error, Result};
use crate::linalg::{argsort_desc, Matrix};
use crate::train::{train_predictor, train_slm, SplitMetrics, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    Slm,
    Fisher,
    AnovaF,
    BinnedMi,
    LinearCoef,
    AllFeatures,
    RandomK,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Slm => "SLM",
            Method::Fisher => "Fisher",
            Method::AnovaF => "AnovaF",
            Method::BinnedMi => "BinnedMI",
            Method::LinearCoef => "LinearCoef",
            Method::AllFeatures => "AllFeatures",
            Method::RandomK => "RandomK",
        }
    }

    pub fn filters() -> [Method; 4] {
        [Method::Fisher, Method::AnovaF, Method::BinnedMi, Method::LinearCoef]
    }

    pub fn all() -> [Method; 7] {
        [
            Method::Slm,
            Method::Fisher,
            Method::AnovaF,
            Method::BinnedMi,
            Method::LinearCoef,
            Method::AllFeatures,
            Method::RandomK,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScores {
    pub scores: Vec<f64>,
    pub method: Method,
}

impl FeatureScores {
    /// Indices of the `k` highest scores (lowest index wins ties), ascending.
    pub fn top_k(&self, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = argsort_desc(&self.scores).into_iter().take(k).collect();
        idx.sort_unstable();
        idx
    }

    /// All indices by score, descending.
    pub fn ranking(&self) -> Vec<usize> {
        argsort_desc(&self.scores)
    }
}

fn check_classes(x: &Matrix, y: &[usize]) -> Result<usize> {
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            what: "rows vs labels",
            expected: x.rows(),
            found: y.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::invalid("no samples"));
    }
    Ok(y.iter().max().map(|m| m + 1).unwrap_or(0))
}

/// Per class count, mean and (population) variance of every feature.
struct ClassMoments {
    counts: Vec<f64>,
    means: Matrix,
    vars: Matrix,
    overall: Vec<f64>,
}

fn class_moments(x: &Matrix, y: &[usize], c: usize) -> ClassMoments {
    let d = x.cols();
    let mut counts = vec![0.0; c];
    let mut means = Matrix::zeros(c, d);
    let mut overall = vec![0.0; d];
    for (row, &k) in x.iter_rows().zip(y) {
        counts[k] += 1.0;
        for (j, &v) in row.iter().enumerate() {
            means.row_mut(k)[j] += v;
            overall[j] += v;
        }
    }
    for k in 0..c {
        if counts[k] > 0.0 {
            means.row_mut(k).iter_mut().for_each(|m| *m /= counts[k]);
        }
    }
    overall.iter_mut().for_each(|m| *m /= y.len() as f64);
    let mut vars = Matrix::zeros(c, d);
    for (row, &k) in x.iter_rows().zip(y) {
        for (j, &v) in row.iter().enumerate() {
            let dv = v - means.get(k, j);
            vars.row_mut(k)[j] += dv * dv;
        }
    }
    for k in 0..c {
        if counts[k] > 0.0 {
            vars.row_mut(k).iter_mut().for_each(|m| *m /= counts[k]);
        }
    }
    ClassMoments {
        counts,
        means,
        vars,
        overall,
    }
}

/// Between-class scatter over within-class scatter per feature; 0 when the
/// within-class variance vanishes.
pub fn fisher_score(x: &Matrix, y: &[usize]) -> Result<FeatureScores> {
    let c = check_classes(x, y)?;
    let m = class_moments(x, y, c);
    let scores = (0..x.cols())
        .map(|j| {
            let (mut num, mut den) = (0.0, 0.0);
            for k in 0..c {
                let dm = m.means.get(k, j) - m.overall[j];
                num += m.counts[k] * dm * dm;
                den += m.counts[k] * m.vars.get(k, j);
            }
            if den > 0.0 {
                num / den
            } else {
                0.0
            }
        })
        .collect();
    Ok(FeatureScores {
        scores,
        method: Method::Fisher,
    })
}

/// One-way ANOVA F statistic per feature; 0 when the within-group sum of
/// squares vanishes.
pub fn anova_f(x: &Matrix, y: &[usize]) -> Result<FeatureScores> {
    let c = check_classes(x, y)?;
    let m = class_moments(x, y, c);
    let groups = m.counts.iter().filter(|&&n| n > 0.0).count();
    let n = y.len();
    if groups < 2 || n <= groups {
        return Err(Error::invalid("ANOVA needs at least two groups and more samples than groups"));
    }
    let df_b = (groups - 1) as f64;
    let df_w = (n - groups) as f64;
    let scores = (0..x.cols())
        .map(|j| {
            let (mut ssb, mut ssw) = (0.0, 0.0);
            for k in 0..c {
                let dm = m.means.get(k, j) - m.overall[j];
                ssb += m.counts[k] * dm * dm;
                ssw += m.counts[k] * m.vars.get(k, j);
            }
            if ssw > 0.0 {
                (ssb / df_b) / (ssw / df_w)
            } else {
                0.0
            }
        })
        .collect();
    Ok(FeatureScores {
        scores,
        method: Method::AnovaF,
    })
}

pub const MI_BINS: usize = 10;

fn plug_in_mi(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut joint = vec![0.0; ka * kb];
    let mut pa = vec![0.0; ka];
    let mut pb = vec![0.0; kb];
    for (&u, &v) in a.iter().zip(b) {
        joint[u * kb + v] += 1.0;
        pa[u] += 1.0;
        pb[v] += 1.0;
    }
    let mut mi = 0.0;
    for u in 0..ka {
        for v in 0..kb {
            let c = joint[u * kb + v];
            if c > 0.0 {
                mi += c / n * (c * n / (pa[u] * pb[v])).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Plug-in mutual information (nats) between each feature, cut into
/// equal-frequency bins, and the label. Real labels are binned the same way.
pub fn binned_mi(x: &Matrix, labels: &Labels) -> Result<FeatureScores> {
    if x.rows() != labels.len() || x.rows() == 0 {
        return Err(Error::invalid("binned MI needs matching, non-empty rows and labels"));
    }
    let y: Vec<usize> = match labels {
        Labels::Classes { indices, .. } => indices.clone(),
        Labels::Reals(v) => bin_labels(v, MI_BINS)?,
    };
    let scores = (0..x.cols())
        .map(|j| Ok(plug_in_mi(&bin_labels(&x.column(j), MI_BINS)?, &y)))
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureScores {
        scores,
        method: Method::BinnedMi,
    })
}

pub const LOGISTIC_ITERATIONS: usize = 300;
pub const LOGISTIC_STEP: f64 = 0.5;

fn least_squares(x: &Matrix, y: &[f64]) -> Result<Vec<f64>> {
    let (n, d) = (x.rows(), x.cols());
    let col_mean: Vec<f64> = (0..d).map(|j| x.column(j).iter().sum::<f64>() / n as f64).collect();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let a = DMatrix::from_fn(n, d, |i, j| x.get(i, j) - col_mean[j]);
    let b = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
    let svd = a.svd(true, true);
    let coef = svd
        .solve(&b, 1e-12)
        .map_err(|e| Error::Degenerate(format!("least squares failed: {e}")))?;
    Ok(coef.iter().copied().collect())
}

/// Full-batch gradient descent on the logistic loss of one binary target.
fn logistic_fit(x: &Matrix, target: &[f64]) -> Vec<f64> {
    let (n, d) = (x.rows(), x.cols());
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut grad = vec![0.0; d];
    for _ in 0..LOGISTIC_ITERATIONS {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut gb = 0.0;
        for (row, &t) in x.iter_rows().zip(target) {
            let z = crate::linalg::dot(row, &w) + b;
            let r = 1.0 / (1.0 + (-z).exp()) - t;
            crate::linalg::axpy(r, row, &mut grad);
            gb += r;
        }
        let step = LOGISTIC_STEP / n as f64;
        crate::linalg::axpy(-step, &grad, &mut w);
        b -= step * gb;
    }
    w
}

/// Magnitude of unregularized linear coefficients: ordinary least squares for
/// real labels, one-vs-rest logistic regression for classes (max over classes).
pub fn linear_coef(x: &Matrix, labels: &Labels) -> Result<FeatureScores> {
    if x.rows() != labels.len() || x.rows() == 0 {
        return Err(Error::invalid("linear fit needs matching, non-empty rows and labels"));
    }
    let scores = match labels {
        Labels::Reals(y) => least_squares(x, y)?.iter().map(|c| c.abs()).collect(),
        Labels::Classes { indices, values } => {
            // Two classes: the second one-vs-rest fit mirrors the first.
            let fitted: Vec<usize> = if values.len() == 2 { vec![1] } else { (0..values.len()).collect() };
            let mut best = vec![0.0f64; x.cols()];
            for c in fitted {
                let t: Vec<f64> = indices.iter().map(|&y| if y == c { 1.0 } else { 0.0 }).collect();
                for (s, w) in best.iter_mut().zip(logistic_fit(x, &t)) {
                    *s = s.max(w.abs());
                }
            }
            best
        }
    };
    Ok(FeatureScores {
        scores,
        method: Method::LinearCoef,
    })
}

/// Scores from one filter method on the train split.
pub fn score_features(data: &Dataset, method: Method) -> Result<FeatureScores> {
    let train = data.split_data(Split::Train);
    let classes = || {
        train
            .labels
            .class_indices()
            .ok_or_else(|| Error::invalid(format!("{} needs class labels", method.name())))
    };
    match method {
        Method::Fisher => fisher_score(&train.x, classes()?),
        Method::AnovaF => anova_f(&train.x, classes()?),
        Method::BinnedMi => binned_mi(&train.x, &train.labels),
        Method::LinearCoef => linear_coef(&train.x, &train.labels),
        other => Err(Error::invalid(format!("{} is not a filter method", other.name()))),
    }
}

/// Uniformly random `k`-subset of `0..d`, ascending.
pub fn random_k(d: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k > d {
        return Err(Error::invalid(format!("cannot pick {k} of {d} features")));
    }
    let mut idx = sample(&mut ChaCha8Rng::seed_from_u64(seed), d, k).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Trains the plain MLP on the given columns and reports split metrics.
pub fn evaluate_selection(
    data: &Dataset,
    indices: &[usize],
    cfg: &TrainConfig,
) -> Result<BTreeMap<String, SplitMetrics>> {
    if indices.is_empty() {
        return Err(Error::invalid("no features selected"));
    }
    train_predictor(data, indices, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: Method,
    pub k: usize,
    pub selected: Vec<usize>,
    /// Salient columns among the selection, when the dataset marks them.
    pub salient_recovered: Option<usize>,
    pub metrics: BTreeMap<String, SplitMetrics>,
}

impl ComparisonRow {
    pub fn test(&self) -> SplitMetrics {
        self.metrics.get("test").copied().unwrap_or_default()
    }
}

/// Runs the requested methods at each `k`. SLM trains with `target_features = k`;
/// the others select on the train split and train the plain MLP.
pub fn run_comparison(
    data: &Dataset,
    ks: &[usize],
    methods: &[Method],
    cfg: &TrainConfig,
) -> Result<Vec<ComparisonRow>> {
    let d = data.n_features();
    let salient = salient_columns(data);
    let recovered = |sel: &[usize]| {
        (!salient.is_empty()).then(|| sel.iter().filter(|j| salient.binary_search(j).is_ok()).count())
    };
    let mut scores = BTreeMap::new();
    for &m in methods {
        if Method::filters().contains(&m) {
            scores.insert(m, score_features(data, m)?);
        }
    }
    let mut rows = Vec::new();
    for &k in ks {
        if k == 0 || k > d {
            return Err(Error::invalid(format!("k = {k} outside [1, {d}]")));
        }
        for &m in methods {
            let (selected, metrics) = match m {
                Method::Slm => {
                    let r = train_slm(data, &TrainConfig { target_features: k, ..cfg.clone() })?;
                    (r.selected.clone(), r.metrics)
                }
                Method::AllFeatures => {
                    let all: Vec<usize> = (0..d).collect();
                    let metrics = evaluate_selection(data, &all, cfg)?;
                    (all, metrics)
                }
                Method::RandomK => {
                    let sel = random_k(d, k, cfg.seed ^ 0xA11CE)?;
                    let metrics = evaluate_selection(data, &sel, cfg)?;
                    (sel, metrics)
                }
                filter => {
                    let sel = scores[&filter].top_k(k);
                    let metrics = evaluate_selection(data, &sel, cfg)?;
                    (sel, metrics)
                }
            };
            rows.push(ComparisonRow {
                method: m,
                k: if m == Method::AllFeatures { d } else { k },
                salient_recovered: recovered(&selected),
                selected,
                metrics,
            });
        }
    }
    Ok(rows)
}
