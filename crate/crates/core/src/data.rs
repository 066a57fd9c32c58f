//! Tabular datasets: CSV ingestion, splitting and normalization, label
//! binning, and a synthetic benchmark with a few salient feature blocks.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{mean, std_dev, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    Classification,
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Labels {
    /// Class indices `0..values.len()`; `values[c]` is the raw label of class `c`.
    Classes { indices: Vec<usize>, values: Vec<f64> },
    Reals(Vec<f64>),
}

impl Labels {
    /// Maps raw numeric labels to class indices in ascending order of value.
    pub fn classes_from_raw(raw: &[f64]) -> Self {
        let mut values: Vec<f64> = raw.to_vec();
        values.sort_by(f64::total_cmp);
        values.dedup();
        let indices = raw
            .iter()
            .map(|v| values.binary_search_by(|p| p.total_cmp(v)).unwrap_or(0))
            .collect();
        Labels::Classes { indices, values }
    }

    pub fn len(&self) -> usize {
        match self {
            Labels::Classes { indices, .. } => indices.len(),
            Labels::Reals(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn task(&self) -> Task {
        match self {
            Labels::Classes { .. } => Task::Classification,
            Labels::Reals(_) => Task::Regression,
        }
    }

    pub fn n_classes(&self) -> Option<usize> {
        match self {
            Labels::Classes { values, .. } => Some(values.len()),
            Labels::Reals(_) => None,
        }
    }

    pub fn class_indices(&self) -> Option<&[usize]> {
        match self {
            Labels::Classes { indices, .. } => Some(indices),
            Labels::Reals(_) => None,
        }
    }

    pub fn reals(&self) -> Option<&[f64]> {
        match self {
            Labels::Reals(v) => Some(v),
            Labels::Classes { .. } => None,
        }
    }

    /// Raw value of sample `i` as written to CSV.
    pub fn raw(&self, i: usize) -> f64 {
        match self {
            Labels::Classes { indices, values } => values[indices[i]],
            Labels::Reals(v) => v[i],
        }
    }

    pub fn select(&self, idx: &[usize]) -> Labels {
        match self {
            Labels::Classes { indices, values } => Labels::Classes {
                indices: idx.iter().map(|&i| indices[i]).collect(),
                values: values.clone(),
            },
            Labels::Reals(v) => Labels::Reals(idx.iter().map(|&i| v[i]).collect()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Matrix,
    pub labels: Labels,
    pub feature_names: Vec<String>,
    pub label_name: String,
    /// Per-sample split tag; everything is `Train` until split.
    pub split: Vec<Split>,
    /// Per-feature statistics used for standardization, once fitted.
    pub normalization: Option<Vec<FeatureStats>>,
    pub label_normalization: Option<FeatureStats>,
}

/// Feature matrix and labels of one split.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitData {
    pub x: Matrix,
    pub labels: Labels,
}

impl Dataset {
    pub fn new(x: Matrix, labels: Labels, feature_names: Vec<String>) -> Result<Self> {
        if labels.len() != x.rows() {
            return Err(Error::DimensionMismatch {
                what: "label count vs rows",
                expected: x.rows(),
                found: labels.len(),
            });
        }
        if feature_names.len() != x.cols() {
            return Err(Error::DimensionMismatch {
                what: "feature names vs columns",
                expected: x.cols(),
                found: feature_names.len(),
            });
        }
        if !x.is_finite() {
            return Err(Error::invalid("feature matrix has non-finite values"));
        }
        let n = x.rows();
        Ok(Self {
            x,
            labels,
            feature_names,
            label_name: "label".to_string(),
            split: vec![Split::Train; n],
            normalization: None,
            label_normalization: None,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.x.rows()
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    pub fn task(&self) -> Task {
        self.labels.task()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.n_samples()).filter(|&i| self.split[i] == split).collect()
    }

    pub fn split_data(&self, split: Split) -> SplitData {
        let idx = self.indices(split);
        SplitData {
            x: self.x.select_rows(&idx),
            labels: self.labels.select(&idx),
        }
    }

    /// Copy restricted to the given feature columns (split tags preserved).
    pub fn select_features(&self, columns: &[usize]) -> Result<Dataset> {
        if columns.is_empty() {
            return Err(Error::invalid("feature selection is empty"));
        }
        if let Some(&c) = columns.iter().find(|&&c| c >= self.n_features()) {
            return Err(Error::invalid(format!("feature index {c} out of range")));
        }
        Ok(Dataset {
            x: self.x.select_cols(columns),
            labels: self.labels.clone(),
            feature_names: columns.iter().map(|&c| self.feature_names[c].clone()).collect(),
            label_name: self.label_name.clone(),
            split: self.split.clone(),
            normalization: self
                .normalization
                .as_ref()
                .map(|s| columns.iter().map(|&c| s[c]).collect()),
            label_normalization: self.label_normalization,
        })
    }
}

fn csv_err(row: usize, column: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Csv {
        row,
        column: column.into(),
        message: message.into(),
    }
}

/// Reads a comma-separated file with a header row. Rows are numbered as file
/// lines (the header is line 1).
pub fn load_csv(path: &Path, label_column: &str, task: Task) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_err(0, "", e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| csv_err(1, "", e.to_string()))?
        .clone();
    if headers.is_empty() {
        return Err(csv_err(1, "", "empty file"));
    }
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| csv_err(1, label_column, "label column not found in header"))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != label_idx)
        .map(|(_, h)| h.to_string())
        .collect();

    let mut data = Vec::new();
    let mut raw_labels = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let line = r + 2;
        let record = record.map_err(|e| csv_err(line, "", e.to_string()))?;
        if record.len() != headers.len() {
            return Err(csv_err(
                line,
                "",
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                csv_err(line, &headers[c], format!("cannot parse '{cell}' as a number"))
            })?;
            if !v.is_finite() {
                return Err(csv_err(line, &headers[c], format!("non-finite value '{cell}'")));
            }
            if c == label_idx {
                raw_labels.push(v);
            } else {
                data.push(v);
            }
        }
    }
    if raw_labels.is_empty() {
        return Err(csv_err(1, "", "no data rows"));
    }
    let x = Matrix::from_vec(raw_labels.len(), feature_names.len(), data)?;
    let labels = match task {
        Task::Classification => Labels::classes_from_raw(&raw_labels),
        Task::Regression => Labels::Reals(raw_labels),
    };
    let mut ds = Dataset::new(x, labels, feature_names)?;
    ds.label_name = label_column.to_string();
    Ok(ds)
}

/// Writes features followed by the label column. Values use the shortest
/// representation that parses back to the same bits.
pub fn write_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = ds.feature_names.iter().map(String::as_str).collect();
    header.push(&ds.label_name);
    writer
        .write_record(&header)
        .map_err(|e| csv_err(1, "", e.to_string()))?;
    let mut cells = Vec::with_capacity(header.len());
    for i in 0..ds.n_samples() {
        cells.clear();
        cells.extend(ds.x.row(i).iter().map(|v| v.to_string()));
        cells.push(ds.labels.raw(i).to_string());
        writer
            .write_record(&cells)
            .map_err(|e| csv_err(i + 2, "", e.to_string()))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| csv_err(0, "", e.to_string()))?;
    crate::io::write_atomic(path, &bytes)
}

/// Split sizes `(train, val, test)` for `n` samples.
pub fn split_sizes(n: usize, fractions: (f64, f64, f64)) -> Result<(usize, usize, usize)> {
    let (a, b, c) = fractions;
    if [a, b, c].iter().any(|f| !(0.0..=1.0).contains(f)) || (a + b + c - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("split fractions must be in [0, 1] and sum to 1"));
    }
    let train = (a * n as f64).round() as usize;
    let val = ((b * n as f64).round() as usize).min(n - train);
    Ok((train, val, n - train - val))
}

fn fit_stats(values: &[f64]) -> FeatureStats {
    let sd = std_dev(values);
    FeatureStats {
        mean: mean(values),
        sd: if sd > 1e-12 { sd } else { 1.0 },
    }
}

/// Seeded split followed by standardization fitted on the train split.
pub fn normalize_split(ds: &Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<Dataset> {
    let n = ds.n_samples();
    let (n_train, n_val, _) = split_sizes(n, fractions)?;
    if n_train == 0 {
        return Err(Error::invalid("train split is empty"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut split = vec![Split::Test; n];
    for (pos, &i) in order.iter().enumerate() {
        split[i] = if pos < n_train {
            Split::Train
        } else if pos < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    let train: Vec<usize> = (0..n).filter(|&i| split[i] == Split::Train).collect();

    let stats: Vec<FeatureStats> = (0..ds.n_features())
        .map(|j| fit_stats(&train.iter().map(|&i| ds.x.get(i, j)).collect::<Vec<_>>()))
        .collect();
    let mut x = ds.x.clone();
    for i in 0..n {
        for (v, s) in x.row_mut(i).iter_mut().zip(&stats) {
            *v = (*v - s.mean) / s.sd;
        }
    }
    let (labels, label_normalization) = match &ds.labels {
        Labels::Reals(y) => {
            let s = fit_stats(&train.iter().map(|&i| y[i]).collect::<Vec<_>>());
            (
                Labels::Reals(y.iter().map(|v| (v - s.mean) / s.sd).collect()),
                Some(s),
            )
        }
        other => (other.clone(), None),
    };
    Ok(Dataset {
        x,
        labels,
        feature_names: ds.feature_names.clone(),
        label_name: ds.label_name.clone(),
        split,
        normalization: Some(stats),
        label_normalization,
    })
}

/// Threshold subtracted from the sum of the five block statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum LabelOffset {
    /// The population mean of the block-statistic sum for the configured block
    /// size, giving roughly balanced classes.
    #[default]
    Centered,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Features per salient block; five blocks in total.
    pub group_size: usize,
    pub n_features: usize,
    pub n_samples: usize,
    pub noise_scale: f64,
    pub seed: u64,
    pub label_offset: LabelOffset,
    /// Shuffle columns with a seeded permutation so salient blocks are not contiguous.
    pub permute_columns: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            group_size: 10,
            n_features: 500,
            n_samples: 5000,
            noise_scale: 0.2,
            seed: 0,
            label_offset: LabelOffset::Centered,
            permute_columns: false,
        }
    }
}

pub const SALIENT_BLOCKS: usize = 5;

impl SynthConfig {
    pub fn n_salient(&self) -> usize {
        SALIENT_BLOCKS * self.group_size
    }

    pub fn validate(&self) -> Result<()> {
        if self.group_size == 0 || self.n_samples == 0 {
            return Err(Error::invalid("group size and sample count must be positive"));
        }
        if self.n_salient() > self.n_features {
            return Err(Error::invalid(format!(
                "{} salient features do not fit in {} total",
                self.n_salient(),
                self.n_features
            )));
        }
        if !(self.noise_scale >= 0.0) {
            return Err(Error::invalid("noise scale must be non-negative"));
        }
        Ok(())
    }

    pub fn offset(&self) -> f64 {
        match self.label_offset {
            LabelOffset::Fixed(v) => v,
            LabelOffset::Centered => block_sum_mean(self.group_size),
        }
    }
}

/// The five block statistics of one sample's salient blocks.
pub fn block_statistics(blocks: [&[f64]; SALIENT_BLOCKS]) -> [f64; SALIENT_BLOCKS] {
    let t1 = mean(&blocks[0].iter().map(|v| v.exp()).collect::<Vec<_>>());
    let t2 = mean(
        &blocks[1]
            .iter()
            .map(|v| (2.0 * std::f64::consts::PI * v).sin().abs())
            .collect::<Vec<_>>(),
    )
    .exp();
    let t3 = mean(&blocks[2].iter().map(|v| -(1.1 + v).ln()).collect::<Vec<_>>());
    let t4 = mean(blocks[3]);
    let t5 = 1.0 / (1.0 + mean(&blocks[4].iter().map(|v| v.tanh().abs()).collect::<Vec<_>>()));
    [t1, t2, t3, t4, t5]
}

/// Expected sum of the block statistics for uniform `[-1, 1]` features. The
/// last block uses a second-order expansion around the mean.
pub fn block_sum_mean(group_size: usize) -> f64 {
    let l = group_size as f64;
    let t1 = 1f64.sinh();
    // |sin(2 pi U)| has the law of sin(theta), theta ~ U[0, pi/2].
    let steps = 2000;
    let h = std::f64::consts::FRAC_PI_2 / steps as f64;
    let f = |th: f64| (th.sin() / l).exp();
    let mut simpson = f(0.0) + f(std::f64::consts::FRAC_PI_2);
    for k in 1..steps {
        simpson += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
    }
    let per_feature = simpson * h / 3.0 / std::f64::consts::FRAC_PI_2;
    let t2 = per_feature.powf(l);
    let g = |w: f64| w * w.ln() - w;
    let t3 = -(g(2.1) - g(0.1)) / 2.0;
    let mu = 1f64.cosh().ln();
    let var = (1.0 - 1f64.tanh()) - mu * mu;
    let t5 = 1.0 / (1.0 + mu) + var / l / (1.0 + mu).powi(3);
    t1 + t2 + t3 + t5
}

/// Uniform `[-1, 1]` features; the first five blocks of `group_size` columns
/// drive a binary label, the rest are noise.
pub fn synth_generate(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (n, d, l) = (cfg.n_samples, cfg.n_features, cfg.group_size);
    let offset = cfg.offset();
    let mut x = Matrix::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let row = x.row_mut(i);
        for v in row.iter_mut() {
            *v = rng.random_range(-1.0..=1.0);
        }
        let blocks = [
            &row[0..l],
            &row[l..2 * l],
            &row[2 * l..3 * l],
            &row[3 * l..4 * l],
            &row[4 * l..5 * l],
        ];
        let t: f64 = block_statistics(blocks).iter().sum();
        let eps: f64 = rng.sample(StandardNormal);
        labels.push(if t - offset + cfg.noise_scale * eps > 0.0 { 1.0 } else { 0.0 });
    }
    let mut names: Vec<String> = (0..d)
        .map(|j| {
            if j < SALIENT_BLOCKS * l {
                format!("t{}_{}", j / l + 1, j % l)
            } else {
                format!("noise_{}", j - SALIENT_BLOCKS * l)
            }
        })
        .collect();
    if cfg.permute_columns {
        let mut perm: Vec<usize> = (0..d).collect();
        perm.shuffle(&mut rng);
        x = x.select_cols(&perm);
        names = perm.iter().map(|&j| names[j].clone()).collect();
    }
    // Always two classes, even if a tiny sample happens to be one-sided.
    let labels = Labels::Classes {
        indices: labels.iter().map(|&v| v as usize).collect(),
        values: vec![0.0, 1.0],
    };
    Dataset::new(x, labels, names)
}

/// Columns whose names mark them as salient synthetic features.
pub fn salient_columns(ds: &Dataset) -> Vec<usize> {
    ds.feature_names
        .iter()
        .enumerate()
        .filter(|(_, name)| is_salient_name(name))
        .map(|(j, _)| j)
        .collect()
}

fn is_salient_name(name: &str) -> bool {
    let Some(rest) = name.strip_prefix('t') else {
        return false;
    };
    let mut parts = rest.splitn(2, '_');
    matches!(
        (parts.next().map(str::parse::<usize>), parts.next().map(str::parse::<usize>)),
        (Some(Ok(_)), Some(Ok(_)))
    )
}

/// Equal-frequency bins fitted on `reference` and applied to `y`.
pub fn bin_labels_with_reference(y: &[f64], reference: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::invalid("bin count must be positive"));
    }
    if reference.is_empty() {
        return Err(Error::invalid("reference sample is empty"));
    }
    let mut sorted = reference.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let edges: Vec<f64> = (1..k).map(|b| sorted[(b * n / k).min(n - 1)]).collect();
    Ok(y.iter()
        .map(|v| edges.partition_point(|e| e <= v))
        .collect())
}

/// Equal-frequency bins over `y` itself.
pub fn bin_labels(y: &[f64], k: usize) -> Result<Vec<usize>> {
    bin_labels_with_reference(y, y, k)
}

/// Class counts, keyed by class index.
pub fn class_counts(labels: &[usize]) -> BTreeMap<usize, usize> {
    let mut m = BTreeMap::new();
    for &y in labels {
        *m.entry(y).or_insert(0) += 1;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::File::create(&p).unwrap().write_all(text.as_bytes()).unwrap();
        p
    }

    #[test]
    fn small_csv_parses_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "a,b,y\n1.5,2,0\n-3,4e-1,1\n0,7,1\n");
        let ds = load_csv(&p, "y", Task::Classification).unwrap();
        assert_eq!(ds.x.as_slice(), &[1.5, 2.0, -3.0, 0.4, 0.0, 7.0]);
        assert_eq!(ds.labels.class_indices().unwrap(), &[0, 1, 1]);
        assert_eq!(ds.feature_names, vec!["a", "b"]);
    }

    #[test]
    fn bad_cell_names_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "a,b,y\n1,2,0\n3,oops,1\n");
        match load_csv(&p, "y", Task::Classification) {
            Err(Error::Csv { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "b");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn structural_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "a,b,y\n1,2,0\n");
        assert!(load_csv(&p, "label", Task::Classification).is_err());
        let p = write(dir.path(), "b.csv", "a,b,y\n1,2,0\n1,2\n");
        assert!(matches!(load_csv(&p, "y", Task::Classification), Err(Error::Csv { row: 3, .. })));
        let p = write(dir.path(), "c.csv", "");
        assert!(load_csv(&p, "y", Task::Classification).is_err());
        let p = write(dir.path(), "d.csv", "a,y\nNaN,1\n");
        assert!(load_csv(&p, "y", Task::Regression).is_err());
    }

    #[test]
    fn split_sizes_follow_fractions() {
        assert_eq!(split_sizes(10, (0.7, 0.1, 0.2)).unwrap(), (7, 1, 2));
        assert!(split_sizes(10, (0.7, 0.2, 0.2)).is_err());
    }

    #[test]
    fn normalization_uses_train_statistics() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 0.5 + 3.0, 7.0]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let y = Labels::Reals((0..20).map(|i| i as f64).collect());
        let ds = Dataset::new(x, y, vec!["a".into(), "c".into()]).unwrap();
        let out = normalize_split(&ds, (0.7, 0.1, 0.2), 4).unwrap();
        let train = out.split_data(Split::Train);
        assert_eq!(train.x.rows(), 14);
        let col = train.x.column(0);
        assert!(mean(&col).abs() < 1e-9);
        assert!((std_dev(&col) - 1.0).abs() < 1e-9);
        assert!(out.x.column(1).iter().all(|&v| v == 0.0));
        let ty = train.labels.reals().unwrap().to_vec();
        assert!(mean(&ty).abs() < 1e-9);
        let again = normalize_split(&ds, (0.7, 0.1, 0.2), 4).unwrap();
        assert_eq!(again.split, out.split);
    }

    #[test]
    fn zero_sample_label_is_negative() {
        let zeros = [0.0; 3];
        let t = block_statistics([&zeros, &zeros, &zeros, &zeros, &zeros]);
        assert_eq!(t[0], 1.0);
        assert_eq!(t[1], 1.0);
        assert!((t[2] + 1.1f64.ln()).abs() < 1e-15);
        assert_eq!(t[3], 0.0);
        assert_eq!(t[4], 1.0);
        let s: f64 = t.iter().sum();
        assert!(s - 3.0 < 0.0);
        let l = 10;
        assert!(s - block_sum_mean(l) < 0.0);
    }

    #[test]
    fn block_sum_mean_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for l in [1usize, 10] {
            let n = 40_000;
            let mut total = 0.0;
            let mut sq = 0.0;
            for _ in 0..n {
                let v: Vec<f64> = (0..5 * l).map(|_| rng.random_range(-1.0..=1.0)).collect();
                let t: f64 = block_statistics([
                    &v[0..l],
                    &v[l..2 * l],
                    &v[2 * l..3 * l],
                    &v[3 * l..4 * l],
                    &v[4 * l..5 * l],
                ])
                .iter()
                .sum();
                total += t;
                sq += t * t;
            }
            let m = total / n as f64;
            let se = ((sq / n as f64 - m * m) / n as f64).sqrt();
            // L = 1 has the largest expansion error in the last block.
            let tol = 4.0 * se + if l == 1 { 5e-3 } else { 0.0 };
            assert!((m - block_sum_mean(l)).abs() < tol, "L={l}: {m} vs {}", block_sum_mean(l));
        }
    }

    #[test]
    fn synth_is_deterministic_and_balanced() {
        let cfg = SynthConfig {
            group_size: 2,
            n_features: 20,
            n_samples: 10_000,
            ..Default::default()
        };
        let a = synth_generate(&cfg).unwrap();
        let b = synth_generate(&cfg).unwrap();
        assert_eq!(a, b);
        let pos = a.labels.class_indices().unwrap().iter().filter(|&&y| y == 1).count();
        let frac = pos as f64 / 10_000.0;
        assert!(frac > 0.2 && frac < 0.8, "{frac}");
        assert_eq!(salient_columns(&a), (0..10).collect::<Vec<_>>());
        assert!(synth_generate(&SynthConfig { n_features: 9, ..cfg }).is_err());
    }

    #[test]
    fn permuted_columns_keep_salient_names() {
        let cfg = SynthConfig {
            group_size: 2,
            n_features: 30,
            n_samples: 50,
            permute_columns: true,
            ..Default::default()
        };
        let ds = synth_generate(&cfg).unwrap();
        assert_eq!(salient_columns(&ds).len(), 10);
        assert_ne!(salient_columns(&ds), (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn binning_examples() {
        let y: Vec<f64> = (0..100).map(f64::from).collect();
        let b = bin_labels(&y, 10).unwrap();
        for (i, &v) in b.iter().enumerate() {
            assert_eq!(v, i / 10);
        }
        assert!(bin_labels(&y, 1).unwrap().iter().all(|&v| v == 0));
        assert!(bin_labels(&y, 0).is_err());

        let skewed: Vec<f64> = (0..103).map(|i| (i as f64 * 0.1).exp()).collect();
        let counts = class_counts(&bin_labels(&skewed, 10).unwrap());
        assert_eq!(counts.len(), 10);
        assert!(counts.values().all(|&c| (c as i64 - 10).abs() <= 1));
    }
}
