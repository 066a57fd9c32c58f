//! Evaluation metrics.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Fraction of rows whose arg-max (lowest index on ties) equals the label.
pub fn accuracy(probs: &Matrix, labels: &[usize]) -> Result<f64> {
    if probs.rows() != labels.len() {
        return Err(Error::DimensionMismatch {
            what: "prediction rows vs labels",
            expected: labels.len(),
            found: probs.rows(),
        });
    }
    if labels.is_empty() {
        return Err(Error::invalid("no samples to evaluate"));
    }
    let hits = probs
        .iter_rows()
        .zip(labels)
        .filter(|(row, &y)| argmax(row) == y)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn mean_absolute_error(outputs: &[f64], targets: &[f64]) -> Result<f64> {
    if outputs.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            what: "outputs vs targets",
            expected: targets.len(),
            found: outputs.len(),
        });
    }
    if outputs.is_empty() {
        return Err(Error::invalid("no samples to evaluate"));
    }
    Ok(outputs.iter().zip(targets).map(|(o, t)| (o - t).abs()).sum::<f64>() / outputs.len() as f64)
}

/// Area under the ROC curve from the Mann-Whitney rank statistic, with tied
/// scores given their average rank. `positive[i]` marks the positive class.
pub fn auc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::DimensionMismatch {
            what: "scores vs labels",
            expected: positive.len(),
            found: scores.len(),
        });
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::invalid("AUC needs both classes present"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if positive[k] {
                rank_sum += avg;
            }
        }
        i = j + 1;
    }
    let np = n_pos as f64;
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}
