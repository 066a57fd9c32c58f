//! Euclidean projection onto the probability simplex (sparsemax), the scalar
//! multiplier that pins the projection's support to an exact size, and the
//! Jacobian-vector product used for backpropagation.
//!
//! For a vector `v` sorted descending as `v(1) >= v(2) >= ...`, write
//! `S_k = v(1) + ... + v(k)` and `D_k = S_k - k * v(k)`. The projection keeps
//! the largest `k` with `1 + k * v(k) > S_k` (equivalently `D_k < 1`) and
//! subtracts `tau = (S_k - 1) / k` before clipping at zero.
//!
//! Because `D_k` is non-decreasing in `k`, `sparsemax(c * v)` has exactly `F`
//! non-zeros iff `c * D_F < 1 <= c * D_{F+1}`, i.e. `c` lies in
//! `[1 / D_{F+1}, 1 / D_F)`. Shrinking the support uses the closed left end of
//! that interval; growing it uses the open right end pulled inward by a small
//! multiplicative slack.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack applied to the open end of the valid multiplier interval.
pub const GROW_SLACK: f64 = 1e-6;

/// A point on the probability simplex produced by [`sparsemax`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexProjection {
    values: Vec<f64>,
    support: Vec<usize>,
    tau: f64,
}

impl SimplexProjection {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Indices of strictly positive entries, ascending.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// Threshold subtracted before clipping.
    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Support cardinality.
    pub fn k(&self) -> usize {
        self.support.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScalingBranch {
    ShrinkSupport,
    GrowSupport,
    AlreadyTarget,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingResult {
    pub multiplier: f64,
    pub branch: ScalingBranch,
    /// Relative slack `1 - multiplier * D_F` applied on the grow branch, else 0.
    pub epsilon_slack: f64,
}

fn validate(v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::invalid("sparsemax input must be non-empty"));
    }
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::invalid(format!(
            "sparsemax input has non-finite entry at index {i}"
        )));
    }
    Ok(())
}

/// The entries of `v`, largest first.
fn sorted_desc(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    sorted
}

/// Largest `k` satisfying the strict support rule for `scale * v`, along with
/// the prefix sum `S_k` of the scaled values.
fn support_size(sorted: &[f64], scale: f64) -> (usize, f64) {
    let mut cum = 0.0;
    let mut k = 0;
    let mut cum_k = 0.0;
    for (r, &v) in sorted.iter().enumerate() {
        let x = scale * v;
        cum += x;
        let rank = (r + 1) as f64;
        if 1.0 + rank * x > cum {
            k = r + 1;
            cum_k = cum;
        }
    }
    (k, cum_k)
}

/// Number of entries left positive by the projection of `scale * v`; can
/// differ from the rule's `k` by one when rounding puts an entry on the boundary.
fn realized_support(v: &[f64], sorted: &[f64], scale: f64) -> usize {
    let (k, cum_k) = support_size(sorted, scale);
    let tau = (cum_k - 1.0) / k as f64;
    v.iter().filter(|&&x| scale * x - tau > 0.0).count()
}

fn project_sorted(v: &[f64], sorted: &[f64], scale: f64) -> SimplexProjection {
    let (k, cum_k) = support_size(sorted, scale);
    let tau = (cum_k - 1.0) / k as f64;
    let values: Vec<f64> = v.iter().map(|&x| (scale * x - tau).max(0.0)).collect();
    let support = values
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(i, _)| i)
        .collect();
    SimplexProjection {
        values,
        support,
        tau,
    }
}

/// Euclidean projection of `v` onto the probability simplex.
///
/// Runs in `O(d log d)` (one sort).
pub fn sparsemax(v: &[f64]) -> Result<SimplexProjection> {
    validate(v)?;
    Ok(project_sorted(v, &sorted_desc(v), 1.0))
}

/// `D_k = S_k - k * v(k)` for the descending order, 1-based `k`.
fn gap_sum(sorted: &[f64], k: usize) -> f64 {
    let vk = sorted[k - 1];
    sorted[..k].iter().map(|&x| x - vk).sum()
}

fn scaling_sorted(v: &[f64], sorted: &[f64], target: usize) -> Result<ScalingResult> {
    let d = v.len();
    if target == 0 || target > d {
        return Err(Error::invalid(format!(
            "target support {target} out of range 1..={d}"
        )));
    }
    if v.iter().all(|&x| x == v[0]) {
        return Err(Error::Degenerate(
            "uniform vector: no positive multiplier changes its support".into(),
        ));
    }

    let (current, _) = support_size(sorted, 1.0);
    if current == target {
        return Ok(ScalingResult {
            multiplier: 1.0,
            branch: ScalingBranch::AlreadyTarget,
            epsilon_slack: 0.0,
        });
    }

    let d_f = gap_sum(sorted, target);
    // Valid multipliers: [lo, hi).
    let lo = if target < d {
        let d_next = gap_sum(sorted, target + 1);
        if d_next <= d_f {
            return Err(Error::Degenerate(format!(
                "entries ranked {target} and {} are tied; support cannot be exactly {target}",
                target + 1
            )));
        }
        1.0 / d_next
    } else {
        0.0
    };
    let hi = if d_f > 0.0 { 1.0 / d_f } else { f64::INFINITY };

    let (mut multiplier, branch) = if current > target {
        (lo, ScalingBranch::ShrinkSupport)
    } else {
        let slacked = (1.0 - GROW_SLACK) * hi;
        if slacked > lo {
            (slacked, ScalingBranch::GrowSupport)
        } else {
            // Interval narrower than the slack; take its midpoint.
            (0.5 * (lo + hi), ScalingBranch::GrowSupport)
        }
    };

    // Guard against rounding at the interval ends: step inward until the
    // strict rule yields exactly `target`.
    for _ in 0..64 {
        let k = realized_support(v, sorted, multiplier);
        if k == target {
            break;
        }
        multiplier = if k > target {
            (multiplier * (1.0 + 4.0 * f64::EPSILON)).min(0.5 * (multiplier + hi))
        } else {
            (multiplier * (1.0 - 4.0 * f64::EPSILON)).max(0.5 * (multiplier + lo))
        };
    }

    let epsilon_slack = match branch {
        ScalingBranch::GrowSupport => 1.0 - multiplier * d_f,
        _ => 0.0,
    };
    Ok(ScalingResult {
        multiplier,
        branch,
        epsilon_slack,
    })
}

/// Positive multiplier `c` such that `sparsemax(c * v)` has exactly `target`
/// non-zero entries.
pub fn scaling_for_target(v: &[f64], target: usize) -> Result<ScalingResult> {
    validate(v)?;
    scaling_sorted(v, &sorted_desc(v), target)
}

/// Scaling followed by projection, sharing a single sort.
pub fn scaled_sparsemax_with_scaling(
    v: &[f64],
    target: usize,
) -> Result<(ScalingResult, SimplexProjection)> {
    validate(v)?;
    let sorted = sorted_desc(v);
    let scaling = scaling_sorted(v, &sorted, target)?;
    let proj = project_sorted(v, &sorted, scaling.multiplier);
    Ok((scaling, proj))
}

/// Projection of the rescaled vector; the support has exactly `target` entries.
pub fn scaled_sparsemax(v: &[f64], target: usize) -> Result<SimplexProjection> {
    scaled_sparsemax_with_scaling(v, target).map(|(_, p)| p)
}

/// Projection of `scale * v` for a given positive scale.
pub fn sparsemax_scaled_by(v: &[f64], scale: f64) -> Result<SimplexProjection> {
    validate(v)?;
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::invalid(format!("scale must be positive, got {scale}")));
    }
    Ok(project_sorted(v, &sorted_desc(v), scale))
}

/// `J * upstream` where `J = diag(s) - s s^T / |S|` is the sparsemax Jacobian
/// at `projection` (`s` the support indicator). Costs `O(|S|)` past the output
/// allocation.
pub fn sparsemax_jvp(projection: &SimplexProjection, upstream: &[f64]) -> Result<Vec<f64>> {
    if upstream.len() != projection.len() {
        return Err(Error::DimensionMismatch {
            what: "sparsemax jvp upstream",
            expected: projection.len(),
            found: upstream.len(),
        });
    }
    if upstream.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("sparsemax jvp upstream has non-finite entries"));
    }
    let support = projection.support();
    let mut out = vec![0.0; upstream.len()];
    if support.is_empty() {
        return Ok(out);
    }
    let mean = support.iter().map(|&i| upstream[i]).sum::<f64>() / support.len() as f64;
    for &i in support {
        out[i] = upstream[i] - mean;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exact projection by enumerating every candidate support set.
    fn brute_force(v: &[f64]) -> Vec<f64> {
        let d = v.len();
        let mut best = vec![0.0; d];
        let mut best_dist = f64::INFINITY;
        for mask in 1u32..(1 << d) {
            let idx: Vec<usize> = (0..d).filter(|i| mask & (1 << i) != 0).collect();
            let shift = (idx.iter().map(|&i| v[i]).sum::<f64>() - 1.0) / idx.len() as f64;
            let mut p = vec![0.0; d];
            let mut feasible = true;
            for &i in &idx {
                p[i] = v[i] - shift;
                if p[i] < 0.0 {
                    feasible = false;
                }
            }
            if !feasible {
                continue;
            }
            let dist: f64 = p.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
            if dist < best_dist {
                best_dist = dist;
                best = p;
            }
        }
        best
    }

    fn support_for_scale(v: &[f64], c: f64) -> usize {
        sparsemax_scaled_by(v, c).unwrap().k()
    }

    #[test]
    fn three_entry_projection() {
        let p = sparsemax(&[1.0, 0.5, 0.1]).unwrap();
        let oracle = brute_force(&[1.0, 0.5, 0.1]);
        for (a, b) in p.values().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((p.values()[0] - 0.75).abs() < 1e-12);
        assert!((p.values()[1] - 0.25).abs() < 1e-12);
        assert_eq!(p.values()[2], 0.0);
        assert_eq!(p.k(), 2);
        assert!((p.tau() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn constant_input_projects_to_uniform() {
        for c in [-3.0, 0.0, 2.5, 1e6] {
            let p = sparsemax(&[c, c, c]).unwrap();
            for &x in p.values() {
                assert!((x - 1.0 / 3.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn simplex_point_is_fixed() {
        let p = sparsemax(&[0.7, 0.3]).unwrap();
        assert!((p.values()[0] - 0.7).abs() < 1e-12);
        assert!((p.values()[1] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(sparsemax(&[]), Err(Error::InvalidInput(_))));
        assert!(matches!(
            sparsemax(&[1.0, f64::NAN]),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            sparsemax(&[f64::INFINITY]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn shrink_multiplier_is_smallest_on_grid() {
        let v = [1.0, 0.5, 0.1];
        let s = scaling_for_target(&v, 1).unwrap();
        assert_eq!(s.branch, ScalingBranch::ShrinkSupport);
        assert!((s.multiplier - 2.0).abs() < 1e-12);
        assert_eq!(s.epsilon_slack, 0.0);
        // Grid oracle: first multiplier on a 1e-4 grid reaching support 1.
        let first = (1..100_000)
            .map(|i| i as f64 * 1e-4)
            .find(|&c| support_for_scale(&v, c) == 1)
            .unwrap();
        assert!((first - 2.0).abs() < 1.5e-4, "grid oracle found {first}");
        let p = scaled_sparsemax(&v, 1).unwrap();
        assert_eq!(p.support(), &[0]);
        assert_eq!(p.values(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn grow_multiplier_applies_slack() {
        let v = [1.0, 0.5, 0.1];
        let s = scaling_for_target(&v, 3).unwrap();
        assert_eq!(s.branch, ScalingBranch::GrowSupport);
        let expected = (1.0 / 1.3) * (1.0 - GROW_SLACK);
        assert!((s.multiplier - expected).abs() < 1e-12);
        assert!((s.epsilon_slack - GROW_SLACK).abs() < 1e-9);
        assert_eq!(support_for_scale(&v, s.multiplier), 3);
        // Without slack the third entry sits on the boundary at (numerically) zero.
        let edge = sparsemax_scaled_by(&v, 1.0 / 1.3).unwrap();
        assert!(edge.values()[2].abs() < 1e-12);
        // Grid oracle: the largest grid multiplier with full support is just below 1/1.3.
        let last = (1..10_000)
            .map(|i| i as f64 * 1e-4)
            .filter(|&c| support_for_scale(&v, c) == 3)
            .next_back()
            .unwrap();
        assert!((last - 1.0 / 1.3).abs() < 1.5e-4);
    }

    #[test]
    fn already_at_target() {
        let s = scaling_for_target(&[1.0, 0.5, 0.1], 2).unwrap();
        assert_eq!(s.branch, ScalingBranch::AlreadyTarget);
        assert_eq!(s.multiplier, 1.0);
        let p = scaled_sparsemax(&[1.0, 0.5, 0.1], 2).unwrap();
        assert!((p.values()[0] - 0.75).abs() < 1e-12);
        assert!((p.values()[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn full_support_target() {
        let v = [0.3, -1.2, 2.0, 0.9, 0.0];
        let p = scaled_sparsemax(&v, v.len()).unwrap();
        assert!(p.values().iter().all(|&x| x > 0.0));
        assert!((p.values().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scaling_errors() {
        assert!(matches!(
            scaling_for_target(&[2.0, 2.0, 2.0], 1),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            scaling_for_target(&[1.0, 0.5], 0),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            scaling_for_target(&[1.0, 0.5], 3),
            Err(Error::InvalidInput(_))
        ));
        // Ranks 1 and 2 tied: exactly one non-zero is unreachable.
        assert!(matches!(
            scaling_for_target(&[1.0, 1.0, 0.0, -1.0], 1),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn jvp_examples() {
        let p = sparsemax(&[1.0, 0.5, 0.1]).unwrap();
        let g = sparsemax_jvp(&p, &[1.0, 0.0, 5.0]).unwrap();
        assert!((g[0] - 0.5).abs() < 1e-15);
        assert!((g[1] + 0.5).abs() < 1e-15);
        assert_eq!(g[2], 0.0);

        let full = sparsemax(&[0.3, 0.35, 0.32]).unwrap();
        assert_eq!(full.k(), 3);
        let g = sparsemax_jvp(&full, &[2.0, 2.0, 2.0]).unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-15));

        let g = sparsemax_jvp(&p, &[0.0; 3]).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));

        assert!(sparsemax_jvp(&p, &[1.0]).is_err());
    }

    #[test]
    fn jvp_matches_central_differences() {
        let v = [1.0, 0.5, 0.1];
        let u = [1.0, 0.0, 5.0];
        let h = 1e-6;
        let p = sparsemax(&v).unwrap();
        let analytic = sparsemax_jvp(&p, &u).unwrap();
        // J is symmetric, so (J u)_i = d/dv_i <u, sparsemax(v)>.
        for i in 0..3 {
            let mut plus = v;
            let mut minus = v;
            plus[i] += h;
            minus[i] -= h;
            let fp: f64 = sparsemax(&plus)
                .unwrap()
                .values()
                .iter()
                .zip(&u)
                .map(|(a, b)| a * b)
                .sum();
            let fm: f64 = sparsemax(&minus)
                .unwrap()
                .values()
                .iter()
                .zip(&u)
                .map(|(a, b)| a * b)
                .sum();
            let numeric = (fp - fm) / (2.0 * h);
            let scale = analytic[i].abs().max(numeric.abs()).max(1e-8);
            assert!(
                (analytic[i] - numeric).abs() / scale < 1e-5 || (analytic[i] - numeric).abs() < 1e-9,
                "i={i} analytic={} numeric={numeric}",
                analytic[i]
            );
        }
    }
}
