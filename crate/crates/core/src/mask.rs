//! The learnable feature mask: its unconstrained argument, the sparse
//! projection actually applied to inputs, and the tempering schedule that
//! shrinks the selected-feature count during the first part of training.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::simplex::{self, ScalingResult, SimplexProjection};

/// Number of plateaus the feature count steps through before the final value.
pub const PLATEAUS: usize = 5;

/// Piecewise-constant schedule taking the selected-feature count from
/// `f0` down to `f_final` by step `n_tmp`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemperingSchedule {
    f0: usize,
    f_final: usize,
    n_total: usize,
    n_tmp: usize,
}

impl TemperingSchedule {
    /// Schedule with the tempering threshold at half the total step count.
    pub fn new(f0: usize, f_final: usize, n_total: usize) -> Result<Self> {
        Self::with_threshold(f0, f_final, n_total, n_total / 2)
    }

    pub fn with_threshold(f0: usize, f_final: usize, n_total: usize, n_tmp: usize) -> Result<Self> {
        if f_final == 0 {
            return Err(Error::invalid("final feature count must be positive"));
        }
        if f_final > f0 {
            return Err(Error::invalid(format!(
                "final feature count {f_final} exceeds initial count {f0}"
            )));
        }
        if n_tmp > n_total {
            return Err(Error::invalid(format!(
                "tempering threshold {n_tmp} exceeds total steps {n_total}"
            )));
        }
        Ok(Self {
            f0,
            f_final,
            n_total,
            n_tmp,
        })
    }

    /// Keeps `count` features at every step (tempering disabled).
    pub fn constant(count: usize, n_total: usize) -> Result<Self> {
        Self::with_threshold(count, count, n_total, 0)
    }

    pub fn f0(&self) -> usize {
        self.f0
    }

    pub fn f_final(&self) -> usize {
        self.f_final
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn n_tmp(&self) -> usize {
        self.n_tmp
    }

    /// Plateau `j` takes `round(f0 - (j / 5) * (f0 - f_final))`.
    pub fn plateaus(&self) -> [usize; PLATEAUS] {
        let range = (self.f0 - self.f_final) as f64;
        std::array::from_fn(|j| {
            (self.f0 as f64 - (j as f64 / PLATEAUS as f64) * range).round() as usize
        })
    }

    /// First step of plateau `j` (1..=5; plateau 5 is the final count).
    fn boundary(&self, j: usize) -> usize {
        (j * self.n_tmp).div_ceil(PLATEAUS)
    }

    /// Same schedule, but every plateau change is moved to the nearest epoch
    /// boundary so each epoch trains with a single feature count.
    pub fn epoch_aligned_target(&self, t: usize, steps_per_epoch: usize) -> Result<usize> {
        if t > self.n_total {
            return Err(Error::invalid(format!(
                "step {t} beyond schedule length {}",
                self.n_total
            )));
        }
        if self.n_tmp == 0 || steps_per_epoch == 0 {
            return target_count_at(self, t);
        }
        let snap = |b: usize| {
            let e = (b as f64 / steps_per_epoch as f64).round() as usize;
            e * steps_per_epoch
        };
        let plateaus = self.plateaus();
        let mut value = plateaus[0];
        for j in 1..=PLATEAUS {
            if snap(self.boundary(j)) <= t {
                value = if j == PLATEAUS {
                    self.f_final
                } else {
                    plateaus[j]
                };
            }
        }
        Ok(value)
    }
}

/// Selected-feature count at step `t`.
pub fn target_count_at(schedule: &TemperingSchedule, t: usize) -> Result<usize> {
    if t > schedule.n_total {
        return Err(Error::invalid(format!(
            "step {t} beyond schedule length {}",
            schedule.n_total
        )));
    }
    if t >= schedule.n_tmp {
        return Ok(schedule.f_final);
    }
    let j = (PLATEAUS * t) / schedule.n_tmp;
    Ok(schedule.plateaus()[j])
}

/// Learnable mask argument plus its current sparse projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskState {
    argument: Vec<f64>,
    sparse: SimplexProjection,
    multiplier: f64,
    target_count: usize,
    step: usize,
    scaling: Option<ScalingResult>,
    degenerate_fallback: bool,
}

impl MaskState {
    /// All-ones argument over `d` features; the projection is uniform.
    pub fn new(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("mask needs at least one feature"));
        }
        let argument = vec![1.0; d];
        let sparse = simplex::sparsemax(&argument)?;
        Ok(Self {
            argument,
            sparse,
            multiplier: 1.0,
            target_count: d,
            step: 0,
            scaling: None,
            degenerate_fallback: false,
        })
    }

    pub fn from_argument(argument: Vec<f64>) -> Result<Self> {
        let d = argument.len();
        let mut state = Self::new(d)?;
        state.argument = argument;
        state.sparse = simplex::sparsemax(&state.argument)?;
        Ok(state)
    }

    pub fn argument(&self) -> &[f64] {
        &self.argument
    }

    pub fn argument_mut(&mut self) -> &mut [f64] {
        &mut self.argument
    }

    pub fn sparse(&self) -> &SimplexProjection {
        &self.sparse
    }

    /// Scalar applied to the argument before projection (1 when unscaled).
    pub fn multiplier(&self) -> f64 {
        self.multiplier
    }

    pub fn target_count(&self) -> usize {
        self.target_count
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn scaling(&self) -> Option<&ScalingResult> {
        self.scaling.as_ref()
    }

    /// True when the last refresh could not scale (uniform or tied argument)
    /// and used the plain projection instead.
    pub fn degenerate_fallback(&self) -> bool {
        self.degenerate_fallback
    }

    pub fn len(&self) -> usize {
        self.argument.len()
    }

    pub fn is_empty(&self) -> bool {
        self.argument.is_empty()
    }

    /// Recomputes the projection so that its support has `target` entries.
    /// With `scale == false` the plain projection of the argument is used and
    /// the support size is whatever it happens to be.
    pub fn refresh_to(&mut self, target: usize, scale: bool) -> Result<()> {
        if let Some(i) = self.argument.iter().position(|x| !x.is_finite()) {
            return Err(Error::invalid(format!(
                "mask argument has non-finite entry at index {i}"
            )));
        }
        self.target_count = target;
        self.degenerate_fallback = false;
        if !scale {
            self.sparse = simplex::sparsemax(&self.argument)?;
            self.multiplier = 1.0;
            self.scaling = None;
            return Ok(());
        }
        match simplex::scaled_sparsemax_with_scaling(&self.argument, target) {
            Ok((scaling, sparse)) => {
                self.multiplier = scaling.multiplier;
                self.scaling = Some(scaling);
                self.sparse = sparse;
            }
            Err(Error::Degenerate(msg)) => {
                log::debug!("mask scaling skipped at step {}: {msg}", self.step);
                self.sparse = simplex::sparsemax(&self.argument)?;
                self.multiplier = 1.0;
                self.scaling = None;
                self.degenerate_fallback = true;
            }
            Err(e) => return Err(e),
        }
        Ok(())
    }

    /// Re-projects the argument with a given multiplier, leaving the target
    /// count untouched.
    pub fn project_with_multiplier(&mut self, multiplier: f64) -> Result<()> {
        self.sparse = simplex::sparsemax_scaled_by(&self.argument, multiplier)?;
        self.multiplier = multiplier;
        Ok(())
    }

    /// Advances to step `t`: picks the scheduled count and re-projects.
    pub fn refresh(&mut self, t: usize, schedule: &TemperingSchedule) -> Result<()> {
        let target = target_count_at(schedule, t)?;
        self.step = t;
        self.refresh_to(target, true)
    }

    /// Chains a gradient w.r.t. the sparse mask back to the argument. The
    /// multiplier is treated as a constant of the forward pass.
    pub fn argument_gradient(&self, sparse_grad: &[f64]) -> Result<Vec<f64>> {
        let mut g = simplex::sparsemax_jvp(&self.sparse, sparse_grad)?;
        for x in &mut g {
            *x *= self.multiplier;
        }
        Ok(g)
    }

    /// Features ranked by mask probability, descending (ties by index).
    pub fn ranking(&self) -> Vec<usize> {
        crate::linalg::argsort_desc(self.sparse.values())
    }
}

/// Functional form of [`MaskState::refresh`].
pub fn refresh_mask(state: &MaskState, t: usize, schedule: &TemperingSchedule) -> Result<MaskState> {
    let mut next = state.clone();
    next.refresh(t, schedule)?;
    Ok(next)
}

/// Row-wise elementwise product `x ⊙ mask`.
pub fn apply_mask(x: &Matrix, sparse: &SimplexProjection) -> Result<Matrix> {
    if x.cols() != sparse.len() {
        return Err(Error::DimensionMismatch {
            what: "mask length vs feature count",
            expected: x.cols(),
            found: sparse.len(),
        });
    }
    let mask = sparse.values();
    let mut out = x.clone();
    for r in 0..out.rows() {
        for (v, &m) in out.row_mut(r).iter_mut().zip(mask) {
            *v *= m;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_examples() {
        let s = TemperingSchedule::with_threshold(100, 20, 1000, 500).unwrap();
        assert_eq!(s.plateaus(), [100, 84, 68, 52, 36]);
        assert_eq!(target_count_at(&s, 0).unwrap(), 100);
        assert_eq!(target_count_at(&s, 150).unwrap(), 84);
        assert_eq!(target_count_at(&s, 499).unwrap(), 36);
        assert_eq!(target_count_at(&s, 500).unwrap(), 20);
        assert_eq!(target_count_at(&s, 1000).unwrap(), 20);
        assert!(target_count_at(&s, 1001).is_err());
    }

    #[test]
    fn zero_range_schedule() {
        let s = TemperingSchedule::new(7, 7, 40).unwrap();
        for t in 0..=40 {
            assert_eq!(target_count_at(&s, t).unwrap(), 7);
        }
        let c = TemperingSchedule::constant(5, 10).unwrap();
        assert_eq!(target_count_at(&c, 0).unwrap(), 5);
    }

    #[test]
    fn schedule_is_monotone() {
        let s = TemperingSchedule::new(500, 50, 840).unwrap();
        let mut prev = usize::MAX;
        for t in 0..=840 {
            let f = target_count_at(&s, t).unwrap();
            assert!(f <= prev);
            prev = f;
        }
        assert_eq!(target_count_at(&s, s.n_tmp()).unwrap(), 50);
    }

    #[test]
    fn epoch_aligned_changes_only_at_epoch_starts() {
        let spe = 28;
        let s = TemperingSchedule::new(500, 50, 30 * spe).unwrap();
        let mut prev = target_count_at(&s, 0).unwrap();
        for t in 0..=s.n_total() {
            let f = s.epoch_aligned_target(t, spe).unwrap();
            if f != prev {
                assert_eq!(t % spe, 0, "change at step {t}");
            }
            prev = f;
        }
        assert_eq!(s.epoch_aligned_target(s.n_tmp(), spe).unwrap(), 50);
        assert_eq!(s.epoch_aligned_target(0, spe).unwrap(), 500);
    }

    #[test]
    fn fresh_mask_is_uniform() {
        let mut m = MaskState::new(4).unwrap();
        let s = TemperingSchedule::new(4, 2, 10).unwrap();
        m.refresh(0, &s).unwrap();
        assert!(m.degenerate_fallback());
        assert_eq!(m.sparse().values(), &[0.25; 4]);
    }

    #[test]
    fn refresh_hits_target() {
        let mut m = MaskState::from_argument(vec![1.0, 0.5, 0.1]).unwrap();
        let s = TemperingSchedule::constant(1, 10).unwrap();
        m.refresh(3, &s).unwrap();
        assert_eq!(m.sparse().values(), &[1.0, 0.0, 0.0]);
        assert_eq!(m.argument(), &[1.0, 0.5, 0.1]);
        let again = refresh_mask(&m, 3, &s).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn apply_mask_examples() {
        let x = Matrix::from_rows(&[[3.0, 4.0, 5.0]]).unwrap();
        let m = MaskState::from_argument(vec![1.0, 0.5, 0.1]).unwrap();
        let mut m1 = m.clone();
        m1.refresh_to(1, true).unwrap();
        let out = apply_mask(&x, m1.sparse()).unwrap();
        assert_eq!(out.row(0), &[3.0, 0.0, 0.0]);

        let uniform = MaskState::new(3).unwrap();
        let out = apply_mask(&x, uniform.sparse()).unwrap();
        for (a, b) in out.row(0).iter().zip([3.0, 4.0, 5.0]) {
            assert!((a - b / 3.0).abs() < 1e-15);
        }

        let wide = Matrix::zeros(2, 4);
        assert!(apply_mask(&wide, uniform.sparse()).is_err());
    }

    #[test]
    fn bad_schedules_rejected() {
        assert!(TemperingSchedule::new(10, 0, 5).is_err());
        assert!(TemperingSchedule::new(10, 11, 5).is_err());
        assert!(TemperingSchedule::with_threshold(10, 5, 5, 6).is_err());
    }
}
