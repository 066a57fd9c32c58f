//! Independent reference computations shared by the integration tests.

#![allow(dead_code)]

use std::time::Instant;

/// Euclidean projection onto the simplex by enumerating every candidate
/// support: for each non-empty subset, shift it to sum to one and keep the
/// feasible candidate closest to `v`.
pub fn project_bruteforce(v: &[f64]) -> Vec<f64> {
    let d = v.len();
    assert!(d > 0 && d <= 16);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for bits in 1u32..(1 << d) {
        let members: Vec<usize> = (0..d).filter(|i| bits & (1 << i) != 0).collect();
        let shift = (members.iter().map(|&i| v[i]).sum::<f64>() - 1.0) / members.len() as f64;
        let mut p = vec![0.0; d];
        let mut feasible = true;
        for &i in &members {
            p[i] = v[i] - shift;
            if p[i] < -1e-15 {
                feasible = false;
            }
        }
        if !feasible {
            continue;
        }
        let dist: f64 = v.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.as_ref().is_none_or(|(bd, _)| dist < *bd) {
            best = Some((dist, p));
        }
    }
    best.expect("some subset is feasible").1
}

/// Row marginal, column marginal.
pub fn marginals(joint: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let px: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
    let mut py = vec![0.0; joint[0].len()];
    for r in joint {
        for (a, v) in py.iter_mut().zip(r) {
            *a += v;
        }
    }
    (px, py)
}

/// `sum P(x,y)^2 / P(x) - sum P(y)^2`.
pub fn quadratic_mi_oracle(joint: &[Vec<f64>]) -> f64 {
    let (px, py) = marginals(joint);
    let mut s = 0.0;
    for (r, &p) in joint.iter().zip(&px) {
        if p > 0.0 {
            s += r.iter().map(|v| v * v / p).sum::<f64>();
        }
    }
    s - py.iter().map(|v| v * v).sum::<f64>()
}

/// Shannon mutual information in nats.
pub fn mutual_information_oracle(joint: &[Vec<f64>]) -> f64 {
    let (px, py) = marginals(joint);
    let mut s = 0.0;
    for (x, r) in joint.iter().enumerate() {
        for (y, &v) in r.iter().enumerate() {
            if v > 0.0 {
                s += v * (v / (px[x] * py[y])).ln();
            }
        }
    }
    s
}

/// Population squared error of the predictor `R(y'|x) = P(x,y')/P(x)`:
/// `sum_{x,y} P(x,y) sum_{y'} (R(y'|x) - [y' = y])^2`.
pub fn error_at_conditionals(joint: &[Vec<f64>]) -> f64 {
    let (px, _) = marginals(joint);
    let mut e = 0.0;
    for (x, r) in joint.iter().enumerate() {
        if px[x] == 0.0 {
            continue;
        }
        for (y, &pxy) in r.iter().enumerate() {
            let inner: f64 = r
                .iter()
                .enumerate()
                .map(|(yy, &q)| {
                    let t = if yy == y { 1.0 } else { 0.0 };
                    (q / px[x] - t).powi(2)
                })
                .sum();
            e += pxy * inner;
        }
    }
    e
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    cov / var
}

/// Median wall time of `reps` calls, in seconds.
pub fn median_seconds(reps: usize, mut f: impl FnMut()) -> f64 {
    let mut times: Vec<f64> = (0..reps)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64()
        })
        .collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times[reps / 2]
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn rel_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Prints the one-line verdict for a criterion and returns whether it passed.
pub fn verdict(id: u32, name: &str, pass: bool, detail: &str) -> bool {
    println!("criterion {id} [{name}]: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    pass
}
