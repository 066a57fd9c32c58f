mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slm::miloss::{
    consistency_regularizer, hsic_gaussian, mi_objective_regression, miloss_gradients, one_hot,
    FeatureScope, MiOptions, PairReduction, PredictionBatch, RcsOptions,
};
use slm::Matrix;

/// Small-integer features so that many pairs agree on some coordinates.
fn discrete_x(rng: &mut ChaCha8Rng, b: usize, d: usize) -> Matrix {
    let data = (0..b * d).map(|_| rng.random_range(0..3) as f64).collect();
    Matrix::from_vec(b, d, data).unwrap()
}

fn interior_probs(rng: &mut ChaCha8Rng, b: usize, c: usize) -> Matrix {
    let mut m = Matrix::zeros(b, c);
    for i in 0..b {
        let raw: Vec<f64> = (0..c).map(|_| rng.random_range(0.2..1.0)).collect();
        let s: f64 = raw.iter().sum();
        for (k, v) in raw.iter().enumerate() {
            m.set(i, k, v / s);
        }
    }
    m
}

fn zero_sum(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let m = v.iter().sum::<f64>() / n as f64;
    v.iter_mut().for_each(|x| *x -= m);
    v
}

fn weighted_value(x: &Matrix, batch: &PredictionBatch, p: &[f64], w: f64, opts: &MiOptions) -> f64 {
    let g = miloss_gradients(x, batch, p, w, opts).unwrap();
    w * (g.mi_error + g.r_cs)
}

#[test]
fn classification_gradients_match_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for case in 0..40 {
        let (b, d, c) = (12, 5, 3);
        let x = discrete_x(&mut rng, b, d);
        let probs = interior_probs(&mut rng, b, c);
        let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..c)).collect();
        let p: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..0.9)).collect();
        let opts = MiOptions {
            include_rcs: true,
            rcs: RcsOptions {
                reduction: if case % 2 == 0 { PairReduction::Sum } else { PairReduction::MeanOverPairs },
                scope: if case % 3 == 0 { FeatureScope::AllFeatures } else { FeatureScope::Support },
                ..RcsOptions::default()
            },
        };
        let w = 0.7;
        let batch = PredictionBatch::Classification { probs: probs.clone(), labels: labels.clone() };
        let g = miloss_gradients(&x, &batch, &p, w, &opts).unwrap();

        // Probabilities move within each row so rows stay on the simplex.
        let mut dir = Matrix::zeros(b, c);
        for i in 0..b {
            for (k, v) in zero_sum(&mut rng, c).into_iter().enumerate() {
                dir.set(i, k, 0.05 * v);
            }
        }
        let shifted = |s: f64| {
            let mut m = probs.clone();
            for (a, e) in m.as_mut_slice().iter_mut().zip(dir.as_slice()) {
                *a += s * e;
            }
            PredictionBatch::Classification { probs: m, labels: labels.clone() }
        };
        let numeric = (weighted_value(&x, &shifted(h), &p, w, &opts)
            - weighted_value(&x, &shifted(-h), &p, w, &opts))
            / (2.0 * h);
        let analytic: f64 = g.predictions.as_slice().iter().zip(dir.as_slice()).map(|(a, e)| a * e).sum();
        worst = worst.max(common::rel_error(analytic, numeric, 1e-6));

        let dp: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let moved = |s: f64| -> Vec<f64> { p.iter().zip(&dp).map(|(a, e)| a + s * e).collect() };
        let numeric = (weighted_value(&x, &batch, &moved(h), w, &opts)
            - weighted_value(&x, &batch, &moved(-h), w, &opts))
            / (2.0 * h);
        let analytic: f64 = g.p.iter().zip(&dp).map(|(a, e)| a * e).sum();
        worst = worst.max(common::rel_error(analytic, numeric, 1e-6));
    }
    assert!(worst < 1e-5, "worst relative error {worst:e}");
}

#[test]
fn regression_gradients_match_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let h = 1e-6;
    for _ in 0..30 {
        let (b, d) = (10, 4);
        let x = discrete_x(&mut rng, b, d);
        let outputs: Vec<f64> = (0..b).map(|_| rng.random_range(-2.0..2.0)).collect();
        let targets: Vec<f64> = (0..b).map(|_| rng.random_range(-2.0..2.0)).collect();
        let p: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..0.9)).collect();
        let opts = MiOptions::default();
        let batch = PredictionBatch::Regression { outputs: outputs.clone(), targets: targets.clone() };
        let g = miloss_gradients(&x, &batch, &p, 1.0, &opts).unwrap();
        for i in 0..b {
            let at = |s: f64| {
                let mut o = outputs.clone();
                o[i] += s;
                mi_objective_regression(&x, &o, &targets, &p, &opts.rcs).unwrap()
            };
            let numeric = (at(h) - at(-h)) / (2.0 * h);
            let err = common::rel_error(g.predictions.get(i, 0), numeric, 1e-6);
            assert!(err < 1e-5, "output {i}: {err:e}");
        }
    }
}

#[test]
fn error_gradient_vanishes_at_group_conditionals() {
    // Four distinct inputs, each repeated with a fixed label mix; predicting the
    // empirical conditional at every copy is stationary for the error term.
    let groups: [(&[f64], &[usize]); 4] = [
        (&[0.0, 1.0], &[0, 0, 1, 2]),
        (&[1.0, 1.0], &[1, 1, 1, 0]),
        (&[2.0, 0.0], &[2, 2, 0, 1]),
        (&[0.0, 0.0], &[0, 1, 2, 2]),
    ];
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut probs = Vec::new();
    for (feat, ys) in groups {
        let mut cond = [0.0; 3];
        for &y in ys {
            cond[y] += 1.0 / ys.len() as f64;
        }
        for &y in ys {
            rows.push(feat.to_vec());
            labels.push(y);
            probs.push(cond.to_vec());
        }
    }
    let x = Matrix::from_rows(&rows).unwrap();
    let batch = PredictionBatch::Classification { probs: Matrix::from_rows(&probs).unwrap(), labels };
    let opts = MiOptions { include_rcs: false, ..MiOptions::default() };
    let g = miloss_gradients(&x, &batch, &[0.5, 0.5], 1.0, &opts).unwrap();
    for gi in 0..4 {
        for c in 0..3 {
            let s: f64 = (gi * 4..gi * 4 + 4).map(|i| g.predictions.get(i, c)).sum();
            assert!(s.abs() < 1e-12, "group {gi} class {c}: {s}");
        }
    }
}

#[test]
fn regression_error_at_group_means_is_expected_variance() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (b, d) = (60, 2);
    let x = discrete_x(&mut rng, b, d);
    let targets: Vec<f64> = (0..b).map(|i| x.get(i, 0) - x.get(i, 1) + rng.random_range(-1.0..1.0)).collect();
    let key = |i: usize| (x.get(i, 0) as i64, x.get(i, 1) as i64);
    let mut groups: std::collections::BTreeMap<(i64, i64), Vec<usize>> = Default::default();
    for i in 0..b {
        groups.entry(key(i)).or_default().push(i);
    }
    let mut outputs = vec![0.0; b];
    let mut expected_var = 0.0;
    for members in groups.values() {
        let m = members.iter().map(|&i| targets[i]).sum::<f64>() / members.len() as f64;
        let var = members.iter().map(|&i| (targets[i] - m).powi(2)).sum::<f64>() / members.len() as f64;
        expected_var += var * members.len() as f64 / b as f64;
        for &i in members {
            outputs[i] = m;
        }
    }
    // p = 1 zeroes every pair that differs anywhere; identical inputs share an output.
    let value = mi_objective_regression(&x, &outputs, &targets, &[1.0, 1.0], &RcsOptions::default()).unwrap();
    assert!((value - expected_var).abs() < 1e-12, "{value} vs {expected_var}");
}

#[test]
fn hsic_detects_dependence_beyond_null_spread() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 80;
    let draw = |rng: &mut ChaCha8Rng| {
        Matrix::from_vec(n, 1, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    };
    let null: Vec<f64> = (0..200)
        .map(|_| {
            let (a, b) = (draw(&mut rng), draw(&mut rng));
            hsic_gaussian(&a, &b, None, None).unwrap().estimate
        })
        .collect();
    let mean = null.iter().sum::<f64>() / null.len() as f64;
    let sd = (null.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (null.len() - 1) as f64).sqrt();
    let a = draw(&mut rng);
    let dependent = hsic_gaussian(&a, &a, None, None).unwrap().estimate;
    assert!(dependent > mean + 3.0 * sd, "{dependent} vs {mean} + 3*{sd}");
    assert!(null.iter().all(|&v| v >= -1e-12));

    let labels: Vec<usize> = vec![1; n];
    let constant = hsic_gaussian(&a, &one_hot(&labels, 2), None, None).unwrap().estimate;
    assert!(constant.abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn consistency_term_is_nonnegative_and_order_free(
        seed in 0u64..10_000,
        b in 2usize..20,
        rotate in 0usize..20,
        sum in any::<bool>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 4;
        let x = discrete_x(&mut rng, b, d);
        let probs = interior_probs(&mut rng, b, 2);
        let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..2)).collect();
        let p: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..=1.0)).collect();
        let opts = RcsOptions {
            reduction: if sum { PairReduction::Sum } else { PairReduction::MeanOverPairs },
            ..RcsOptions::default()
        };
        let batch = PredictionBatch::Classification { probs: probs.clone(), labels: labels.clone() };
        let v = consistency_regularizer(&x, &batch, &p, &opts).unwrap();
        prop_assert!(v >= 0.0);

        let order: Vec<usize> = (0..b).map(|i| (i + rotate) % b).collect();
        let permuted = PredictionBatch::Classification {
            probs: probs.select_rows(&order),
            labels: order.iter().map(|&i| labels[i]).collect(),
        };
        let w = consistency_regularizer(&x.select_rows(&order), &permuted, &p, &opts).unwrap();
        prop_assert!((v - w).abs() <= 1e-12 * v.abs().max(1.0));
    }
}
