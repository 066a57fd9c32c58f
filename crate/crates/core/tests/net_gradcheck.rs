mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slm::net::{mean_absolute_error, softmax_cross_entropy, OutputKind, Predictor};
use slm::Matrix;

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
}

/// Loss on `x`, and the gradient of that loss w.r.t. logits.
fn loss(net: &Predictor, x: &Matrix, y: &[usize], t: &[f64]) -> (f64, Matrix) {
    let pass = net.forward(x).unwrap();
    match net.output_kind() {
        OutputKind::SoftmaxProbs => softmax_cross_entropy(&pass.output, y).unwrap(),
        OutputKind::Linear => {
            let (l, g) = mean_absolute_error(pass.output.as_slice(), t).unwrap();
            (l, Matrix::from_vec(t.len(), 1, g).unwrap())
        }
    }
}

/// Rounding noise of a central difference on an O(1) loss is near 1e-10.
const FLOOR: f64 = 1e-4;

#[test]
fn every_parameter_and_input_gradient_matches_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (kind, out) in [(OutputKind::SoftmaxProbs, 3), (OutputKind::Linear, 1)] {
        for seed in 0..4 {
            let net = Predictor::new(5, 7, 1 + seed as usize % 2, out, kind, seed).unwrap();
            let x = random_matrix(&mut rng, 6, 5);
            let y: Vec<usize> = (0..6).map(|_| rng.random_range(0..3)).collect();
            let t: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
            let pass = net.forward(&x).unwrap();
            let (_, g) = loss(&net, &x, &y, &t);
            let grads = net.backward(&pass, &g).unwrap();

            let params = grads.parameter_slices();
            let mut flat = 0;
            for (slot, analytic) in params.iter().enumerate() {
                for idx in 0..analytic.len() {
                    let at = |s: f64| {
                        let mut n = net.clone();
                        n.parameters_mut()[slot][idx] += s;
                        loss(&n, &x, &y, &t).0
                    };
                    let numeric = (at(h) - at(-h)) / (2.0 * h);
                    worst = worst.max(common::rel_error(analytic[idx], numeric, FLOOR));
                    flat += 1;
                }
            }
            assert_eq!(flat, net.parameter_sizes().iter().sum::<usize>());

            for idx in 0..x.as_slice().len() {
                let at = |s: f64| {
                    let mut m = x.clone();
                    m.as_mut_slice()[idx] += s;
                    loss(&net, &m, &y, &t).0
                };
                let numeric = (at(h) - at(-h)) / (2.0 * h);
                worst = worst.max(common::rel_error(grads.input.as_slice()[idx], numeric, FLOOR));
            }
        }
    }
    assert!(worst < 1e-5, "worst relative error {worst:e}");
}
