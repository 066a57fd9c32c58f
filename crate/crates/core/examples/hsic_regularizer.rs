//! Kernel dependence between masked features and labels: HSIC rises when the
//! mask keeps the informative column.
//!
//! ```bash
//! cargo run --example hsic_regularizer
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slm::miloss::{hsic_scale_gradient, one_hot};
use slm::Matrix;

pub fn run() -> slm::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 64;
    let mut x = Matrix::zeros(n, 3);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % 2;
        labels.push(y);
        x.set(i, 0, y as f64 * 2.0 - 1.0 + rng.random_range(-0.3..0.3));
        x.set(i, 1, rng.random_range(-1.0..1.0));
        x.set(i, 2, rng.random_range(-1.0..1.0));
    }
    let y = one_hot(&labels, 2);

    for (name, mask) in [("informative", [0.8, 0.1, 0.1]), ("noise", [0.1, 0.8, 0.1])] {
        let (h, grad) = hsic_scale_gradient(&x, &mask, &y, None, None)?;
        println!(
            "{name:<12} HSIC {:.5}  regularizer gradient {:?}",
            h.estimate,
            grad.iter().map(|g| format!("{g:+.4}")).collect::<Vec<_>>()
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run().expect("hsic_regularizer failed");
}
