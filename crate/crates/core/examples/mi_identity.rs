//! Quadratic mutual information against the log-based quantity, and the
//! squared-error identity that links it to prediction quality.
//!
//! ```bash
//! cargo run --example mi_identity
//! ```

use slm::miloss::{mutual_information, quadratic_error, quadratic_mi, PredictionBatch};
use slm::Matrix;

pub fn run() -> slm::Result<()> {
    let joints = [
        ("independent", Matrix::from_rows(&[[0.25, 0.25], [0.25, 0.25]])?),
        ("copy", Matrix::from_rows(&[[0.5, 0.0], [0.0, 0.5]])?),
        ("noisy copy", Matrix::from_rows(&[[0.4, 0.1], [0.1, 0.4]])?),
    ];
    for (name, joint) in &joints {
        println!(
            "{name:<12} I = {:.4} nats   I_q = {:.4}",
            mutual_information(joint)?,
            quadratic_mi(joint)?
        );
    }

    // Expand the noisy joint into samples and predict with the true
    // conditionals: the mean squared error equals 1 - sum P(y)^2 - I_q.
    let joint = &joints[2].1;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for x in 0..2 {
        let px: f64 = joint.row(x).iter().sum();
        let conditional: Vec<f64> = joint.row(x).iter().map(|p| p / px).collect();
        for y in 0..2 {
            let copies = (joint.get(x, y) * 100.0).round() as usize;
            for _ in 0..copies {
                rows.push(conditional.clone());
                labels.push(y);
            }
        }
    }
    let batch = PredictionBatch::Classification { probs: Matrix::from_rows(&rows)?, labels };
    let err = quadratic_error(&batch)?;
    let predicted = 1.0 - 0.5 - quadratic_mi(joint)?;
    println!("error at true conditionals {err:.6}, identity gives {predicted:.6}");
    assert!((err - predicted).abs() < 1e-12);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run().expect("mi_identity failed");
}
