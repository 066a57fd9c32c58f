//! Train the bare MLP with Adam on a toy problem and round-trip a checkpoint.
//!
//! ```bash
//! cargo run --example mlp_checkpoint
//! ```

use slm::metrics::accuracy;
use slm::net::{softmax_cross_entropy, AdamConfig, Checkpoint, OptimizerState, OutputKind, Predictor};
use slm::Matrix;

pub fn run() -> slm::Result<()> {
    // XOR-like labels on four points, repeated.
    let pts = [[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]];
    let rows: Vec<[f64; 2]> = (0..32).map(|i| pts[i % 4]).collect();
    let labels: Vec<usize> = (0..32).map(|i| usize::from((i % 4 == 1) || (i % 4 == 2))).collect();
    let x = Matrix::from_rows(&rows)?;

    let mut net = Predictor::new(2, 8, 1, 2, OutputKind::SoftmaxProbs, 1)?;
    let mut opt = OptimizerState::new(AdamConfig::new(0.05, 1000.0, 0.95), &net.parameter_sizes())?;
    for step in 0..300 {
        let pass = net.forward(&x)?;
        let (loss, grad_logits) = softmax_cross_entropy(&pass.output, &labels)?;
        let grads = net.backward(&pass, &grad_logits)?;
        opt.adam_step(&mut net.parameters_mut(), &grads.parameter_slices())?;
        if step % 100 == 0 {
            println!("step {step:>3} loss {loss:.4}");
        }
    }
    println!("train accuracy {:.3}", accuracy(&net.predict(&x)?, &labels)?);

    let path = std::env::temp_dir().join(format!("slm-checkpoint-{}.json", std::process::id()));
    Checkpoint::new(net.clone()).save(&path)?;
    let restored = Checkpoint::load(&path)?;
    assert_eq!(restored.predictor, net);
    std::fs::remove_file(&path)?;
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run().expect("mlp_checkpoint failed");
}
