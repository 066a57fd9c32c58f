//! MI objective on/off crossed with tempering on/off.
//!
//! ```bash
//! cargo run --release --example ablation
//! ```

use slm::data::{normalize_split, synth_generate, SynthConfig};
use slm::train::{run_ablation, TrainConfig};

pub fn run() -> slm::Result<()> {
    let raw = synth_generate(&SynthConfig {
        group_size: 3,
        n_features: 40,
        n_samples: 800,
        seed: 2,
        ..Default::default()
    })?;
    let ds = normalize_split(&raw, (0.7, 0.1, 0.2), 2)?;
    let cfg = TrainConfig { epochs: 15, batch_size: 64, target_features: 15, ..Default::default() };
    let report = run_ablation(&ds, &cfg, &[0, 1])?;
    for c in &report.cells {
        println!(
            "mi {:<5} tempering {:<5} mean {:.3} sd {:.3}",
            c.mi_enabled, c.tempering, c.mean, c.sd
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run().expect("ablation failed");
}
