//! SLM next to the filter baselines, a random subset and all features.
//!
//! ```bash
//! cargo run --release --example compare_baselines
//! ```

use slm::baselines::{run_comparison, Method};
use slm::data::{normalize_split, synth_generate, SynthConfig};
use slm::train::TrainConfig;

pub fn run() -> slm::Result<()> {
    let raw = synth_generate(&SynthConfig {
        group_size: 3,
        n_features: 40,
        n_samples: 1000,
        seed: 5,
        ..Default::default()
    })?;
    let ds = normalize_split(&raw, (0.7, 0.1, 0.2), 5)?;
    let cfg = TrainConfig { epochs: 25, batch_size: 64, seed: 5, ..Default::default() };
    let rows = run_comparison(&ds, &[15], &Method::all(), &cfg)?;
    println!("{:<12} {:>4} {:>9} {:>8}", "method", "k", "salient", "test acc");
    for r in &rows {
        println!(
            "{:<12} {:>4} {:>9} {:>8.3}",
            r.method.name(),
            r.k,
            r.salient_recovered.unwrap_or(0),
            r.test().accuracy.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run().expect("compare_baselines failed");
}
