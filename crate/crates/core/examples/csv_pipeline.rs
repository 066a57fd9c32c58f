//! Write a synthetic dataset to CSV, read it back, split and standardize it,
//! then train on the result.
//!
//! ```bash
//! cargo run --example csv_pipeline
//! ```

use slm::data::{load_csv, normalize_split, synth_generate, write_csv, Split, SynthConfig, Task};
use slm::train::{train_slm, TrainConfig};

pub fn run() -> slm::Result<()> {
    let dir = std::env::temp_dir().join(format!("slm-csv-example-{}", std::process::id()));
    let path = dir.join("synth.csv");
    let raw = synth_generate(&SynthConfig {
        group_size: 2,
        n_features: 30,
        n_samples: 600,
        seed: 3,
        ..Default::default()
    })?;
    write_csv(&raw, &path)?;

    let loaded = load_csv(&path, "label", Task::Classification)?;
    assert_eq!(loaded.x, raw.x);
    let ds = normalize_split(&loaded, (0.7, 0.1, 0.2), 3)?;
    for split in [Split::Train, Split::Val, Split::Test] {
        println!("{:<5} {} rows", split.name(), ds.indices(split).len());
    }

    let report = train_slm(
        &ds,
        &TrainConfig { epochs: 20, batch_size: 32, target_features: 10, ..Default::default() },
    )?;
    let names: Vec<&str> = report.selected.iter().map(|&j| ds.feature_names[j].as_str()).collect();
    println!("selected {names:?}");
    println!("test accuracy {:.3}", report.test_metrics().accuracy.unwrap_or(f64::NAN));
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run().expect("csv_pipeline failed");
}
