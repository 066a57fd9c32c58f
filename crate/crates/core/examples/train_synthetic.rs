//! Train SLM on the synthetic benchmark and inspect what it selected.
//!
//! ```bash
//! cargo run --release --example train_synthetic
//! ```

use slm::data::{normalize_split, salient_columns, synth_generate, SynthConfig};
use slm::train::{train_slm_with_model, TrainConfig};

pub fn run() -> slm::Result<()> {
    let raw = synth_generate(&SynthConfig {
        group_size: 4,
        n_features: 60,
        n_samples: 1500,
        seed: 11,
        ..Default::default()
    })?;
    let ds = normalize_split(&raw, (0.7, 0.1, 0.2), 11)?;
    let cfg = TrainConfig { epochs: 25, batch_size: 64, target_features: 20, seed: 11, ..Default::default() };
    let (report, model) = train_slm_with_model(&ds, &cfg)?;

    let salient = salient_columns(&ds);
    let hits = report.selected.iter().filter(|j| salient.contains(j)).count();
    println!("{} steps, {hits}/{} selected columns are salient", report.n_steps, report.selected.len());
    for (split, m) in &report.metrics {
        println!("{split:<5} accuracy {:.3} auc {:.3}", m.accuracy.unwrap_or(f64::NAN), m.auc.unwrap_or(f64::NAN));
    }
    for &j in report.ranking.iter().take(5) {
        println!("  {:<10} {:.4}", ds.feature_names[j], report.mask_probs[j]);
    }
    let per_epoch = report.epoch_task_loss();
    println!("task loss: first epoch {:.4}, last epoch {:.4}", per_epoch[0], per_epoch[per_epoch.len() - 1]);
    assert_eq!(model.mask.sparse().support(), report.selected.as_slice());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run().expect("train_synthetic failed");
}
