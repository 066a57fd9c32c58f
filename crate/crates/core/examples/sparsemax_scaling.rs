//! Project a vector onto the simplex, then rescale it so exactly `F` entries
//! survive, and push a gradient back through the projection.
//!
//! ```bash
//! cargo run --example sparsemax_scaling
//! ```

use slm::simplex::{scaled_sparsemax_with_scaling, sparsemax, sparsemax_jvp};

pub fn run() -> slm::Result<()> {
    let v = [0.9, 0.1, 0.75, -0.4, 0.3, 0.55];

    let plain = sparsemax(&v)?;
    println!("sparsemax      support {:?} tau {:.4}", plain.support(), plain.tau());

    for target in [1, 3, 5] {
        let (scaling, p) = scaled_sparsemax_with_scaling(&v, target)?;
        println!(
            "F = {target}: multiplier {:>8.4} ({:?}) support {:?}",
            scaling.multiplier,
            scaling.branch,
            p.support()
        );
        assert_eq!(p.k(), target);
        let total: f64 = p.values().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    // Zero outside the support, centered inside it.
    let upstream = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    let grad = sparsemax_jvp(&plain, &upstream)?;
    println!("jvp            {grad:?}");
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run().expect("sparsemax_scaling failed");
}
