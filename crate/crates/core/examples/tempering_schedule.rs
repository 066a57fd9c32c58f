//! The selected-feature count shrinks in five plateaus over the first half of
//! training, then stays at the final target.
//!
//! ```bash
//! cargo run --example tempering_schedule
//! ```

use slm::mask::{target_count_at, MaskState, TemperingSchedule};

pub fn run() -> slm::Result<()> {
    let schedule = TemperingSchedule::new(100, 10, 200)?;
    println!("plateaus {:?} (reached at step {})", schedule.plateaus(), schedule.n_tmp());
    for t in [0, 19, 20, 40, 60, 80, 99, 100, 199] {
        println!("step {t:>3}: target {}", target_count_at(&schedule, t)?);
    }

    // A random mask argument refreshed against the schedule keeps the
    // support equal to the target at every step.
    let argument: Vec<f64> = (0..100).map(|j| ((j * 37) % 101) as f64 / 101.0).collect();
    let mut mask = MaskState::from_argument(argument)?;
    for t in (0..200).step_by(25) {
        mask.refresh(t, &schedule)?;
        assert_eq!(mask.sparse().k(), mask.target_count());
    }
    println!("top five by mask value: {:?}", &mask.ranking()[..5]);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run().expect("tempering_schedule failed");
}
