//! Noise levels and Langevin step weights for a few step counts.
//!
//! ```sh
//! cargo run --example noise_schedule
//! ```

use wavediff::schedule::{step_coefficients, NoiseSchedule};

fn main() -> wavediff::Result<()> {
    let schedule = NoiseSchedule::default();
    println!(
        "sigma(0) = {}, sigma(0.5) = {:.6}, sigma(1) = {}",
        schedule.sigma_at(0.0)?,
        schedule.sigma_at(0.5)?,
        schedule.sigma_at(1.0)?
    );

    let levels = schedule.discretize(3)?;
    println!("N = 3 levels: {:?}", levels.levels());

    println!("\n   N  alpha      delta        eta       beta");
    for steps in [50, 100, 200] {
        let delta = schedule.discretize(steps)?.delta();
        for alpha in [1.0, 1.5, 2.0, 3.0] {
            let c = step_coefficients(delta, alpha)?;
            println!(
                "{steps:4}  {alpha:5.1}  {delta:.7}  {:.7}  {:.7}",
                c.eta, c.beta
            );
        }
    }
    Ok(())
}
