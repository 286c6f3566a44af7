//! The change of measure from independent curves to the mutually-aware
//! system splits into two factors: an interaction weight (each curve grown
//! in the others' background) and a steering weight (the two-point
//! interaction's own tilt). In log space the split is additive, path by
//! path, to round-off.
//!
//! Run with: `cargo run --example weight_decomposition`

use msle::dynamics::{simulate_path, DynamicsMode, SimulationConfig};
use msle::partition::{two_point_exponents, PartitionSpec, ZForm};
use msle::weights::{cardy_weight, combined_weight, conformal_weight};

fn main() -> msle::Result<()> {
    let kappa = 8.0 / 3.0;
    let exponent = two_point_exponents(kappa)?[0];
    let spec = PartitionSpec::new(vec![kappa, kappa], ZForm::TwoPointPower { exponent })?;
    let sim = SimulationConfig::new(spec, vec![-1.0, 1.0], 0.05, 1e-3)?
        .with_mode(DynamicsMode::Independent);

    println!(
        "{:>6} {:>14} {:>14} {:>14} {:>12}",
        "seed", "combined", "interaction", "steering", "mismatch"
    );
    let mut worst = 0.0_f64;
    for seed in 0..8 {
        let path = simulate_path(&sim, seed)?;
        let combined = combined_weight(&path, &sim.spec)?.total();
        let interaction = cardy_weight(&path)?.total();
        let steering = conformal_weight(&path, &sim.spec, true)?.total();
        let gap = (combined - (interaction + steering)).abs();
        worst = worst.max(gap);
        println!(
            "{seed:>6} {combined:>14.8} {interaction:>14.8} {steering:>14.8} {gap:>12.2e}"
        );
    }
    println!("\nlargest additive mismatch over these paths: {worst:.2e}");
    Ok(())
}
