//! Simulate a two-curve system whose driving points are steered by a
//! two-point interaction, then rectify the traces back into the plane and
//! print a thinned sample of the tip positions.
//!
//! Run with: `cargo run --example simulate_trace`

use msle::dynamics::{simulate_path, trace_points, DynamicsMode, SimulationConfig};
use msle::partition::{two_point_exponents, PartitionSpec, ZForm};

fn main() -> msle::Result<()> {
    let kappa = 8.0 / 3.0;
    let exponent = two_point_exponents(kappa)?[0];
    let spec = PartitionSpec::new(vec![kappa, kappa], ZForm::TwoPointPower { exponent })?;
    let sim = SimulationConfig::new(spec, vec![-1.0, 1.0], 0.4, 1e-3)?
        .with_mode(DynamicsMode::Full);
    let path = simulate_path(&sim, 2024)?;
    println!(
        "simulated {} steps of a steered pair (kappa = {kappa:.4}, exponent = {exponent:.4})",
        path.positions.len() - 1
    );

    let lift = 2.0 * sim.dt.sqrt();
    let left = trace_points(&path, 0, lift)?;
    let right = trace_points(&path, 1, lift)?;
    println!("{:>8}  {:>22}  {:>22}", "time", "curve 0 tip", "curve 1 tip");
    for k in (0..left.len()).step_by(80) {
        let t = k as f64 * sim.dt;
        println!(
            "{t:>8.3}  {:>12.4} {:+.4}i  {:>12.4} {:+.4}i",
            left[k].re, left[k].im, right[k].re, right[k].im
        );
    }
    let rows = path.positions.last().expect("rows");
    println!(
        "final tip heights {:.4} and {:.4}; driving gap {:.4}",
        left.last().expect("pts").im,
        right.last().expect("pts").im,
        rows[1] - rows[0]
    );
    Ok(())
}
