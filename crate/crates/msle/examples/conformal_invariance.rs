//! Statistical check that the driving law transforms correctly under a
//! half-plane symmetry: run the system from the original data, run it
//! again from the mapped data, and compare moments of the positions and
//! gaps at matched image capacity. All z-scores should be O(1).
//!
//! Run with: `cargo run --example conformal_invariance`

use msle::conformal::MoebiusMap;
use msle::dynamics::{DynamicsMode, SimulationConfig};
use msle::ensemble::{invariance_report, EnsembleConfig};
use msle::partition::{two_point_exponents, PartitionSpec, ZForm};

fn main() -> msle::Result<()> {
    let kappa = 2.0;
    let exponent = two_point_exponents(kappa)?[0];
    let spec = PartitionSpec::new(vec![kappa, kappa], ZForm::TwoPointPower { exponent })?;
    let sim = SimulationConfig::new(spec, vec![-1.0, 1.0], 0.2, 1e-3)?
        .with_mode(DynamicsMode::Full);
    let cfg = EnsembleConfig::new(sim, 2000, 13)?;
    let phi = MoebiusMap::new(1.0, 2.5, 0.0, 1.0)?;

    let report = invariance_report(&cfg, &phi)?;
    println!(
        "translation by 2.5, {} paths ({} skipped), capacity target {:.4}:\n",
        report.paths_used, report.paths_skipped, report.capacity_target
    );
    println!(
        "{:>14} {:>12} {:>12} {:>8} {:>8}",
        "observable", "direct", "via map", "z mean", "z 2nd"
    );
    for c in &report.comparisons {
        println!(
            "{:>14} {:>12.5} {:>12.5} {:>8.2} {:>8.2}",
            c.observable, c.direct_mean, c.image_mean, c.z_mean, c.z_second
        );
    }
    println!("\nlargest |z| over first and second moments: {:.2}", report.max_abs_z);
    Ok(())
}
