//! Half-plane capacity from large-|z| probes: a single slit recovers its
//! nominal capacity, doubling a hull quadruples it, and a multi-curve run
//! at unit growth speeds accumulates (number of curves) x (horizon).
//!
//! Run with: `cargo run --example hcap_identities`

use msle::conformal::{hcap_estimate, ElementarySlit, MapChain};
use msle::dynamics::{simulate_path, DynamicsMode, SimulationConfig};
use msle::partition::{PartitionSpec, ZForm};

fn main() -> msle::Result<()> {
    let probe_radius = 1e6;

    let slit = ElementarySlit::new(0.0, 1.0)?;
    println!(
        "single slit, capacity 1:      probe gives {:.9}",
        hcap_estimate(&slit, probe_radius)?
    );

    let base = [(0.0, 0.3), (0.4, 0.2), (-0.5, 0.15)];
    let mut chain = MapChain::new();
    let mut doubled = MapChain::new();
    for (c, cap) in base {
        chain.push(ElementarySlit::new(c, cap)?);
        doubled.push(ElementarySlit::new(2.0 * c, 4.0 * cap)?);
    }
    let small = hcap_estimate(&chain, probe_radius)?;
    let big = hcap_estimate(&doubled, probe_radius)?;
    println!("three-slit hull:              {small:.9}");
    println!("same hull scaled by two:      {big:.9}  (4x = {:.9})", 4.0 * small);

    let spec = PartitionSpec::new(vec![2.0, 6.0], ZForm::Constant)?;
    let sim = SimulationConfig::new(spec, vec![-2.0, 2.0], 0.5, 1e-3)?
        .with_mode(DynamicsMode::Full);
    let path = simulate_path(&sim, 77)?;
    println!(
        "two curves, unit speeds, T=0.5: {:.9}  (expected 2 x 0.5 = 1)",
        hcap_estimate(&path.global_chain, probe_radius)?
    );
    Ok(())
}
