//! Verification suites: each runs a battery of identity checks against
//! the library and reports per-case JSON with a stable schema.
//!
//! Every case records the measured `value`, the `target` it should equal,
//! the `tolerance` on that agreement, and the resulting `pass` flag, plus
//! an `inputs` echo sufficient to rerun the case by hand. A suite passes
//! when every case does.

use rand::Rng;
use serde::Serialize;
use serde_json::json;

use crate::conformal::{hcap_estimate, ElementarySlit, MapChain, MoebiusMap};
use crate::decomposition::hcap_union_check;
use crate::dynamics::{
    commutator_defect, simulate_path, two_step_gap, DynamicsMode, OperatorVariant,
    SimulationConfig,
};
use crate::ensemble::{run_ensemble, EnsembleConfig, WeightMode};
use crate::error::{Error, Result};
use crate::partition::{two_point_exponents, PartitionSpec, ZForm};
use crate::rng::CounterRng;

/// Suites accepted by `verify`.
pub const SUITES: [&str; 6] =
    ["nve", "commutation", "covariance", "reparam", "martingale", "hcap"];

#[derive(Debug, Clone, Serialize)]
pub struct VerifyCase {
    pub name: String,
    pub inputs: serde_json::Value,
    pub value: f64,
    pub target: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub suite: String,
    pub cases: Vec<VerifyCase>,
    pub passed: bool,
}

fn case(
    name: impl Into<String>,
    inputs: serde_json::Value,
    value: f64,
    target: f64,
    tolerance: f64,
) -> VerifyCase {
    let pass = (value - target).abs() <= tolerance;
    VerifyCase { name: name.into(), inputs, value, target, tolerance, pass }
}

fn report(suite: &str, cases: Vec<VerifyCase>) -> VerifyReport {
    let passed = cases.iter().all(|c| c.pass);
    VerifyReport { suite: suite.to_string(), cases, passed }
}

pub fn run_suite(suite: &str) -> Result<VerifyReport> {
    match suite {
        "nve" => nve_suite(),
        "commutation" => commutation_suite(),
        "covariance" => covariance_suite(),
        "reparam" => reparam_suite(),
        "martingale" => martingale_suite(),
        "hcap" => hcap_suite(),
        other => Err(Error::config(format!(
            "unknown suite `{other}`; expected one of {}",
            SUITES.join(", ")
        ))),
    }
}

/// Null-vector residuals of both closed-form exponents over a diffusivity
/// grid, plus the fixed non-solution witness.
fn nve_suite() -> Result<VerifyReport> {
    let mut cases = Vec::new();
    let x = [0.0, 1.0];
    for kappa in [2.0, 8.0 / 3.0, 3.0, 4.0, 6.0] {
        for (which, exponent) in two_point_exponents(kappa)?.into_iter().enumerate() {
            let spec =
                PartitionSpec::new(vec![kappa, kappa], ZForm::TwoPointPower { exponent })?;
            let mut residual = 0.0_f64;
            for i in 0..2 {
                residual = residual.max(spec.nve_residual(&x, i)?.abs());
            }
            cases.push(case(
                format!("residual_kappa_{kappa}_branch_{which}"),
                json!({"kappa": kappa, "exponent": exponent, "x": x}),
                residual,
                0.0,
                1e-9,
            ));
        }
    }
    // Exponent 2 at kappa 2 does not solve the system; the residual at unit
    // separation is exactly 4.
    let spec = PartitionSpec::new(vec![2.0, 2.0], ZForm::TwoPointPower { exponent: 2.0 })?;
    cases.push(case(
        "non_solution_witness",
        json!({"kappa": 2.0, "exponent": 2.0, "x": x}),
        spec.nve_residual(&x, 0)?,
        4.0,
        1e-9,
    ));
    Ok(report("nve", cases))
}

/// Generator-commutation defect over the diffusivity grid. Compatible
/// pairs (equal diffusivities or product 16) must sit at finite-difference
/// zero; incompatible pairs must land on the closed-form defect, which is
/// at least four orders of magnitude above that tolerance on this grid.
fn commutation_suite() -> Result<VerifyReport> {
    let grid = [2.0, 8.0 / 3.0, 3.0, 4.0, 6.0, 8.0];
    let x = [0.0, 1.0];
    let one = |_: &[f64]| 1.0;
    let fd_tol = 1e-4;
    let mut cases = Vec::new();
    for &ki in &grid {
        for &kj in &grid {
            let spec = PartitionSpec::new(vec![ki, kj], ZForm::Constant)?;
            let defect = commutator_defect(0, 1, &spec, OperatorVariant::NullVector, &one, &x)?;
            let closed = -3.0 * (ki - kj) * (16.0 - ki * kj) / (ki * kj);
            let compatible = closed.abs() < 1e-12;
            let name = format!("pair_{ki}_{kj}");
            let inputs =
                json!({"kappa_i": ki, "kappa_j": kj, "gap": 1.0, "compatible": compatible});
            if compatible {
                cases.push(case(name, inputs, defect, 0.0, fd_tol));
            } else {
                // Hitting the closed form within 5% forces the defect far
                // above the compatibility tolerance.
                cases.push(case(name, inputs, defect, closed, 0.05 * closed.abs()));
            }
        }
    }
    let spec = PartitionSpec::new(vec![2.0, 4.0], ZForm::Constant)?;
    let value = commutator_defect(0, 1, &spec, OperatorVariant::NullVector, &one, &x)?;
    cases.push(case(
        "null_vector_variant_witness",
        json!({"kappa_i": 2.0, "kappa_j": 4.0, "gap": 1.0}),
        value,
        6.0,
        0.05 * 6.0,
    ));
    Ok(report("commutation", cases))
}

/// Transformation behaviour of the covariant two-point form under random
/// order-preserving Möbius maps, plus a fixed non-covariant witness.
fn covariance_suite() -> Result<VerifyReport> {
    let kappa = 8.0 / 3.0;
    let exponent = (kappa - 6.0) / kappa;
    let spec = PartitionSpec::new(vec![kappa, kappa], ZForm::TwoPointPower { exponent })?;
    let x = [0.5, 2.0];
    let mut cases = Vec::new();
    let mut rng = CounterRng::from_key(0x5EEDC0DE);
    let mut found = 0usize;
    let mut attempts = 0usize;
    while found < 50 && attempts < 2000 {
        attempts += 1;
        let phi = match random_order_preserving_map(&mut rng) {
            Some(p) => p,
            None => continue,
        };
        // The configuration must stay clear of the map's pole.
        let defect = match spec.moebius_covariance_defect(&x, &phi) {
            Ok(d) => d,
            Err(_) => continue,
        };
        if !defect.is_finite() {
            continue;
        }
        cases.push(case(
            format!("random_map_{found:02}"),
            json!({"kappa": kappa, "exponent": exponent, "x": x, "map": phi}),
            defect,
            0.0,
            1e-10,
        ));
        found += 1;
    }
    if found < 50 {
        return Err(Error::config("could not draw 50 valid Möbius maps"));
    }
    // Fixed witness for the non-covariant exponent branch: z -> 2z + 1
    // scales the other branch by 4 and leaves a defect of exactly 3.
    let other = PartitionSpec::new(
        vec![kappa, kappa],
        ZForm::TwoPointPower { exponent: 2.0 / kappa },
    )?;
    let phi = MoebiusMap::new(2.0, 1.0, 0.0, 1.0)?;
    cases.push(case(
        "non_covariant_witness",
        json!({"kappa": kappa, "exponent": 2.0 / kappa, "x": [0.0, 1.0], "map": phi}),
        other.moebius_covariance_defect(&[0.0, 1.0], &phi)?,
        3.0,
        1e-9,
    ));
    Ok(report("covariance", cases))
}

/// A random Möbius map of the half-plane, built from a random increasing
/// triple and its increasing image; `None` when the sample is degenerate.
fn random_order_preserving_map(rng: &mut CounterRng) -> Option<MoebiusMap> {
    let draw_triple = |rng: &mut CounterRng| -> [f64; 3] {
        let mut t = [0.0_f64; 3];
        for v in &mut t {
            *v = rng.random_range(-8.0..8.0);
        }
        t.sort_by(f64::total_cmp);
        t
    };
    let src = draw_triple(rng);
    let dst = draw_triple(rng);
    let separated =
        |t: &[f64; 3]| t[1] - t[0] > 0.5 && t[2] - t[1] > 0.5;
    if !separated(&src) || !separated(&dst) {
        return None;
    }
    MoebiusMap::from_three_points(src, dst).ok()
}

/// Order-of-growth analysis of the two-step composition gap: cubic decay
/// for a compatible steered pair, and convergence to the closed-form
/// commutator defect for an incompatible pair.
fn reparam_suite() -> Result<VerifyReport> {
    let mut cases = Vec::new();
    let x = [0.0, 1.0];
    // Compatible pair: equal diffusivities with the null-vector exponent.
    let kappa = 8.0 / 3.0;
    let spec =
        PartitionSpec::new(vec![kappa, kappa], ZForm::TwoPointPower { exponent: 2.0 / kappa })?;
    let f = |y: &[f64]| y[0] * y[1];
    let ratio_at = |e: f64| -> Result<f64> {
        Ok(two_step_gap(0, 1, e, e, &spec, OperatorVariant::Generator, &f, &x)? / (e * e))
    };
    let mut prev = ratio_at(0.04)?;
    for (k, e) in [0.02, 0.01].into_iter().enumerate() {
        let next = ratio_at(e)?;
        let contraction = if prev == 0.0 { 0.0 } else { (next / prev).abs() };
        cases.push(case(
            format!("halving_{k}"),
            json!({"kappa": kappa, "eps": e, "gap_before": prev, "gap_after": next}),
            contraction,
            0.0,
            0.6,
        ));
        prev = next;
    }
    // Incompatible pair: the normalised gap converges to the commutator
    // defect instead of vanishing.
    let bad = PartitionSpec::new(vec![2.0, 4.0], ZForm::Constant)?;
    let one = |_: &[f64]| 1.0;
    let defect = commutator_defect(0, 1, &bad, OperatorVariant::NullVector, &one, &x)?;
    let e = 0.01;
    let est = two_step_gap(0, 1, e, e, &bad, OperatorVariant::NullVector, &one, &x)? / (e * e);
    cases.push(case(
        "incompatible_limit",
        json!({"kappa_i": 2.0, "kappa_j": 4.0, "eps": e, "commutator": defect}),
        est,
        defect,
        0.05 * defect.abs(),
    ));
    Ok(report("reparam", cases))
}

/// Monte-Carlo martingale checks for the reweighting measures: means of
/// `exp(weight)` back at 1 within three standard errors, and exactly 1 for
/// the locality diffusivity.
fn martingale_suite() -> Result<VerifyReport> {
    let mut cases = Vec::new();

    // Locality: kappa = 6 restriction weights vanish identically.
    let spec = PartitionSpec::new(vec![6.0], ZForm::Constant)?;
    let sim = SimulationConfig::new(spec, vec![0.0], 0.05, 1e-3)?.with_mode(DynamicsMode::Full);
    let cfg = EnsembleConfig::new(sim, 64, 2001)?
        .with_weight(WeightMode::Restriction, Some(ElementarySlit::new(2.0, 0.25)?))?;
    let stats = run_ensemble(&cfg, |_| 1.0)?;
    cases.push(case(
        "restriction_locality",
        json!({"kappa": 6.0, "hull_center": 2.0, "hull_capacity": 0.25, "paths": 64}),
        stats.mean,
        1.0,
        0.0,
    ));

    // Restriction martingale at the self-avoiding diffusivity.
    let spec = PartitionSpec::new(vec![8.0 / 3.0], ZForm::Constant)?;
    let sim = SimulationConfig::new(spec, vec![0.0], 0.05, 1e-3)?.with_mode(DynamicsMode::Full);
    let cfg = EnsembleConfig::new(sim, 256, 2002)?
        .with_weight(WeightMode::Restriction, Some(ElementarySlit::new(1.5, 0.05)?))?;
    let stats = run_ensemble(&cfg, |_| 1.0)?;
    cases.push(case(
        "restriction_martingale",
        json!({"kappa": 8.0 / 3.0, "hull_center": 1.5, "hull_capacity": 0.05, "paths": 256}),
        stats.mean,
        1.0,
        3.0 * stats.stderr,
    ));

    // Mutual-avoidance conditioning of independent curves.
    let spec = PartitionSpec::new(vec![8.0 / 3.0, 8.0 / 3.0], ZForm::Constant)?;
    let sim = SimulationConfig::new(spec, vec![-2.0, 2.0], 0.05, 1e-3)?
        .with_mode(DynamicsMode::Independent);
    let cfg = EnsembleConfig::new(sim, 192, 2003)?.with_weight(WeightMode::Cardy, None)?;
    let stats = run_ensemble(&cfg, |_| 1.0)?;
    cases.push(case(
        "cardy_martingale",
        json!({"kappa": 8.0 / 3.0, "x0": [-2.0, 2.0], "paths": 192}),
        stats.mean,
        1.0,
        3.0 * stats.stderr,
    ));

    // Partition steering against repulsion-only dynamics.
    let form = ZForm::TwoPointPower { exponent: 1.0 };
    let spec = PartitionSpec::new(vec![2.0, 2.0], form)?;
    let sim = SimulationConfig::new(spec, vec![-2.0, 2.0], 0.05, 1e-3)?
        .with_mode(DynamicsMode::Cardy);
    let cfg = EnsembleConfig::new(sim, 256, 2004)?.with_weight(WeightMode::Conformal, None)?;
    let stats = run_ensemble(&cfg, |_| 1.0)?;
    cases.push(case(
        "conformal_martingale",
        json!({"kappa": 2.0, "exponent": 1.0, "x0": [-2.0, 2.0], "paths": 256}),
        stats.mean,
        1.0,
        3.0 * stats.stderr,
    ));

    Ok(report("martingale", cases))
}

/// Half-plane capacity identities: the probe extraction, the quadratic
/// scaling law, and additivity along simulated multi-curve hulls.
fn hcap_suite() -> Result<VerifyReport> {
    let mut cases = Vec::new();
    let probe_radius = 1e6;

    let slit = ElementarySlit::new(0.0, 1.0)?;
    cases.push(case(
        "single_slit_capacity",
        json!({"center": 0.0, "capacity": 1.0, "probe_radius": probe_radius}),
        hcap_estimate(&slit, probe_radius)?,
        1.0,
        1e-6,
    ));

    // Scaling a hull by 2 quadruples its capacity. Both sides measured by
    // probes on a three-slit hull and its doubled copy.
    let base = [(0.0, 0.3), (0.4, 0.2), (-0.5, 0.15)];
    let mut chain = MapChain::new();
    let mut doubled = MapChain::new();
    for (c, cap) in base {
        chain.push(ElementarySlit::new(c, cap)?);
        doubled.push(ElementarySlit::new(2.0 * c, 4.0 * cap)?);
    }
    let small = hcap_estimate(&chain, probe_radius)?;
    let big = hcap_estimate(&doubled, probe_radius)?;
    cases.push(case(
        "scaling_quadruples_capacity",
        json!({"slits": base, "hcap_base": small}),
        big,
        4.0 * small,
        1e-3,
    ));

    // Unit speeds: a simulated n-curve hull at horizon T has capacity n T.
    let spec = PartitionSpec::new(vec![2.0, 6.0], ZForm::Constant)?;
    let sim = SimulationConfig::new(spec, vec![-2.0, 2.0], 0.5, 1e-3)?
        .with_mode(DynamicsMode::Full);
    let path = simulate_path(&sim, 77)?;
    if path.collapsed() {
        return Err(Error::config("capacity check path collapsed unexpectedly"));
    }
    cases.push(case(
        "unit_speed_growth",
        json!({"kappas": [2.0, 6.0], "T": 0.5, "dt": 1e-3, "seed": 77}),
        hcap_estimate(&path.global_chain, probe_radius)?,
        1.0,
        1e-3,
    ));

    // Decomposed growth: probe capacity of the union hull equals the sum
    // of the recorded per-curve capacity increments.
    let spec = PartitionSpec::new(vec![8.0 / 3.0, 8.0 / 3.0], ZForm::Constant)?;
    let sim = SimulationConfig::new(spec, vec![-2.0, 2.0], 0.2, 1e-3)?
        .with_mode(DynamicsMode::Independent);
    let path = simulate_path(&sim, 78)?;
    let (probed, summed) = hcap_union_check(&path, probe_radius)?;
    cases.push(case(
        "decomposed_union_capacity",
        json!({"kappas": [8.0 / 3.0, 8.0 / 3.0], "T": 0.2, "dt": 1e-3, "seed": 78}),
        probed,
        summed,
        1e-3,
    ));

    Ok(report("hcap", cases))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_suite_passes_and_reports_cases() {
        for suite in SUITES {
            let rep = run_suite(suite).unwrap();
            assert_eq!(rep.suite, suite);
            assert!(!rep.cases.is_empty());
            for c in &rep.cases {
                assert!(c.pass, "suite {suite}, case {}: value {} target {} tol {}",
                    c.name, c.value, c.target, c.tolerance);
            }
            assert!(rep.passed);
        }
    }

    #[test]
    fn unknown_suite_is_a_config_error() {
        assert!(matches!(run_suite("bogus"), Err(Error::Config(_))));
    }

    #[test]
    fn commutation_suite_covers_the_full_grid() {
        let rep = run_suite("commutation").unwrap();
        // 36 grid pairs plus the fixed witness.
        assert_eq!(rep.cases.len(), 37);
        let compat = rep
            .cases
            .iter()
            .filter(|c| c.inputs.get("compatible").and_then(|v| v.as_bool()) == Some(true))
            .count();
        // Diagonal (6) plus the product-16 pairs (2,8), (8,2), (8/3,6),
        // (6,8/3).
        assert_eq!(compat, 10);
    }

    #[test]
    fn covariance_suite_has_fifty_random_maps() {
        let rep = run_suite("covariance").unwrap();
        let randoms =
            rep.cases.iter().filter(|c| c.name.starts_with("random_map_")).count();
        assert_eq!(randoms, 50);
    }
}
