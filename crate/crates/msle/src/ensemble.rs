//! Reproducible Monte-Carlo orchestration.
//!
//! Runs ensembles of simulated paths, attaches the requested
//! change-of-measure weight to each, and aggregates weighted estimator
//! statistics. Two design rules dominate:
//!
//! * **Determinism**: every path owns a counter-derived seed, workers
//!   only map over path indices, and aggregation walks the results in
//!   index order — so the numbers are bit-identical for any worker count
//!   (the `MSLE_THREADS` environment variable caps workers without
//!   affecting results).
//! * **Honest stopping**: paths whose curves collapse before the horizon
//!   are excluded from weighted means and reported as a collapse
//!   fraction, never resampled; margin-stopped weights keep their
//!   stopped-time value so the estimators stay unbiased.
//!
//! The module also hosts the conformal-invariance comparison: simulate a
//! system, push the resulting hulls through a Möbius map of the
//! half-plane, and compare against the system grown directly from the
//! transported boundary data. The two runs live in different time
//! parameterisations, so they are compared at matched half-plane capacity
//! of the image hull, with the transfer map tracked alongside the path.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::{ElementarySlit, MoebiusMap};
use crate::dynamics::{
    moebius_pushforward, simulate_path, DrivingState, DynamicsMode, PathRecord, SimulationConfig,
};
use crate::error::{Error, Result};
use crate::rng::path_seed;
use crate::weights::{cardy_weight, combined_weight, conformal_weight, restriction_weight};

/// Environment variable capping the Monte-Carlo worker count.
pub const THREADS_ENV: &str = "MSLE_THREADS";

/// Fraction of the nominal capacity budget used as the matched-capacity
/// target in invariance comparisons: slightly inside the horizon so the
/// tracked run reaches it on (almost) every path.
const CAPACITY_TARGET_FRACTION: f64 = 0.9;

/// Which change-of-measure weight to attach to each path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// Unweighted sampling.
    None,
    /// Single curve conditioned to avoid a boundary hull.
    Restriction,
    /// Independent curves conditioned on mutual avoidance.
    Cardy,
    /// Partition-function steering relative to repulsion-only dynamics.
    Conformal,
    /// Independent curves taken directly to the steered avoiding ensemble.
    Combined,
}

impl WeightMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            WeightMode::None => "none",
            WeightMode::Restriction => "restriction",
            WeightMode::Cardy => "cardy",
            WeightMode::Conformal => "conformal",
            WeightMode::Combined => "combined",
        }
    }
}

impl fmt::Display for WeightMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WeightMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(WeightMode::None),
            "restriction" => Ok(WeightMode::Restriction),
            "cardy" => Ok(WeightMode::Cardy),
            "conformal" => Ok(WeightMode::Conformal),
            "combined" => Ok(WeightMode::Combined),
            other => Err(Error::config(format!("unknown weight mode `{other}`"))),
        }
    }
}

/// Full description of one Monte-Carlo run.
#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub simulation: SimulationConfig,
    /// Number of sample paths.
    pub paths: usize,
    /// Master seed; each path derives its own stream from it.
    pub seed: u64,
    pub weight: WeightMode,
    /// Avoided hull for restriction weights.
    pub hull: Option<ElementarySlit>,
}

impl EnsembleConfig {
    pub fn new(simulation: SimulationConfig, paths: usize, seed: u64) -> Result<Self> {
        let cfg = EnsembleConfig { simulation, paths, seed, weight: WeightMode::None, hull: None };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_weight(mut self, weight: WeightMode, hull: Option<ElementarySlit>) -> Result<Self> {
        self.weight = weight;
        self.hull = hull;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.simulation.validate()?;
        if self.paths == 0 {
            return Err(Error::config("ensemble needs at least one path"));
        }
        match self.weight {
            WeightMode::Restriction => {
                if self.simulation.x0.len() != 1 {
                    return Err(Error::config("restriction weighting needs a single curve"));
                }
                if self.hull.is_none() {
                    return Err(Error::config("restriction weighting needs an avoided hull"));
                }
            }
            WeightMode::Cardy | WeightMode::Combined => {
                if self.simulation.mode != DynamicsMode::Independent {
                    return Err(Error::config(
                        "cardy/combined weighting needs independent dynamics",
                    ));
                }
            }
            WeightMode::None | WeightMode::Conformal => {}
        }
        Ok(())
    }

    /// Log-weight of one non-collapsed path under the configured mode.
    fn path_log_weight(&self, path: &PathRecord) -> Result<f64> {
        let w = match self.weight {
            WeightMode::None => return Ok(0.0),
            WeightMode::Restriction => {
                let hull = self.hull.as_ref().expect("validated");
                restriction_weight(path, hull)?
            }
            WeightMode::Cardy => cardy_weight(path)?,
            WeightMode::Conformal => conformal_weight(path, &self.simulation.spec, false)?,
            WeightMode::Combined => combined_weight(path, &self.simulation.spec)?,
        };
        Ok(w.total())
    }
}

/// Aggregated result of one Monte-Carlo run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleStats {
    /// Weighted estimator mean over non-collapsed paths.
    pub mean: f64,
    /// Standard error of the mean, from the per-path weighted values.
    pub stderr: f64,
    /// `(sum w)^2 / sum w^2`: degenerate reweighting shows up as a small
    /// value relative to the path count.
    pub effective_sample_size: f64,
    /// Fraction of paths that collapsed before the horizon.
    pub collapse_fraction: f64,
    /// Requested path count.
    pub paths: usize,
    /// Wall-clock duration of the run (not part of any determinism
    /// contract).
    pub wall_seconds: f64,
}

/// Worker cap from the environment, if set.
pub fn worker_threads() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(raw) => {
            let n: usize = raw
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("{THREADS_ENV} must be a positive integer")))?;
            if n == 0 {
                return Err(Error::config(format!("{THREADS_ENV} must be a positive integer")));
            }
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}

/// Run `f` under the configured worker cap (dedicated pool) or the
/// default global pool.
fn with_pool<T, F>(f: F) -> Result<T>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    match worker_threads()? {
        Some(threads) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::config(format!("worker pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Monte-Carlo estimate of `E[exp(weight) * observable]` under the
/// simulated dynamics.
///
/// Deterministic in the master seed for any worker count. Collapsed paths
/// are excluded from the estimator and counted in the collapse fraction;
/// the weights of margin-stopped paths enter at their stopped-time value.
pub fn run_ensemble<F>(cfg: &EnsembleConfig, observable: F) -> Result<EnsembleStats>
where
    F: Fn(&PathRecord) -> f64 + Sync,
{
    cfg.validate()?;
    let start = Instant::now();
    let per_path: Vec<Result<Option<(f64, f64)>>> = with_pool(|| {
        (0..cfg.paths)
            .into_par_iter()
            .map(|k| {
                let path = simulate_path(&cfg.simulation, path_seed(cfg.seed, k as u64))?;
                if path.collapsed() {
                    return Ok(None);
                }
                let log_weight = cfg.path_log_weight(&path)?;
                Ok(Some((log_weight, observable(&path))))
            })
            .collect()
    })?;

    let mut samples = Vec::with_capacity(cfg.paths);
    for entry in per_path {
        if let Some(sample) = entry? {
            samples.push(sample);
        }
    }
    let used = samples.len();
    if used == 0 {
        return Err(Error::config("every path collapsed before the horizon"));
    }
    let n = used as f64;
    // Exponentiate around the largest log-weight to avoid overflow.
    let shift = samples.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = samples.iter().map(|s| (s.0 - shift).exp()).collect();
    let values: Vec<f64> =
        samples.iter().zip(&weights).map(|(s, w)| shift.exp() * w * s.1).collect();
    let mean = values.iter().sum::<f64>() / n;
    let stderr = if used > 1 {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    let sum_w: f64 = weights.iter().sum();
    let sum_w2: f64 = weights.iter().map(|w| w * w).sum();
    Ok(EnsembleStats {
        mean,
        stderr,
        effective_sample_size: sum_w * sum_w / sum_w2,
        collapse_fraction: (cfg.paths - used) as f64 / cfg.paths as f64,
        paths: cfg.paths,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

// ── conformal invariance of the path law ─────────────────────────────────

/// First- and second-moment comparison of one observable between the
/// pushed-forward run and the directly grown run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentComparison {
    pub observable: String,
    /// Mean and standard error in the directly grown (transported start)
    /// run.
    pub direct_mean: f64,
    pub direct_stderr: f64,
    /// Mean and standard error of the image of the original run.
    pub image_mean: f64,
    pub image_stderr: f64,
    /// z-score of the mean difference.
    pub z_mean: f64,
    /// z-score of the second-moment difference.
    pub z_second: f64,
}

/// Outcome of the invariance comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvarianceReport {
    /// Paths entering the comparison (both runs reached the capacity
    /// target without collapsing).
    pub paths_used: usize,
    /// Paths dropped because either run collapsed or missed the target.
    pub paths_skipped: usize,
    /// Image-hull capacity at which the two runs are compared.
    pub capacity_target: f64,
    pub comparisons: Vec<MomentComparison>,
    /// Largest |z| over all rows and both moments.
    pub max_abs_z: f64,
}

/// Compare the law of the system pushed through `phi` with the law of the
/// system grown directly from the transported boundary data.
///
/// Run (a) simulates from the configured start and pushes the resulting
/// hulls through `phi`; the Möbius transfer map of the image hull is
/// tracked alongside the path through three boundary probes, and the run
/// is read off at the first step where the image hull's capacity reaches
/// the target. Run (b) starts from `phi(x0)` with speeds multiplied by
/// `phi'(x0)^2` and is read off at the same image capacity. Matching at
/// capacity rather than at time is what makes the comparison well-posed:
/// the image hull grows at a `Phi'^2`-modulated rate.
pub fn invariance_report(cfg: &EnsembleConfig, phi: &MoebiusMap) -> Result<InvarianceReport> {
    cfg.validate()?;
    if cfg.weight != WeightMode::None {
        return Err(Error::config("invariance comparison runs unweighted"));
    }
    let sim = &cfg.simulation;
    let n = sim.x0.len();
    // Transporting the initial state also validates ordering and poles.
    let state0 =
        DrivingState::new(0.0, sim.x0.clone(), sim.speeds.clone(), sim.spec.kappas().to_vec())?;
    let pushed = moebius_pushforward(&state0, phi)?;
    let image_rate: f64 = pushed.speeds.iter().sum();
    let target = CAPACITY_TARGET_FRACTION * image_rate * sim.horizon;
    // Tiny slack so capacity round-off cannot flip the crossing row.
    let slack = 1e-9 * target;

    // Run (b): direct growth from the image data. With constant speeds its
    // capacity crosses the target at a fixed row, so the horizon is cut
    // there.
    let direct_rows = ((target - slack) / (image_rate * sim.dt)).ceil().max(1.0) as usize;
    let mut cfg_b = sim.clone();
    cfg_b.x0 = pushed.positions.clone();
    cfg_b.speeds = pushed.speeds.clone();
    cfg_b.horizon = direct_rows as f64 * sim.dt;
    cfg_b.validate()?;

    // Boundary probes for reconstructing the transfer map: far outside
    // everything either hull can reach, and away from any pole of `phi`.
    let reach = sim
        .x0
        .iter()
        .chain(pushed.positions.iter())
        .fold(0.0_f64, |m, &x| m.max(x.abs()))
        + 4.0 * (image_rate.max(sim.speeds.iter().sum()) * sim.horizon).sqrt()
        + 1.0;
    let probes = pick_probes(phi, reach)?;

    let per_path: Vec<Result<Option<(Vec<f64>, Vec<f64>)>>> = with_pool(|| {
        (0..cfg.paths)
            .into_par_iter()
            .map(|k| {
                let seed = path_seed(cfg.seed, k as u64);
                let path_a = simulate_path(sim, seed)?;
                let path_b = simulate_path(&cfg_b, seed)?;
                if path_a.collapsed() || path_b.collapsed() {
                    return Ok(None);
                }
                let image = match image_observables(&path_a, phi, probes, target - slack)? {
                    Some(obs) => obs,
                    None => return Ok(None),
                };
                let direct = observables(&path_b.positions[path_b.positions.len() - 1]);
                Ok(Some((direct, image)))
            })
            .collect()
    })?;

    let mut direct_rows_v: Vec<Vec<f64>> = Vec::new();
    let mut image_rows_v: Vec<Vec<f64>> = Vec::new();
    for entry in per_path {
        if let Some((d, i)) = entry? {
            direct_rows_v.push(d);
            image_rows_v.push(i);
        }
    }
    let used = direct_rows_v.len();
    if used < 2 {
        return Err(Error::config("too few usable paths for an invariance comparison"));
    }

    let names = observable_names(n);
    let mut comparisons = Vec::with_capacity(names.len());
    let mut max_abs_z = 0.0_f64;
    for (o, name) in names.into_iter().enumerate() {
        let da: Vec<f64> = image_rows_v.iter().map(|r| r[o]).collect();
        let db: Vec<f64> = direct_rows_v.iter().map(|r| r[o]).collect();
        let (ma, sa) = mean_stderr(&da);
        let (mb, sb) = mean_stderr(&db);
        let z_mean = z_score(ma, sa, mb, sb);
        let sq_a: Vec<f64> = da.iter().map(|v| v * v).collect();
        let sq_b: Vec<f64> = db.iter().map(|v| v * v).collect();
        let (qa, ta) = mean_stderr(&sq_a);
        let (qb, tb) = mean_stderr(&sq_b);
        let z_second = z_score(qa, ta, qb, tb);
        max_abs_z = max_abs_z.max(z_mean.abs()).max(z_second.abs());
        comparisons.push(MomentComparison {
            observable: name,
            direct_mean: mb,
            direct_stderr: sb,
            image_mean: ma,
            image_stderr: sa,
            z_mean,
            z_second,
        });
    }
    Ok(InvarianceReport {
        paths_used: used,
        paths_skipped: cfg.paths - used,
        capacity_target: target,
        comparisons,
        max_abs_z,
    })
}

/// Three real probe points with finite, order-consistent images.
fn pick_probes(phi: &MoebiusMap, reach: f64) -> Result<[f64; 3]> {
    // Try a handful of well-separated triples; a pole of the map can
    // invalidate one of them.
    for scale in [10.0, 17.0, 29.0, 47.0] {
        let p = [-scale * reach, scale * reach, 2.0 * scale * reach];
        let images: Vec<f64> = p.iter().filter_map(|&x| phi.apply_boundary_point(x).ok()).collect();
        if images.len() == 3 && images.iter().all(|v| v.is_finite()) {
            // Distinctness is what from_three_points needs.
            if (images[0] - images[1]).abs() > 1e-9
                && (images[1] - images[2]).abs() > 1e-9
                && (images[0] - images[2]).abs() > 1e-9
            {
                return Ok(p);
            }
        }
    }
    Err(Error::config("could not place boundary probes clear of the map's pole"))
}

/// Image observables of a recorded path: walk the recorded hull growth,
/// track the transfer map through boundary probes, and stop at the row
/// where the image capacity reaches `target`. `None` if the path's image
/// never accumulates that much capacity.
fn image_observables(
    path: &PathRecord,
    phi: &MoebiusMap,
    probes: [f64; 3],
    target: f64,
) -> Result<Option<Vec<f64>>> {
    let n = path.n();
    let slits = path.global_chain.slits();
    let mut base_probes = probes;
    let mut image_probes = [0.0_f64; 3];
    for (j, p) in probes.iter().enumerate() {
        image_probes[j] = phi.apply_boundary_point(*p)?;
    }
    let mut transfer = *phi;
    let mut capacity = 0.0_f64;
    let steps = path.noises.len();
    let mut stop_row = None;
    'rows: for s in 0..steps {
        for slit in &slits[s * n..(s + 1) * n] {
            let center = transfer.apply_boundary_point(slit.center)?;
            let rate = transfer.derivative(slit.center)?;
            let image_slit = ElementarySlit::new(center, rate * rate * slit.capacity)?;
            capacity += image_slit.capacity;
            for j in 0..3 {
                base_probes[j] = slit.apply_boundary_point(base_probes[j]);
                image_probes[j] = image_slit.apply_boundary_point(image_probes[j]);
            }
            transfer = MoebiusMap::from_three_points(base_probes, image_probes)?;
        }
        if capacity >= target {
            stop_row = Some(s + 1);
            break 'rows;
        }
    }
    let Some(row) = stop_row else {
        return Ok(None);
    };
    let mapped: Vec<f64> = path.positions[row]
        .iter()
        .map(|&x| transfer.apply_boundary_point(x))
        .collect::<Result<_>>()?;
    Ok(Some(observables(&mapped)))
}

/// Scalar observables compared between the runs: every driving position,
/// plus adjacent gaps when there are several curves.
fn observables(x: &[f64]) -> Vec<f64> {
    let mut obs: Vec<f64> = x.to_vec();
    for i in 0..x.len().saturating_sub(1) {
        obs.push(x[i + 1] - x[i]);
    }
    obs
}

fn observable_names(n: usize) -> Vec<String> {
    let mut names: Vec<String> = (0..n).map(|i| format!("position_{i}")).collect();
    for i in 0..n.saturating_sub(1) {
        names.push(format!("gap_{}_{}", i, i + 1));
    }
    names
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn z_score(ma: f64, sa: f64, mb: f64, sb: f64) -> f64 {
    let denom = (sa * sa + sb * sb).sqrt();
    if denom == 0.0 {
        // Identical samples: a zero difference is a zero score.
        if ma == mb {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (ma - mb) / denom
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::{PartitionSpec, ZForm};

    fn base_config(
        kappas: Vec<f64>,
        form: ZForm,
        x0: Vec<f64>,
        horizon: f64,
        dt: f64,
        mode: DynamicsMode,
        paths: usize,
        seed: u64,
    ) -> EnsembleConfig {
        let spec = PartitionSpec::new(kappas, form).unwrap();
        let sim = SimulationConfig::new(spec, x0, horizon, dt).unwrap().with_mode(mode);
        EnsembleConfig::new(sim, paths, seed).unwrap()
    }

    #[test]
    fn unit_observable_without_weight_is_exact() {
        let cfg = base_config(
            vec![8.0 / 3.0],
            ZForm::Constant,
            vec![0.0],
            0.05,
            1e-3,
            DynamicsMode::Full,
            64,
            7,
        );
        let stats = run_ensemble(&cfg, |_| 1.0).unwrap();
        assert_eq!(stats.mean, 1.0);
        assert_eq!(stats.stderr, 0.0);
        assert_eq!(stats.effective_sample_size, 64.0);
        assert_eq!(stats.collapse_fraction, 0.0);
    }

    #[test]
    fn repeated_runs_are_bit_identical() {
        let cfg = base_config(
            vec![2.0, 2.0],
            ZForm::Constant,
            vec![-1.0, 1.0],
            0.1,
            1e-3,
            DynamicsMode::Cardy,
            128,
            99,
        );
        let a = run_ensemble(&cfg, |p| p.final_positions()[0]).unwrap();
        let b = run_ensemble(&cfg, |p| p.final_positions()[0]).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
    }

    #[test]
    fn worker_cap_does_not_change_results() {
        let cfg = base_config(
            vec![6.0],
            ZForm::Constant,
            vec![0.0],
            0.1,
            1e-3,
            DynamicsMode::Full,
            96,
            5,
        );
        let baseline = run_ensemble(&cfg, |p| p.final_positions()[0]).unwrap();
        std::env::set_var(THREADS_ENV, "3");
        let capped = run_ensemble(&cfg, |p| p.final_positions()[0]);
        std::env::remove_var(THREADS_ENV);
        let capped = capped.unwrap();
        assert_eq!(baseline.mean.to_bits(), capped.mean.to_bits());
        assert_eq!(baseline.stderr.to_bits(), capped.stderr.to_bits());
    }

    #[test]
    fn stderr_halves_when_paths_quadruple() {
        let make = |paths| {
            base_config(
                vec![8.0 / 3.0],
                ZForm::Constant,
                vec![0.0],
                0.2,
                1e-3,
                DynamicsMode::Full,
                paths,
                2024,
            )
        };
        let small = run_ensemble(&make(500), |p| p.final_positions()[0]).unwrap();
        let large = run_ensemble(&make(2000), |p| p.final_positions()[0]).unwrap();
        let ratio = 2.0 * large.stderr / small.stderr;
        assert!((ratio - 1.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn restriction_reweighting_is_a_martingale() {
        let spec = PartitionSpec::new(vec![8.0 / 3.0], ZForm::Constant).unwrap();
        let sim = SimulationConfig::new(spec, vec![0.0], 0.05, 1e-3)
            .unwrap()
            .with_mode(DynamicsMode::Full);
        let cfg = EnsembleConfig::new(sim, 400, 31)
            .unwrap()
            .with_weight(WeightMode::Restriction, Some(ElementarySlit::new(1.5, 0.05).unwrap()))
            .unwrap();
        let stats = run_ensemble(&cfg, |_| 1.0).unwrap();
        assert!(
            (stats.mean - 1.0).abs() < 3.0 * stats.stderr,
            "mean {} stderr {}",
            stats.mean,
            stats.stderr
        );
        assert!(stats.effective_sample_size > 100.0);
    }

    #[test]
    fn incompatible_weight_modes_are_rejected() {
        let spec = PartitionSpec::new(vec![2.0, 2.0], ZForm::Constant).unwrap();
        let sim = SimulationConfig::new(spec, vec![-1.0, 1.0], 0.05, 1e-3)
            .unwrap()
            .with_mode(DynamicsMode::Cardy);
        // Cardy weighting needs independent dynamics.
        assert!(EnsembleConfig::new(sim.clone(), 10, 1)
            .unwrap()
            .with_weight(WeightMode::Cardy, None)
            .is_err());
        // Restriction weighting needs n = 1 and a hull.
        assert!(EnsembleConfig::new(sim, 10, 1)
            .unwrap()
            .with_weight(WeightMode::Restriction, Some(ElementarySlit::new(3.0, 0.1).unwrap()))
            .is_err());
    }

    #[test]
    fn identity_map_invariance_is_exact() {
        let cfg = base_config(
            vec![8.0 / 3.0],
            ZForm::Constant,
            vec![0.0],
            0.2,
            1e-3,
            DynamicsMode::Full,
            200,
            11,
        );
        let report = invariance_report(&cfg, &MoebiusMap::identity()).unwrap();
        assert_eq!(report.paths_skipped, 0);
        assert!(
            report.max_abs_z < 1e-8,
            "identity comparison should match to round-off, got z {}",
            report.max_abs_z
        );
    }

    #[test]
    fn translation_invariance_single_curve() {
        let cfg = base_config(
            vec![8.0 / 3.0],
            ZForm::Constant,
            vec![0.0],
            0.2,
            1e-3,
            DynamicsMode::Full,
            500,
            13,
        );
        let report = invariance_report(&cfg, &MoebiusMap::translation(3.0)).unwrap();
        assert!(report.max_abs_z < 3.0, "z {}", report.max_abs_z);
        assert!(report.paths_used >= 499);
    }

    #[test]
    fn scaling_covariance_two_curves() {
        let kappa = 2.0;
        let cfg = base_config(
            vec![kappa, kappa],
            ZForm::TwoPointPower { exponent: 1.0 },
            vec![-1.0, 1.0],
            0.1,
            1e-3,
            DynamicsMode::Full,
            400,
            17,
        );
        let report = invariance_report(&cfg, &MoebiusMap::scaling(2.0).unwrap()).unwrap();
        assert!(report.max_abs_z < 3.0, "z {}", report.max_abs_z);
        // Scaling commutes with the discrete scheme, so the match should be
        // far tighter than statistical.
        assert!(report.max_abs_z < 1e-6, "z {}", report.max_abs_z);
    }

    #[test]
    fn wrong_dynamics_are_statistically_resolvable() {
        // Sanity check that the comparison has teeth: the z-machinery must
        // resolve a genuinely different law at the same matched capacity.
        // Compare the steered two-curve system against pure repulsion grown
        // from the same transported data — the gap statistics must differ
        // loudly at the sample sizes the invariance tests use.
        let kappa = 2.0;
        let cfg = base_config(
            vec![kappa, kappa],
            ZForm::TwoPointPower { exponent: 1.0 },
            vec![-1.0, 1.0],
            0.2,
            1e-3,
            DynamicsMode::Full,
            600,
            23,
        );
        let phi = MoebiusMap::scaling(2.0).unwrap();
        let good = invariance_report(&cfg, &phi).unwrap();
        assert!(good.max_abs_z < 3.0, "z {}", good.max_abs_z);
        let gap_row = good.comparisons.iter().find(|c| c.observable == "gap_0_1").unwrap();
        // Same transported start and horizon, steering switched off.
        let rows = ((CAPACITY_TARGET_FRACTION * 8.0 * 0.2 - 1e-9) / (8.0 * 1e-3)).ceil();
        let spec = PartitionSpec::new(vec![kappa, kappa], ZForm::Constant).unwrap();
        let sim = SimulationConfig::new(spec, vec![-2.0, 2.0], rows * 1e-3, 1e-3)
            .unwrap()
            .with_mode(DynamicsMode::Full)
            .with_speeds(vec![4.0, 4.0])
            .unwrap();
        let bad_cfg = EnsembleConfig::new(sim, 600, 23).unwrap();
        let unsteered = run_ensemble(&bad_cfg, |p| {
            let x = p.final_positions();
            x[1] - x[0]
        })
        .unwrap();
        let z = (gap_row.direct_mean - unsteered.mean)
            / (gap_row.direct_stderr.powi(2) + unsteered.stderr.powi(2)).sqrt();
        assert!(z.abs() > 4.0, "steered vs unsteered gap z {z}");
    }
}
