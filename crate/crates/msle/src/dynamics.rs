//! Stochastic evolution of the driving system, infinitesimal generators,
//! commutation defects, and the two-order growth comparison.
//!
//! With `n` curves of parameter `kappa_i` grown at speeds `a_i`, the driving
//! positions obey
//!
//! ```text
//!   dx^i = sqrt(kappa_i a_i) dB^i
//!        + kappa_i a_i (d/dx_i log Z) dt
//!        + sum_{k != i} 2 a_k / (x^i - x^k) dt,
//! ```
//!
//! discretised by Euler–Maruyama on a fixed grid. Each step also appends one
//! vertical slit per curve (centre = pre-step position, capacity `a_i dt`,
//! fixed curve order) to the global Loewner chain, so the hull geometry is
//! carried along with the driving data.
//!
//! Three coupling modes are provided: `Independent` curves (no interaction;
//! delegated to the per-curve decomposition engine, which also derives the
//! global bookkeeping), the drift-only `Cardy` system (Coulomb repulsion,
//! no steering function), and the `Full` system above. Reweighting between
//! these measures is the business of the weights module.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::conformal::{invert_slits, ElementarySlit, MapChain, MoebiusMap};
use crate::error::{Error, Result};
use crate::partition::{check_kappa_simulable, min_gap, validate_chamber, PartitionSpec};
use crate::rng::PathNoise;
use crate::weights::LogWeight;

// ── state ────────────────────────────────────────────────────────────────

/// Instantaneous state of the driving system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrivingState {
    pub time: f64,
    /// Strictly increasing boundary positions.
    pub positions: Vec<f64>,
    /// Non-negative growth speeds (capacity per unit time).
    pub speeds: Vec<f64>,
    pub kappas: Vec<f64>,
}

impl DrivingState {
    pub fn new(time: f64, positions: Vec<f64>, speeds: Vec<f64>, kappas: Vec<f64>) -> Result<Self> {
        if positions.len() != speeds.len() || positions.len() != kappas.len() {
            return Err(Error::config("positions, speeds, kappas must have equal length"));
        }
        validate_chamber(&positions)?;
        if speeds.iter().any(|&a| !a.is_finite() || a < 0.0) {
            return Err(Error::config("speeds must be finite and non-negative"));
        }
        for &k in &kappas {
            check_kappa_simulable(k)?;
        }
        Ok(Self { time, positions, speeds, kappas })
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }
}

/// How the curves are coupled while being grown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DynamicsMode {
    /// Each curve is an ordinary single SLE; no interaction of any kind.
    Independent,
    /// Coulomb repulsion only: `dx^i = dN^i + sum 2 a^k/(x^i - x^k) dt`.
    Cardy,
    /// Repulsion plus the `kappa_i a_i grad log Z` steering drift.
    Full,
}

impl DynamicsMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            DynamicsMode::Independent => "independent",
            DynamicsMode::Cardy => "cardy",
            DynamicsMode::Full => "full",
        }
    }
}

impl std::str::FromStr for DynamicsMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "independent" => Ok(DynamicsMode::Independent),
            "cardy" => Ok(DynamicsMode::Cardy),
            "full" => Ok(DynamicsMode::Full),
            other => Err(Error::config(format!(
                "unknown dynamics mode {other:?} (expected independent | cardy | full)"
            ))),
        }
    }
}

/// Why a simulated path ended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Stopping {
    /// Ran the full horizon.
    HorizonReached,
    /// Two driving positions met the collapse floor; `index` is the left
    /// curve of the offending gap.
    GapCollapsed { index: usize, time: f64 },
    /// A conformal-map evaluation left its domain of validity.
    DomainError { time: f64 },
}

// ── path record ──────────────────────────────────────────────────────────

/// Full record of one simulated path over `S` completed steps.
///
/// Snapshot arrays (`times`, `positions`, `speeds`) have `S + 1` rows;
/// increment arrays (`noises`, `drift_increments`) have `S` rows, and
/// `positions[k+1][i] - positions[k][i] = noises[k][i] + drift_increments[k][i]`
/// holds to machine precision by construction. The global chain holds
/// `S * n` slits in step-major, curve-minor order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathRecord {
    pub dt: f64,
    pub kappas: Vec<f64>,
    pub mode: DynamicsMode,
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    pub speeds: Vec<Vec<f64>>,
    /// Martingale increments `dM^i = sqrt(kappa_i a_i dt) xi`.
    pub noises: Vec<Vec<f64>>,
    /// Deterministic increments `drift * dt` per step and curve.
    pub drift_increments: Vec<Vec<f64>>,
    /// Hull chain of the whole system.
    pub global_chain: MapChain,
    /// Per-curve chains `g^i` (populated by the per-curve engine in
    /// independent mode; empty when only global dynamics were simulated).
    pub curve_chains: Vec<MapChain>,
    /// Per-curve driving positions `w^i` of the per-curve chains
    /// (independent mode only), `S + 1` rows.
    pub curve_driving: Option<Vec<Vec<f64>>>,
    /// Per-curve map derivatives `H^i'(w^i)` at each snapshot
    /// (independent mode only), `S + 1` rows.
    pub h_derivatives: Option<Vec<Vec<f64>>>,
    /// Per-curve Schwarzians `S H^i(w^i)` at each snapshot
    /// (independent mode only), `S + 1` rows.
    pub h_schwarzians: Option<Vec<Vec<f64>>>,
    pub stopping: Stopping,
    pub log_weights: Option<LogWeight>,
}

impl PathRecord {
    pub fn n(&self) -> usize {
        self.kappas.len()
    }

    /// Number of completed steps.
    pub fn steps(&self) -> usize {
        self.noises.len()
    }

    /// Slits of the global chain up to (excluding) step `k`.
    pub fn chain_slice(&self, k: usize) -> &[ElementarySlit] {
        &self.global_chain.slits()[..k * self.n()]
    }

    pub fn final_positions(&self) -> &[f64] {
        self.positions.last().expect("record always has the initial snapshot")
    }

    pub fn collapsed(&self) -> bool {
        !matches!(self.stopping, Stopping::HorizonReached)
    }
}

// ── drift and stepping ───────────────────────────────────────────────────

/// Full-coupling drift rate of curve `i` (0-based):
/// `kappa_i a_i (d/dx_i log Z) + sum_{k != i} 2 a_k / (x_i - x_k)`.
pub fn drift(state: &DrivingState, spec: &PartitionSpec, i: usize) -> Result<f64> {
    let g = spec.grad_log_z(&state.positions)?;
    Ok(state.kappas[i] * state.speeds[i] * g[i] + coulomb_drift(state, i))
}

/// Repulsion part alone: `sum_{k != i} 2 a_k / (x_i - x_k)`.
pub fn coulomb_drift(state: &DrivingState, i: usize) -> f64 {
    let x = &state.positions;
    let mut acc = 0.0;
    for k in 0..state.n() {
        if k != i {
            acc += 2.0 * state.speeds[k] / (x[i] - x[k]);
        }
    }
    acc
}

fn drift_rates(state: &DrivingState, spec: &PartitionSpec, mode: DynamicsMode) -> Result<Vec<f64>> {
    match mode {
        DynamicsMode::Independent => Ok(vec![0.0; state.n()]),
        DynamicsMode::Cardy => Ok((0..state.n()).map(|i| coulomb_drift(state, i)).collect()),
        DynamicsMode::Full => {
            let g = spec.grad_log_z(&state.positions)?;
            Ok((0..state.n())
                .map(|i| state.kappas[i] * state.speeds[i] * g[i] + coulomb_drift(state, i))
                .collect())
        }
    }
}

/// One Euler–Maruyama step. Returns the post-step state, the elementary
/// slits grown during the step (centres at the pre-step positions, capacity
/// `a_i dt`, curve order), and the two increment columns
/// `(noise, drift * dt)` whose sum is exactly the position update.
/// Fails with `GapCollapsed` if a post-step gap falls below `gap_floor`.
pub fn step(
    state: &DrivingState,
    spec: &PartitionSpec,
    mode: DynamicsMode,
    dt: f64,
    noise: &[f64],
    gap_floor: f64,
) -> Result<(DrivingState, Vec<ElementarySlit>, Vec<f64>, Vec<f64>)> {
    if !(dt > 0.0) {
        return Err(Error::config("dt must be positive"));
    }
    let n = state.n();
    if noise.len() != n {
        return Err(Error::config("need one normal per curve"));
    }
    let rates = drift_rates(state, spec, mode)?;
    let mut slits = Vec::with_capacity(n);
    let mut dm = Vec::with_capacity(n);
    let mut dd = Vec::with_capacity(n);
    let mut x_new = Vec::with_capacity(n);
    for i in 0..n {
        let a = state.speeds[i];
        slits.push(ElementarySlit::new(state.positions[i], a * dt)?);
        let m = (state.kappas[i] * a * dt).sqrt() * noise[i];
        let d = rates[i] * dt;
        dm.push(m);
        dd.push(d);
        x_new.push(state.positions[i] + (m + d));
    }
    let time = state.time + dt;
    for i in 0..n.saturating_sub(1) {
        if !(x_new[i + 1] - x_new[i] > gap_floor) {
            return Err(Error::GapCollapsed { index: i, time });
        }
    }
    let new_state = DrivingState {
        time,
        positions: x_new,
        speeds: state.speeds.clone(),
        kappas: state.kappas.clone(),
    };
    Ok((new_state, slits, dm, dd))
}

// ── whole-path simulation ────────────────────────────────────────────────

/// Everything needed to simulate one path.
#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub spec: PartitionSpec,
    pub x0: Vec<f64>,
    /// Initial speeds; constant over time in the global modes.
    pub speeds: Vec<f64>,
    pub horizon: f64,
    pub dt: f64,
    pub mode: DynamicsMode,
    /// Collapse floor as a fraction of the initial minimum gap.
    pub gap_floor_scale: f64,
    /// Floor on the contour-evaluation radius in independent mode, as a
    /// multiple of the per-step capacity scale `sqrt(max_speed * dt)`. The
    /// per-step radius is a fixed fraction of the current minimum gap;
    /// when it falls below this floor the decomposed evaluation is deemed
    /// unreliable and the path stops. The floor must comfortably exceed
    /// the fold height `2 sqrt(max_speed * dt)` of one step's slit.
    pub eval_floor_scale: f64,
}

pub const DEFAULT_GAP_FLOOR_SCALE: f64 = 1e-3;
pub const DEFAULT_EVAL_FLOOR_SCALE: f64 = 4.0;

impl SimulationConfig {
    pub fn new(spec: PartitionSpec, x0: Vec<f64>, horizon: f64, dt: f64) -> Result<Self> {
        let n = spec.n();
        let speeds = vec![1.0; n];
        let cfg = Self {
            spec,
            x0,
            speeds,
            horizon,
            dt,
            mode: DynamicsMode::Full,
            gap_floor_scale: DEFAULT_GAP_FLOOR_SCALE,
            eval_floor_scale: DEFAULT_EVAL_FLOOR_SCALE,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_mode(mut self, mode: DynamicsMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_speeds(mut self, speeds: Vec<f64>) -> Result<Self> {
        self.speeds = speeds;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.spec.n();
        if self.x0.len() != n || self.speeds.len() != n {
            return Err(Error::config("x0 and speeds must match the number of curves"));
        }
        validate_chamber(&self.x0)?;
        if self.speeds.iter().any(|&a| !a.is_finite() || a < 0.0) {
            return Err(Error::config("speeds must be finite and non-negative"));
        }
        if !(self.dt > 0.0) || !(self.horizon >= 0.0) {
            return Err(Error::config("need dt > 0 and horizon >= 0"));
        }
        let steps = self.horizon / self.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::config(format!(
                "dt = {} does not divide the horizon {}",
                self.dt, self.horizon
            )));
        }
        if !(self.gap_floor_scale > 0.0) || !(self.eval_floor_scale > 0.0) {
            return Err(Error::config("scale parameters must be positive"));
        }
        Ok(())
    }

    /// Number of grid steps.
    pub fn step_count(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    /// Absolute collapse floor derived from the initial configuration.
    pub fn gap_floor(&self) -> f64 {
        self.gap_floor_scale * min_gap(&self.x0)
    }

    pub fn initial_state(&self) -> Result<DrivingState> {
        DrivingState::new(0.0, self.x0.clone(), self.speeds.clone(), self.spec.kappas().to_vec())
    }
}

/// Simulate one path. Deterministic in `seed`; early stopping is recorded
/// in the result rather than reported as an error.
pub fn simulate_path(config: &SimulationConfig, seed: u64) -> Result<PathRecord> {
    config.validate()?;
    if config.mode == DynamicsMode::Independent {
        return crate::decomposition::simulate_independent(config, seed);
    }
    let n = config.spec.n();
    let steps = config.step_count();
    let gap_floor = config.gap_floor();
    let noise = PathNoise::from_seed(seed);
    let mut state = config.initial_state()?;

    let mut record = PathRecord {
        dt: config.dt,
        kappas: config.spec.kappas().to_vec(),
        mode: config.mode,
        times: vec![0.0],
        positions: vec![state.positions.clone()],
        speeds: vec![state.speeds.clone()],
        noises: Vec::new(),
        drift_increments: Vec::new(),
        global_chain: MapChain::new(),
        curve_chains: Vec::new(),
        curve_driving: None,
        h_derivatives: None,
        h_schwarzians: None,
        stopping: Stopping::HorizonReached,
        log_weights: None,
    };

    let mut xi = vec![0.0; n];
    for k in 0..steps {
        for (i, slot) in xi.iter_mut().enumerate() {
            *slot = noise.normal(k as u64, i as u64);
        }
        match step(&state, &config.spec, config.mode, config.dt, &xi, gap_floor) {
            Ok((next, slits, dm, dd)) => {
                for s in slits {
                    record.global_chain.push(s);
                }
                record.noises.push(dm);
                record.drift_increments.push(dd);
                record.times.push((k + 1) as f64 * config.dt);
                record.positions.push(next.positions.clone());
                record.speeds.push(next.speeds.clone());
                state = next;
            }
            Err(Error::GapCollapsed { index, time }) => {
                record.stopping = Stopping::GapCollapsed { index, time };
                break;
            }
            Err(Error::ChamberViolation) => {
                record.stopping = Stopping::DomainError { time: state.time };
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(record)
}

// ── trace recovery ───────────────────────────────────────────────────────

/// Recover curve `i` as the pullbacks `G_{t_k}^{-1}(x^i_{t_k} + i eps)` of
/// slightly lifted driving points, one per sample time.
pub fn trace_points(path: &PathRecord, i: usize, lift: f64) -> Result<Vec<Complex64>> {
    if i >= path.n() {
        return Err(Error::config(format!("curve index {i} out of range")));
    }
    if !(lift > 0.0) {
        return Err(Error::config("lift height must be positive"));
    }
    let mut pts = Vec::with_capacity(path.positions.len());
    for (k, xs) in path.positions.iter().enumerate() {
        let z = Complex64::new(xs[i], lift);
        let w = invert_slits(path.chain_slice(k), z);
        if !w.re.is_finite() || !w.im.is_finite() || w.im < -1e-9 {
            return Err(Error::TraceLift { index: k });
        }
        pts.push(Complex64::new(w.re, w.im.max(0.0)));
    }
    Ok(pts)
}

// ── generators ───────────────────────────────────────────────────────────

/// Which second-order operator to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorVariant {
    /// Diffusion generator of curve `i` under the full dynamics:
    /// `D_i = (k_i/2) d_ii + k_i (d_i log Z) d_i + sum_{j != i} [2/(x_j - x_i)] d_j`.
    Generator,
    /// Null-vector operator:
    /// `O_i = (k_i/2) d_ii + sum_{k != i} [2/(x_k - x_i)] d_k - sum_{k != i} [2 h_k/(x_k - x_i)^2]`.
    NullVector,
}

/// One operator: which curve index it differentiates, on which system.
#[derive(Clone)]
pub struct GeneratorSpec<'a> {
    pub index: usize,
    pub spec: &'a PartitionSpec,
    pub variant: OperatorVariant,
}

/// Finite-difference step factor (times minimum gap) for a single operator
/// application.
pub const GENERATOR_STEP_FACTOR: f64 = 1e-3;
/// Coarser factor for nested applications, where round-off from the inner
/// stencil is re-differentiated and a larger step is needed for stability.
pub const NESTED_STEP_FACTOR: f64 = 1e-2;

type DynF<'f> = dyn Fn(&[f64]) -> Result<f64> + 'f;

/// Apply the operator to `f` at `x` by fourth-order central differences with
/// step `1e-3 * min_gap(x)`.
pub fn generator_apply(
    op: &GeneratorSpec<'_>,
    f: &dyn Fn(&[f64]) -> f64,
    x: &[f64],
) -> Result<f64> {
    let lifted = move |y: &[f64]| Ok(f(y));
    apply_operator(op, &lifted, x, GENERATOR_STEP_FACTOR * min_gap(x))
}

fn apply_operator(op: &GeneratorSpec<'_>, f: &DynF<'_>, x: &[f64], h: f64) -> Result<f64> {
    validate_chamber(x)?;
    let n = x.len();
    let i = op.index;
    if i >= n {
        return Err(Error::config(format!("operator index {i} out of range")));
    }
    let g = min_gap(x);
    if !(4.0 * h < 0.5 * g) {
        return Err(Error::NestedStencilOverlap { step: h, gap: g });
    }
    let sample = |j: usize, m: i32| -> Result<f64> {
        let mut y = x.to_vec();
        y[j] = x[j] + m as f64 * h;
        f(&y)
    };
    // Second derivative along the operator's own coordinate.
    let fm2 = sample(i, -2)?;
    let fm1 = sample(i, -1)?;
    let f0 = f(x)?;
    let fp1 = sample(i, 1)?;
    let fp2 = sample(i, 2)?;
    let dii = (-fm2 + 16.0 * fm1 - 30.0 * f0 + 16.0 * fp1 - fp2) / (12.0 * h * h);
    let di = (fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * h);
    let mut acc;
    match op.variant {
        OperatorVariant::Generator => {
            let grad = op.spec.grad_log_z(x)?;
            acc = 0.5 * op.spec.kappas()[i] * dii + op.spec.kappas()[i] * grad[i] * di;
            for j in 0..n {
                if j != i {
                    let djm2 = sample(j, -2)?;
                    let djm1 = sample(j, -1)?;
                    let djp1 = sample(j, 1)?;
                    let djp2 = sample(j, 2)?;
                    let dj = (djm2 - 8.0 * djm1 + 8.0 * djp1 - djp2) / (12.0 * h);
                    acc += 2.0 / (x[j] - x[i]) * dj;
                }
            }
        }
        OperatorVariant::NullVector => {
            let hs = op.spec.h_weights()?;
            acc = 0.5 * op.spec.kappas()[i] * dii;
            for k in 0..n {
                if k != i {
                    let dkm2 = sample(k, -2)?;
                    let dkm1 = sample(k, -1)?;
                    let dkp1 = sample(k, 1)?;
                    let dkp2 = sample(k, 2)?;
                    let dk = (dkm2 - 8.0 * dkm1 + 8.0 * dkp1 - dkp2) / (12.0 * h);
                    let d = x[k] - x[i];
                    acc += 2.0 / d * dk - 2.0 * hs[k] / (d * d) * f0;
                }
            }
        }
    }
    Ok(acc)
}

/// `([A_i, A_j] f - [4/(x_i - x_j)^2] (A_j f - A_i f))(x)` through nested
/// finite differences — the amount by which the pair fails the commutation
/// relation. For the null-vector variant on suitable pairs the closed form
/// is `-3 (k_i - k_j)(16 - k_i k_j) / (k_i k_j (x_i - x_j)^4) * f(x)`.
pub fn commutator_defect(
    i: usize,
    j: usize,
    spec: &PartitionSpec,
    variant: OperatorVariant,
    f: &dyn Fn(&[f64]) -> f64,
    x: &[f64],
) -> Result<f64> {
    if i == j {
        return Err(Error::config("commutator needs distinct indices"));
    }
    let h = NESTED_STEP_FACTOR * min_gap(x);
    let op_i = GeneratorSpec { index: i, spec, variant };
    let op_j = GeneratorSpec { index: j, spec, variant };
    let lifted = move |y: &[f64]| Ok(f(y));
    let jf = |y: &[f64]| apply_operator(&op_j, &lifted, y, h);
    let if_ = |y: &[f64]| apply_operator(&op_i, &lifted, y, h);
    let ijf = apply_operator(&op_i, &jf, x, h)?;
    let jif = apply_operator(&op_j, &if_, x, h)?;
    let s = x[i] - x[j];
    let defect = (ijf - jif) - 4.0 / (s * s) * (jf(x)? - if_(x)?);
    Ok(defect)
}

/// Second-order expansion of "grow curve `idx` by capacity `eps`":
/// `f + eps A f + (eps^2/2) A(A f)`, as a function evaluator.
fn expand<'f>(
    op: GeneratorSpec<'f>,
    eps: f64,
    h: f64,
    inner: Box<DynF<'f>>,
) -> Box<DynF<'f>> {
    Box::new(move |y: &[f64]| {
        let base = inner(y)?;
        if eps == 0.0 {
            return Ok(base);
        }
        let first = apply_operator(&op, &inner, y, h)?;
        let inner_ref: &DynF<'f> = &*inner;
        let once = |z: &[f64]| apply_operator(&op, inner_ref, z, h);
        let second = apply_operator(&op, &once, y, h)?;
        Ok(base + eps * first + 0.5 * eps * eps * second)
    })
}

/// Difference between growing `(i by eps_i, then j by eps_j)` and the
/// reverse order, expanded to second order in the capacities.
///
/// Growing `i` first modifies the effective capacity seen by `j` by the
/// factor `1 - 4 eps_i / (x_i - x_j)^2`; with that correction the result
/// equals `eps_i eps_j * commutator_defect + O(eps^3)`.
pub fn two_step_gap(
    i: usize,
    j: usize,
    eps_i: f64,
    eps_j: f64,
    spec: &PartitionSpec,
    variant: OperatorVariant,
    f: &dyn Fn(&[f64]) -> f64,
    x: &[f64],
) -> Result<f64> {
    if i == j {
        return Err(Error::config("two-step comparison needs distinct indices"));
    }
    let h = NESTED_STEP_FACTOR * min_gap(x);
    let s2 = (x[i] - x[j]) * (x[i] - x[j]);
    let ordered = |first: usize, e1: f64, second: usize, e2: f64| -> Result<f64> {
        let e2_eff = e2 * (1.0 - 4.0 * e1 / s2);
        let base: Box<DynF<'_>> = Box::new(move |y: &[f64]| Ok(f(y)));
        let inner = expand(GeneratorSpec { index: second, spec, variant }, e2_eff, h, base);
        let outer = expand(GeneratorSpec { index: first, spec, variant }, e1, h, inner);
        outer(x)
    };
    Ok(ordered(i, eps_i, j, eps_j)? - ordered(j, eps_j, i, eps_i)?)
}

// ── Möbius pushforward ───────────────────────────────────────────────────

/// Transport driving data under a Möbius map of the half-plane:
/// positions map through `phi`, speeds pick up the factor `phi'(x)^2`,
/// noise strengths and time are untouched.
pub fn moebius_pushforward(state: &DrivingState, phi: &MoebiusMap) -> Result<DrivingState> {
    let mut positions = Vec::with_capacity(state.n());
    let mut speeds = Vec::with_capacity(state.n());
    for (idx, (&x, &a)) in state.positions.iter().zip(&state.speeds).enumerate() {
        let y = phi
            .apply_boundary_point(x)
            .map_err(|_| Error::PoleOnPosition { index: idx })?;
        let d = phi.derivative(x).map_err(|_| Error::PoleOnPosition { index: idx })?;
        positions.push(y);
        speeds.push(d * d * a);
    }
    validate_chamber(&positions).map_err(|_| Error::OrderingBroken)?;
    Ok(DrivingState {
        time: state.time,
        positions,
        speeds,
        kappas: state.kappas.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::ZForm;

    fn const_spec(kappas: Vec<f64>) -> PartitionSpec {
        PartitionSpec::new(kappas, ZForm::Constant).unwrap()
    }

    #[test]
    fn drift_reduces_to_coulomb_for_constant_z() {
        let spec = const_spec(vec![2.0, 2.0]);
        let state =
            DrivingState::new(0.0, vec![-1.0, 1.0], vec![1.0, 1.0], vec![2.0, 2.0]).unwrap();
        assert_eq!(drift(&state, &spec, 0).unwrap(), -1.0);
        assert_eq!(drift(&state, &spec, 1).unwrap(), 1.0);
        let single = const_spec(vec![4.0]);
        let s1 = DrivingState::new(0.0, vec![0.3], vec![1.0], vec![4.0]).unwrap();
        assert_eq!(drift(&s1, &single, 0).unwrap(), 0.0);
    }

    #[test]
    fn drift_includes_the_steering_gradient() {
        // Z = (x2 - x1)^1 at kappa = 2: at x = (0,1) the second curve feels
        // kappa * a * 1/s + 2/s = 2 + 2 = 4.
        let spec =
            PartitionSpec::new(vec![2.0, 2.0], ZForm::TwoPointPower { exponent: 1.0 }).unwrap();
        let state =
            DrivingState::new(0.0, vec![0.0, 1.0], vec![1.0, 1.0], vec![2.0, 2.0]).unwrap();
        assert!((drift(&state, &spec, 1).unwrap() - 4.0).abs() < 1e-12);
        assert!((drift(&state, &spec, 0).unwrap() + 4.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_two_curve_gap_follows_the_closed_form() {
        // kappa = 0, Coulomb only: gap(t) = sqrt(4 + 8t) from +-1 starts.
        let spec = const_spec(vec![0.0, 0.0]);
        let cfg = SimulationConfig::new(spec, vec![-1.0, 1.0], 1.0, 1e-4)
            .unwrap()
            .with_mode(DynamicsMode::Cardy);
        let path = simulate_path(&cfg, 1).unwrap();
        assert!(matches!(path.stopping, Stopping::HorizonReached));
        let last = path.final_positions();
        let gap = last[1] - last[0];
        let exact = (4.0_f64 + 8.0).sqrt();
        assert!((gap - exact).abs() < 1e-3, "gap {gap} vs {exact}");
        // Symmetric starts stay mirror-symmetric.
        for row in &path.positions {
            assert!((row[0] + row[1]).abs() < 1e-9, "{row:?}");
        }
    }

    #[test]
    fn simulation_is_deterministic_in_the_seed() {
        let spec = const_spec(vec![8.0 / 3.0, 8.0 / 3.0]);
        let cfg = SimulationConfig::new(spec, vec![-1.0, 1.0], 0.05, 1e-3)
            .unwrap()
            .with_mode(DynamicsMode::Cardy);
        let a = simulate_path(&cfg, 77).unwrap();
        let b = simulate_path(&cfg, 77).unwrap();
        assert_eq!(a.positions, b.positions);
        assert_eq!(a.noises, b.noises);
        let c = simulate_path(&cfg, 78).unwrap();
        assert_ne!(a.positions, c.positions);
    }

    #[test]
    fn increments_decompose_exactly_into_noise_plus_drift() {
        let spec =
            PartitionSpec::new(vec![2.0, 2.0], ZForm::TwoPointPower { exponent: 1.0 }).unwrap();
        let cfg = SimulationConfig::new(spec, vec![-1.0, 1.0], 0.02, 1e-3).unwrap();
        let path = simulate_path(&cfg, 5).unwrap();
        for k in 0..path.steps() {
            for i in 0..path.n() {
                let dx = path.positions[k + 1][i] - path.positions[k][i];
                let sum = path.noises[k][i] + path.drift_increments[k][i];
                assert!((dx - sum).abs() < 1e-14, "step {k} curve {i}");
            }
        }
    }

    #[test]
    fn quadratic_variation_recovers_kappa() {
        // Single curve at kappa = 8/3 over [0,1]: sum of squared increments
        // estimates kappa; relative sd of the estimator is sqrt(2/K) ~ 1.4%.
        let kappa = 8.0 / 3.0;
        let spec = const_spec(vec![kappa]);
        let cfg = SimulationConfig::new(spec, vec![0.0], 1.0, 1e-4).unwrap();
        let path = simulate_path(&cfg, 42).unwrap();
        let qv: f64 = (0..path.steps())
            .map(|k| {
                let d = path.positions[k + 1][0] - path.positions[k][0];
                d * d
            })
            .sum();
        assert!((qv - kappa).abs() < 0.05 * kappa, "qv {qv} vs {kappa}");
    }

    #[test]
    fn noise_columns_are_uncorrelated_with_unit_scale() {
        let kappa = 3.0;
        let dt = 1e-4;
        let spec = const_spec(vec![kappa, kappa]);
        let cfg = SimulationConfig::new(spec, vec![-5.0, 5.0], 1.0, dt)
            .unwrap()
            .with_mode(DynamicsMode::Cardy);
        let path = simulate_path(&cfg, 9).unwrap();
        let k_steps = path.steps();
        assert_eq!(k_steps, 10_000);
        let mut c00 = 0.0;
        let mut c01 = 0.0;
        let mut c11 = 0.0;
        for row in &path.noises {
            c00 += row[0] * row[0];
            c01 += row[0] * row[1];
            c11 += row[1] * row[1];
        }
        let m = k_steps as f64;
        let var = kappa * dt;
        // Variances match within 4 standard errors (se ~ var*sqrt(2/K)).
        let se = var * (2.0 / m).sqrt();
        assert!((c00 / m - var).abs() < 4.0 * se, "c00 {}", c00 / m);
        assert!((c11 / m - var).abs() < 4.0 * se, "c11 {}", c11 / m);
        // Cross-covariance is zero within 4 standard errors (se ~ var/sqrt(K)).
        assert!((c01 / m).abs() < 4.0 * var / m.sqrt(), "c01 {}", c01 / m);
    }

    #[test]
    fn single_step_mean_matches_the_drift() {
        let spec =
            PartitionSpec::new(vec![2.0, 2.0], ZForm::TwoPointPower { exponent: 1.0 }).unwrap();
        let state =
            DrivingState::new(0.0, vec![0.0, 1.0], vec![1.0, 1.0], vec![2.0, 2.0]).unwrap();
        let dt = 1e-3;
        let trials = 100_000;
        let noise = PathNoise::from_seed(314);
        let mut mean = 0.0;
        for t in 0..trials {
            let xi = [noise.normal(t, 0), noise.normal(t, 1)];
            let (next, _, _, _) =
                step(&state, &spec, DynamicsMode::Full, dt, &xi, 1e-6).unwrap();
            mean += next.positions[1] - state.positions[1];
        }
        mean /= trials as f64;
        let expected = drift(&state, &spec, 1).unwrap() * dt;
        let se = (state.kappas[1] * dt / trials as f64).sqrt();
        assert!(
            (mean - expected).abs() < 3.0 * se,
            "mean {mean} vs {expected} (se {se})"
        );
    }

    #[test]
    fn collapse_stops_the_path_with_metadata() {
        // Attractive steering: Z = gap^{-8} pulls the curves together hard.
        let spec =
            PartitionSpec::new(vec![2.0, 2.0], ZForm::TwoPointPower { exponent: -8.0 }).unwrap();
        let cfg = SimulationConfig::new(spec, vec![-0.05, 0.05], 1.0, 1e-3).unwrap();
        let path = simulate_path(&cfg, 3).unwrap();
        match path.stopping {
            Stopping::GapCollapsed { index, time } => {
                assert_eq!(index, 0);
                assert!(time > 0.0 && time < 1.0);
            }
            other => panic!("expected collapse, got {other:?}"),
        }
        // All recorded snapshots stay strictly ordered.
        for row in &path.positions {
            assert!(row[0] < row[1]);
        }
    }

    #[test]
    fn trace_of_a_constant_driver_is_the_vertical_segment() {
        let spec = const_spec(vec![0.0]);
        let dt = 1e-3;
        let cfg = SimulationConfig::new(spec, vec![0.0], 1.0, dt).unwrap();
        let path = simulate_path(&cfg, 0).unwrap();
        let pts = trace_points(&path, 0, dt).unwrap();
        assert_eq!(pts.len(), path.steps() + 1);
        assert_eq!(pts[0], Complex64::new(0.0, dt));
        let tol = 5.0 * dt.sqrt();
        for (k, p) in pts.iter().enumerate() {
            let t = k as f64 * dt;
            let expected = 2.0 * t.sqrt();
            assert!(p.re.abs() < 1e-12, "re {}", p.re);
            assert!((p.im - expected).abs() < tol, "step {k}: {} vs {expected}", p.im);
        }
    }

    #[test]
    fn symmetric_deterministic_traces_mirror_each_other() {
        // The per-step fixed composition order (curve 1, then curve 2)
        // breaks exact mirror symmetry at O(dt); dt must be small enough to
        // push that splitting error below the tolerance.
        let spec = const_spec(vec![0.0, 0.0]);
        let cfg = SimulationConfig::new(spec, vec![-1.0, 1.0], 0.01, 1e-6)
            .unwrap()
            .with_mode(DynamicsMode::Cardy);
        let path = simulate_path(&cfg, 0).unwrap();
        let left = trace_points(&path, 0, 1e-4).unwrap();
        let right = trace_points(&path, 1, 1e-4).unwrap();
        for (l, r) in left.iter().zip(&right) {
            let mirrored = Complex64::new(-r.re, r.im);
            assert!((l - mirrored).norm() < 1e-6, "{l} vs {mirrored}");
        }
    }

    #[test]
    fn generator_on_polynomials_matches_coefficient_calculus() {
        // D_1 x_1^2 = kappa_1 + 2 x_1 * (Z-drift + Coulomb of D_1) at
        // constant Z reduces to kappa_1 at x = (0, 1).
        let spec = const_spec(vec![2.0, 2.0]);
        let op = GeneratorSpec { index: 0, spec: &spec, variant: OperatorVariant::Generator };
        let f = |y: &[f64]| y[0] * y[0];
        let v = generator_apply(&op, &f, &[0.0, 1.0]).unwrap();
        assert!((v - 2.0).abs() < 1e-6, "{v}");
        // f == 1 is annihilated.
        let one = |_: &[f64]| 1.0;
        assert!(generator_apply(&op, &one, &[0.0, 1.0]).unwrap().abs() < 1e-9);
        // D_1 x_1 equals the drift with speeds (1, 0).
        let fx = |y: &[f64]| y[0];
        let v = generator_apply(&op, &fx, &[0.0, 1.0]).unwrap();
        let state =
            DrivingState::new(0.0, vec![0.0, 1.0], vec![1.0, 0.0], vec![2.0, 2.0]).unwrap();
        let d = drift(&state, &spec, 0).unwrap();
        assert!((v - d).abs() < 1e-8, "{v} vs {d}");
        // Interaction term: D_1 x_2 = 2/(x_2 - x_1) = 2.
        let fy = |y: &[f64]| y[1];
        let v = generator_apply(&op, &fy, &[0.0, 1.0]).unwrap();
        assert!((v - 2.0).abs() < 1e-8, "{v}");
    }

    #[test]
    fn generator_includes_the_steering_term() {
        let spec =
            PartitionSpec::new(vec![2.0, 2.0], ZForm::TwoPointPower { exponent: 1.0 }).unwrap();
        let x = [0.0, 1.0];
        let fx = |y: &[f64]| y[1];
        // D_2 x_2 has only the steering part: kappa * grad_2 log Z = 2.
        let op2 = GeneratorSpec { index: 1, spec: &spec, variant: OperatorVariant::Generator };
        let d2 = generator_apply(&op2, &fx, &x).unwrap();
        assert!((d2 - 2.0).abs() < 1e-7, "{d2}");
        // The Coulomb push on x_2 sits in D_1: 2/(x_2 - x_1) = 2; summing
        // a_1 D_1 + a_2 D_2 at unit speeds recovers the full drift 4.
        let op1 = GeneratorSpec { index: 0, spec: &spec, variant: OperatorVariant::Generator };
        let d1 = generator_apply(&op1, &fx, &x).unwrap();
        assert!((d1 - 2.0).abs() < 1e-7, "{d1}");
        let state =
            DrivingState::new(0.0, x.to_vec(), vec![1.0, 1.0], vec![2.0, 2.0]).unwrap();
        let full = drift(&state, &spec, 1).unwrap();
        assert!((d1 + d2 - full).abs() < 1e-7, "{} vs {full}", d1 + d2);
    }

    #[test]
    fn null_vector_operator_reproduces_the_residual() {
        // O_i Z / Z at a two-point power equals the partition module's
        // residual; cross-check the two code paths.
        let kappa = 2.0;
        let a = 2.0;
        let spec =
            PartitionSpec::new(vec![kappa, kappa], ZForm::TwoPointPower { exponent: a }).unwrap();
        let x = [0.0, 1.0];
        let f = move |y: &[f64]| (y[1] - y[0]).powf(a);
        let op = GeneratorSpec { index: 0, spec: &spec, variant: OperatorVariant::NullVector };
        let v = generator_apply(&op, &f, &x).unwrap();
        let z = spec.z_value(&x).unwrap();
        let residual = spec.nve_residual(&x, 0).unwrap();
        assert!((v / z - residual).abs() < 1e-6, "{} vs {residual}", v / z);
        assert!((v / z - 4.0).abs() < 1e-6);
    }

    #[test]
    fn commutation_defect_vanishes_exactly_on_the_compatible_set() {
        let grid = [2.0, 8.0 / 3.0, 3.0, 4.0, 6.0, 8.0];
        let x = [0.0, 1.0];
        let one = |_: &[f64]| 1.0;
        for &ki in &grid {
            for &kj in &grid {
                if ki == kj {
                    continue;
                }
                let spec = PartitionSpec::new(vec![ki, kj], ZForm::Constant).unwrap();
                let d = commutator_defect(0, 1, &spec, OperatorVariant::NullVector, &one, &x)
                    .unwrap();
                let closed = -3.0 * (ki - kj) * (16.0 - ki * kj) / (ki * kj);
                if closed.abs() < 1e-12 {
                    assert!(d.abs() < 1e-4, "({ki},{kj}): defect {d} should vanish");
                } else {
                    assert!(d.abs() > 1e-3, "({ki},{kj}): defect {d} should be visible");
                    assert!(
                        (d - closed).abs() < 0.05 * closed.abs(),
                        "({ki},{kj}): {d} vs {closed}"
                    );
                }
            }
        }
    }

    #[test]
    fn commutation_defect_example_value() {
        // kappas (2, 4), unit separation: -3(-2)(8)/8 = 6.
        let spec = PartitionSpec::new(vec![2.0, 4.0], ZForm::Constant).unwrap();
        let one = |_: &[f64]| 1.0;
        let d =
            commutator_defect(0, 1, &spec, OperatorVariant::NullVector, &one, &[0.0, 1.0]).unwrap();
        assert!((d - 6.0).abs() < 0.05 * 6.0, "{d}");
    }

    #[test]
    fn generator_commutation_holds_with_a_valid_steering_function() {
        // Equal kappas with a valid exponent, and the dual pair (2, 8) with
        // the shared exponent -1/2, both satisfy the commutation relation.
        let f = |y: &[f64]| y[0] * y[1];
        let x = [0.0, 1.0];
        for (ki, kj, a) in [
            (2.0, 2.0, 1.0),
            (8.0 / 3.0, 8.0 / 3.0, 0.75),
            (6.0, 6.0, 1.0 / 3.0),
            (2.0, 8.0, -0.5),
        ] {
            let spec =
                PartitionSpec::new(vec![ki, kj], ZForm::TwoPointPower { exponent: a }).unwrap();
            let d =
                commutator_defect(0, 1, &spec, OperatorVariant::Generator, &f, &x).unwrap();
            assert!(d.abs() < 1e-4, "({ki},{kj},{a}): {d}");
        }
    }

    #[test]
    fn two_step_gap_is_zero_when_one_capacity_is_zero() {
        let spec =
            PartitionSpec::new(vec![2.0, 2.0], ZForm::TwoPointPower { exponent: 1.0 }).unwrap();
        let f = |y: &[f64]| y[0] * y[1];
        let g = two_step_gap(0, 1, 0.0, 0.01, &spec, OperatorVariant::Generator, &f, &[0.0, 1.0])
            .unwrap();
        assert_eq!(g, 0.0);
    }

    #[test]
    fn two_step_gap_shrinks_cubically_for_a_valid_system() {
        let spec = PartitionSpec::new(
            vec![8.0 / 3.0, 8.0 / 3.0],
            ZForm::TwoPointPower { exponent: 0.75 },
        )
        .unwrap();
        let f = |y: &[f64]| y[0] * y[1];
        let x = [0.0, 1.0];
        let ratio_at = |e: f64| {
            two_step_gap(0, 1, e, e, &spec, OperatorVariant::Generator, &f, &x).unwrap()
                / (e * e)
        };
        let r1 = ratio_at(0.04);
        let r2 = ratio_at(0.02);
        assert!(
            r2.abs() <= 0.6 * r1.abs() + 1e-10,
            "normalised gap should halve: {r1} -> {r2}"
        );
    }

    #[test]
    fn two_step_gap_recovers_the_commutator_for_an_invalid_pair() {
        let spec = PartitionSpec::new(vec![2.0, 4.0], ZForm::Constant).unwrap();
        let one = |_: &[f64]| 1.0;
        let x = [0.0, 1.0];
        let defect =
            commutator_defect(0, 1, &spec, OperatorVariant::NullVector, &one, &x).unwrap();
        let e = 0.01;
        let gap =
            two_step_gap(0, 1, e, e, &spec, OperatorVariant::NullVector, &one, &x).unwrap();
        let est = gap / (e * e);
        assert!(
            (est - defect).abs() < 0.05 * defect.abs(),
            "two-step {est} vs commutator {defect}"
        );
    }

    #[test]
    fn pushforward_examples() {
        let state =
            DrivingState::new(0.0, vec![1.0, 2.0], vec![1.0, 1.0], vec![2.0, 2.0]).unwrap();
        // Translation: positions shift, speeds unchanged.
        let shifted = moebius_pushforward(&state, &MoebiusMap::translation(5.0)).unwrap();
        assert_eq!(shifted.positions, vec![6.0, 7.0]);
        assert_eq!(shifted.speeds, vec![1.0, 1.0]);
        // Dilation doubles positions and quadruples speeds.
        let scaled =
            moebius_pushforward(&state, &MoebiusMap::scaling(2.0).unwrap()).unwrap();
        assert_eq!(scaled.positions, vec![2.0, 4.0]);
        assert_eq!(scaled.speeds, vec![4.0, 4.0]);
        // Inversion z -> -1/z keeps the order and rescales speeds by x^-4.
        let inv = MoebiusMap::new(0.0, -1.0, 1.0, 0.0).unwrap();
        let turned = moebius_pushforward(&state, &inv).unwrap();
        assert!((turned.positions[0] + 1.0).abs() < 1e-15);
        assert!((turned.positions[1] + 0.5).abs() < 1e-15);
        assert!((turned.speeds[0] - 1.0).abs() < 1e-15);
        assert!((turned.speeds[1] - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn pushforward_rejects_order_breaking_maps() {
        let state =
            DrivingState::new(0.0, vec![-1.0, 1.0], vec![1.0, 1.0], vec![2.0, 2.0]).unwrap();
        // Pole at the origin separates the positions: order flips.
        let inv = MoebiusMap::new(0.0, -1.0, 1.0, 0.0).unwrap();
        assert!(matches!(
            moebius_pushforward(&state, &inv),
            Err(Error::OrderingBroken)
        ));
        let pole = MoebiusMap::new(1.0, 0.0, 1.0, 1.0).unwrap();
        assert!(matches!(
            moebius_pushforward(&state, &pole),
            Err(Error::PoleOnPosition { index: 0 })
        ));
    }
}
