//! Radon-Nikodym log-weights accumulated along simulated paths.
//!
//! Each weight is the logarithm of a change-of-measure density between two
//! ways of growing the same curves: conditioning a single curve to avoid a
//! boundary hull (`restriction_weight`), conditioning independent curves
//! to avoid each other (`cardy_weight`), steering the interacting system
//! by a partition function (`conformal_weight`), or both conditionings at
//! once (`combined_weight`). All densities are used in their
//! snapshot-plus-time-integral form: boundary terms read off the endpoint
//! state, plus Riemann sums of Schwarzian / partition-derivative rates
//! along the path — no stochastic integral is accumulated.
//!
//! Weight accumulation stops (and records the step) when curves or hulls
//! come within the reliability margin `10 sqrt(dt)` of each other:
//! boundary derivatives degrade there and the continuum densities lose
//! absolute continuity at contact. A weight stopped at such a step keeps
//! its stopped-time value, which preserves the martingale property of the
//! estimators (optional stopping).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::conformal::{contour_taylor_batch, ElementarySlit, RJet};
use crate::dynamics::{DynamicsMode, PathRecord};
use crate::error::{Error, Result};
use crate::partition::{central_charge, h_weight, PartitionSpec};

/// Margin scale: distances below `10 sqrt(dt)` are unreliable.
const RELIABILITY_MARGIN_SCALE: f64 = 10.0;
/// Largest initial null-vector residual tolerated by `combined_weight`.
const NVE_GUARD_TOL: f64 = 1e-6;
/// Contour radius as a fraction of the hull distance for the per-step
/// image-chain rebuild (value and first derivative only).
const REBUILD_RADIUS_FRACTION: f64 = 0.1;
/// Full-circle sample count for the cheap rebuild contour.
const REBUILD_SAMPLES: usize = 4;
/// Contour radius fraction and sample count for accurate evaluations
/// (Schwarzian rates and the endpoint snapshot).
const ACCURATE_RADIUS_FRACTION: f64 = 0.35;
const ACCURATE_SAMPLES: usize = 32;
/// Absolute cap on contour radii.
const RADIUS_MAX: f64 = 1.0;

/// Log of a change-of-measure density split into its bookkeeping parts:
/// a running stochastic integral, a running time integral, and boundary
/// snapshot terms (function of the endpoint states only). `total` is the sum;
/// the weight itself is `exp(total)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogWeight {
    pub stochastic_part: f64,
    pub time_part: f64,
    pub snapshot_part: f64,
    /// Step index at which accumulation stopped early because curves or
    /// hulls entered the numerical-reliability margin; `None` if the weight
    /// ran to the end of the path.
    pub stopped_step: Option<usize>,
}

impl LogWeight {
    pub const ZERO: LogWeight =
        LogWeight { stochastic_part: 0.0, time_part: 0.0, snapshot_part: 0.0, stopped_step: None };

    pub fn total(&self) -> f64 {
        self.stochastic_part + self.time_part + self.snapshot_part
    }
}

/// Distance below which boundary-derivative data is considered unreliable.
pub fn reliability_margin(dt: f64) -> f64 {
    RELIABILITY_MARGIN_SCALE * dt.sqrt()
}

/// First snapshot row whose minimum adjacent gap is below `margin`.
fn margin_stop_row(positions: &[Vec<f64>], margin: f64) -> Option<usize> {
    positions.iter().position(|row| {
        (0..row.len().saturating_sub(1)).any(|i| row[i + 1] - row[i] < margin)
    })
}

/// Accumulation span: the stopped row (if any) and the row at which
/// snapshot terms are taken.
fn weight_span(path: &PathRecord) -> (Option<usize>, usize) {
    let last = path.positions.len() - 1;
    let stop = margin_stop_row(&path.positions, reliability_margin(path.dt));
    let tau = stop.unwrap_or(last).min(last);
    (stop, tau)
}

// ── conditioning of independent curves on mutual avoidance ───────────────

/// Log-weight conditioning independently grown curves to look like a
/// mutually avoiding ensemble:
///
/// ```text
///   prod_i  H^i'(w^i_t)^{h_i}
///           exp{ -(c_i/6) ∫ S H^i(w^i_s) c^i_s ds
///                + sum_{k != i} ∫ 2 h_i a^k_s / (x^i_s - x^k_s)^2 ds }.
/// ```
///
/// Requires an independent-mode record (the per-curve seam data is taken
/// from the recorded rows). The time integrals are left-endpoint Riemann
/// sums over the rows before the margin stop.
pub fn cardy_weight(path: &PathRecord) -> Result<LogWeight> {
    let n = path.n();
    if path.mode != DynamicsMode::Independent {
        return Err(Error::config("cardy weight needs an independent-mode record"));
    }
    let hp = path
        .h_derivatives
        .as_ref()
        .ok_or_else(|| Error::config("record lacks per-curve derivative rows"))?;
    let sh = path
        .h_schwarzians
        .as_ref()
        .ok_or_else(|| Error::config("record lacks per-curve Schwarzian rows"))?;
    let h: Vec<f64> = path.kappas.iter().map(|&k| h_weight(k)).collect::<Result<_>>()?;
    let c: Vec<f64> = path.kappas.iter().map(|&k| central_charge(k)).collect::<Result<_>>()?;
    // Per-curve capacity speeds; H' = 1 exactly on the first row.
    let cs = &path.speeds[0];
    let (stop, tau) = weight_span(path);
    let mut time_part = 0.0;
    for s in 0..tau {
        let x = &path.positions[s];
        let a = &path.speeds[s];
        for i in 0..n {
            time_part -= c[i] / 6.0 * sh[s][i] * cs[i] * path.dt;
            for k in 0..n {
                if k != i {
                    let d = x[i] - x[k];
                    time_part += 2.0 * h[i] * a[k] * path.dt / (d * d);
                }
            }
        }
    }
    let snapshot_part = (0..n).map(|i| h[i] * hp[tau][i].ln()).sum();
    Ok(LogWeight { stochastic_part: 0.0, time_part, snapshot_part, stopped_step: stop })
}

// ── steering by a partition function ─────────────────────────────────────

/// Log-weight between the repulsion-only ensemble and the one steered by
/// the partition function `spec`:
///
/// ```text
///   (Z[x_t] / Z[x_0]) · exp{ -sum_i ∫ bracket_i(x_s) a^i_s ds },
/// ```
///
/// where `bracket_i` is the drift-rate bracket
/// `(1/Z)[(kappa_i/2) ∂_i² Z + sum_{k != i} 2 ∂_k Z/(x_k - x_i)]`. With
/// `reduced = true` the null-vector equation replaces the bracket by
/// `sum_{k != i} 2 h_k/(x_i - x_k)^2`, which is exact when the residual
/// vanishes and is the form whose cross terms cancel against
/// [`cardy_weight`] in the combined density.
pub fn conformal_weight(path: &PathRecord, spec: &PartitionSpec, reduced: bool) -> Result<LogWeight> {
    let n = path.n();
    if spec.n() != n {
        return Err(Error::config("partition spec and path disagree on curve count"));
    }
    let (stop, tau) = weight_span(path);
    let mut time_part = 0.0;
    for s in 0..tau {
        let x = &path.positions[s];
        for i in 0..n {
            time_part -= spec.nve_bracket(x, i, reduced)? * path.speeds[s][i] * path.dt;
        }
    }
    let snapshot_part = spec.log_z(&path.positions[tau])? - spec.log_z(&path.positions[0])?;
    Ok(LogWeight { stochastic_part: 0.0, time_part, snapshot_part, stopped_step: stop })
}

// ── combined conditioning ────────────────────────────────────────────────

/// Log-weight taking independent curves directly to the `spec`-steered
/// mutually avoiding ensemble:
///
/// ```text
///   (Z[x_t]/Z[x_0]) · prod_i H^i'(w^i_t)^{h_i}
///                     exp{ -(c_i/6) ∫ S H^i(w^i_s) c^i_s ds }.
/// ```
///
/// Valid only when `spec` satisfies the null-vector equations at the
/// initial configuration (the Coulomb cross terms of the two factor
/// weights then cancel exactly); fails with `NveViolated` otherwise.
/// Equals `cardy_weight + conformal_weight(reduced)` row for row.
pub fn combined_weight(path: &PathRecord, spec: &PartitionSpec) -> Result<LogWeight> {
    let n = path.n();
    if path.mode != DynamicsMode::Independent {
        return Err(Error::config("combined weight needs an independent-mode record"));
    }
    if spec.n() != n {
        return Err(Error::config("partition spec and path disagree on curve count"));
    }
    let hp = path
        .h_derivatives
        .as_ref()
        .ok_or_else(|| Error::config("record lacks per-curve derivative rows"))?;
    let sh = path
        .h_schwarzians
        .as_ref()
        .ok_or_else(|| Error::config("record lacks per-curve Schwarzian rows"))?;
    let x0 = &path.positions[0];
    let mut residual = 0.0_f64;
    for i in 0..n {
        residual = residual.max(spec.nve_residual(x0, i)?.abs());
    }
    if residual > NVE_GUARD_TOL {
        return Err(Error::NveViolated { residual });
    }
    let h: Vec<f64> = path.kappas.iter().map(|&k| h_weight(k)).collect::<Result<_>>()?;
    let c: Vec<f64> = path.kappas.iter().map(|&k| central_charge(k)).collect::<Result<_>>()?;
    let cs = &path.speeds[0];
    let (stop, tau) = weight_span(path);
    let mut time_part = 0.0;
    for s in 0..tau {
        for i in 0..n {
            time_part -= c[i] / 6.0 * sh[s][i] * cs[i] * path.dt;
        }
    }
    let mut snapshot_part = spec.log_z(&path.positions[tau])? - spec.log_z(x0)?;
    for i in 0..n {
        snapshot_part += h[i] * hp[tau][i].ln();
    }
    Ok(LogWeight { stochastic_part: 0.0, time_part, snapshot_part, stopped_step: stop })
}

// ── restriction: conditioning one curve to avoid a boundary hull ─────────

/// Log-weight conditioning a single curve to avoid a fixed boundary hull
/// (a vertical slit away from the starting point):
///
/// ```text
///   D_t = (Phi_t'(w_t)^h / h'(w_0)^h)
///         · exp{ -(c/6) ∫ S Phi_s(w_s) c_s ds },
/// ```
///
/// where `h` maps the hull away, `g_t` rectifies the curve, `ghat_t`
/// rectifies the image curve `h(gamma)`, and `Phi_t = ghat_t ∘ h ∘
/// g_t^{-1}`. The image chain is rebuilt in lockstep with the path: each
/// step contributes the slit `(Phi_s(w_s), Phi_s'(w_s)^2 c_s dt)`. The
/// hull's base endpoints are tracked through `g_t`, and accumulation stops
/// (keeping the stopped value) when the driving point comes within the
/// reliability margin of their images; a path that starts inside the
/// margin is rejected with `HullHit`.
///
/// Exact special cases short-circuit: a capacity-zero hull gives weight 0,
/// and `kappa = 6` (where `h = c = 0`) gives weight 0 for every path and
/// hull.
pub fn restriction_weight(path: &PathRecord, hull: &ElementarySlit) -> Result<LogWeight> {
    if path.n() != 1 {
        return Err(Error::config("restriction weight is defined for single-curve paths"));
    }
    let kappa = path.kappas[0];
    let hw = h_weight(kappa)?;
    let cc = central_charge(kappa)?;
    if hull.capacity == 0.0 || (hw == 0.0 && cc == 0.0) {
        return Ok(LogWeight::ZERO);
    }

    // Rectifying chain of the curve and its driving row. Independent-mode
    // records carry them per curve; global-mode single-curve records carry
    // the same data as the global chain.
    let (slits, w_row): (&[ElementarySlit], Box<dyn Fn(usize) -> f64>) =
        if path.mode == DynamicsMode::Independent {
            let rows = path
                .curve_driving
                .as_ref()
                .ok_or_else(|| Error::config("record lacks per-curve driving rows"))?;
            (path.curve_chains[0].slits(), Box::new(move |s| rows[s][0]))
        } else {
            (path.global_chain.slits(), Box::new(|s| path.positions[s][0]))
        };
    let dt = path.dt;
    let margin = reliability_margin(dt);
    let last = path.positions.len() - 1;
    // Fold height of the largest single-step slit: contours should clear it.
    let fold = 2.0 * slits.iter().map(|s| s.capacity).fold(0.0_f64, f64::max).sqrt();

    let mut qm = hull.center - hull.half_width();
    let mut qp = hull.center + hull.half_width();
    let mut ghat: Vec<ElementarySlit> = Vec::with_capacity(last);
    let mut time_part = 0.0;
    let mut stop = None;
    let mut tau = last;
    for s in 0..=last {
        let w = w_row(s);
        let dist = (w - qm).abs().min((w - qp).abs());
        let inside = w >= qm && w <= qp;
        if dist < margin || inside {
            if s == 0 {
                return Err(Error::HullHit);
            }
            stop = Some(s);
            tau = s;
            break;
        }
        if s == last {
            break;
        }
        let cs = slits[s].capacity / dt;
        let taylor = {
            let eval = phi_eval(&slits[..s], hull, &ghat);
            if cc != 0.0 {
                // Need the Schwarzian rate: accurate contour.
                contour_taylor_batch(&eval, w, contour_radius(ACCURATE_RADIUS_FRACTION, dist, fold), ACCURATE_SAMPLES)?
            } else {
                // Only the image position and derivative feed the rebuild.
                contour_taylor_batch(&eval, w, contour_radius(REBUILD_RADIUS_FRACTION, dist, fold), REBUILD_SAMPLES)?
            }
        };
        let [v, d1, d2, d3] = taylor;
        if !(d1 > 0.0) || !v.is_finite() {
            return Err(Error::DerivativeUnavailable);
        }
        if cc != 0.0 {
            let sphi = d3 / d1 - 1.5 * (d2 / d1) * (d2 / d1);
            time_part -= cc / 6.0 * sphi * cs * dt;
        }
        ghat.push(ElementarySlit::new(v, d1 * d1 * cs * dt)?);
        qm = slits[s].apply_boundary_point(qm);
        qp = slits[s].apply_boundary_point(qp);
    }

    // Endpoint snapshot at the (possibly stopped) row.
    let w_tau = w_row(tau);
    let dist_tau = (w_tau - qm).abs().min((w_tau - qp).abs());
    let eval = phi_eval(&slits[..tau], hull, &ghat[..tau]);
    let taylor = contour_taylor_batch(
        &eval,
        w_tau,
        contour_radius(ACCURATE_RADIUS_FRACTION, dist_tau, fold),
        ACCURATE_SAMPLES,
    )?;
    let d1_tau = taylor[1];
    if !(d1_tau > 0.0) {
        return Err(Error::DerivativeUnavailable);
    }
    let h_jet = RJet::seed(w_row(0)).through_slit(hull)?;
    let snapshot_part = hw * (d1_tau.ln() - h_jet.d1.ln());
    Ok(LogWeight { stochastic_part: 0.0, time_part, snapshot_part, stopped_step: stop })
}

/// Batch evaluator for `Phi = ghat ∘ h ∘ g^{-1}` over slit slices. All
/// contour points advance through each chain factor together, so the
/// per-point square-root chains overlap in the pipeline; with thousands of
/// factors per row this is the dominant cost of the weight.
fn phi_eval<'a>(
    g: &'a [ElementarySlit],
    hull: &'a ElementarySlit,
    ghat: &'a [ElementarySlit],
) -> impl Fn(&mut [Complex64]) -> Result<()> + 'a {
    move |pts| {
        for s in g.iter().rev() {
            for p in pts.iter_mut() {
                *p = s.invert(*p);
            }
        }
        for p in pts.iter_mut() {
            *p = hull.apply(*p)?;
        }
        for t in ghat {
            for p in pts.iter_mut() {
                *p = t.apply(*p)?;
            }
        }
        Ok(())
    }
}

/// Contour radius: the requested fraction of the available distance,
/// nudged above the fold height of the discrete slits when possible, and
/// always strictly inside the available distance.
fn contour_radius(fraction: f64, dist: f64, fold: f64) -> f64 {
    (fraction * dist).max(1.2 * fold).min(0.8 * dist).min(RADIUS_MAX)
}

// ── tests ────────────────────────────────────────────────────────────────
