//! Partition functions for systems of interacting chordal curves.
//!
//! A system of `n` curves with parameters `kappa_i` growing from boundary
//! points `x_1 < ... < x_n` is steered by a positive function `Z(x)` on the
//! chamber, entering the drift through `grad log Z`. For `Z` to weight the
//! curves consistently it must satisfy one null-vector equation per index:
//!
//! ```text
//!   (k_i/2) Z_ii + sum_{k != i} [ 2 Z_k / (x_k - x_i) - 2 h_k Z / (x_k - x_i)^2 ] = 0,
//! ```
//!
//! where `h = (6 - kappa) / (2 kappa)` is the boundary scaling weight. This
//! module evaluates `Z`, its logarithmic derivatives (closed-form where
//! available, high-order finite differences for tabulated data), the
//! normalised residual of the equation above, and the defect by which `Z`
//! fails Möbius covariance.

use std::fmt;
use std::sync::Arc;

use crate::conformal::MoebiusMap;
use crate::error::{Error, Result};

/// Boundary scaling weight `h = (6 - kappa) / (2 kappa)`.
pub fn h_weight(kappa: f64) -> Result<f64> {
    check_kappa(kappa)?;
    Ok((6.0 - kappa) / (2.0 * kappa))
}

/// Central charge `c = (6 - kappa)(3 kappa - 8) / (2 kappa)`; invariant
/// under `kappa -> 16 / kappa`.
pub fn central_charge(kappa: f64) -> Result<f64> {
    check_kappa(kappa)?;
    Ok((6.0 - kappa) * (3.0 * kappa - 8.0) / (2.0 * kappa))
}

/// The two exponents `a` for which `(x2 - x1)^a` solves both two-curve
/// null-vector equations with equal `kappa`: `2/kappa` and `(kappa-6)/kappa`.
pub fn two_point_exponents(kappa: f64) -> Result<[f64; 2]> {
    check_kappa(kappa)?;
    Ok([2.0 / kappa, (kappa - 6.0) / kappa])
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !kappa.is_finite() || kappa <= 0.0 {
        return Err(Error::InvalidKappa(kappa));
    }
    Ok(())
}

/// Noise strengths admissible in simulation: `kappa = 0` runs the
/// deterministic drift flow, so only negative or non-finite values are
/// rejected here. The weight formulas above still demand `kappa > 0`.
pub fn check_kappa_simulable(kappa: f64) -> Result<()> {
    if !kappa.is_finite() || kappa < 0.0 {
        return Err(Error::InvalidKappa(kappa));
    }
    Ok(())
}

/// Require strictly increasing, finite coordinates.
pub fn validate_chamber(x: &[f64]) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::ChamberViolation);
    }
    if x.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::ChamberViolation);
    }
    Ok(())
}

/// Smallest gap between neighbouring coordinates; unit scale for a single
/// curve, where no interaction distance exists.
pub fn min_gap(x: &[f64]) -> f64 {
    let g = x.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    if g.is_finite() {
        g
    } else {
        1.0
    }
}

/// Step factor for finite-difference gradients of tabulated data.
pub const TABULATED_GRAD_STEP_FACTOR: f64 = 1e-4;

/// Functional form of the steering function.
#[derive(Clone)]
pub enum ZForm {
    /// `Z = 1`: curves interact only through the Loewner flow itself.
    Constant,
    /// `Z = (x2 - x1)^a` for exactly two curves.
    TwoPointPower { exponent: f64 },
    /// Arbitrary positive callable; derivatives fall back to finite
    /// differences with step `1e-4 * min_gap`.
    Tabulated(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl fmt::Debug for ZForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ZForm::Constant => write!(f, "Constant"),
            ZForm::TwoPointPower { exponent } => {
                write!(f, "TwoPointPower {{ exponent: {exponent} }}")
            }
            ZForm::Tabulated(_) => write!(f, "Tabulated(..)"),
        }
    }
}

/// Parameters of the curve system together with its steering function.
#[derive(Debug, Clone)]
pub struct PartitionSpec {
    kappas: Vec<f64>,
    form: ZForm,
}

impl PartitionSpec {
    pub fn new(kappas: Vec<f64>, form: ZForm) -> Result<Self> {
        if kappas.is_empty() {
            return Err(Error::config("need at least one curve".to_string()));
        }
        for &k in &kappas {
            check_kappa_simulable(k)?;
        }
        if matches!(form, ZForm::TwoPointPower { .. }) && kappas.len() != 2 {
            return Err(Error::config(format!(
                "two-point power form needs exactly 2 curves, got {}",
                kappas.len()
            )));
        }
        Ok(Self { kappas, form })
    }

    pub fn n(&self) -> usize {
        self.kappas.len()
    }

    pub fn kappas(&self) -> &[f64] {
        &self.kappas
    }

    pub fn form(&self) -> &ZForm {
        &self.form
    }

    /// Scaling weights of all curves; fails if any `kappa` is zero.
    pub fn h_weights(&self) -> Result<Vec<f64>> {
        self.kappas.iter().map(|&k| h_weight(k)).collect()
    }

    fn check_positions(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::config(format!(
                "expected {} coordinates, got {}",
                self.n(),
                x.len()
            )));
        }
        validate_chamber(x)
    }

    /// Value of `Z` at a chamber point.
    pub fn z_value(&self, x: &[f64]) -> Result<f64> {
        self.check_positions(x)?;
        let v = match &self.form {
            ZForm::Constant => 1.0,
            ZForm::TwoPointPower { exponent } => (x[1] - x[0]).powf(*exponent),
            ZForm::Tabulated(f) => f(x),
        };
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::ChamberViolation);
        }
        Ok(v)
    }

    pub fn log_z(&self, x: &[f64]) -> Result<f64> {
        Ok(self.z_value(x)?.ln())
    }

    /// `grad log Z`; closed form except for tabulated data.
    pub fn grad_log_z(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_positions(x)?;
        match &self.form {
            ZForm::Constant => Ok(vec![0.0; self.n()]),
            ZForm::TwoPointPower { exponent } => {
                let s = x[1] - x[0];
                Ok(vec![-exponent / s, exponent / s])
            }
            ZForm::Tabulated(_) => {
                (0..self.n()).map(|i| self.fd_log_derivative(x, i).map(|d| d.0)).collect()
            }
        }
    }

    /// Second logarithmic derivative in one coordinate, `d^2/dx_i^2 log Z`.
    pub fn second_log_derivative(&self, x: &[f64], i: usize) -> Result<f64> {
        self.check_positions(x)?;
        self.index_check(i)?;
        match &self.form {
            ZForm::Constant => Ok(0.0),
            ZForm::TwoPointPower { exponent } => {
                let s = x[1] - x[0];
                Ok(-exponent / (s * s))
            }
            ZForm::Tabulated(_) => Ok(self.fd_log_derivative(x, i)?.1),
        }
    }

    fn index_check(&self, i: usize) -> Result<()> {
        if i >= self.n() {
            return Err(Error::config(format!("curve index {i} out of range")));
        }
        Ok(())
    }

    /// Fourth-order central differences of `log Z` in coordinate `i` with
    /// step `1e-4 * min_gap`; returns `(first, second)` derivatives.
    fn fd_log_derivative(&self, x: &[f64], i: usize) -> Result<(f64, f64)> {
        let h = TABULATED_GRAD_STEP_FACTOR * min_gap(x);
        let mut pt = x.to_vec();
        let mut f = [0.0f64; 5];
        for (k, j) in (-2i32..=2).enumerate() {
            pt[i] = x[i] + j as f64 * h;
            f[k] = self.log_unchecked(&pt)?;
        }
        let d1 = (f[0] - 8.0 * f[1] + 8.0 * f[3] - f[4]) / (12.0 * h);
        let d2 = (-f[0] + 16.0 * f[1] - 30.0 * f[2] + 16.0 * f[3] - f[4]) / (12.0 * h * h);
        Ok((d1, d2))
    }

    /// Evaluate `log Z` without the chamber check, for stencil points that
    /// may sit a hair outside strict ordering guarantees.
    fn log_unchecked(&self, x: &[f64]) -> Result<f64> {
        let v = match &self.form {
            ZForm::Constant => 1.0,
            ZForm::TwoPointPower { exponent } => (x[1] - x[0]).powf(*exponent),
            ZForm::Tabulated(f) => f(x),
        };
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::ChamberViolation);
        }
        Ok(v.ln())
    }

    /// Normalised null-vector residual in index `i`:
    ///
    /// ```text
    ///   (k_i/2) (Z_ii/Z) + sum_{k != i} [ 2 (Z_k/Z) / (x_k - x_i)
    ///                                     - 2 h_k / (x_k - x_i)^2 ],
    /// ```
    ///
    /// expressed through logarithmic derivatives. Zero for a valid steering
    /// function; the magnitude measures how badly the equation fails.
    pub fn nve_residual(&self, x: &[f64], i: usize) -> Result<f64> {
        Ok(self.nve_bracket(x, i, false)? - self.nve_bracket_reduced(x, i)?)
    }

    /// The drift-rate bracket appearing in time-derivative identities:
    /// with `reduced = false` it is `(1/Z)[(k_i/2) Z_ii + sum 2 Z_k/(x_k-x_i)]`
    /// evaluated from derivatives of `Z`; with `reduced = true` the
    /// null-vector equation replaces it by `sum_k 2 h_k / (x_i - x_k)^2`.
    pub fn nve_bracket(&self, x: &[f64], i: usize, reduced: bool) -> Result<f64> {
        if reduced {
            return self.nve_bracket_reduced(x, i);
        }
        self.check_positions(x)?;
        self.index_check(i)?;
        let g = self.grad_log_z(x)?;
        let gii = self.second_log_derivative(x, i)?;
        let mut acc = 0.5 * self.kappas[i] * (gii + g[i] * g[i]);
        for k in 0..self.n() {
            if k != i {
                acc += 2.0 * g[k] / (x[k] - x[i]);
            }
        }
        Ok(acc)
    }

    fn nve_bracket_reduced(&self, x: &[f64], i: usize) -> Result<f64> {
        self.check_positions(x)?;
        self.index_check(i)?;
        let h = self.h_weights()?;
        let mut acc = 0.0;
        for k in 0..self.n() {
            if k != i {
                let d = x[i] - x[k];
                acc += 2.0 * h[k] / (d * d);
            }
        }
        Ok(acc)
    }

    /// Relative amount by which `Z` fails Möbius covariance under `phi`:
    ///
    /// ```text
    ///   Z(phi x) * prod_i phi'(x_i)^{h_i} / Z(x)  -  1.
    /// ```
    ///
    /// Zero exactly when `Z` transforms as a correlation of boundary fields
    /// with weights `h_i`. The map must keep the configuration inside the
    /// chamber (no pole between the points).
    pub fn moebius_covariance_defect(&self, x: &[f64], phi: &MoebiusMap) -> Result<f64> {
        self.check_positions(x)?;
        let mut image = Vec::with_capacity(self.n());
        let mut jacobian_pow = 1.0;
        let h = self.h_weights()?;
        for (i, &xi) in x.iter().enumerate() {
            image.push(phi.apply_boundary_point(xi)?);
            jacobian_pow *= phi.derivative(xi)?.powf(h[i]);
        }
        validate_chamber(&image)?;
        let ratio = self.z_value(&image)? / self.z_value(x)?;
        Ok(ratio * jacobian_pow - 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_at_reference_parameters() {
        assert_eq!(h_weight(2.0).unwrap(), 1.0);
        assert!((h_weight(8.0 / 3.0).unwrap() - 0.625).abs() < 1e-15);
        assert_eq!(h_weight(6.0).unwrap(), 0.0);
        assert_eq!(central_charge(2.0).unwrap(), -2.0);
        assert_eq!(central_charge(8.0).unwrap(), -2.0);
        assert!(central_charge(8.0 / 3.0).unwrap().abs() < 1e-15);
        assert_eq!(central_charge(6.0).unwrap(), 0.0);
        assert!(h_weight(-1.0).is_err());
        assert!(central_charge(0.0).is_err());
        assert!(h_weight(f64::NAN).is_err());
    }

    #[test]
    fn central_charge_is_dual_under_sixteen_over_kappa() {
        for k in [0.5, 1.0, 2.0, 8.0 / 3.0, 3.0, 4.0, 6.0, 7.5, 8.0, 12.0] {
            let a = central_charge(k).unwrap();
            let b = central_charge(16.0 / k).unwrap();
            assert!((a - b).abs() < 1e-12, "kappa {k}: {a} vs {b}");
        }
    }

    #[test]
    fn exponent_pairs_at_reference_parameters() {
        let e = two_point_exponents(2.0).unwrap();
        assert_eq!(e, [1.0, -2.0]);
        let e = two_point_exponents(8.0 / 3.0).unwrap();
        assert!((e[0] - 0.75).abs() < 1e-15 && (e[1] + 1.25).abs() < 1e-15);
        let e = two_point_exponents(6.0).unwrap();
        assert!((e[0] - 1.0 / 3.0).abs() < 1e-15 && e[1] == 0.0);
    }

    #[test]
    fn exponents_are_roots_of_the_indicial_equation() {
        for k in [1.0, 2.0, 8.0 / 3.0, 3.7, 6.0, 8.0] {
            let h = h_weight(k).unwrap();
            for a in two_point_exponents(k).unwrap() {
                let q = 0.5 * k * a * (a - 1.0) + 2.0 * a - 2.0 * h;
                assert!(q.abs() < 1e-12, "kappa {k}, a {a}: {q}");
            }
        }
    }

    #[test]
    fn residual_vanishes_for_valid_exponents() {
        for k in [2.0, 8.0 / 3.0, 4.0, 6.0] {
            for a in two_point_exponents(k).unwrap() {
                let spec =
                    PartitionSpec::new(vec![k, k], ZForm::TwoPointPower { exponent: a }).unwrap();
                for x in [[0.0, 1.0], [-2.0, 0.5], [0.3, 0.31]] {
                    for i in 0..2 {
                        let r = spec.nve_residual(&x, i).unwrap();
                        assert!(r.abs() < 1e-9, "kappa {k}, a {a}, x {x:?}, i {i}: {r}");
                    }
                }
            }
        }
    }

    #[test]
    fn residual_of_an_invalid_exponent_is_the_indicial_value() {
        // kappa = 2, a = 2 at unit separation: (1)(2)(1) + 4 - 2 = 4.
        let spec = PartitionSpec::new(vec![2.0, 2.0], ZForm::TwoPointPower { exponent: 2.0 })
            .unwrap();
        let r = spec.nve_residual(&[0.0, 1.0], 0).unwrap();
        assert!((r - 4.0).abs() < 1e-10, "{r}");
        // At separation s the residual scales like s^-2.
        let r = spec.nve_residual(&[0.0, 2.0], 0).unwrap();
        assert!((r - 1.0).abs() < 1e-10, "{r}");
    }

    #[test]
    fn tabulated_derivatives_match_closed_forms() {
        let a = 0.75;
        let spec = PartitionSpec::new(
            vec![8.0 / 3.0, 8.0 / 3.0],
            ZForm::Tabulated(Arc::new(move |x: &[f64]| (x[1] - x[0]).powf(a))),
        )
        .unwrap();
        let exact = PartitionSpec::new(
            vec![8.0 / 3.0, 8.0 / 3.0],
            ZForm::TwoPointPower { exponent: a },
        )
        .unwrap();
        let x = [0.2, 1.7];
        let g = spec.grad_log_z(&x).unwrap();
        let ge = exact.grad_log_z(&x).unwrap();
        assert!((g[0] - ge[0]).abs() < 1e-9 && (g[1] - ge[1]).abs() < 1e-9, "{g:?} vs {ge:?}");
        let s2 = spec.second_log_derivative(&x, 0).unwrap();
        let s2e = exact.second_log_derivative(&x, 0).unwrap();
        assert!((s2 - s2e).abs() < 1e-6, "{s2} vs {s2e}");
        let r = spec.nve_residual(&x, 1).unwrap();
        assert!(r.abs() < 1e-6, "{r}");
    }

    #[test]
    fn covariance_holds_only_for_the_matching_exponent() {
        let k = 8.0 / 3.0;
        let h = h_weight(k).unwrap();
        let x = [0.0, 1.0];
        let phi = MoebiusMap::new(2.0, 1.0, 0.0, 1.0).unwrap();
        // Covariant branch: a = -2h = (kappa - 6)/kappa.
        let a_cov = (k - 6.0) / k;
        assert!((a_cov + 2.0 * h).abs() < 1e-15);
        let spec =
            PartitionSpec::new(vec![k, k], ZForm::TwoPointPower { exponent: a_cov }).unwrap();
        let d = spec.moebius_covariance_defect(&x, &phi).unwrap();
        assert!(d.abs() < 1e-12, "covariant defect {d}");
        // The other exponent scales with total weight a/2 + h = 1, so the
        // map z -> 2z + 1 produces defect 4^1 - 1 = 3.
        let spec =
            PartitionSpec::new(vec![k, k], ZForm::TwoPointPower { exponent: 2.0 / k }).unwrap();
        let d = spec.moebius_covariance_defect(&x, &phi).unwrap();
        assert!((d - 3.0).abs() < 1e-12, "non-covariant defect {d}");
    }

    #[test]
    fn covariance_under_general_moebius_maps() {
        for k in [2.0, 3.0, 6.0] {
            let a = (k - 6.0) / k;
            let spec =
                PartitionSpec::new(vec![k, k], ZForm::TwoPointPower { exponent: a }).unwrap();
            let x = [0.5, 2.0];
            // Pole at -10, far outside the configuration.
            let phi = MoebiusMap::new(1.0, 0.5, 0.1, 1.0).unwrap();
            let d = spec.moebius_covariance_defect(&x, &phi).unwrap();
            assert!(d.abs() < 1e-12, "kappa {k}: {d}");
        }
    }

    #[test]
    fn constant_form_is_covariant_only_without_weights() {
        let phi = MoebiusMap::scaling(3.0).unwrap();
        let x = [0.0, 1.0];
        let neutral = PartitionSpec::new(vec![6.0, 6.0], ZForm::Constant).unwrap();
        assert!(neutral.moebius_covariance_defect(&x, &phi).unwrap().abs() < 1e-14);
        let weighted = PartitionSpec::new(vec![2.0, 2.0], ZForm::Constant).unwrap();
        // Jacobian factor 3^{h_1 + h_2} = 9.
        let d = weighted.moebius_covariance_defect(&x, &phi).unwrap();
        assert!((d - 8.0).abs() < 1e-12, "{d}");
    }

    #[test]
    fn chamber_ordering_is_enforced() {
        let spec = PartitionSpec::new(vec![2.0, 2.0], ZForm::Constant).unwrap();
        assert!(matches!(spec.z_value(&[1.0, 0.0]), Err(Error::ChamberViolation)));
        assert!(matches!(spec.z_value(&[0.0, 0.0]), Err(Error::ChamberViolation)));
        assert!(spec.z_value(&[0.0, 1e-9]).is_ok());
    }

    #[test]
    fn two_point_form_requires_two_curves() {
        assert!(PartitionSpec::new(vec![2.0], ZForm::TwoPointPower { exponent: 1.0 }).is_err());
        assert!(
            PartitionSpec::new(vec![2.0; 3], ZForm::TwoPointPower { exponent: 1.0 }).is_err()
        );
    }

    #[test]
    fn min_gap_handles_degenerate_sizes() {
        assert_eq!(min_gap(&[]), 1.0);
        assert_eq!(min_gap(&[3.0]), 1.0);
        assert_eq!(min_gap(&[0.0, 0.25, 1.0]), 0.25);
    }
}
