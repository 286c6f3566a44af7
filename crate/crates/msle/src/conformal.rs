//! Conformal building blocks: vertical-slit maps, Möbius maps of the upper
//! half-plane, and their ordered compositions (Loewner chains).
//!
//! A slit of capacity `d` centred at `u` removes the vertical segment from
//! `u` to `u + 2i*sqrt(d)` and is rectified by
//!
//! ```text
//!     g(z) = u + sqrt((z - u)^2 + 4d),
//! ```
//!
//! with the branch chosen so the upper half-plane maps to itself and
//! `g(z) = z + 2d/z + O(1/z^2)` at infinity, i.e. the half-plane capacity of
//! the removed segment is exactly `d`. Compositions therefore add capacities.
//!
//! Boundary derivatives come in two flavours: finite differences on the real
//! axis ([`map_derivative`], [`boundary_derivatives`], [`schwarzian`]) for any
//! evaluator, and exact chain-rule jets ([`CJet`], [`RJet`]) that accumulate
//! the first three derivatives slit by slit. The two routes are checked
//! against each other in the test suite.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

// ── elementary slit ──────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElementarySlit {
    /// Foot of the slit on the real axis.
    pub center: f64,
    /// Half-plane capacity of the removed segment (tip height `2*sqrt(capacity)`).
    pub capacity: f64,
}

impl ElementarySlit {
    pub fn new(center: f64, capacity: f64) -> Result<Self> {
        if !center.is_finite() || !capacity.is_finite() || capacity < 0.0 {
            return Err(Error::config(format!(
                "slit needs finite center and capacity >= 0, got ({center}, {capacity})"
            )));
        }
        Ok(Self { center, capacity })
    }

    /// Half-width `2*sqrt(d)` of the interval the base folds onto.
    pub fn half_width(&self) -> f64 {
        2.0 * self.capacity.sqrt()
    }

    /// Top end of the removed segment.
    pub fn tip(&self) -> Complex64 {
        Complex64::new(self.center, self.half_width())
    }

    /// Rectifying map. Defined on the closed half-plane minus the open slit
    /// segment; the tip maps to the center, the two sides of the slit fold
    /// onto `[center - 2*sqrt(d), center + 2*sqrt(d)]`.
    pub fn apply(&self, z: Complex64) -> Result<Complex64> {
        if z.im < 0.0 {
            // Schwarz reflection keeps stray below-axis round-off harmless.
            return Ok(self.apply(z.conj())?.conj());
        }
        let u = self.center;
        let d4 = 4.0 * self.capacity;
        let vr = z.re - u;
        let vi = z.im;
        if vi == 0.0 {
            return Ok(Complex64::new(self.apply_boundary_point(z.re), 0.0));
        }
        if vr == 0.0 {
            // On the slit axis. Interior of the segment is excluded; the
            // clamp absorbs round-off at the tip itself.
            let h = self.half_width();
            if vi < h {
                return Err(Error::InsideSlit { index: 0 });
            }
            return Ok(Complex64::new(u, (vi * vi - d4).max(0.0).sqrt()));
        }
        let v = Complex64::new(vr, vi);
        let r = principal_sqrt(v * v + d4);
        Ok(if vr > 0.0 { u + r } else { u - r })
    }

    /// Boundary restriction of `apply`. Total on the reals: the base point
    /// itself takes the right-hand limit `center + 2*sqrt(d)`.
    pub fn apply_boundary_point(&self, x: f64) -> f64 {
        let v = x - self.center;
        let r = (v * v + 4.0 * self.capacity).sqrt();
        if v >= 0.0 {
            self.center + r
        } else {
            self.center - r
        }
    }

    /// Inverse map, total on the closed half-plane. Real points inside
    /// `(center - 2*sqrt(d), center + 2*sqrt(d))` land on the slit segment.
    pub fn invert(&self, w: Complex64) -> Complex64 {
        if w.im < 0.0 {
            return self.invert(w.conj()).conj();
        }
        let u = self.center;
        let d4 = 4.0 * self.capacity;
        let vr = w.re - u;
        let vi = w.im;
        if vi == 0.0 {
            let q = vr * vr - d4;
            return if q >= 0.0 {
                let r = q.sqrt();
                Complex64::new(if vr >= 0.0 { u + r } else { u - r }, 0.0)
            } else {
                Complex64::new(u, (-q).sqrt())
            };
        }
        if vr == 0.0 {
            return Complex64::new(u, (vi * vi + d4).sqrt());
        }
        let v = Complex64::new(vr, vi);
        let r = principal_sqrt(v * v - d4);
        if vr > 0.0 {
            u + r
        } else {
            u - r
        }
    }

    /// `g(z) - z`, evaluated without the catastrophic cancellation that a
    /// plain subtraction suffers far from the slit: with the branched root
    /// `r`, the identity `r^2 - v^2 = 4d` gives `g(z) - z = 4d / (r + v)`.
    pub fn offset(&self, z: Complex64) -> Result<Complex64> {
        if z.im < 0.0 {
            return Ok(self.offset(z.conj())?.conj());
        }
        let v = Complex64::new(z.re - self.center, z.im);
        let r = branched_sqrt(v, 4.0 * self.capacity)?;
        let den = r + v;
        if den.norm_sqr() < 1e-12 {
            return Ok(r - v);
        }
        Ok(4.0 * self.capacity / den)
    }

    /// Boundary inverse; fails for points that pull back onto the slit.
    pub fn invert_boundary_point(&self, w: f64) -> Result<f64> {
        let v = w - self.center;
        let q = v * v - 4.0 * self.capacity;
        if q < 0.0 {
            return Err(Error::InsideSlit { index: 0 });
        }
        let r = q.sqrt();
        Ok(if v >= 0.0 {
            self.center + r
        } else {
            self.center - r
        })
    }
}

/// Branch of `sqrt(v^2 + d4)` continuous with `+v` on the right real side
/// and `-v` on the left, taking the positive-imaginary root on the axis
/// between. This is the root for which `center + r` defines the slit map
/// (`d4 = 4 capacity`) and its inverse (`d4 = -4 capacity`) on the upper
/// half-plane.
fn branched_sqrt(v: Complex64, d4: f64) -> Result<Complex64> {
    let vr = v.re;
    let vi = v.im;
    if vi == 0.0 {
        let q = vr * vr + d4;
        return Ok(if q >= 0.0 {
            let r = q.sqrt();
            Complex64::new(if vr >= 0.0 { r } else { -r }, 0.0)
        } else {
            Complex64::new(0.0, (-q).sqrt())
        });
    }
    if vr == 0.0 {
        // v^2 + d4 = d4 - vi^2 is real and negative outside the slit, so the
        // root is purely imaginary; a positive value means v is on the
        // removed segment itself (forward map only).
        let q = vi * vi - d4;
        if q < 0.0 {
            return Err(Error::InsideSlit { index: 0 });
        }
        return Ok(Complex64::new(0.0, vi.signum() * q.max(0.0).sqrt()));
    }
    let r = principal_sqrt(v * v + d4);
    Ok(if vr > 0.0 { r } else { -r })
}

/// Principal complex square root by the algebraic half-angle formula. This
/// avoids the polar decomposition (`atan2` plus `sin`/`cos`) of the generic
/// implementation; slit evaluation spends most of its time here, so the
/// difference is a large constant factor on every chain walk. Magnitudes in
/// this crate stay far from the over/underflow range, so the unscaled
/// modulus is safe.
#[inline]
fn principal_sqrt(w: Complex64) -> Complex64 {
    let (x, y) = (w.re, w.im);
    let m = (x * x + y * y).sqrt();
    let t = (0.5 * (m + x.abs())).sqrt();
    if t == 0.0 {
        return Complex64::new(0.0, y);
    }
    if x >= 0.0 {
        Complex64::new(t, y / (2.0 * t))
    } else {
        Complex64::new(y.abs() / (2.0 * t), f64::copysign(t, y))
    }
}

// ── Möbius maps of the half-plane ────────────────────────────────────────

/// Real Möbius map `z -> (a z + b) / (c z + d)` with `a d - b c > 0`, so the
/// upper half-plane maps to itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoebiusMap {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl MoebiusMap {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        let det = a * d - b * c;
        if !det.is_finite() || det <= 0.0 {
            return Err(Error::config(format!(
                "Moebius map needs a*d - b*c > 0, got determinant {det}"
            )));
        }
        Ok(Self { a, b, c, d })
    }

    pub fn identity() -> Self {
        Self { a: 1.0, b: 0.0, c: 0.0, d: 1.0 }
    }

    pub fn translation(t: f64) -> Self {
        Self { a: 1.0, b: t, c: 0.0, d: 1.0 }
    }

    /// `z -> lambda z`, `lambda > 0`.
    pub fn scaling(lambda: f64) -> Result<Self> {
        Self::new(lambda, 0.0, 0.0, 1.0)
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    /// `self` after `other`: `(self ∘ other)(z) = self(other(z))`.
    pub fn compose(&self, other: &MoebiusMap) -> MoebiusMap {
        MoebiusMap {
            a: self.a * other.a + self.b * other.c,
            b: self.a * other.b + self.b * other.d,
            c: self.c * other.a + self.d * other.c,
            d: self.c * other.b + self.d * other.d,
        }
    }

    pub fn inverse(&self) -> MoebiusMap {
        MoebiusMap { a: self.d, b: -self.b, c: -self.c, d: self.a }
    }

    pub fn apply(&self, z: Complex64) -> Result<Complex64> {
        let den = self.c * z + self.d;
        if den.norm_sqr() == 0.0 {
            return Err(Error::PoleOnPosition { index: 0 });
        }
        Ok((self.a * z + self.b) / den)
    }

    pub fn apply_boundary_point(&self, x: f64) -> Result<f64> {
        let den = self.c * x + self.d;
        if den == 0.0 {
            return Err(Error::PoleOnPosition { index: 0 });
        }
        Ok((self.a * x + self.b) / den)
    }

    /// Derivative at a real point; always positive away from the pole.
    pub fn derivative(&self, x: f64) -> Result<f64> {
        let den = self.c * x + self.d;
        if den == 0.0 {
            return Err(Error::PoleOnPosition { index: 0 });
        }
        Ok(self.det() / (den * den))
    }

    /// Unique half-plane Möbius map sending three increasing real points to
    /// three increasing real points.
    pub fn from_three_points(src: [f64; 3], dst: [f64; 3]) -> Result<Self> {
        // Map sending (p0, p1, p2) to (0, 1, infinity).
        fn to_standard(p: [f64; 3]) -> MoebiusMap {
            MoebiusMap {
                a: p[1] - p[2],
                b: -p[0] * (p[1] - p[2]),
                c: p[1] - p[0],
                d: -p[2] * (p[1] - p[0]),
            }
        }
        let s = to_standard(src);
        let t = to_standard(dst);
        let m = t.inverse().compose(&s);
        let det = m.det();
        if !det.is_finite() || det == 0.0 {
            return Err(Error::config("degenerate three-point data".to_string()));
        }
        let sign = if det > 0.0 { 1.0 } else { -1.0 };
        Ok(MoebiusMap { a: sign * m.a, b: sign * m.b, c: sign * m.c, d: sign * m.d })
    }
}

// ── chains ───────────────────────────────────────────────────────────────

/// Ordered composition of slit maps with an optional Möbius prefix applied
/// before the slits. Forward evaluation applies the prefix, then the slits in
/// index order; inversion applies slit inverses in reverse order, then the
/// prefix inverse. Without a prefix the chain is hydrodynamically normalised
/// and its capacity is the running sum of slit capacities.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MapChain {
    pub prefix: Option<MoebiusMap>,
    slits: Vec<ElementarySlit>,
    total_capacity: f64,
}

impl MapChain {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_prefix(prefix: MoebiusMap) -> Self {
        Self { prefix: Some(prefix), slits: Vec::new(), total_capacity: 0.0 }
    }

    pub fn push(&mut self, slit: ElementarySlit) {
        self.total_capacity += slit.capacity;
        self.slits.push(slit);
    }

    /// Chain with the given slits and no prefix.
    pub fn from_slits(slits: Vec<ElementarySlit>) -> Self {
        let total_capacity = slits.iter().map(|s| s.capacity).sum();
        Self { prefix: None, slits, total_capacity }
    }

    /// Drop slits from the end until `len` remain (no-op if already shorter).
    /// Used to roll back speculative growth.
    pub fn truncate(&mut self, len: usize) {
        if len < self.slits.len() {
            self.slits.truncate(len);
            self.total_capacity = self.slits.iter().map(|s| s.capacity).sum();
        }
    }

    pub fn slits(&self) -> &[ElementarySlit] {
        &self.slits
    }

    pub fn len(&self) -> usize {
        self.slits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slits.is_empty()
    }

    /// Cached sum of slit capacities.
    pub fn total_capacity(&self) -> f64 {
        self.total_capacity
    }

    pub fn apply(&self, z: Complex64) -> Result<Complex64> {
        let mut z = match &self.prefix {
            Some(m) => m.apply(z)?,
            None => z,
        };
        for (i, s) in self.slits.iter().enumerate() {
            z = s.apply(z).map_err(|_| Error::InsideSlit { index: i })?;
        }
        Ok(z)
    }

    pub fn invert(&self, w: Complex64) -> Complex64 {
        invert_slits(&self.slits, w)
    }

    pub fn apply_boundary_point(&self, x: f64) -> Result<f64> {
        let mut x = match &self.prefix {
            Some(m) => m.apply_boundary_point(x)?,
            None => x,
        };
        for s in &self.slits {
            x = s.apply_boundary_point(x);
        }
        Ok(x)
    }

    /// Boundary inversion; fails with the index of the first slit whose base
    /// interval swallows the point.
    pub fn invert_boundary_point(&self, w: f64) -> Result<f64> {
        let mut x = w;
        for (i, s) in self.slits.iter().enumerate().rev() {
            x = s.invert_boundary_point(x).map_err(|_| Error::InsideSlit { index: i })?;
        }
        match &self.prefix {
            Some(m) => m.inverse().apply_boundary_point(x),
            None => Ok(x),
        }
    }
}

/// Invert an ordered slit composition (no prefix) at a closed-half-plane
/// point. Total: boundary points may land on a slit.
pub fn invert_slits(slits: &[ElementarySlit], w: Complex64) -> Complex64 {
    let mut z = w;
    for s in slits.iter().rev() {
        z = s.invert(z);
    }
    z
}

// ── evaluator traits ─────────────────────────────────────────────────────

/// Anything that can be evaluated on the (closed) upper half-plane.
pub trait ConformalMap {
    fn eval(&self, z: Complex64) -> Result<Complex64>;

    /// `eval(z) - z`. The default subtracts, which loses precision far from
    /// the hull where the two terms nearly cancel; implementations with a
    /// stable closed form override this. The capacity probe depends on it.
    fn eval_offset(&self, z: Complex64) -> Result<Complex64> {
        Ok(self.eval(z)? - z)
    }
}

/// Anything with a real boundary restriction near a point of interest.
pub trait BoundaryMap {
    fn eval_boundary(&self, x: f64) -> Result<f64>;
}

impl ConformalMap for ElementarySlit {
    fn eval(&self, z: Complex64) -> Result<Complex64> {
        self.apply(z)
    }

    fn eval_offset(&self, z: Complex64) -> Result<Complex64> {
        self.offset(z)
    }
}

impl ConformalMap for MoebiusMap {
    fn eval(&self, z: Complex64) -> Result<Complex64> {
        self.apply(z)
    }
}

impl ConformalMap for MapChain {
    fn eval(&self, z: Complex64) -> Result<Complex64> {
        self.apply(z)
    }

    /// Telescopes `G(z) - z` as a sum of per-factor offsets, each evaluated
    /// with the stable slit formula, so precision survives probe radii where
    /// a direct subtraction would drown the answer in round-off.
    fn eval_offset(&self, z: Complex64) -> Result<Complex64> {
        let mut total = Complex64::new(0.0, 0.0);
        let mut w = z;
        if let Some(m) = &self.prefix {
            let pw = m.apply(z)?;
            total += pw - z;
            w = pw;
        }
        for (i, s) in self.slits.iter().enumerate() {
            let off = s.offset(w).map_err(|_| Error::InsideSlit { index: i })?;
            total += off;
            w += off;
        }
        Ok(total)
    }
}

impl BoundaryMap for ElementarySlit {
    fn eval_boundary(&self, x: f64) -> Result<f64> {
        Ok(self.apply_boundary_point(x))
    }
}

impl BoundaryMap for MoebiusMap {
    fn eval_boundary(&self, x: f64) -> Result<f64> {
        self.apply_boundary_point(x)
    }
}

impl BoundaryMap for MapChain {
    fn eval_boundary(&self, x: f64) -> Result<f64> {
        self.apply_boundary_point(x)
    }
}

/// Wrap a closure as a map evaluator.
pub struct FnMap<F>(pub F);

impl<F: Fn(Complex64) -> Result<Complex64>> ConformalMap for FnMap<F> {
    fn eval(&self, z: Complex64) -> Result<Complex64> {
        (self.0)(z)
    }
}

/// Wrap a closure as a boundary evaluator.
pub struct FnBoundary<F>(pub F);

impl<F: Fn(f64) -> Result<f64>> BoundaryMap for FnBoundary<F> {
    fn eval_boundary(&self, x: f64) -> Result<f64> {
        (self.0)(x)
    }
}

// ── capacity probe ───────────────────────────────────────────────────────

/// Angles used by the capacity probe. The quarter-angle pair cancels the
/// next-order term of the expansion at infinity, so the averaged estimate
/// converges like `1/R^2`.
pub const PROBE_ANGLES: [f64; 3] =
    [std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_2, 3.0 * std::f64::consts::FRAC_PI_4];

/// Relative agreement demanded of the three probe angles.
pub const PROBE_AGREEMENT_TOL: f64 = 1e-4;

/// Estimate half-plane capacity from the expansion `g(z) = z + 2 hcap/z + ...`
/// by averaging `Re(z (g(z) - z) / 2)` over probe points `R e^{i theta}`.
/// Fails if the angles disagree beyond `PROBE_AGREEMENT_TOL * (1 + |mean|)`,
/// which catches maps that are not hydrodynamically normalised.
pub fn hcap_estimate<M: ConformalMap + ?Sized>(map: &M, probe_radius: f64) -> Result<f64> {
    if !(probe_radius > 0.0) {
        return Err(Error::config("probe radius must be positive".to_string()));
    }
    let mut vals = [0.0; 3];
    for (k, theta) in PROBE_ANGLES.iter().enumerate() {
        let z = Complex64::from_polar(probe_radius, *theta);
        let off = map.eval_offset(z)?;
        vals[k] = (0.5 * z * off).re;
    }
    let mean = (vals[0] + vals[1] + vals[2]) / 3.0;
    let spread = vals.iter().fold(0.0f64, |m, v| m.max((v - mean).abs()));
    let tol = PROBE_AGREEMENT_TOL * (1.0 + mean.abs());
    if !spread.is_finite() || spread > tol {
        return Err(Error::ProbeDisagreement { spread, tol });
    }
    Ok(mean)
}

// ── boundary derivatives by finite differences ───────────────────────────

/// First three boundary derivatives of a map at a real point.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryDerivs {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

/// Denominator guard for Schwarzian quotients.
pub const SINGULAR_DERIVATIVE_FLOOR: f64 = 1e-12;

fn fd_samples<M: BoundaryMap + ?Sized>(map: &M, x: f64, h: f64) -> Result<[f64; 7]> {
    let mut f = [0.0; 7];
    for (k, j) in (-3..=3).enumerate() {
        f[k] = map.eval_boundary(x + j as f64 * h)?;
    }
    Ok(f)
}

/// Fourth-order central differences with step `min_gap / 8`; the widest
/// stencil point stays within `3/8` of the nearest singularity.
pub fn boundary_derivatives<M: BoundaryMap + ?Sized>(
    map: &M,
    x: f64,
    min_gap: f64,
) -> Result<BoundaryDerivs> {
    if !(min_gap > 0.0) {
        return Err(Error::config("min_gap must be positive".to_string()));
    }
    let h = min_gap / 8.0;
    let f = fd_samples(map, x, h)?;
    // f[0..7] = f(x-3h) ... f(x+3h)
    let d1 = (f[1] - 8.0 * f[2] + 8.0 * f[4] - f[5]) / (12.0 * h);
    let d2 = (-f[1] + 16.0 * f[2] - 30.0 * f[3] + 16.0 * f[4] - f[5]) / (12.0 * h * h);
    let d3 = (f[0] - 8.0 * f[1] + 13.0 * f[2] - 13.0 * f[4] + 8.0 * f[5] - f[6]) / (8.0 * h * h * h);
    Ok(BoundaryDerivs { d1, d2, d3 })
}

/// First boundary derivative only.
pub fn map_derivative<M: BoundaryMap + ?Sized>(map: &M, x: f64, min_gap: f64) -> Result<f64> {
    Ok(boundary_derivatives(map, x, min_gap)?.d1)
}

/// Schwarzian derivative `f'''/f' - 3/2 (f''/f')^2` at a real point.
pub fn schwarzian<M: BoundaryMap + ?Sized>(map: &M, x: f64, min_gap: f64) -> Result<f64> {
    let d = boundary_derivatives(map, x, min_gap)?;
    schwarzian_from_derivs(&d)
}

pub fn schwarzian_from_derivs(d: &BoundaryDerivs) -> Result<f64> {
    if d.d1.abs() < SINGULAR_DERIVATIVE_FLOOR {
        return Err(Error::SingularDerivative { value: d.d1 });
    }
    let q = d.d2 / d.d1;
    Ok(d.d3 / d.d1 - 1.5 * q * q)
}

// ── analytic jets ────────────────────────────────────────────────────────

/// Value and first three derivatives of a composite map, accumulated exactly
/// through each elementary factor by the chain rule:
///
/// ```text
///   (g∘f)'   = g'(f) f'
///   (g∘f)''  = g''(f) f'^2 + g'(f) f''
///   (g∘f)''' = g'''(f) f'^3 + 3 g''(f) f' f'' + g'(f) f'''
/// ```
#[derive(Debug, Clone, Copy)]
pub struct CJet {
    pub v: Complex64,
    pub d1: Complex64,
    pub d2: Complex64,
    pub d3: Complex64,
}

impl CJet {
    pub fn seed(z: Complex64) -> Self {
        Self {
            v: z,
            d1: Complex64::new(1.0, 0.0),
            d2: Complex64::new(0.0, 0.0),
            d3: Complex64::new(0.0, 0.0),
        }
    }

    fn chain(self, gv: Complex64, g1: Complex64, g2: Complex64, g3: Complex64) -> Self {
        let f1 = self.d1;
        let f2 = self.d2;
        let f3 = self.d3;
        Self {
            v: gv,
            d1: g1 * f1,
            d2: g2 * f1 * f1 + g1 * f2,
            d3: g3 * f1 * f1 * f1 + 3.0 * g2 * f1 * f2 + g1 * f3,
        }
    }

    /// Push the jet through a forward slit map.
    pub fn through_slit(self, s: &ElementarySlit) -> Result<Self> {
        let (gv, g1, g2, g3) = slit_jet(s.center, s.capacity, self.v)?;
        Ok(self.chain(gv, g1, g2, g3))
    }

    /// Push the jet through an inverse slit map.
    pub fn through_slit_inverse(self, s: &ElementarySlit) -> Result<Self> {
        let (gv, g1, g2, g3) = slit_jet(s.center, -s.capacity, self.v)?;
        Ok(self.chain(gv, g1, g2, g3))
    }

    pub fn through_moebius(self, m: &MoebiusMap) -> Result<Self> {
        let den = m.c * self.v + m.d;
        if den.norm_sqr() == 0.0 {
            return Err(Error::PoleOnPosition { index: 0 });
        }
        let det = m.det();
        let gv = (m.a * self.v + m.b) / den;
        let g1 = det / (den * den);
        let g2 = -2.0 * m.c * det / (den * den * den);
        let g3 = 6.0 * m.c * m.c * det / (den * den * den * den);
        Ok(self.chain(gv, g1, g2, g3))
    }

    /// Apply a whole chain forward (prefix, then slits in order).
    pub fn through_chain(mut self, chain: &MapChain) -> Result<Self> {
        if let Some(m) = &chain.prefix {
            self = self.through_moebius(m)?;
        }
        self.through_slits(chain.slits())
    }

    /// Pull a jet back through a chain (slit inverses in reverse order, then
    /// the prefix inverse).
    pub fn through_chain_inverse(mut self, chain: &MapChain) -> Result<Self> {
        self = self.through_slits_inverse(chain.slits())?;
        if let Some(m) = &chain.prefix {
            self = self.through_moebius(&m.inverse())?;
        }
        Ok(self)
    }

    /// Apply a bare slit sequence forward, in index order.
    pub fn through_slits(mut self, slits: &[ElementarySlit]) -> Result<Self> {
        for s in slits {
            self = self.through_slit(s)?;
        }
        Ok(self)
    }

    /// Pull back through a bare slit sequence (inverses in reverse order).
    pub fn through_slits_inverse(mut self, slits: &[ElementarySlit]) -> Result<Self> {
        for s in slits.iter().rev() {
            self = self.through_slit_inverse(s)?;
        }
        Ok(self)
    }

    pub fn schwarzian(&self) -> Result<Complex64> {
        if self.d1.norm_sqr() < SINGULAR_DERIVATIVE_FLOOR * SINGULAR_DERIVATIVE_FLOOR {
            return Err(Error::SingularDerivative { value: self.d1.norm() });
        }
        let q = self.d2 / self.d1;
        Ok(self.d3 / self.d1 - 1.5 * q * q)
    }
}

/// Value and derivatives of the (possibly inverse, `capacity < 0`) slit map
/// at an interior or boundary point, with the half-plane branch.
fn slit_jet(
    center: f64,
    signed_capacity: f64,
    z: Complex64,
) -> Result<(Complex64, Complex64, Complex64, Complex64)> {
    let d4 = 4.0 * signed_capacity;
    let v = Complex64::new(z.re - center, z.im);
    let r = branched_sqrt(v, d4)?;
    if r.norm_sqr() == 0.0 {
        return Err(Error::SingularDerivative { value: 0.0 });
    }
    let g1 = v / r;
    let r3 = r * r * r;
    let g2 = d4 / r3;
    let g3 = -3.0 * d4 * v / (r3 * r * r);
    Ok((center + r, g1, g2, g3))
}

/// Taylor data `[value, f', f'', f''']` of an analytic map at a real
/// centre, extracted from a Cauchy sampling circle of the given radius.
///
/// Only the upper half-circle is evaluated, at midpoint angles (no sample
/// on the real axis); the lower half is supplied by Schwarz reflection, so
/// the map must be real-analytic across the real axis near the centre.
/// The midpoint-trapezoid Fourier sums recover the Taylor coefficients
/// with aliasing that decays like
/// `(radius / distance to the nearest singularity)^samples`, so accuracy
/// improves with a *larger* radius as long as the circle stays clear of
/// singular structure — there is no step-size trade-off as with finite
/// differences. `samples` counts the full circle and must be an even
/// number, at least four.
pub fn contour_taylor<F>(f: F, center: f64, radius: f64, samples: usize) -> Result<[f64; 4]>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    contour_taylor_batch(
        |pts: &mut [Complex64]| {
            for p in pts.iter_mut() {
                *p = f(*p)?;
            }
            Ok(())
        },
        center,
        radius,
        samples,
    )
}

/// [`contour_taylor`] with the evaluator applied to all sample points in
/// one call (in place). Chain-walk evaluators use this to advance every
/// contour point through each factor together, which lets the independent
/// square-root chains overlap instead of serialising per point.
pub fn contour_taylor_batch<F>(f: F, center: f64, radius: f64, samples: usize) -> Result<[f64; 4]>
where
    F: Fn(&mut [Complex64]) -> Result<()>,
{
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::config("contour radius must be positive"));
    }
    if samples < 4 || samples % 2 != 0 {
        return Err(Error::config("contour sample count must be even and at least 4"));
    }
    let half = samples / 2;
    let mut pts: Vec<Complex64> = (0..half)
        .map(|q| {
            let theta = std::f64::consts::PI * (2 * q + 1) as f64 / samples as f64;
            Complex64::new(center + radius * theta.cos(), radius * theta.sin())
        })
        .collect();
    f(&mut pts)?;
    let mut sums = [0.0_f64; 4];
    for (q, fv) in pts.iter().enumerate() {
        let theta = std::f64::consts::PI * (2 * q + 1) as f64 / samples as f64;
        let unit = Complex64::from_polar(1.0, -theta);
        let mut phase = Complex64::new(1.0, 0.0);
        for s in &mut sums {
            *s += (fv * phase).re;
            phase *= unit;
        }
    }
    for s in &mut sums {
        *s *= 2.0 / samples as f64;
    }
    Ok([
        sums[0],
        sums[1] / radius,
        2.0 * sums[2] / (radius * radius),
        6.0 * sums[3] / (radius * radius * radius),
    ])
}

/// Real-axis jet for fast boundary evaluation away from slit bases.
#[derive(Debug, Clone, Copy)]
pub struct RJet {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

impl RJet {
    pub fn seed(x: f64) -> Self {
        Self { v: x, d1: 1.0, d2: 0.0, d3: 0.0 }
    }

    fn chain(self, gv: f64, g1: f64, g2: f64, g3: f64) -> Self {
        let f1 = self.d1;
        let f2 = self.d2;
        let f3 = self.d3;
        Self {
            v: gv,
            d1: g1 * f1,
            d2: g2 * f1 * f1 + g1 * f2,
            d3: g3 * f1 * f1 * f1 + 3.0 * g2 * f1 * f2 + g1 * f3,
        }
    }

    pub fn through_slit(self, s: &ElementarySlit) -> Result<Self> {
        self.through_signed(s.center, s.capacity)
    }

    pub fn through_slit_inverse(self, s: &ElementarySlit) -> Result<Self> {
        self.through_signed(s.center, -s.capacity)
    }

    fn through_signed(self, center: f64, signed_capacity: f64) -> Result<Self> {
        let d4 = 4.0 * signed_capacity;
        let v = self.v - center;
        let q = v * v + d4;
        if q <= 0.0 {
            return Err(Error::InsideSlit { index: 0 });
        }
        let r = if v >= 0.0 { q.sqrt() } else { -q.sqrt() };
        let g1 = v / r;
        let r3 = r * r * r;
        let g2 = d4 / r3;
        let g3 = -3.0 * d4 * v / (r3 * r * r);
        Ok(self.chain(center + r, g1, g2, g3))
    }

    pub fn schwarzian(&self) -> Result<f64> {
        if self.d1.abs() < SINGULAR_DERIVATIVE_FLOOR {
            return Err(Error::SingularDerivative { value: self.d1 });
        }
        let q = self.d2 / self.d1;
        Ok(self.d3 / self.d1 - 1.5 * q * q)
    }
}
