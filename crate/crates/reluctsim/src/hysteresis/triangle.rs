//! Integrals of the Preisach density over staircase geometry.
//!
//! Three integral families appear in the model:
//! * the triangle integral T(α_i, β_j), evaluated as a 1-D line integral in
//!   the (h_c, h_m) frame by adaptive quadrature;
//! * the same quantity as a direct 2-D iterated integral over the (β, α)
//!   triangle — a slow reference path used for validation;
//! * line integrals of the density along the active staircase edge (the
//!   permeability terms), which for the Cauchy-product density reduce to a
//!   closed form by partial fractions of two shifted Lorentzians.

use crate::error::{Error, Result};
use crate::hysteresis::PreisachDistribution;
use crate::quad;
use std::cell::RefCell;
use std::f64::consts::PI;

/// Default tolerances for the staircase quadratures.
const REL_TOL: f64 = 1e-9;
const ABS_TOL: f64 = 1e-15;
const MAX_PANELS: usize = 4096;

fn check_corner(alpha_i: f64, beta_j: f64, context: &'static str) -> Result<()> {
    if !alpha_i.is_finite() {
        return Err(Error::NonFinite {
            context,
            value: alpha_i,
        });
    }
    if !beta_j.is_finite() {
        return Err(Error::NonFinite {
            context,
            value: beta_j,
        });
    }
    if alpha_i < beta_j {
        return Err(Error::InvalidParam(format!(
            "{context} requires alpha >= beta, got alpha {alpha_i} < beta {beta_j}"
        )));
    }
    Ok(())
}

/// Triangle integral T(α_i, β_j) of the density over the triangle with
/// vertices (β_j, α_i), (α_i, α_i), (β_j, β_j).
///
/// Evaluated in the (h_c, h_m) frame where it collapses to a 1-D integral
/// (the factor 2 being the Jacobian of the coordinate change):
/// T = 2 ∫₀^{(α_i−β_j)/2} f1(h_c) [F2(α_i−h_c) − F2(β_j+h_c)] dh_c.
pub fn triangle_integral(alpha_i: f64, beta_j: f64, dist: &PreisachDistribution) -> Result<f64> {
    check_corner(alpha_i, beta_j, "triangle_integral")?;
    if alpha_i == beta_j {
        return Ok(0.0);
    }
    let f1 = *dist.f1();
    let f2 = *dist.f2();
    let (m1, s1) = (dist.f1().location(), dist.f1().scale());
    let s2 = dist.f2().scale();
    let half_width = 0.5 * (alpha_i - beta_j);
    // The integrand structure is known: the coercive-field density peaks at
    // m1 (width s1, long tails) and the CDF bracket has transition layers
    // where either argument crosses zero. Seeding panels there lets the
    // adaptive refinement start from the right geometry.
    let mut knots = [0.0_f64; 10];
    let mut n_knots = 0;
    for hc in [
        m1 - 2.0 * s1,
        m1 + 2.0 * s1,
        m1 + 8.0 * s1,
        m1 + 32.0 * s1,
        alpha_i - 3.0 * s2,
        alpha_i + 3.0 * s2,
        -beta_j - 3.0 * s2,
        -beta_j + 3.0 * s2,
        0.5 * half_width,
    ] {
        if hc > 0.0 && hc < half_width {
            knots[n_knots] = hc;
            n_knots += 1;
        }
    }
    // The CDF bracket F2(α−hc) − F2(β+hc) is an arctangent difference;
    // atan2 of the subtraction identity evaluates it with one call:
    // atan(x) − atan(y) = atan2(x − y, 1 + x·y).
    let (m2, s2c) = (f2.location(), f2.scale());
    let inv_pi = 1.0 / std::f64::consts::PI;
    let q = quad::integrate_with_knots(
        |hc| {
            let x = (alpha_i - hc - m2) / s2c;
            let y = (beta_j + hc - m2) / s2c;
            2.0 * f1.pdf(hc) * inv_pi * (x - y).atan2(1.0 + x * y)
        },
        0.0,
        half_width,
        &knots[..n_knots],
        REL_TOL,
        ABS_TOL,
        MAX_PANELS,
    )?;
    // The integrand is non-negative; tiny negative totals are roundoff.
    Ok(q.value.max(0.0))
}

/// Direct iterated 2-D integral of the density over the same triangle:
/// ∫_{β_j}^{α_i} ∫_{β}^{α_i} P(α, β) dα dβ.
///
/// Validation oracle for [`triangle_integral`]; roughly two orders of
/// magnitude slower.
pub fn triangle_integral_2d(
    alpha_i: f64,
    beta_j: f64,
    dist: &PreisachDistribution,
    rel_tol: f64,
) -> Result<f64> {
    check_corner(alpha_i, beta_j, "triangle_integral_2d")?;
    if alpha_i == beta_j {
        return Ok(0.0);
    }
    let inner_failure: RefCell<Option<Error>> = RefCell::new(None);
    let outer = quad::integrate(
        |beta| {
            match quad::integrate(
                |alpha| dist.density(alpha, beta),
                beta,
                alpha_i,
                rel_tol * 0.1,
                ABS_TOL * 0.1,
                MAX_PANELS,
            ) {
                Ok(q) => q.value,
                Err(e) => {
                    inner_failure.borrow_mut().get_or_insert(e);
                    0.0
                }
            }
        },
        beta_j,
        alpha_i,
        rel_tol,
        ABS_TOL,
        MAX_PANELS,
    )?;
    if let Some(e) = inner_failure.into_inner() {
        return Err(e);
    }
    Ok(outer.value.max(0.0))
}

/// Antiderivative of 1 / ([(x−a)² + p²][(x−b)² + q²]).
///
/// Partial fractions give, with δ = a−b, E = δ² + q² − p², G = E² + 4δ²p²:
///   F(x) = (δ/G)·ln[((x−b)²+q²)/((x−a)²+p²)]
///        + (E/(pG))·atan((x−a)/p) + ((2δ²−E)/(qG))·atan((x−b)/q).
/// The log ratio is evaluated through ln1p to stay accurate when the two
/// Lorentzians nearly coincide; the exactly confocal case (δ = 0, p = q) has
/// its own primitive.
fn lorentzian_pair_antideriv(x: f64, a: f64, p: f64, b: f64, q: f64) -> f64 {
    let delta = a - b;
    if delta == 0.0 && p == q {
        let u = x - a;
        return u / (2.0 * p * p * (u * u + p * p)) + (u / p).atan() / (2.0 * p * p * p);
    }
    let e = delta * delta + q * q - p * p;
    let g = e * e + 4.0 * delta * delta * p * p;
    let ua = x - a;
    let ub = x - b;
    let d = ua * ua + p * p;
    // N − D = (x−b)² + q² − (x−a)² − p² expanded to avoid cancellation.
    let n_minus_d = delta * (2.0 * x - a - b) + (q * q - p * p);
    let log_term = (n_minus_d / d).ln_1p();
    delta / g * log_term
        + e / (p * g) * (ua / p).atan()
        + (2.0 * delta * delta - e) / (q * g) * (ub / q).atan()
}

/// True when the two Lorentzian factors are so close to confocal that the
/// closed form loses precision and quadrature should be used instead.
fn near_confocal(delta: f64, p: f64, q: f64) -> bool {
    let scale = p + q;
    delta.abs() < 1e-6 * scale && (p - q).abs() < 1e-6 * scale && !(delta == 0.0 && p == q)
}

/// Geometry of a staircase-edge line integral as a Lorentzian pair in the
/// integration variable.
struct EdgeKernel {
    a: f64,
    p: f64,
    b: f64,
    q: f64,
    amplitude: f64,
}

impl EdgeKernel {
    /// Horizontal edge α = h: density as a function of β.
    fn increasing(h: f64, dist: &PreisachDistribution) -> Self {
        let (m1, s1) = (dist.f1().location(), dist.f1().scale());
        let (m2, s2) = (dist.f2().location(), dist.f2().scale());
        Self {
            a: h - 2.0 * m1,
            p: 2.0 * s1,
            b: 2.0 * m2 - h,
            q: 2.0 * s2,
            amplitude: 16.0 * s1 * s2 / (PI * PI),
        }
    }

    /// Vertical edge β = h: density as a function of α.
    fn decreasing(h: f64, dist: &PreisachDistribution) -> Self {
        let (m1, s1) = (dist.f1().location(), dist.f1().scale());
        let (m2, s2) = (dist.f2().location(), dist.f2().scale());
        Self {
            a: h + 2.0 * m1,
            p: 2.0 * s1,
            b: 2.0 * m2 - h,
            q: 2.0 * s2,
            amplitude: 16.0 * s1 * s2 / (PI * PI),
        }
    }

    fn integral(&self, lo: f64, hi: f64) -> Option<f64> {
        if near_confocal(self.a - self.b, self.p, self.q) {
            return None;
        }
        let v = self.amplitude
            * (lorentzian_pair_antideriv(hi, self.a, self.p, self.b, self.q)
                - lorentzian_pair_antideriv(lo, self.a, self.p, self.b, self.q));
        v.is_finite().then_some(v)
    }
}

/// Line integral ∫_{β_n}^{h} P(h, β) dβ along the horizontal staircase edge
/// at α = h (the increasing-branch permeability kernel). Closed form with a
/// quadrature fallback for the near-degenerate geometry.
pub fn edge_integral_increasing(h: f64, beta_n: f64, dist: &PreisachDistribution) -> Result<f64> {
    check_corner(h, beta_n, "edge_integral_increasing")?;
    let k = EdgeKernel::increasing(h, dist);
    match k.integral(beta_n, h) {
        Some(v) => Ok(v.max(0.0)),
        None => edge_integral_increasing_quad(h, beta_n, dist),
    }
}

/// Line integral ∫_{h}^{α_n} P(α, h) dα along the vertical staircase edge at
/// β = h (the decreasing-branch permeability kernel).
pub fn edge_integral_decreasing(h: f64, alpha_n: f64, dist: &PreisachDistribution) -> Result<f64> {
    check_corner(alpha_n, h, "edge_integral_decreasing")?;
    let k = EdgeKernel::decreasing(h, dist);
    match k.integral(h, alpha_n) {
        Some(v) => Ok(v.max(0.0)),
        None => edge_integral_decreasing_quad(h, alpha_n, dist),
    }
}

/// Quadrature form of [`edge_integral_increasing`]; fallback and oracle.
pub fn edge_integral_increasing_quad(
    h: f64,
    beta_n: f64,
    dist: &PreisachDistribution,
) -> Result<f64> {
    check_corner(h, beta_n, "edge_integral_increasing_quad")?;
    let q = quad::integrate(
        |beta| dist.density(h, beta),
        beta_n,
        h,
        REL_TOL,
        ABS_TOL,
        MAX_PANELS,
    )?;
    Ok(q.value.max(0.0))
}

/// Quadrature form of [`edge_integral_decreasing`]; fallback and oracle.
pub fn edge_integral_decreasing_quad(
    h: f64,
    alpha_n: f64,
    dist: &PreisachDistribution,
) -> Result<f64> {
    check_corner(alpha_n, h, "edge_integral_decreasing_quad")?;
    let q = quad::integrate(
        |alpha| dist.density(alpha, h),
        h,
        alpha_n,
        REL_TOL,
        ABS_TOL,
        MAX_PANELS,
    )?;
    Ok(q.value.max(0.0))
}
