//! Scalar Preisach hysteresis: classical staircase model plus the generalized
//! form with a reversible component and saturation.
//!
//! The magnetic state is carried by an [`ExtremaHistory`] (alternating past
//! maxima and minima of the field) together with the current input direction.
//! Model output and incremental permeability are sums of triangle integrals of
//! the Preisach density over the staircase, evaluated here for a
//! Cauchy-product density: the triangle integrals reduce to 1-D quadrature and
//! the staircase-edge line integrals have closed forms.

mod history;
mod model;
mod triangle;

pub use history::{demag_history, history_update, push_extremum, ExtremaHistory, WipeOut};
pub use model::{
    cpm_output, gpm_b, mu_gpm, mu_irr, GpmModel, HysteresisState, Replay,
};
pub use triangle::{
    edge_integral_decreasing, edge_integral_decreasing_quad, edge_integral_increasing,
    edge_integral_increasing_quad, triangle_integral, triangle_integral_2d,
};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Vacuum permeability, H/m.
pub const MU0: f64 = 4.0e-7 * PI;

/// Input direction of the magnetic field intensity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Increasing,
    Decreasing,
}

impl Direction {
    pub fn reversed(self) -> Self {
        match self {
            Direction::Increasing => Direction::Decreasing,
            Direction::Decreasing => Direction::Increasing,
        }
    }
}

/// Cauchy (Lorentzian) distribution with location and scale.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CauchyDist {
    location: f64,
    scale: f64,
}

impl CauchyDist {
    pub fn new(location: f64, scale: f64) -> Result<Self> {
        if !location.is_finite() || !scale.is_finite() {
            return Err(Error::InvalidParam(format!(
                "Cauchy parameters must be finite, got location {location}, scale {scale}"
            )));
        }
        if scale <= 0.0 {
            return Err(Error::InvalidParam(format!(
                "Cauchy scale must be positive, got {scale}"
            )));
        }
        Ok(Self { location, scale })
    }

    pub fn location(&self) -> f64 {
        self.location
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Probability density. Caller ensures `x` is finite.
    #[inline]
    pub fn pdf(&self, x: f64) -> f64 {
        let t = (x - self.location) / self.scale;
        1.0 / (PI * self.scale * (1.0 + t * t))
    }

    /// Cumulative distribution. Caller ensures `x` is finite.
    #[inline]
    pub fn cdf(&self, x: f64) -> f64 {
        0.5 + ((x - self.location) / self.scale).atan() / PI
    }
}

/// Density of a hysteron's switching width h_c = (α−β)/2.
/// Checked evaluation of the Cauchy density.
pub fn cauchy_pdf(x: f64, d: &CauchyDist) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite {
            context: "cauchy_pdf",
            value: x,
        });
    }
    Ok(d.pdf(x))
}

/// Checked evaluation of the Cauchy cumulative distribution.
pub fn cauchy_cdf(x: f64, d: &CauchyDist) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite {
            context: "cauchy_cdf",
            value: x,
        });
    }
    Ok(d.cdf(x))
}

/// Product density over the Preisach half-plane: a coercive-field factor over
/// h_c = (α−β)/2 and a mean-field factor over h_m = (α+β)/2. The mean-field
/// location is pinned to zero so the major loop is symmetric about the origin.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PreisachDistribution {
    f1: CauchyDist,
    f2: CauchyDist,
}

impl PreisachDistribution {
    /// Build from the three free parameters m_hc, s_hc, s_hm.
    pub fn new(m_hc: f64, s_hc: f64, s_hm: f64) -> Result<Self> {
        Ok(Self {
            f1: CauchyDist::new(m_hc, s_hc)?,
            f2: CauchyDist::new(0.0, s_hm)?,
        })
    }

    /// Coercive-field distribution (over h_c).
    pub fn f1(&self) -> &CauchyDist {
        &self.f1
    }

    /// Mean-field distribution (over h_m, location 0).
    pub fn f2(&self) -> &CauchyDist {
        &self.f2
    }

    /// Density at a hysteron (α, β). Caller ensures α ≥ β.
    #[inline]
    pub fn density(&self, alpha: f64, beta: f64) -> f64 {
        self.f1.pdf(0.5 * (alpha - beta)) * self.f2.pdf(0.5 * (alpha + beta))
    }
}

/// Checked Preisach density: errors when the point lies outside the α ≥ β
/// half-plane.
pub fn preisach_density(alpha: f64, beta: f64, dist: &PreisachDistribution) -> Result<f64> {
    if !alpha.is_finite() || !beta.is_finite() {
        return Err(Error::NonFinite {
            context: "preisach_density",
            value: if alpha.is_finite() { beta } else { alpha },
        });
    }
    if alpha < beta {
        return Err(Error::InvalidParam(format!(
            "preisach_density requires alpha >= beta, got alpha {alpha} < beta {beta}"
        )));
    }
    Ok(dist.density(alpha, beta))
}

/// Reversible-permeability parameters: μ'_Rev(H) = μ₀ + μ₁e^(−|H|/H₁) + μ₂e^(−|H|/H₂).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RevParams {
    /// First exponential amplitude (H/m); may be negative.
    pub mu1: f64,
    /// Second exponential amplitude (H/m); may be negative.
    pub mu2: f64,
    /// First decay field (A/m), > 0.
    pub h1: f64,
    /// Second decay field (A/m), > 0.
    pub h2: f64,
}

impl RevParams {
    pub fn new(mu1: f64, mu2: f64, h1: f64, h2: f64) -> Result<Self> {
        let p = Self { mu1, mu2, h1, h2 };
        p.validate()?;
        Ok(p)
    }

    /// Check H₁, H₂ > 0 and strict positivity of μ'_Rev for every H.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mu1", self.mu1),
            ("mu2", self.mu2),
            ("H1", self.h1),
            ("H2", self.h2),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidParam(format!("RevParams.{name} is not finite")));
            }
        }
        if self.h1 <= 0.0 || self.h2 <= 0.0 {
            return Err(Error::InvalidParam(format!(
                "RevParams decay fields must be positive, got H1 {}, H2 {}",
                self.h1, self.h2
            )));
        }
        let worst = rev_permeability_floor(self);
        if worst <= 0.0 {
            return Err(Error::InvalidParam(format!(
                "reversible permeability is not strictly positive (minimum {worst:.3e} H/m)"
            )));
        }
        Ok(())
    }
}

/// Global minimum of μ'_Rev over all H.
///
/// With u = e^(−|H|/H₁) ∈ (0, 1] and r = H₁/H₂, the permeability is
/// g(u) = μ₀ + μ₁u + μ₂u^r, so the minimum lies at u = 1, the u → 0 limit
/// (μ₀) or the interior stationary point of g.
pub fn rev_permeability_floor(p: &RevParams) -> f64 {
    let r = p.h1 / p.h2;
    let g = |u: f64| MU0 + p.mu1 * u + p.mu2 * u.powf(r);
    let mut worst = g(1.0).min(MU0);
    if (r - 1.0).abs() > 1e-12 && p.mu2 != 0.0 {
        let base = -p.mu1 / (p.mu2 * r);
        if base > 0.0 {
            let u_star = base.powf(1.0 / (r - 1.0));
            if u_star > 0.0 && u_star < 1.0 {
                worst = worst.min(g(u_star));
            }
        }
    }
    worst
}

/// Reversible incremental permeability μ'_Rev(H), H/m. Even in H.
#[inline]
pub fn mu_rev(h: f64, rev: &RevParams) -> f64 {
    let a = h.abs();
    MU0 + rev.mu1 * (-a / rev.h1).exp() + rev.mu2 * (-a / rev.h2).exp()
}

/// Reversible flux density B_Rev(H), T. Odd in H; slope is `mu_rev`.
#[inline]
pub fn b_rev(h: f64, rev: &RevParams) -> f64 {
    let a = h.abs();
    let s = if h < 0.0 { -1.0 } else if h > 0.0 { 1.0 } else { 0.0 };
    MU0 * h
        + s * rev.mu1 * rev.h1 * (1.0 - (-a / rev.h1).exp())
        + s * rev.mu2 * rev.h2 * (1.0 - (-a / rev.h2).exp())
}

/// Full generalized-Preisach parameter set.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GpmParams {
    pub rev: RevParams,
    pub dist: PreisachDistribution,
    /// Saturation level of the irreversible part, T.
    pub b_irr_sat: f64,
    /// Upper input bound α₀, A/m.
    pub alpha0: f64,
    /// Lower input bound β₀, A/m.
    pub beta0: f64,
}

impl GpmParams {
    pub fn new(
        rev: RevParams,
        dist: PreisachDistribution,
        b_irr_sat: f64,
        alpha0: f64,
        beta0: f64,
    ) -> Result<Self> {
        let p = Self {
            rev,
            dist,
            b_irr_sat,
            alpha0,
            beta0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.rev.validate()?;
        if !(self.b_irr_sat > 0.0) {
            return Err(Error::InvalidParam(format!(
                "b_irr_sat must be positive, got {}",
                self.b_irr_sat
            )));
        }
        if !(self.beta0 < self.alpha0) {
            return Err(Error::InvalidParam(format!(
                "input bounds require beta0 < alpha0, got [{}, {}]",
                self.beta0, self.alpha0
            )));
        }
        Ok(())
    }

    /// Merge tolerance for nearly coincident extrema: below the quadrature
    /// resolution two corners this close are indistinguishable.
    pub fn merge_tolerance(&self) -> f64 {
        1e-9 * (self.alpha0 - self.beta0)
    }
}

/// Saturation magnetization (μ₁H₁ + μ₂H₂ + B̂_Irr)/μ₀, A/m.
pub fn saturation_magnetization(p: &GpmParams) -> f64 {
    (p.rev.mu1 * p.rev.h1 + p.rev.mu2 * p.rev.h2 + p.b_irr_sat) / MU0
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Identified valve parameters used throughout the tests.
    pub(crate) fn table_iv_rev() -> RevParams {
        RevParams::new(168.8 * MU0, 64.13 * MU0, 1262.0, 8821.0).unwrap()
    }

    pub(crate) fn table_iv_dist() -> PreisachDistribution {
        PreisachDistribution::new(227.9, 154.9, 138.0).unwrap()
    }

    pub(crate) fn table_iv_gpm() -> GpmParams {
        GpmParams::new(table_iv_rev(), table_iv_dist(), 0.8103, 1.0e4, -1.0e4).unwrap()
    }

    #[test]
    fn cauchy_pdf_peak_and_half_max() {
        let d = CauchyDist::new(227.9, 154.9).unwrap();
        // Peak 1/(π s) at the location, half that one scale unit away.
        let peak = cauchy_pdf(227.9, &d).unwrap();
        assert!((peak - 1.0 / (PI * 154.9)).abs() < 1e-18);
        let half = cauchy_pdf(227.9 + 154.9, &d).unwrap();
        assert!((half - 0.5 / (PI * 154.9)).abs() < 1e-18);
        // Substituting the identified coercive-field parameters: 1/(π·154.9).
        assert!((peak - 2.055e-3).abs() < 1e-6);
    }

    #[test]
    fn cauchy_cdf_properties() {
        let d = CauchyDist::new(100.0, 25.0).unwrap();
        assert!((cauchy_cdf(100.0, &d).unwrap() - 0.5).abs() < 1e-15);
        assert!((cauchy_cdf(1e12, &d).unwrap() - 1.0).abs() < 1e-10);
        assert!(cauchy_cdf(-1e12, &d).unwrap() < 1e-10);
        // Interquartile property: cdf(m+s) − cdf(m−s) = 1/2.
        let iq = cauchy_cdf(125.0, &d).unwrap() - cauchy_cdf(75.0, &d).unwrap();
        assert!((iq - 0.5).abs() < 1e-15);
        // Monotone increasing.
        assert!(cauchy_cdf(90.0, &d).unwrap() < cauchy_cdf(110.0, &d).unwrap());
    }

    #[test]
    fn cauchy_rejects_bad_input() {
        assert!(CauchyDist::new(0.0, 0.0).is_err());
        assert!(CauchyDist::new(0.0, -1.0).is_err());
        let d = CauchyDist::new(0.0, 1.0).unwrap();
        assert!(cauchy_pdf(f64::NAN, &d).is_err());
        assert!(cauchy_cdf(f64::INFINITY, &d).is_err());
    }

    #[test]
    fn density_is_product_of_factors() {
        let dist = table_iv_dist();
        // On the diagonal the hysteron is degenerate: h_c = 0, h_m = α.
        let on_diag = preisach_density(0.0, 0.0, &dist).unwrap();
        assert!((on_diag - dist.f1().pdf(0.0) * dist.f2().pdf(0.0)).abs() < 1e-18);
        // Symmetric pair (a, −a): h_m = 0 is the mean-field peak.
        let sym = preisach_density(1000.0, -1000.0, &dist).unwrap();
        let expect = dist.f1().pdf(1000.0) * dist.f2().pdf(0.0);
        assert!((sym - expect).abs() < 1e-18);
        assert!(preisach_density(-1.0, 1.0, &dist).is_err());
    }

    #[test]
    fn mu_rev_identified_values() {
        let rev = table_iv_rev();
        // At H = 0 the exponentials are 1: μ₀(1 + 168.8 + 64.13).
        let at_zero = mu_rev(0.0, &rev);
        assert!((at_zero - MU0 * (1.0 + 168.8 + 64.13)).abs() < 1e-18);
        assert!((at_zero - 2.940e-4).abs() < 1e-7);
        // Large-field limit is μ₀.
        assert!((mu_rev(1e9, &rev) - MU0).abs() < 1e-12);
        // Even function.
        for h in [13.0, 500.0, 4e3, 9e4] {
            assert_eq!(mu_rev(h, &rev), mu_rev(-h, &rev));
        }
    }

    #[test]
    fn b_rev_identified_values() {
        let rev = table_iv_rev();
        assert_eq!(b_rev(0.0, &rev), 0.0);
        // Substituting H = H₁ = 1262 A/m.
        let expect = MU0 * 1262.0
            + 168.8 * MU0 * 1262.0 * (1.0 - (-1.0f64).exp())
            + 64.13 * MU0 * 8821.0 * (1.0 - (-1262.0f64 / 8821.0).exp());
        assert!((b_rev(1262.0, &rev) - expect).abs() < 1e-15);
        // Odd function.
        for h in [3.0, 700.0, 1.5e4] {
            assert!((b_rev(h, &rev) + b_rev(-h, &rev)).abs() < 1e-18);
        }
        // Slope approaches μ₀ at large field: B(H+δ)−B(H) ≈ μ₀δ.
        let slope = (b_rev(1e8 + 1.0, &rev) - b_rev(1e8, &rev)) / 1.0;
        assert!((slope - MU0).abs() < 1e-10);
    }

    #[test]
    fn rev_positivity_constraint() {
        // Strongly negative μ₁ drives the permeability negative near H = 0.
        assert!(RevParams::new(-2.0 * MU0, 0.5 * MU0, 1000.0, 2000.0).is_err());
        // Mildly negative μ₁ compensated by μ₂ stays positive everywhere.
        assert!(RevParams::new(-0.3 * MU0, 1.0 * MU0, 1000.0, 2000.0).is_ok());
        // Interior dip: large negative short-range term under a positive
        // long-range term can undercut μ₀ away from the origin.
        assert!(RevParams::new(100.0 * MU0, -99.0 * MU0, 100.0, 101.0).is_ok());
        assert!(RevParams::new(100.0 * MU0, -150.0 * MU0, 100.0, 10_000.0).is_err());
    }

    #[test]
    fn saturation_magnetization_identified_value() {
        let p = table_iv_gpm();
        let m_sat = saturation_magnetization(&p);
        let expect = (168.8 * MU0 * 1262.0 + 64.13 * MU0 * 8821.0 + 0.8103) / MU0;
        assert!((m_sat - expect).abs() / expect < 1e-14);
        assert!((m_sat - 1.4235e6).abs() < 1e2);
        // Unit case: μ₁ = μ₂ = 0, B̂_Irr = μ₀ gives 1 A/m.
        let unit = GpmParams::new(
            RevParams::new(0.0, 0.0, 1.0, 2.0).unwrap(),
            table_iv_dist(),
            MU0,
            1.0,
            -1.0,
        )
        .unwrap();
        assert!((saturation_magnetization(&unit) - 1.0).abs() < 1e-12);
        // Linearity in B̂_Irr.
        let mut doubled = p;
        doubled.b_irr_sat *= 2.0;
        let diff = saturation_magnetization(&doubled) - m_sat;
        assert!((diff - p.b_irr_sat / MU0).abs() / (p.b_irr_sat / MU0) < 1e-12);
    }
}
