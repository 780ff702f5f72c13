//! Lumped electromagnetic circuit of the actuator.
//!
//! Ampère's law over the flux path reduces to H_iron·l_iron + φ·R_air(z) =
//! N·i + i_ec with the air-gap reluctance tabulated against gap length and
//! the eddy currents lumped as i_ec = −k_ec·φ̇. Taking the field intensity as
//! the state variable gives an explicit flux-side ODE that needs no inversion
//! of the hysteresis model: one flux-density and one permeability evaluation
//! per derivative.

use crate::error::{Error, Result};
use crate::hysteresis::{GpmModel, HysteresisState};
use crate::interp::PchipSpline;
use serde::{Deserialize, Serialize};

/// Coil winding parameters.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CoilParams {
    /// Internal resistance, Ω.
    pub resistance: f64,
    /// Number of turns.
    pub turns: u32,
}

impl CoilParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.resistance > 0.0) || !self.resistance.is_finite() {
            return Err(Error::InvalidParam(format!(
                "coil resistance must be positive, got {}",
                self.resistance
            )));
        }
        if self.turns == 0 {
            return Err(Error::InvalidParam("coil needs at least one turn".into()));
        }
        Ok(())
    }

    pub fn turns_f(&self) -> f64 {
        f64::from(self.turns)
    }
}

/// Iron path geometry: flux-path length and average cross-section.
/// The path length is treated as a constant over the stroke.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CoreGeometry {
    /// Iron path length, m.
    pub l_iron: f64,
    /// Average cross-sectional area, m².
    pub a_iron: f64,
}

impl CoreGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.l_iron > 0.0 && self.a_iron > 0.0) {
            return Err(Error::InvalidParam(format!(
                "core geometry must be positive, got l_iron {} m, a_iron {} m^2",
                self.l_iron, self.a_iron
            )));
        }
        Ok(())
    }
}

/// Lumped eddy-current coefficient, A·s/Wb. Constant over the stroke.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EddyParams {
    pub k_ec: f64,
}

impl EddyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_ec >= 0.0) || !self.k_ec.is_finite() {
            return Err(Error::InvalidParam(format!(
                "eddy coefficient must be non-negative, got {}",
                self.k_ec
            )));
        }
        Ok(())
    }
}

/// Net induced eddy current opposing the flux change: i_ec = −k_ec·φ̇.
pub fn eddy_current(phi_dot: f64, p: &EddyParams) -> f64 {
    -p.k_ec * phi_dot
}

/// Air-gap reluctance sampled against gap length, with shape-preserving
/// interpolation of both the reluctance and its spatial derivative.
///
/// When no derivative column is supplied the interpolant of the reluctance
/// column is differentiated analytically. Queries slightly outside the table
/// span (1 % of the span) continue linearly; beyond that they fail.
#[derive(Clone, Debug)]
pub struct ReluctanceTable {
    z: Vec<f64>,
    r_spline: PchipSpline,
    drdz_spline: Option<PchipSpline>,
}

impl ReluctanceTable {
    pub fn new(z: Vec<f64>, r_air: Vec<f64>, drdz: Option<Vec<f64>>) -> Result<Self> {
        if z.len() != r_air.len() {
            return Err(Error::Table(format!(
                "{} gap samples vs {} reluctance samples",
                z.len(),
                r_air.len()
            )));
        }
        for (k, &r) in r_air.iter().enumerate() {
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::Table(format!(
                    "reluctance must be positive, got {r} at sample {k}"
                )));
            }
        }
        let r_spline = PchipSpline::new(&z, &r_air).map_err(|e| match e {
            Error::InvalidParam(m) => Error::Table(m),
            other => other,
        })?;
        let drdz_spline = match drdz {
            Some(col) => {
                if col.len() != z.len() {
                    return Err(Error::Table(format!(
                        "{} gap samples vs {} derivative samples",
                        z.len(),
                        col.len()
                    )));
                }
                Some(PchipSpline::new(&z, &col).map_err(|e| match e {
                    Error::InvalidParam(m) => Error::Table(m),
                    other => other,
                })?)
            }
            None => None,
        };
        Ok(Self {
            z,
            r_spline,
            drdz_spline,
        })
    }

    /// Linear-plus-offset fixture R(z) = r0 + z/(μ₀·a_gap), sampled on a
    /// uniform grid. Stands in for field-solver tables in tests and examples;
    /// r0 models the residual (annular) gap at closure.
    pub fn synthetic_linear(
        r0: f64,
        a_gap: f64,
        z_min: f64,
        z_max: f64,
        samples: usize,
    ) -> Result<Self> {
        if !(r0 > 0.0 && a_gap > 0.0) {
            return Err(Error::Table(format!(
                "synthetic table needs positive r0 and a_gap, got {r0}, {a_gap}"
            )));
        }
        if samples < 2 || !(z_max > z_min) {
            return Err(Error::Table(
                "synthetic table needs at least two samples over a positive span".into(),
            ));
        }
        let slope = 1.0 / (crate::hysteresis::MU0 * a_gap);
        let mut z = Vec::with_capacity(samples);
        let mut r = Vec::with_capacity(samples);
        let mut d = Vec::with_capacity(samples);
        for k in 0..samples {
            let zk = z_min + (z_max - z_min) * k as f64 / (samples - 1) as f64;
            z.push(zk);
            r.push(r0 + zk * slope);
            d.push(slope);
        }
        Self::new(z, r, Some(d))
    }

    pub fn z_min(&self) -> f64 {
        self.z[0]
    }

    pub fn z_max(&self) -> f64 {
        *self.z.last().expect("nonempty table")
    }

    /// Allowed extrapolation margin beyond the sampled span.
    pub fn margin(&self) -> f64 {
        0.01 * (self.z_max() - self.z_min())
    }

    /// Reluctance and its spatial derivative at gap length `z`.
    pub fn reluctance(&self, z: f64) -> Result<(f64, f64)> {
        if !z.is_finite() {
            return Err(Error::NonFinite {
                context: "reluctance",
                value: z,
            });
        }
        let m = self.margin();
        if z < self.z_min() - m || z > self.z_max() + m {
            return Err(Error::OutOfRange {
                context: "reluctance",
                value: z,
                lo: self.z_min() - m,
                hi: self.z_max() + m,
            });
        }
        let r = self.r_spline.eval(z);
        let d = match &self.drdz_spline {
            Some(s) => s.eval(z),
            None => self.r_spline.deriv(z),
        };
        if !(r > 0.0) {
            return Err(Error::Table(format!(
                "interpolated reluctance not positive at z = {z}: {r}"
            )));
        }
        Ok((r, d))
    }
}

/// The electromagnetic side of the actuator: coil, core, eddy loop,
/// hysteresis model and air-gap table.
#[derive(Clone, Debug)]
pub struct MagneticCircuit {
    pub coil: CoilParams,
    pub core: CoreGeometry,
    pub eddy: EddyParams,
    pub gpm: GpmModel,
    pub table: ReluctanceTable,
}

impl MagneticCircuit {
    /// Magnetic flux φ = A_iron·B at the given field and state.
    pub fn flux(&self, s: &HysteresisState, h: f64) -> Result<f64> {
        Ok(self.core.a_iron * self.gpm.b(s, h)?)
    }

    /// Numerator of the field-derivative expression:
    /// (N/R)·v − A_iron·B·R_air(z) − H·l_iron.
    ///
    /// Its sign is the sign of Ḣ for either permeability branch, so it doubles
    /// as the direction-switch guard function.
    pub fn h_numerator(&self, h: f64, z: f64, s: &HysteresisState, v: f64) -> Result<f64> {
        let (r_air, _) = self.table.reluctance(z)?;
        let b = self.gpm.b(s, h)?;
        Ok(self.coil.turns_f() / self.coil.resistance * v
            - self.core.a_iron * b * r_air
            - h * self.core.l_iron)
    }

    /// Field-intensity derivative: the explicit form that avoids inverting
    /// the hysteresis model (one B and one μ' evaluation).
    pub fn h_field_derivative(&self, h: f64, z: f64, s: &HysteresisState, v: f64) -> Result<f64> {
        let numerator = self.h_numerator(h, z, s, v)?;
        let mu = self.gpm.mu(s, h)?;
        if !(mu > 0.0) {
            return Err(Error::InvalidParam(format!(
                "incremental permeability not positive at H = {h}: {mu:.3e}"
            )));
        }
        let denom =
            (self.coil.turns_f().powi(2) / self.coil.resistance + self.eddy.k_ec)
                * self.core.a_iron
                * mu;
        Ok(numerator / denom)
    }

    /// Coil current from the Ampère balance:
    /// i = (H·l_iron + φ·R_air(z) + k_ec·φ̇)/N with φ̇ = A_iron·μ'·Ḣ.
    pub fn coil_current(&self, h: f64, z: f64, s: &HysteresisState, h_dot: f64) -> Result<f64> {
        let (r_air, _) = self.table.reluctance(z)?;
        let phi = self.flux(s, h)?;
        let phi_dot = self.core.a_iron * self.gpm.mu(s, h)? * h_dot;
        Ok((h * self.core.l_iron + phi * r_air + self.eddy.k_ec * phi_dot) / self.coil.turns_f())
    }

    /// Quasi-static field estimate from measured current and flux, neglecting
    /// induced currents: H = (N·i − φ·R_air(z))/l_iron.
    pub fn h_static_from_measurement(&self, i: f64, phi: f64, z: f64) -> Result<f64> {
        let (r_air, _) = self.table.reluctance(z)?;
        Ok((self.coil.turns_f() * i - phi * r_air) / self.core.l_iron)
    }

    /// Reluctance force on the armature: −½·φ²·∂R_air/∂z. Non-positive
    /// whenever the reluctance grows with the gap (the force closes the gap).
    pub fn magnetic_force(&self, h: f64, z: f64, s: &HysteresisState) -> Result<f64> {
        let (_, drdz) = self.table.reluctance(z)?;
        let phi = self.flux(s, h)?;
        Ok(-0.5 * phi * phi * drdz)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hysteresis::{GpmParams, PreisachDistribution, RevParams, MU0};

    fn circuit() -> MagneticCircuit {
        let gpm = GpmModel::new(
            GpmParams::new(
                RevParams::new(168.8 * MU0, 64.13 * MU0, 1262.0, 8821.0).unwrap(),
                PreisachDistribution::new(227.9, 154.9, 138.0).unwrap(),
                0.8103,
                1.0e4,
                -1.0e4,
            )
            .unwrap(),
        )
        .unwrap();
        MagneticCircuit {
            coil: CoilParams {
                resistance: 49.0,
                turns: 1200,
            },
            core: CoreGeometry {
                l_iron: 0.055,
                a_iron: 1.257e-5,
            },
            eddy: EddyParams { k_ec: 1637.0 },
            gpm,
            table: ReluctanceTable::synthetic_linear(1.0e7, 2.5e-5, 0.0, 9.0e-4, 41).unwrap(),
        }
    }

    #[test]
    fn table_reproduces_knots_and_fixture_slope() {
        let t = ReluctanceTable::synthetic_linear(1.0e7, 2.5e-5, 0.0, 9.0e-4, 41).unwrap();
        let slope = 1.0 / (MU0 * 2.5e-5);
        // Knot values exact.
        let (r, d) = t.reluctance(0.0).unwrap();
        assert!((r - 1.0e7).abs() < 1.0);
        assert!((d - slope).abs() / slope < 1e-12);
        // Mid-span derivative within 0.1 %.
        let (r_mid, d_mid) = t.reluctance(4.3e-4).unwrap();
        assert!((d_mid - slope).abs() / slope < 1e-3);
        assert!((r_mid - (1.0e7 + 4.3e-4 * slope)).abs() / r_mid < 1e-6);
    }

    #[test]
    fn table_without_derivative_column_differentiates() {
        let zs: Vec<f64> = (0..21).map(|k| k as f64 * 5e-5).collect();
        let slope = 1.0 / (MU0 * 2.5e-5);
        let rs: Vec<f64> = zs.iter().map(|z| 1.0e7 + z * slope).collect();
        let t = ReluctanceTable::new(zs, rs, None).unwrap();
        let (_, d) = t.reluctance(3.7e-4).unwrap();
        assert!((d - slope).abs() / slope < 1e-3);
    }

    #[test]
    fn interpolation_stays_inside_knot_range() {
        // Convex increasing samples.
        let zs: Vec<f64> = (0..10).map(|k| k as f64 * 1e-4).collect();
        let rs: Vec<f64> = zs.iter().map(|z| 1e7 + 1e10 * z + 5e13 * z * z).collect();
        let t = ReluctanceTable::new(zs.clone(), rs.clone(), None).unwrap();
        for k in 0..zs.len() - 1 {
            for j in 1..10 {
                let z = zs[k] + (zs[k + 1] - zs[k]) * j as f64 / 10.0;
                let (r, _) = t.reluctance(z).unwrap();
                assert!(r >= rs[k] - 1e-6 && r <= rs[k + 1] + 1e-6);
            }
        }
    }

    #[test]
    fn extrapolation_margin_enforced() {
        let t = ReluctanceTable::synthetic_linear(1.0e7, 2.5e-5, 0.0, 9.0e-4, 41).unwrap();
        // 1 % of the 0.9 mm span is 9 µm.
        assert!(t.reluctance(-8e-6).is_ok());
        assert!(t.reluctance(9.08e-4).is_ok());
        assert!(t.reluctance(-1e-5).is_err());
        assert!(t.reluctance(9.2e-4).is_err());
    }

    #[test]
    fn table_rejects_bad_input() {
        assert!(ReluctanceTable::new(vec![0.0, 1e-4], vec![1e7, -1.0], None).is_err());
        assert!(ReluctanceTable::new(vec![0.0, 0.0], vec![1e7, 1e7], None).is_err());
        assert!(ReluctanceTable::new(vec![0.0, 1e-4], vec![1e7], None).is_err());
    }

    #[test]
    fn eddy_current_values() {
        let p = EddyParams { k_ec: 1637.0 };
        assert_eq!(eddy_current(0.0, &p), 0.0);
        // 1 Wb/s of flux rise with the identified coefficient.
        assert_eq!(eddy_current(1.0, &p), -1637.0);
        // Always opposes the flux change.
        for pd in [-2.0, -1e-3, 1e-3, 5.0] {
            assert!(eddy_current(pd, &p) * pd <= 0.0);
        }
    }

    #[test]
    fn field_derivative_equilibrium_and_sign() {
        let c = circuit();
        let s = c.gpm.demagnetized_state(100).unwrap();
        for z in [0.0, 4e-4, 9e-4] {
            // Zero voltage from the demagnetized state: only the residual
            // discretization flux drives the field, orders below drive level.
            let dh0 = c.h_field_derivative(0.0, z, &s, 0.0).unwrap();
            // A positive voltage pushes the field up.
            let dh = c.h_field_derivative(0.0, z, &s, 18.0).unwrap();
            assert!(dh > 1e4, "drive rate {dh:.3} A/m/s at z={z}");
            assert!(
                dh0.abs() < 2e-3 * dh,
                "residual drift {dh0:.3} vs drive {dh:.3} A/m/s at z={z}"
            );
        }
    }

    #[test]
    fn static_field_from_measurement() {
        let c = circuit();
        // Zero measurement gives zero field.
        assert_eq!(c.h_static_from_measurement(0.0, 0.0, 0.0).unwrap(), 0.0);
        // 100 mA with no flux: N·i/l_iron.
        let h = c.h_static_from_measurement(0.1, 0.0, 0.0).unwrap();
        assert!((h - 1200.0 * 0.1 / 0.055).abs() < 1e-9);
        assert!((h - 2181.8).abs() < 0.1);
    }

    #[test]
    fn static_current_round_trip() {
        let c = circuit();
        let model = c.gpm.clone();
        let mut replay = crate::hysteresis::Replay::new(&model, model.virgin_state(), -1.0e4);
        replay.feed(2500.0).unwrap();
        let s = replay.state();
        let z = 3e-4;
        let i = c.coil_current(2500.0, z, s, 0.0).unwrap();
        let phi = c.flux(s, 2500.0).unwrap();
        let h_back = c.h_static_from_measurement(i, phi, z).unwrap();
        assert!((h_back - 2500.0).abs() < 1e-9 * 2500.0);
    }

    #[test]
    fn force_sign_and_flux_square() {
        let c = circuit();
        let model = c.gpm.clone();
        // Demagnetized at zero field: force is the residual-squared level.
        let s0 = c.gpm.demagnetized_state(100).unwrap();
        let f0 = c.magnetic_force(0.0, 4e-4, &s0).unwrap();
        assert!(f0.abs() < 1e-4, "residual force {f0:.3e} N");
        // Equal magnitude for either flux sign.
        let mut up = crate::hysteresis::Replay::demagnetized(&model, 100).unwrap();
        up.feed(3000.0).unwrap();
        let mut down = crate::hysteresis::Replay::demagnetized(&model, 100).unwrap();
        down.feed(-3000.0).unwrap();
        let f_up = c.magnetic_force(3000.0, 4e-4, up.state()).unwrap();
        let f_down = c.magnetic_force(-3000.0, 4e-4, down.state()).unwrap();
        assert!(f_up < 0.0);
        assert!((f_up - f_down).abs() < 1e-6 + 1e-3 * f_up.abs());
        // Fixture value: dR/dz = 1/(μ₀·a_gap), φ = 1e−5 Wb.
        let drdz = 1.0 / (MU0 * 2.5e-5);
        let expect = -0.5 * 1e-10 * drdz;
        let phi = c.flux(up.state(), 3000.0).unwrap();
        let f_formula = -0.5 * phi * phi * drdz;
        assert!((f_up - f_formula).abs() < 1e-9 * f_formula.abs());
        assert!(expect < 0.0);
    }
}
