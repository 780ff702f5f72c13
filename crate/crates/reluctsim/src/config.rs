//! Single-document JSON configuration mirroring the model parameter types.
//!
//! All quantities are SI; field names carry their unit. Reversible
//! permeability amplitudes accept either an absolute value (`*_h_per_m`) or a
//! vacuum-relative one (`*_rel_mu0`), exactly one of the two.

use crate::error::{Error, Result};
use crate::hybrid::{Actuator, MechParams, SimConfig};
use crate::hysteresis::{GpmModel, GpmParams, PreisachDistribution, RevParams, MU0};
use crate::magnetics::{CoilParams, CoreGeometry, EddyParams, MagneticCircuit, ReluctanceTable};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub coil: CoilConfig,
    pub core: CoreConfig,
    pub eddy: EddyConfig,
    pub mech: MechConfig,
    pub gpm: GpmConfig,
    pub reluctance: ReluctanceSource,
    #[serde(default)]
    pub sim: SimSettings,
    #[serde(default)]
    pub demag: DemagSettings,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoilConfig {
    pub resistance_ohm: f64,
    pub turns: u32,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoreConfig {
    pub l_iron_m: f64,
    pub a_iron_m2: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EddyConfig {
    pub k_ec_a_per_v: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechConfig {
    pub mass_kg: f64,
    pub k_s_n_per_m: f64,
    pub z_s_m: f64,
    #[serde(default)]
    pub damping_ns_per_m: f64,
    pub z_min_m: f64,
    pub z_max_m: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpmConfig {
    pub rev: RevConfig,
    pub dist: DistConfig,
    pub b_irr_sat_t: f64,
    pub alpha0_a_per_m: f64,
    pub beta0_a_per_m: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RevConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu1_h_per_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu1_rel_mu0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu2_h_per_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu2_rel_mu0: Option<f64>,
    pub h1_a_per_m: f64,
    pub h2_a_per_m: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistConfig {
    pub m_hc_a_per_m: f64,
    pub s_hc_a_per_m: f64,
    pub s_hm_a_per_m: f64,
}

/// Air-gap reluctance: an external table file or the built-in linear fixture
/// sampled over the mechanical travel.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReluctanceSource {
    Path(PathBuf),
    Synthetic {
        r0_per_h: f64,
        a_gap_m2: f64,
        #[serde(default = "default_table_samples")]
        samples: usize,
    },
}

fn default_table_samples() -> usize {
    41
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSettings {
    pub dt_s: f64,
    pub t_end_s: f64,
    pub t_tol_s: f64,
    pub record_every: usize,
}

impl Default for SimSettings {
    fn default() -> Self {
        let d = SimConfig::default();
        Self {
            dt_s: d.dt,
            t_end_s: d.t_end,
            t_tol_s: d.t_tol,
            record_every: d.record_every,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemagSettings {
    pub pairs: usize,
}

impl Default for DemagSettings {
    fn default() -> Self {
        Self { pairs: 100 }
    }
}

impl RevConfig {
    fn resolve_amp(abs: Option<f64>, rel: Option<f64>, name: &str) -> Result<f64> {
        match (abs, rel) {
            (Some(a), None) => Ok(a),
            (None, Some(r)) => Ok(r * MU0),
            (Some(_), Some(_)) => Err(Error::Config(format!(
                "{name}: give either the absolute or the mu0-relative value, not both"
            ))),
            (None, None) => Err(Error::Config(format!("{name}: value missing"))),
        }
    }

    pub fn resolve(&self) -> Result<RevParams> {
        RevParams::new(
            Self::resolve_amp(self.mu1_h_per_m, self.mu1_rel_mu0, "gpm.rev.mu1")?,
            Self::resolve_amp(self.mu2_h_per_m, self.mu2_rel_mu0, "gpm.rev.mu2")?,
            self.h1_a_per_m,
            self.h2_a_per_m,
        )
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: Config = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn gpm_params(&self) -> Result<GpmParams> {
        GpmParams::new(
            self.gpm.rev.resolve()?,
            PreisachDistribution::new(
                self.gpm.dist.m_hc_a_per_m,
                self.gpm.dist.s_hc_a_per_m,
                self.gpm.dist.s_hm_a_per_m,
            )?,
            self.gpm.b_irr_sat_t,
            self.gpm.alpha0_a_per_m,
            self.gpm.beta0_a_per_m,
        )
    }

    pub fn mech_params(&self) -> MechParams {
        MechParams {
            mass: self.mech.mass_kg,
            k_s: self.mech.k_s_n_per_m,
            z_s: self.mech.z_s_m,
            damping: self.mech.damping_ns_per_m,
            z_min: self.mech.z_min_m,
            z_max: self.mech.z_max_m,
        }
    }

    /// Resolve the reluctance table; `base_dir` anchors relative paths.
    pub fn reluctance_table(&self, base_dir: &Path) -> Result<ReluctanceTable> {
        match &self.reluctance {
            ReluctanceSource::Path(p) => {
                let full = if p.is_absolute() {
                    p.clone()
                } else {
                    base_dir.join(p)
                };
                crate::io::read_reluctance_table(&full)
            }
            ReluctanceSource::Synthetic {
                r0_per_h,
                a_gap_m2,
                samples,
            } => ReluctanceTable::synthetic_linear(
                *r0_per_h,
                *a_gap_m2,
                self.mech.z_min_m,
                self.mech.z_max_m,
                *samples,
            ),
        }
    }

    /// Build the full actuator, validating every section.
    pub fn build_actuator(&self, base_dir: &Path) -> Result<Actuator> {
        let coil = CoilParams {
            resistance: self.coil.resistance_ohm,
            turns: self.coil.turns,
        };
        coil.validate()?;
        let core = CoreGeometry {
            l_iron: self.core.l_iron_m,
            a_iron: self.core.a_iron_m2,
        };
        core.validate()?;
        let eddy = EddyParams {
            k_ec: self.eddy.k_ec_a_per_v,
        };
        eddy.validate()?;
        let mech = self.mech_params();
        mech.validate()?;
        let table = self.reluctance_table(base_dir)?;
        // The table must span the mechanical travel.
        if table.z_min() > mech.z_min + table.margin()
            || table.z_max() < mech.z_max - table.margin()
        {
            return Err(Error::Table(format!(
                "reluctance table spans [{}, {}] m but the travel is [{}, {}] m",
                table.z_min(),
                table.z_max(),
                mech.z_min,
                mech.z_max
            )));
        }
        let gpm = GpmModel::new(self.gpm_params()?)?;
        Ok(Actuator {
            circuit: MagneticCircuit {
                coil,
                core,
                eddy,
                gpm,
                table,
            },
            mech,
        })
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            dt: self.sim.dt_s,
            t_end: self.sim.t_end_s,
            t_tol: self.sim.t_tol_s,
            record_every: self.sim.record_every,
            ..SimConfig::default()
        }
    }

    /// FNV-1a hash of the canonical JSON form, for run reports.
    pub fn content_hash(&self) -> String {
        let text = serde_json::to_string(self).unwrap_or_default();
        let mut h: u64 = 0xcbf29ce484222325;
        for b in text.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }

    /// The identified solenoid-valve parameter set with the synthetic
    /// air-gap fixture: the canonical example and self-check subject.
    pub fn valve_example() -> Self {
        Config {
            coil: CoilConfig {
                resistance_ohm: 49.0,
                turns: 1200,
            },
            core: CoreConfig {
                l_iron_m: 0.055,
                a_iron_m2: 1.257e-5,
            },
            eddy: EddyConfig {
                k_ec_a_per_v: 1637.0,
            },
            mech: MechConfig {
                mass_kg: 1.6e-3,
                k_s_n_per_m: 55.0,
                z_s_m: 15e-3,
                damping_ns_per_m: 0.0,
                z_min_m: 0.0,
                z_max_m: 0.9e-3,
            },
            gpm: GpmConfig {
                rev: RevConfig {
                    mu1_rel_mu0: Some(168.8),
                    mu2_rel_mu0: Some(64.13),
                    h1_a_per_m: 1262.0,
                    h2_a_per_m: 8821.0,
                    ..Default::default()
                },
                dist: DistConfig {
                    m_hc_a_per_m: 227.9,
                    s_hc_a_per_m: 154.9,
                    s_hm_a_per_m: 138.0,
                },
                b_irr_sat_t: 0.8103,
                alpha0_a_per_m: 1.0e4,
                beta0_a_per_m: -1.0e4,
            },
            reluctance: ReluctanceSource::Synthetic {
                r0_per_h: 1.0e7,
                a_gap_m2: 2.5e-5,
                samples: 41,
            },
            sim: SimSettings::default(),
            demag: DemagSettings::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valve_example_builds() {
        let cfg = Config::valve_example();
        let act = cfg.build_actuator(Path::new(".")).unwrap();
        assert_eq!(act.circuit.coil.turns, 1200);
        assert!((act.circuit.gpm.params().rev.mu1 - 168.8 * MU0).abs() < 1e-12);
        assert!((act.circuit.gpm.t0() - 1.5946).abs() < 1e-3);
    }

    #[test]
    fn round_trip_identity() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("config.json");
        let cfg = Config::valve_example();
        cfg.save(&p).unwrap();
        let loaded = Config::load(&p).unwrap();
        let again = dir.path().join("config2.json");
        loaded.save(&again).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            std::fs::read_to_string(&again).unwrap()
        );
        assert_eq!(cfg.content_hash(), loaded.content_hash());
    }

    #[test]
    fn mu_forms_are_exclusive() {
        let mut cfg = Config::valve_example();
        cfg.gpm.rev.mu1_h_per_m = Some(2e-4);
        assert!(cfg.gpm_params().is_err());
        cfg.gpm.rev.mu1_rel_mu0 = None;
        let p = cfg.gpm_params().unwrap();
        assert!((p.rev.mu1 - 2e-4).abs() < 1e-18);
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = r#"{"coil": {"resistance_ohm": 49.0, "turns": 1200, "bogus": 1}}"#;
        assert!(serde_json::from_str::<Config>(text).is_err());
    }

    #[test]
    fn table_span_checked_against_travel() {
        let mut cfg = Config::valve_example();
        // The synthetic source is sampled over the travel, so it always spans.
        cfg.mech.z_max_m = 5e-3;
        assert!(cfg.build_actuator(Path::new(".")).is_ok());
        // An external table that stops short must be rejected.
        let dir = tempfile::tempdir().unwrap();
        let tp = dir.path().join("short.csv");
        std::fs::write(&tp, "z_m,R_air_per_H\n0.0,1e7\n0.0001,1.2e7\n").unwrap();
        cfg.reluctance = ReluctanceSource::Path(tp);
        assert!(cfg.build_actuator(dir.path()).is_err());
    }
}
