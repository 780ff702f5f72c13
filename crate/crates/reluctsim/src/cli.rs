//! Command implementations behind the `reluctsim` binary.
//!
//! Exit codes: 0 success, 1 self-check failure, 2 input validation,
//! 3 runtime (simulation) failure, 4 pipeline-ordering violation.

use crate::config::Config;
use crate::error::{Error, Result};
use crate::hybrid::Trajectory;
use crate::hysteresis::{
    b_rev, gpm_b, mu_gpm, triangle_integral, triangle_integral_2d, Direction, Replay,
};
use crate::identify::{
    degauss_waveform, derive_bh, extract_reversal_slopes, fit_gpm, fit_kec, fit_rev,
    ExperimentRecord, FitResult, GpmFitOptions, KecFitOptions, MinimizeOptions,
};
use crate::io;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const EXIT_OK: i32 = 0;
pub const EXIT_SELFCHECK: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const EXIT_PIPELINE: i32 = 4;

/// Summary written next to every command's outputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub config_hash: String,
    pub runtime_s: f64,
    pub outputs: Vec<String>,
    pub summary: serde_json::Value,
}

fn fail(code: i32, err: &Error) -> i32 {
    eprintln!("error: {err}");
    code
}

fn base_dir(config_path: &Path) -> PathBuf {
    config_path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Simulate a waveform through the configured actuator, writing the
/// trajectory CSV, event log and run report under `out_prefix`.
pub fn cmd_simulate(
    config_path: &Path,
    waveform_path: &Path,
    out_prefix: &str,
    dt_override: Option<f64>,
) -> i32 {
    let started = Instant::now();
    let setup = (|| -> Result<_> {
        let cfg = Config::load(config_path)?;
        let act = cfg.build_actuator(&base_dir(config_path))?;
        let wave = io::read_waveform(waveform_path)?;
        let mut sim = cfg.sim_config();
        if let Some(dt) = dt_override {
            sim.dt = dt;
        }
        sim.validate()?;
        let init = act.initial_state(cfg.demag.pairs)?;
        Ok((cfg, act, wave, sim, init))
    })();
    let (cfg, act, wave, sim, init) = match setup {
        Ok(x) => x,
        Err(e) => return fail(EXIT_INPUT, &e),
    };

    let run = act.simulate_run(init, &wave, &sim);
    let traj_path = format!("{out_prefix}_trajectory.csv");
    let events_path = format!("{out_prefix}_events.jsonl");
    let report_path = format!("{out_prefix}_report.json");
    // The trajectory prefix is written even when the run failed.
    if let Err(e) = write_sim_outputs(&run.trajectory, &traj_path, &events_path) {
        return fail(EXIT_RUNTIME, &e);
    }
    let final_state = run.trajectory.records.last().map(|r| {
        json!({"t_s": r.t, "q": r.mode.index(), "h_a_per_m": r.h_iron, "z_m": r.z})
    });
    let report = RunReport {
        command: "simulate".into(),
        config_hash: cfg.content_hash(),
        runtime_s: started.elapsed().as_secs_f64(),
        outputs: vec![traj_path, events_path],
        summary: json!({
            "records": run.trajectory.records.len(),
            "jumps": run.trajectory.events.len(),
            "clamped_evals": run.trajectory.clamped_evals,
            "final": final_state,
            "failure": run.failure.as_ref().map(|e| e.to_string()),
        }),
    };
    if let Err(e) = write_report(&report, Path::new(&report_path)) {
        return fail(EXIT_RUNTIME, &e);
    }
    match run.failure {
        None => EXIT_OK,
        Some(e) => fail(EXIT_RUNTIME, &e),
    }
}

fn write_sim_outputs(traj: &Trajectory, traj_path: &str, events_path: &str) -> Result<()> {
    io::write_trajectory(Path::new(traj_path), traj)?;
    io::write_events(Path::new(events_path), &traj.events)?;
    Ok(())
}

fn write_report(report: &RunReport, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(report)?)?;
    Ok(())
}

/// Identification stage selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IdentifyStage {
    Rev,
    Gpm,
    Kec,
}

impl IdentifyStage {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rev" => Some(Self::Rev),
            "gpm" => Some(Self::Gpm),
            "kec" => Some(Self::Kec),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Self::Rev => "rev",
            Self::Gpm => "gpm",
            Self::Kec => "kec",
        }
    }
}

/// Accumulated identification results shared between stages.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct MergedParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rev: Option<crate::config::RevConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dist: Option<crate::config::DistConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_irr_sat_t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_ec_a_per_v: Option<f64>,
}

fn merged_path(out_path: &Path) -> PathBuf {
    base_dir(out_path).join("identified_params.json")
}

fn load_merged(path: &Path) -> MergedParams {
    std::fs::read_to_string(path)
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok())
        .unwrap_or_default()
}

/// Run one identification stage over the experiment files matching
/// `data_glob` (a literal path or a single-`*` pattern). Writes the fit
/// result to `out_path` and folds the parameters into
/// `identified_params.json` beside it.
pub fn cmd_identify(
    stage: IdentifyStage,
    config_path: &Path,
    data_glob: &str,
    out_path: &Path,
    seed: u64,
) -> i32 {
    let started = Instant::now();
    let cfg = match Config::load(config_path) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_INPUT, &e),
    };
    let records = match load_records(data_glob) {
        Ok(r) if r.is_empty() => {
            return fail(
                EXIT_INPUT,
                &Error::InvalidParam(format!("no experiment files match '{data_glob}'")),
            )
        }
        Ok(r) => r,
        Err(e) => return fail(EXIT_INPUT, &e),
    };

    let merged_file = merged_path(out_path);
    let mut merged = load_merged(&merged_file);

    // Stage prerequisites: the sequential pipeline must run in order.
    match stage {
        IdentifyStage::Rev => {}
        IdentifyStage::Gpm => {
            if merged.rev.is_none() {
                return fail(
                    EXIT_PIPELINE,
                    &Error::Pipeline("gpm stage requires a prior rev result".into()),
                );
            }
        }
        IdentifyStage::Kec => {
            if merged.dist.is_none() || merged.b_irr_sat_t.is_none() {
                return fail(
                    EXIT_PIPELINE,
                    &Error::Pipeline("kec stage requires a prior gpm result".into()),
                );
            }
        }
    }

    let opts = MinimizeOptions {
        seed,
        ..MinimizeOptions::default()
    };
    let outcome = run_stage(stage, &cfg, config_path, &records, &mut merged, &opts);
    let (fit, params_json) = match outcome {
        Ok(x) => x,
        Err(e) => return fail(EXIT_RUNTIME, &e),
    };

    let result = json!({
        "stage": stage.name(),
        "parameters": params_json,
        "objective": fit.objective,
        "iterations": fit.iterations,
        "evaluations": fit.evaluations,
        "converged": fit.converged,
    });
    let report = RunReport {
        command: format!("identify {}", stage.name()),
        config_hash: cfg.content_hash(),
        runtime_s: started.elapsed().as_secs_f64(),
        outputs: vec![
            out_path.display().to_string(),
            merged_file.display().to_string(),
        ],
        summary: result.clone(),
    };
    let write = (|| -> Result<()> {
        std::fs::write(out_path, serde_json::to_string_pretty(&result)?)?;
        std::fs::write(&merged_file, serde_json::to_string_pretty(&merged)?)?;
        write_report(
            &report,
            Path::new(&format!("{}_report.json", out_path.display())),
        )
    })();
    match write {
        Ok(()) => EXIT_OK,
        Err(e) => fail(EXIT_RUNTIME, &e),
    }
}

fn run_stage(
    stage: IdentifyStage,
    cfg: &Config,
    config_path: &Path,
    records: &[ExperimentRecord],
    merged: &mut MergedParams,
    opts: &MinimizeOptions,
) -> Result<(FitResult, serde_json::Value)> {
    let mut work = cfg.clone();
    // Earlier stage results take precedence over the config values.
    if let Some(rev) = &merged.rev {
        work.gpm.rev = rev.clone();
    }
    if let (Some(dist), Some(b)) = (&merged.dist, merged.b_irr_sat_t) {
        work.gpm.dist = dist.clone();
        work.gpm.b_irr_sat_t = b;
    }
    let act = work.build_actuator(&base_dir(config_path))?;

    match stage {
        IdentifyStage::Rev => {
            let series = derive_bh(records, &act.circuit)?;
            let mut points = Vec::new();
            let mut skipped = 0;
            for s in &series {
                let (mut p, sk) = extract_reversal_slopes(s, 5);
                points.append(&mut p);
                skipped += sk;
            }
            if skipped > 0 {
                eprintln!("warning: {skipped} reversals skipped (short window or non-positive slope)");
            }
            let (rev, fit) = fit_rev(&points, opts)?;
            merged.rev = Some(crate::config::RevConfig {
                mu1_h_per_m: Some(rev.mu1),
                mu2_h_per_m: Some(rev.mu2),
                h1_a_per_m: rev.h1,
                h2_a_per_m: rev.h2,
                ..Default::default()
            });
            let params = json!({
                "mu1_h_per_m": rev.mu1,
                "mu2_h_per_m": rev.mu2,
                "h1_a_per_m": rev.h1,
                "h2_a_per_m": rev.h2,
                "reversal_points": points.len(),
            });
            Ok((fit, params))
        }
        IdentifyStage::Gpm => {
            let series = derive_bh(records, &act.circuit)?;
            let rev = work.gpm.rev.resolve()?;
            let gopts = GpmFitOptions {
                demag_pairs: work.demag.pairs,
                bounds: (work.gpm.beta0_a_per_m, work.gpm.alpha0_a_per_m),
                minimize: *opts,
            };
            let (dist, b_irr, fit) = fit_gpm(&series, &rev, &gopts)?;
            merged.dist = Some(crate::config::DistConfig {
                m_hc_a_per_m: dist.f1().location(),
                s_hc_a_per_m: dist.f1().scale(),
                s_hm_a_per_m: dist.f2().scale(),
            });
            merged.b_irr_sat_t = Some(b_irr);
            let params = json!({
                "m_hc_a_per_m": dist.f1().location(),
                "s_hc_a_per_m": dist.f1().scale(),
                "s_hm_a_per_m": dist.f2().scale(),
                "b_irr_sat_t": b_irr,
            });
            Ok((fit, params))
        }
        IdentifyStage::Kec => {
            let kopts = KecFitOptions {
                demag_pairs: work.demag.pairs,
                dt: work.sim.dt_s,
                minimize: MinimizeOptions {
                    seed: opts.seed,
                    ..KecFitOptions::default().minimize
                },
            };
            let (k_ec, fit) = fit_kec(records, &act, &kopts)?;
            merged.k_ec_a_per_v = Some(k_ec);
            Ok((fit, json!({ "k_ec_a_per_v": k_ec })))
        }
    }
}

/// Expand a literal path or single-`*` pattern into experiment records.
fn load_records(data_glob: &str) -> Result<Vec<ExperimentRecord>> {
    let mut paths: Vec<PathBuf> = Vec::new();
    if let Some(star) = data_glob.find('*') {
        let (prefix, suffix) = data_glob.split_at(star);
        let suffix = &suffix[1..];
        let dir = Path::new(prefix)
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let leaf_prefix = Path::new(prefix)
            .file_name()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_default();
        for entry in std::fs::read_dir(&dir)? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().to_string();
            if name.starts_with(&leaf_prefix) && name.ends_with(suffix) {
                paths.push(entry.path());
            }
        }
        paths.sort();
    } else {
        let p = PathBuf::from(data_glob);
        if p.exists() {
            paths.push(p);
        }
    }
    paths
        .iter()
        .map(|p| io::read_experiment(p))
        .collect::<Result<Vec<_>>>()
}

/// Write a degaussing drive waveform.
pub fn cmd_degauss(
    amplitude: f64,
    decay: f64,
    cycles: usize,
    rate: usize,
    freq_hz: f64,
    out_path: &Path,
) -> i32 {
    let run = (|| -> Result<usize> {
        if !(freq_hz > 0.0) {
            return Err(Error::InvalidParam(format!(
                "degauss frequency must be positive, got {freq_hz}"
            )));
        }
        let values = degauss_waveform(amplitude, decay, cycles, rate)?;
        let dt = 1.0 / (freq_hz * rate as f64);
        let times: Vec<f64> = (0..values.len()).map(|k| k as f64 * dt).collect();
        io::write_waveform(out_path, &times, &values)?;
        Ok(values.len())
    })();
    match run {
        Ok(n) => {
            println!("wrote {n} samples to {}", out_path.display());
            EXIT_OK
        }
        Err(e) => fail(EXIT_INPUT, &e),
    }
}

/// One self-check row.
struct Check {
    name: &'static str,
    outcome: Result<()>,
}

/// Fast invariant suite over a configuration: quadrature cross-checks,
/// permeability consistency, saturation identity, guard sanity.
pub fn cmd_selfcheck(config_path: Option<&Path>) -> i32 {
    let cfg = match config_path {
        Some(p) => match Config::load(p) {
            Ok(c) => c,
            Err(e) => return fail(EXIT_INPUT, &e),
        },
        None => Config::valve_example(),
    };
    let dir = config_path.map(base_dir).unwrap_or_else(|| PathBuf::from("."));
    let checks = run_selfchecks(&cfg, &dir);
    let mut all_ok = true;
    for c in &checks {
        match &c.outcome {
            Ok(()) => println!("PASS {}", c.name),
            Err(e) => {
                all_ok = false;
                println!("FAIL {}: {e}", c.name);
            }
        }
    }
    if all_ok {
        EXIT_OK
    } else {
        EXIT_SELFCHECK
    }
}

fn run_selfchecks(cfg: &Config, base_dir: &Path) -> Vec<Check> {
    let mut checks = Vec::new();

    let params = cfg.gpm_params();
    checks.push(Check {
        name: "parameter-validity (incl. reversible-permeability positivity)",
        outcome: params.as_ref().map(|_| ()).map_err(|e| clone_err(e)),
    });
    let actuator = cfg.build_actuator(base_dir);
    checks.push(Check {
        name: "actuator-assembly (reluctance table monotone, spans travel)",
        outcome: actuator.as_ref().map(|_| ()).map_err(|e| clone_err(e)),
    });
    let (Ok(p), Ok(act)) = (params, actuator) else {
        return checks;
    };

    // Triangle integral vs direct 2-D quadrature on a few corners.
    checks.push(Check {
        name: "triangle-integral-oracle (line vs 2-D quadrature, 1e-6)",
        outcome: (|| -> Result<()> {
            for (a, b) in [
                (p.alpha0, p.beta0),
                (0.35 * p.alpha0, 0.1 * p.beta0),
                (0.05 * p.alpha0, 0.02 * p.beta0),
            ] {
                let line = triangle_integral(a, b, &p.dist)?;
                let surf = triangle_integral_2d(a, b, &p.dist, 1e-9)?;
                if (line - surf).abs() > 1e-6 * surf.abs().max(1e-12) {
                    return Err(Error::InvalidParam(format!(
                        "T({a},{b}) mismatch: {line:.9e} vs {surf:.9e}"
                    )));
                }
            }
            Ok(())
        })(),
    });

    // Closed-form staircase-edge integrals vs quadrature.
    checks.push(Check {
        name: "edge-integral-closed-form (vs quadrature, 1e-9)",
        outcome: (|| -> Result<()> {
            use crate::hysteresis::{
                edge_integral_decreasing, edge_integral_decreasing_quad, edge_integral_increasing,
                edge_integral_increasing_quad,
            };
            for k in 0..5 {
                let h = p.beta0 + (p.alpha0 - p.beta0) * (0.15 + 0.17 * k as f64);
                let cf = edge_integral_increasing(h, p.beta0, &p.dist)?;
                let qd = edge_integral_increasing_quad(h, p.beta0, &p.dist)?;
                if (cf - qd).abs() > 1e-9 * qd.abs().max(1e-15) {
                    return Err(Error::InvalidParam(format!(
                        "rising edge at H={h}: {cf:.12e} vs {qd:.12e}"
                    )));
                }
                let cf = edge_integral_decreasing(h, p.alpha0, &p.dist)?;
                let qd = edge_integral_decreasing_quad(h, p.alpha0, &p.dist)?;
                if (cf - qd).abs() > 1e-9 * qd.abs().max(1e-15) {
                    return Err(Error::InvalidParam(format!(
                        "falling edge at H={h}: {cf:.12e} vs {qd:.12e}"
                    )));
                }
            }
            Ok(())
        })(),
    });

    // Permeability vs finite differences of the flux density on a rising branch.
    checks.push(Check {
        name: "permeability-finite-difference (1e-4 relative)",
        outcome: (|| -> Result<()> {
            let model = act.circuit.gpm.clone();
            let mut replay = Replay::demagnetized(&model, cfg.demag.pairs)?;
            replay.feed(0.45 * p.alpha0)?;
            let s = replay.state();
            let eps = 1e-2;
            for k in 0..10 {
                let h = 0.05 * p.alpha0 + 0.035 * p.alpha0 * k as f64;
                let fd = (model.b(s, h + eps)? - model.b(s, h - eps)?) / (2.0 * eps);
                let mu = model.mu(s, h)?;
                if (fd - mu).abs() > 1e-4 * mu.abs() {
                    return Err(Error::InvalidParam(format!(
                        "at H={h}: finite difference {fd:.9e} vs mu {mu:.9e}"
                    )));
                }
            }
            Ok(())
        })(),
    });

    // Saturation identity at the upper bound.
    checks.push(Check {
        name: "saturation-identity (B(alpha0) = B_Rev(alpha0) + B_Irr-hat)",
        outcome: (|| -> Result<()> {
            let hist = crate::hysteresis::ExtremaHistory::new();
            let b = gpm_b(p.alpha0, &hist, Direction::Increasing, &p)?;
            let expect = b_rev(p.alpha0, &p.rev) + p.b_irr_sat;
            if (b - expect).abs() > 1e-8 {
                return Err(Error::InvalidParam(format!(
                    "saturation value {b:.9e} vs {expect:.9e}"
                )));
            }
            let mu = mu_gpm(0.3 * p.alpha0, &hist, Direction::Increasing, &p)?;
            if !(mu > 0.0) {
                return Err(Error::InvalidParam("non-positive permeability".into()));
            }
            Ok(())
        })(),
    });

    // Guard sanity: the demagnetized rest state holds, drive starts motion.
    checks.push(Check {
        name: "guard-sanity (rest holds at zero drive, closes under drive)",
        outcome: (|| -> Result<()> {
            let s = act.circuit.gpm.demagnetized_state(cfg.demag.pairs)?;
            let rest = act.net_force(0.0, act.mech.z_max, 0.0, &s)?;
            if rest <= 0.0 {
                return Err(Error::InvalidParam(format!(
                    "rest force {rest:.3e} N would start motion with no drive"
                )));
            }
            let e = act.evaluate(0.0, act.mech.z_max, 0.0, &s, 18.0)?;
            if e.h_dot <= 0.0 {
                return Err(Error::InvalidParam(format!(
                    "drive does not raise the field (dH/dt = {:.3e})",
                    e.h_dot
                )));
            }
            Ok(())
        })(),
    });

    checks
}

fn clone_err(e: &Error) -> Error {
    Error::InvalidParam(e.to_string())
}
