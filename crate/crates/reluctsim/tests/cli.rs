//! End-to-end checks of the command layer: file round trips, exit codes,
//! byte-level determinism, and the staged identification pipeline.

mod common;

use common::{synth_static_records, valve, valve_config};
use reluctsim::cli::{
    cmd_degauss, cmd_identify, cmd_selfcheck, cmd_simulate, IdentifyStage, EXIT_INPUT, EXIT_OK,
    EXIT_PIPELINE, EXIT_SELFCHECK,
};
use reluctsim::config::Config;
use reluctsim::io;
use std::path::Path;
use std::process::Command;

fn write_pulse_waveform(path: &Path) {
    // 0 V, a 22 V pulse from 1 ms to 8 ms, back to 0 until 20 ms.
    std::fs::write(
        path,
        "t_s,v_V\n0.0,0.0\n0.001,22.0\n0.008,0.0\n0.02,0.0\n",
    )
    .unwrap();
}

#[test]
fn simulate_zero_waveform_constant_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("config.json");
    let mut cfg = valve_config();
    cfg.sim.t_end_s = 5e-3;
    cfg.save(&cfg_path).unwrap();
    let wave_path = dir.path().join("zero.csv");
    std::fs::write(&wave_path, "t_s,v_V\n0.0,0.0\n0.005,0.0\n").unwrap();
    let prefix = dir.path().join("run").display().to_string();

    let code = cmd_simulate(&cfg_path, &wave_path, &prefix, None);
    assert_eq!(code, EXIT_OK);
    let traj = std::fs::read_to_string(format!("{prefix}_trajectory.csv")).unwrap();
    let mut lines = traj.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t_s,q,H_A_per_m,z_m,vz_m_per_s,i_A,phi_Wb,F_N,iec_A"
    );
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[1], "1", "mode changed in {line}");
        assert_eq!(cols[3], "0.0009", "armature moved in {line}");
    }
    let events = std::fs::read_to_string(format!("{prefix}_events.jsonl")).unwrap();
    assert!(events.is_empty(), "unexpected events: {events}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(format!("{prefix}_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["summary"]["jumps"], 0);
}

#[test]
fn simulate_pulse_is_deterministic_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("config.json");
    let mut cfg = valve_config();
    cfg.sim.t_end_s = 20e-3;
    cfg.save(&cfg_path).unwrap();
    let wave_path = dir.path().join("pulse.csv");
    write_pulse_waveform(&wave_path);

    let p1 = dir.path().join("a").display().to_string();
    let p2 = dir.path().join("b").display().to_string();
    assert_eq!(cmd_simulate(&cfg_path, &wave_path, &p1, None), EXIT_OK);
    assert_eq!(cmd_simulate(&cfg_path, &wave_path, &p2, None), EXIT_OK);

    // Byte-identical trajectory and event files across runs.
    let t1 = std::fs::read(format!("{p1}_trajectory.csv")).unwrap();
    let t2 = std::fs::read(format!("{p2}_trajectory.csv")).unwrap();
    assert_eq!(t1, t2);
    let e1 = std::fs::read(format!("{p1}_events.jsonl")).unwrap();
    let e2 = std::fs::read(format!("{p2}_events.jsonl")).unwrap();
    assert_eq!(e1, e2);

    // The event log captures the closing sequence.
    let events = String::from_utf8(e1).unwrap();
    assert!(events.contains(r#""q_from":1,"q_to":2"#), "{events}");
    assert!(events.contains(r#""q_from":2,"q_to":3"#), "{events}");
    assert!(events.contains(r#""kind":"wipe_out""#), "{events}");
}

#[test]
fn simulate_rejects_malformed_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("config.json");
    valve_config().save(&cfg_path).unwrap();
    let wave_path = dir.path().join("bad.csv");
    std::fs::write(&wave_path, "t_s,v_V\n0.0,0.0\n0.2,not_a_number\n").unwrap();
    let prefix = dir.path().join("x").display().to_string();
    assert_eq!(
        cmd_simulate(&cfg_path, &wave_path, &prefix, None),
        EXIT_INPUT
    );

    // Broken config JSON.
    std::fs::write(&cfg_path, "{ not json").unwrap();
    let good_wave = dir.path().join("ok.csv");
    std::fs::write(&good_wave, "t_s,v_V\n0.0,0.0\n1.0,0.0\n").unwrap();
    assert_eq!(
        cmd_simulate(&cfg_path, &good_wave, &prefix, None),
        EXIT_INPUT
    );
}

#[test]
fn identify_pipeline_ordering_and_rev_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("config.json");
    let cfg = valve_config();
    cfg.save(&cfg_path).unwrap();
    let act = valve();

    // Synthesize quasi-static sinusoidal records at several levels.
    let records = synth_static_records(
        &act,
        &act.circuit.gpm,
        &[1500.0, 3000.0, 4500.0, 6000.0],
        600,
        2,
        0.0,
    );
    for (k, rec) in records.iter().enumerate() {
        io::write_experiment(&dir.path().join(format!("set1_{k}.csv")), rec).unwrap();
    }
    let glob = dir.path().join("set1_*.csv").display().to_string();

    // Out-of-order stages are refused.
    let out_gpm = dir.path().join("fit_gpm.json");
    assert_eq!(
        cmd_identify(IdentifyStage::Gpm, &cfg_path, &glob, &out_gpm, 0),
        EXIT_PIPELINE
    );
    let out_kec = dir.path().join("fit_kec.json");
    assert_eq!(
        cmd_identify(IdentifyStage::Kec, &cfg_path, &glob, &out_kec, 0),
        EXIT_PIPELINE
    );

    // Empty glob is an input error.
    let out_rev = dir.path().join("fit_rev.json");
    let empty = dir.path().join("nothing_*.csv").display().to_string();
    assert_eq!(
        cmd_identify(IdentifyStage::Rev, &cfg_path, &empty, &out_rev, 0),
        EXIT_INPUT
    );

    // The reversible stage recovers the generating parameters.
    assert_eq!(
        cmd_identify(IdentifyStage::Rev, &cfg_path, &glob, &out_rev, 0),
        EXIT_OK
    );
    let fit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out_rev).unwrap()).unwrap();
    let p = &fit["parameters"];
    let mu1 = p["mu1_h_per_m"].as_f64().unwrap();
    let h1 = p["h1_a_per_m"].as_f64().unwrap();
    let true_rev = cfg.gpm.rev.resolve().unwrap();
    assert!(
        (mu1 - true_rev.mu1).abs() / true_rev.mu1 < 0.05,
        "mu1 {mu1} vs {}",
        true_rev.mu1
    );
    assert!((h1 - true_rev.h1).abs() / true_rev.h1 < 0.10, "h1 {h1}");

    // The merged parameter file now unlocks the next stage's prerequisite.
    let merged: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("identified_params.json")).unwrap(),
    )
    .unwrap();
    assert!(merged["rev"]["mu1_h_per_m"].is_number());
}

#[test]
fn degauss_writes_waveform() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("degauss.csv");
    assert_eq!(cmd_degauss(5.0, 0.9, 80, 32, 10.0, &out), EXIT_OK);
    let w = io::read_waveform(&out).unwrap();
    // 80 cycles at 10 Hz: eight seconds plus the closing sample.
    match &w {
        reluctsim::hybrid::VoltageWaveform::SampledZoh { times, values } => {
            assert_eq!(times.len(), 80 * 32 + 1);
            assert!((times.last().unwrap() - 8.0).abs() < 1e-9);
            assert_eq!(*values.last().unwrap(), 0.0);
        }
        _ => panic!("unexpected waveform variant"),
    }
    // Rejected parameter combinations exit with the input code.
    assert_eq!(cmd_degauss(5.0, 0.999, 10, 32, 10.0, &out), EXIT_INPUT);
}

#[test]
fn selfcheck_exit_codes() {
    assert_eq!(cmd_selfcheck(None), EXIT_OK);

    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("bad.json");
    let mut cfg = valve_config();
    cfg.gpm.rev.mu1_rel_mu0 = Some(-500.0);
    cfg.save(&cfg_path).unwrap();
    assert_eq!(cmd_selfcheck(Some(&cfg_path)), EXIT_SELFCHECK);
}

#[test]
fn binary_smoke() {
    let exe = env!("CARGO_BIN_EXE_reluctsim");
    let out = Command::new(exe).arg("selfcheck").output().unwrap();
    assert!(out.status.success(), "selfcheck failed: {out:?}");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("PASS triangle-integral-oracle"), "{stdout}");
    assert!(!stdout.contains("FAIL"), "{stdout}");

    // A full simulate round trip through the binary.
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("config.json");
    let mut cfg = valve_config();
    cfg.sim.t_end_s = 4e-3;
    cfg.save(&cfg_path).unwrap();
    let wave_path = dir.path().join("wave.csv");
    std::fs::write(&wave_path, "t_s,v_V\n0.0,0.0\n0.004,0.0\n").unwrap();
    let prefix = dir.path().join("run").display().to_string();
    let out = Command::new(exe)
        .args(["simulate", "--config"])
        .arg(&cfg_path)
        .arg("--waveform")
        .arg(&wave_path)
        .args(["--out", &prefix])
        .output()
        .unwrap();
    assert!(out.status.success(), "simulate failed: {out:?}");
    assert!(Path::new(&format!("{prefix}_trajectory.csv")).exists());
    assert!(Path::new(&format!("{prefix}_report.json")).exists());

    // Unknown identify stage exits with the input code.
    let out = Command::new(exe)
        .args(["identify", "bogus", "--config"])
        .arg(&cfg_path)
        .args(["--data", "x", "--out", "y"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
