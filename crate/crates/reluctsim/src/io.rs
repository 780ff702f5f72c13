//! File formats: reluctance tables, voltage waveforms, experiment records,
//! trajectories and event logs.
//!
//! All files are plain CSV with fixed headers (or JSON Lines for events);
//! floats are written in shortest round-trip form so identical runs produce
//! byte-identical output. Parse errors carry the file and line number.

use crate::error::{Error, Result};
use crate::hybrid::{JumpEvent, Trajectory, VoltageWaveform};
use crate::identify::ExperimentRecord;
use crate::magnetics::ReluctanceTable;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

pub const RELUCTANCE_HEADER: &str = "z_m,R_air_per_H,dR_dz_per_Hm";
pub const WAVEFORM_HEADER: &str = "t_s,v_V";
pub const TRAJECTORY_HEADER: &str = "t_s,q,H_A_per_m,z_m,vz_m_per_s,i_A,phi_Wb,F_N,iec_A";
pub const EXPERIMENT_HEADER: &str = "t_s,v_V,i_A,phi_Wb";
pub const EXPERIMENT_HEADER_NO_V: &str = "t_s,i_A,phi_Wb";

fn csv_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Csv {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn parse_f64(field: &str, path: &Path, line: usize, col: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| csv_err(path, line, format!("column {col}: cannot parse '{field}' as a number")))
}

struct CsvLines<'a> {
    rows: Vec<(usize, Vec<&'a str>)>,
}

fn read_csv<'a>(
    text: &'a str,
    path: &Path,
    accepted_headers: &[&str],
) -> Result<(usize, CsvLines<'a>)> {
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((idx, raw)) => {
                let t = raw.trim();
                if t.is_empty() || t.starts_with('#') {
                    continue;
                }
                break (idx + 1, t);
            }
            None => return Err(csv_err(path, 1, "empty file")),
        }
    };
    let which = accepted_headers
        .iter()
        .position(|h| header.1.replace(' ', "") == *h)
        .ok_or_else(|| {
            csv_err(
                path,
                header.0,
                format!(
                    "unexpected header '{}' (expected '{}')",
                    header.1,
                    accepted_headers.join("' or '")
                ),
            )
        })?;
    let n_cols = accepted_headers[which].split(',').count();
    let mut rows = Vec::new();
    for (idx, raw) in lines {
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = t.split(',').collect();
        if fields.len() != n_cols {
            return Err(csv_err(
                path,
                idx + 1,
                format!("expected {n_cols} columns, found {}", fields.len()),
            ));
        }
        rows.push((idx + 1, fields));
    }
    Ok((which, CsvLines { rows }))
}

/// Read a reluctance table: `z_m,R_air_per_H,dR_dz_per_Hm`, derivative column
/// optional.
pub fn read_reluctance_table(path: &Path) -> Result<ReluctanceTable> {
    let text = std::fs::read_to_string(path)?;
    let (which, csv) = read_csv(&text, path, &[RELUCTANCE_HEADER, "z_m,R_air_per_H"])?;
    let has_deriv = which == 0;
    let mut z = Vec::with_capacity(csv.rows.len());
    let mut r = Vec::with_capacity(csv.rows.len());
    let mut d = Vec::with_capacity(csv.rows.len());
    for (line, fields) in &csv.rows {
        let zk = parse_f64(fields[0], path, *line, "z_m")?;
        if let Some(prev) = z.last() {
            if zk <= *prev {
                return Err(csv_err(
                    path,
                    *line,
                    format!("gap samples must be strictly increasing, got {zk} after {prev}"),
                ));
            }
        }
        z.push(zk);
        r.push(parse_f64(fields[1], path, *line, "R_air_per_H")?);
        if has_deriv {
            d.push(parse_f64(fields[2], path, *line, "dR_dz_per_Hm")?);
        }
    }
    ReluctanceTable::new(z, r, has_deriv.then_some(d))
}

/// Read a zero-order-hold voltage waveform: `t_s,v_V`.
pub fn read_waveform(path: &Path) -> Result<VoltageWaveform> {
    let text = std::fs::read_to_string(path)?;
    let (_, csv) = read_csv(&text, path, &[WAVEFORM_HEADER])?;
    let mut times = Vec::with_capacity(csv.rows.len());
    let mut values = Vec::with_capacity(csv.rows.len());
    for (line, fields) in &csv.rows {
        let t = parse_f64(fields[0], path, *line, "t_s")?;
        if let Some(prev) = times.last() {
            if t <= *prev {
                return Err(csv_err(
                    path,
                    *line,
                    format!("times must be strictly increasing, got {t} after {prev}"),
                ));
            }
        }
        times.push(t);
        values.push(parse_f64(fields[1], path, *line, "v_V")?);
    }
    let w = VoltageWaveform::SampledZoh { times, values };
    w.validate()?;
    Ok(w)
}

pub fn write_waveform(path: &Path, times: &[f64], values: &[f64]) -> Result<()> {
    let mut out = String::from(WAVEFORM_HEADER);
    out.push('\n');
    for (t, v) in times.iter().zip(values.iter()) {
        let _ = writeln!(out, "{t},{v}");
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Sidecar metadata for an experiment record.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentMeta {
    pub gap_m: f64,
    pub wave: String,
    pub level: f64,
}

/// Read an experiment record `t_s,v_V,i_A,phi_Wb` (voltage column optional)
/// with its JSON sidecar `<stem>.json` holding `{gap_m, wave, level}`.
pub fn read_experiment(path: &Path) -> Result<ExperimentRecord> {
    let sidecar = path.with_extension("json");
    let meta: ExperimentMeta = serde_json::from_str(
        &std::fs::read_to_string(&sidecar).map_err(|e| {
            Error::Config(format!(
                "missing metadata sidecar {}: {e}",
                sidecar.display()
            ))
        })?,
    )?;
    let text = std::fs::read_to_string(path)?;
    let (which, csv) = read_csv(&text, path, &[EXPERIMENT_HEADER, EXPERIMENT_HEADER_NO_V])?;
    let has_v = which == 0;
    let mut rec = ExperimentRecord {
        gap: meta.gap_m,
        wave: meta.wave,
        level: meta.level,
        v: has_v.then(Vec::new),
        ..Default::default()
    };
    for (line, fields) in &csv.rows {
        let mut it = fields.iter();
        rec.t
            .push(parse_f64(it.next().unwrap(), path, *line, "t_s")?);
        if has_v {
            rec.v
                .as_mut()
                .expect("v column present")
                .push(parse_f64(it.next().unwrap(), path, *line, "v_V")?);
        }
        rec.i
            .push(parse_f64(it.next().unwrap(), path, *line, "i_A")?);
        rec.phi
            .push(parse_f64(it.next().unwrap(), path, *line, "phi_Wb")?);
    }
    rec.validate()?;
    Ok(rec)
}

pub fn write_experiment(path: &Path, rec: &ExperimentRecord) -> Result<()> {
    rec.validate()?;
    let mut out = String::new();
    match &rec.v {
        Some(v) => {
            out.push_str(EXPERIMENT_HEADER);
            out.push('\n');
            for k in 0..rec.t.len() {
                let _ = writeln!(out, "{},{},{},{}", rec.t[k], v[k], rec.i[k], rec.phi[k]);
            }
        }
        None => {
            out.push_str(EXPERIMENT_HEADER_NO_V);
            out.push('\n');
            for k in 0..rec.t.len() {
                let _ = writeln!(out, "{},{},{}", rec.t[k], rec.i[k], rec.phi[k]);
            }
        }
    }
    std::fs::write(path, out)?;
    let meta = ExperimentMeta {
        gap_m: rec.gap,
        wave: rec.wave.clone(),
        level: rec.level,
    };
    std::fs::write(
        path.with_extension("json"),
        serde_json::to_string_pretty(&meta)?,
    )?;
    Ok(())
}

/// Write the sampled trajectory:
/// `t_s,q,H_A_per_m,z_m,vz_m_per_s,i_A,phi_Wb,F_N,iec_A`.
pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    for r in &traj.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.t,
            r.mode.index(),
            r.h_iron,
            r.z,
            r.v_z,
            r.i,
            r.phi,
            r.f_net,
            r.i_ec
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[derive(Serialize)]
struct EventLine {
    t: f64,
    kind: crate::hybrid::JumpKind,
    q_from: u8,
    q_to: u8,
}

/// Write the event log as JSON lines `{t, kind, q_from, q_to}`.
pub fn write_events(path: &Path, events: &[JumpEvent]) -> Result<()> {
    let mut out = String::new();
    for e in events {
        let line = EventLine {
            t: e.t,
            kind: e.kind,
            q_from: e.q_from,
            q_to: e.q_to,
        };
        let _ = writeln!(out, "{}", serde_json::to_string(&line)?);
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reluctance_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("table.csv");
        std::fs::write(
            &p,
            "z_m,R_air_per_H,dR_dz_per_Hm\n0.0,1e7,3.18e10\n0.0005,2.6e7,3.18e10\n0.001,4.2e7,3.18e10\n",
        )
        .unwrap();
        let t = read_reluctance_table(&p).unwrap();
        let (r, d) = t.reluctance(0.0005).unwrap();
        assert!((r - 2.6e7).abs() < 1.0);
        assert!((d - 3.18e10).abs() < 1.0);

        // Non-monotone gap column reports the offending line.
        std::fs::write(&p, "z_m,R_air_per_H,dR_dz_per_Hm\n0.0,1e7,1.0\n0.0,2e7,1.0\n").unwrap();
        let err = read_reluctance_table(&p).unwrap_err().to_string();
        assert!(err.contains(":3:"), "{err}");

        // Bad number reports line and column.
        std::fs::write(&p, "z_m,R_air_per_H\n0.0,1e7\n0.001,oops\n").unwrap();
        let err = read_reluctance_table(&p).unwrap_err().to_string();
        assert!(err.contains(":3:") && err.contains("R_air_per_H"), "{err}");
    }

    #[test]
    fn waveform_read_and_comments() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("wave.csv");
        std::fs::write(&p, "# drive signal\nt_s,v_V\n0.0,0.0\n1e-3,18\n2e-3,0\n").unwrap();
        let w = read_waveform(&p).unwrap();
        assert_eq!(w.value(1.5e-3), 18.0);
        std::fs::write(&p, "t_s,v_V\n0.0,0.0\n0.0,18\n").unwrap();
        assert!(read_waveform(&p).is_err());
        std::fs::write(&p, "wrong,header\n0.0,0.0\n").unwrap();
        let err = read_waveform(&p).unwrap_err().to_string();
        assert!(err.contains("unexpected header"), "{err}");
    }

    #[test]
    fn experiment_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("set1_level3.csv");
        let rec = ExperimentRecord {
            t: (0..50).map(|k| k as f64 * 1e-4).collect(),
            v: Some((0..50).map(|k| (k % 7) as f64).collect()),
            i: (0..50).map(|k| k as f64 * 1e-3).collect(),
            phi: (0..50).map(|k| k as f64 * 1e-7).collect(),
            gap: 0.0,
            wave: "square".into(),
            level: 6.0,
        };
        write_experiment(&p, &rec).unwrap();
        let back = read_experiment(&p).unwrap();
        assert_eq!(back.t, rec.t);
        assert_eq!(back.v, rec.v);
        assert_eq!(back.phi, rec.phi);
        assert_eq!(back.gap, rec.gap);
        assert_eq!(back.wave, rec.wave);

        // Missing sidecar is a configuration error.
        std::fs::remove_file(p.with_extension("json")).unwrap();
        assert!(read_experiment(&p).is_err());
    }
}
