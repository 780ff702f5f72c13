//! Three-stage parameter identification from measured current/flux records.
//!
//! Stage 1 fits the reversible permeability to B–H slopes measured at minor-
//! loop reversal points (where the irreversible permeability vanishes).
//! Stage 2 fits the Preisach density and irreversible saturation by replaying
//! the measured field sequence through a freshly demagnetized model. Stage 3
//! fits the eddy-current coefficient by full pinned-armature simulation
//! against square-wave records, minimizing the combined normalized current and
//! flux error.

mod optimize;

pub use optimize::{minimize, FitResult, MinimizeOptions, Transform};

use crate::error::{Error, Result};
use crate::hybrid::{Actuator, SimConfig, VoltageWaveform};
use crate::hysteresis::{
    mu_rev, rev_permeability_floor, GpmModel, GpmParams, PreisachDistribution, Replay, RevParams,
    MU0,
};
use crate::magnetics::MagneticCircuit;

/// Uniformly sampled measurement of one excitation level at a fixed gap.
#[derive(Clone, Debug, Default)]
pub struct ExperimentRecord {
    pub t: Vec<f64>,
    /// Coil voltage; absent for current-driven tests.
    pub v: Option<Vec<f64>>,
    pub i: Vec<f64>,
    pub phi: Vec<f64>,
    /// Fixed gap length during the test, m.
    pub gap: f64,
    /// Excitation descriptor, e.g. "sin" or "square".
    pub wave: String,
    /// Excitation level (amperes or volts, per the descriptor).
    pub level: f64,
}

impl ExperimentRecord {
    pub fn validate(&self) -> Result<()> {
        let n = self.t.len();
        if n < 2 {
            return Err(Error::InvalidParam(
                "experiment record needs at least two samples".into(),
            ));
        }
        if self.i.len() != n || self.phi.len() != n {
            return Err(Error::InvalidParam(format!(
                "record column lengths differ: {} t, {} i, {} phi",
                n,
                self.i.len(),
                self.phi.len()
            )));
        }
        if let Some(v) = &self.v {
            if v.len() != n {
                return Err(Error::InvalidParam(format!(
                    "record column lengths differ: {} t, {} v",
                    n,
                    v.len()
                )));
            }
        }
        let dt = self.t[1] - self.t[0];
        if !(dt > 0.0) {
            return Err(Error::InvalidParam("record times must increase".into()));
        }
        for k in 1..n {
            let step = self.t[k] - self.t[k - 1];
            if (step - dt).abs() > 1e-6 * dt {
                return Err(Error::InvalidParam(format!(
                    "record sampling not uniform at index {k}: step {step} vs {dt}"
                )));
            }
        }
        if self
            .i
            .iter()
            .chain(self.phi.iter())
            .chain(self.v.iter().flatten())
            .any(|x| !x.is_finite())
        {
            return Err(Error::InvalidParam("record samples must be finite".into()));
        }
        if !self.gap.is_finite() {
            return Err(Error::InvalidParam("record gap metadata missing".into()));
        }
        Ok(())
    }

    pub fn sample_dt(&self) -> f64 {
        self.t[1] - self.t[0]
    }
}

/// Quasi-static B–H series reduced from one record.
#[derive(Clone, Debug)]
pub struct BhSeries {
    pub h: Vec<f64>,
    pub b: Vec<f64>,
    pub level: f64,
}

/// Reduce records to B–H series assuming negligible induced currents:
/// H = (N·i − φ·R_air(z))/l_iron, B = φ/A_iron.
pub fn derive_bh(records: &[ExperimentRecord], circuit: &MagneticCircuit) -> Result<Vec<BhSeries>> {
    records
        .iter()
        .map(|r| {
            r.validate()?;
            let mut h = Vec::with_capacity(r.t.len());
            let mut b = Vec::with_capacity(r.t.len());
            for (ik, pk) in r.i.iter().zip(r.phi.iter()) {
                h.push(circuit.h_static_from_measurement(*ik, *pk, r.gap)?);
                b.push(*pk / circuit.core.a_iron);
            }
            Ok(BhSeries {
                h,
                b,
                level: r.level,
            })
        })
        .collect()
}

/// Measured slope ∂B/∂H at a field reversal.
#[derive(Clone, Copy, Debug)]
pub struct ReversalPoint {
    pub h_at_reversal: f64,
    pub slope: f64,
}

/// Locate direction reversals of H and fit a one-sided slope over the
/// `window` samples following each one. Reversals with too few following
/// samples, a degenerate field span, or a non-positive slope are skipped;
/// the second return value counts them.
pub fn extract_reversal_slopes(bh: &BhSeries, window: usize) -> (Vec<ReversalPoint>, usize) {
    let n = bh.h.len();
    let mut out = Vec::new();
    let mut skipped = 0;
    let mut dir: Option<bool> = None;
    for k in 1..n {
        let d = bh.h[k] - bh.h[k - 1];
        if d == 0.0 {
            continue;
        }
        let rising = d > 0.0;
        if let Some(prev) = dir {
            if prev != rising {
                let r = k - 1;
                match one_sided_slope(&bh.h[r..], &bh.b[r..], window) {
                    Some(slope) if slope > 0.0 => out.push(ReversalPoint {
                        h_at_reversal: bh.h[r],
                        slope,
                    }),
                    _ => skipped += 1,
                }
            }
        }
        dir = Some(rising);
    }
    (out, skipped)
}

fn one_sided_slope(h: &[f64], b: &[f64], window: usize) -> Option<f64> {
    if h.len() < window + 1 {
        return None;
    }
    let pts = window + 1;
    let (mut sh, mut sb) = (0.0, 0.0);
    for k in 0..pts {
        sh += h[k];
        sb += b[k];
    }
    let (mh, mb) = (sh / pts as f64, sb / pts as f64);
    let (mut cov, mut var) = (0.0, 0.0);
    for k in 0..pts {
        cov += (h[k] - mh) * (b[k] - mb);
        var += (h[k] - mh) * (h[k] - mh);
    }
    (var > 0.0).then(|| cov / var)
}

/// Fit the reversible permeability to reversal-point slopes by RMSE, under
/// the strict-positivity constraint. Decade-spaced (H₁, H₂) seeds with exact
/// linear least squares for (μ₁, μ₂) start the simplex.
pub fn fit_rev(points: &[ReversalPoint], opts: &MinimizeOptions) -> Result<(RevParams, FitResult)> {
    if points.len() < 4 {
        return Err(Error::InvalidParam(format!(
            "reversible fit needs at least 4 reversal points, got {}",
            points.len()
        )));
    }
    let mut mags: Vec<f64> = points.iter().map(|p| p.h_at_reversal.abs()).collect();
    mags.sort_by(f64::total_cmp);
    mags.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * a.abs().max(1.0));
    if mags.len() < 4 {
        return Err(Error::InvalidParam(
            "reversible fit needs at least 4 distinct field magnitudes".into(),
        ));
    }

    let objective = |x: &[f64]| -> f64 {
        let p = RevParams {
            mu1: x[0],
            mu2: x[1],
            h1: x[2],
            h2: x[3],
        };
        let floor = rev_permeability_floor(&p);
        let mut sq = 0.0;
        for pt in points {
            let e = mu_rev(pt.h_at_reversal, &p) - pt.slope;
            sq += e * e;
        }
        let rmse = (sq / points.len() as f64).sqrt();
        if floor <= 0.0 {
            rmse + 1.0 + floor.abs() / MU0
        } else {
            rmse
        }
    };

    // Seed grid: decade-spaced decay fields, closed-form amplitudes.
    let h_seeds = [
        (1e2, 1e3),
        (1e2, 1e4),
        (1e3, 1e4),
        (1e3, 1e5),
        (3e2, 3e3),
        (3e3, 3e4),
    ];
    let mut best_seed: Option<(f64, [f64; 4])> = None;
    for (h1, h2) in h_seeds {
        let (mu1, mu2) = amplitudes_least_squares(points, h1, h2);
        let cand = [mu1, mu2, h1, h2];
        let f = objective(&cand);
        if f.is_finite() && best_seed.as_ref().is_none_or(|(bf, _)| f < *bf) {
            best_seed = Some((f, cand));
        }
    }
    let (_, seed) = best_seed.ok_or_else(|| Error::Optimizer("no feasible seed".into()))?;

    let fit = minimize(
        objective,
        &seed,
        &[
            Transform::Identity,
            Transform::Identity,
            Transform::LogPositive,
            Transform::LogPositive,
        ],
        opts,
    )?;
    let mut p = RevParams {
        mu1: fit.params[0],
        mu2: fit.params[1],
        h1: fit.params[2],
        h2: fit.params[3],
    };
    // Canonical order: shorter decay field first.
    if p.h1 > p.h2 {
        p = RevParams {
            mu1: p.mu2,
            mu2: p.mu1,
            h1: p.h2,
            h2: p.h1,
        };
    }
    p.validate()?;
    Ok((p, fit))
}

/// Exact least squares for (μ₁, μ₂) at fixed decay fields.
fn amplitudes_least_squares(points: &[ReversalPoint], h1: f64, h2: f64) -> (f64, f64) {
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in points {
        let x1 = (-p.h_at_reversal.abs() / h1).exp();
        let x2 = (-p.h_at_reversal.abs() / h2).exp();
        let y = p.slope - MU0;
        a11 += x1 * x1;
        a12 += x1 * x2;
        a22 += x2 * x2;
        b1 += x1 * y;
        b2 += x2 * y;
    }
    let det = a11 * a22 - a12 * a12;
    if det.abs() < 1e-30 {
        return (0.0, 0.0);
    }
    ((a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det)
}

/// Settings for the Preisach-stage fit.
#[derive(Clone, Copy, Debug)]
pub struct GpmFitOptions {
    /// Nested-loop pairs used to demagnetize the model before each replay.
    pub demag_pairs: usize,
    /// Input bounds (β₀, α₀) of the model being fitted.
    pub bounds: (f64, f64),
    pub minimize: MinimizeOptions,
}

impl Default for GpmFitOptions {
    fn default() -> Self {
        Self {
            demag_pairs: 100,
            bounds: (-1.0e4, 1.0e4),
            minimize: MinimizeOptions::default(),
        }
    }
}

/// Fit the Preisach density parameters and the irreversible saturation level
/// by replaying every measured field sequence through a demagnetized model
/// and minimizing the joint RMSE on B. The reversible parameters stay frozen.
pub fn fit_gpm(
    series: &[BhSeries],
    rev: &RevParams,
    opts: &GpmFitOptions,
) -> Result<(PreisachDistribution, f64, FitResult)> {
    if series.is_empty() || series.iter().any(|s| s.h.len() < 8) {
        return Err(Error::InvalidParam(
            "Preisach fit needs non-empty field series".into(),
        ));
    }
    let rev = *rev;
    let (beta0, alpha0) = opts.bounds;
    let demag_pairs = opts.demag_pairs;

    let objective = |x: &[f64]| -> f64 {
        let params = (|| -> Result<GpmParams> {
            GpmParams::new(
                rev,
                PreisachDistribution::new(x[0], x[1], x[2])?,
                x[3],
                alpha0,
                beta0,
            )
        })();
        let Ok(params) = params else {
            return f64::INFINITY;
        };
        let Ok(model) = GpmModel::new(params) else {
            return f64::INFINITY;
        };
        let partials = parallel_map(series, |s| -> Result<(f64, usize)> {
            let mut replay = Replay::demagnetized(&model, demag_pairs)?;
            let mut sq = 0.0;
            for (h, b_meas) in s.h.iter().zip(s.b.iter()) {
                let b_sim = replay.feed(*h)?;
                let e = b_sim - b_meas;
                sq += e * e;
            }
            Ok((sq, s.h.len()))
        });
        let (mut sq, mut n) = (0.0, 0usize);
        for p in partials {
            match p {
                Ok((s, c)) => {
                    sq += s;
                    n += c;
                }
                Err(_) => return f64::INFINITY,
            }
        }
        (sq / n as f64).sqrt()
    };

    let seed = gpm_seed(series, &rev);
    let fit = minimize(
        objective,
        &seed,
        &[
            Transform::LogPositive,
            Transform::LogPositive,
            Transform::LogPositive,
            Transform::LogPositive,
        ],
        &opts.minimize,
    )?;
    let dist = PreisachDistribution::new(fit.params[0], fit.params[1], fit.params[2])?;
    Ok((dist, fit.params[3], fit))
}

/// Physically motivated starting point: coercive field from the descending
/// zero crossing of the widest loop, saturation from its flux ceiling.
fn gpm_seed(series: &[BhSeries], rev: &RevParams) -> [f64; 4] {
    let widest = series
        .iter()
        .max_by(|a, b| {
            let ra = a.h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let rb = b.h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            ra.total_cmp(&rb)
        })
        .expect("non-empty series");
    // Coercive estimate: |H| where B crosses zero while H falls.
    let mut coercive = Vec::new();
    for k in 1..widest.h.len() {
        if widest.h[k] < widest.h[k - 1]
            && widest.b[k - 1] > 0.0
            && widest.b[k] <= 0.0
        {
            coercive.push(0.5 * (widest.h[k] + widest.h[k - 1]).abs());
        }
    }
    let m_hc = if coercive.is_empty() {
        200.0
    } else {
        coercive.iter().sum::<f64>() / coercive.len() as f64
    };
    let h_max = widest.h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let b_max = widest.b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let b_irr = (b_max - crate::hysteresis::b_rev(h_max, rev).abs()).max(0.05 * b_max).max(1e-3);
    [m_hc.max(1.0), 0.7 * m_hc.max(1.0), 0.6 * m_hc.max(1.0), b_irr]
}

/// Settings for the eddy-current stage.
#[derive(Clone, Copy, Debug)]
pub struct KecFitOptions {
    /// Demagnetization pairs for each record's initial state.
    pub demag_pairs: usize,
    /// Integration step for the pinned simulations.
    pub dt: f64,
    pub minimize: MinimizeOptions,
}

impl Default for KecFitOptions {
    fn default() -> Self {
        Self {
            demag_pairs: 100,
            dt: 1e-6,
            minimize: MinimizeOptions {
                max_iters: 60,
                restarts: 2,
                x_tol: 1e-4,
                f_tol: 1e-7,
                initial_step: 0.8,
                seed: 0,
            },
        }
    }
}

/// Identify the eddy-current coefficient from square-wave voltage records at
/// a fixed gap: minimize √(Σ(i−i_sim)²/Σi² + Σ(φ−φ_sim)²/Σφ²) with full
/// pinned-armature simulations, seeded at N²/R.
pub fn fit_kec(
    records: &[ExperimentRecord],
    base: &Actuator,
    opts: &KecFitOptions,
) -> Result<(f64, FitResult)> {
    if records.is_empty() {
        return Err(Error::InvalidParam("eddy fit needs records".into()));
    }
    for r in records {
        r.validate()?;
        if r.v.is_none() {
            return Err(Error::InvalidParam(
                "eddy fit needs voltage-driven records".into(),
            ));
        }
    }
    let demag_pairs = opts.demag_pairs;
    let dt = opts.dt;

    let objective = |x: &[f64]| -> f64 {
        let k_ec = x[0];
        let mut act = base.clone();
        act.circuit.eddy.k_ec = k_ec;
        let partials = parallel_map(records, |r| weighted_error_parts(&act, r, demag_pairs, dt));
        let (mut ni, mut di, mut np, mut dp) = (0.0, 0.0, 0.0, 0.0);
        for p in partials {
            match p {
                Ok((a, b, c, d)) => {
                    ni += a;
                    di += b;
                    np += c;
                    dp += d;
                }
                Err(_) => return f64::INFINITY,
            }
        }
        if di <= 0.0 || dp <= 0.0 {
            return f64::INFINITY;
        }
        (ni / di + np / dp).sqrt()
    };

    let seed = base.circuit.coil.turns_f().powi(2) / base.circuit.coil.resistance;
    let fit = minimize(objective, &[seed], &[Transform::LogPositive], &opts.minimize)?;
    if !fit.objective.is_finite() {
        return Err(Error::Optimizer(
            "every eddy-current candidate failed to simulate".into(),
        ));
    }
    Ok((fit.params[0], fit))
}

/// The eddy-stage objective at a fixed candidate: the combined normalized
/// current/flux error over all records. Exposed for diagnostics (e.g.
/// checking local convexity around a fit).
pub fn kec_objective(
    records: &[ExperimentRecord],
    base: &Actuator,
    k_ec: f64,
    opts: &KecFitOptions,
) -> Result<f64> {
    let mut act = base.clone();
    act.circuit.eddy.k_ec = k_ec;
    let (mut ni, mut di, mut np, mut dp) = (0.0, 0.0, 0.0, 0.0);
    for r in records {
        let (a, b, c, d) = weighted_error_parts(&act, r, opts.demag_pairs, opts.dt)?;
        ni += a;
        di += b;
        np += c;
        dp += d;
    }
    if di <= 0.0 || dp <= 0.0 {
        return Err(Error::InvalidParam(
            "records carry no signal to normalize against".into(),
        ));
    }
    Ok((ni / di + np / dp).sqrt())
}

/// Weighted-error parts for one record: (Σ(i−i_sim)², Σi², Σ(φ−φ_sim)², Σφ²).
fn weighted_error_parts(
    act: &Actuator,
    record: &ExperimentRecord,
    demag_pairs: usize,
    dt: f64,
) -> Result<(f64, f64, f64, f64)> {
    let sample_dt = record.sample_dt();
    let record_every = (sample_dt / dt).round() as usize;
    if record_every == 0 || (record_every as f64 * dt - sample_dt).abs() > 1e-9 * sample_dt {
        return Err(Error::InvalidParam(format!(
            "record sampling {sample_dt} s is not a multiple of the simulation step {dt} s"
        )));
    }
    let v = record.v.as_ref().expect("validated voltage column");
    let waveform = VoltageWaveform::SampledZoh {
        times: record.t.clone(),
        values: v.clone(),
    };
    let mag = act.circuit.gpm.demagnetized_state(demag_pairs)?;
    let init = act.state_at(0.0, record.gap, 0.0, mag)?;
    let cfg = SimConfig {
        dt,
        t_end: *record.t.last().expect("validated record"),
        record_every,
        pin_position: true,
        ..SimConfig::default()
    };
    let traj = act.simulate(init, &waveform, &cfg)?;

    // Match simulated records to experiment samples by timestamp; events may
    // drop an occasional simulated grid point.
    let (mut ni, mut di, mut np, mut dp) = (0.0, 0.0, 0.0, 0.0);
    let mut idx = 0usize;
    for rec in &traj.records {
        while idx < record.t.len() && record.t[idx] < rec.t - 0.5 * dt {
            idx += 1;
        }
        if idx >= record.t.len() {
            break;
        }
        if (record.t[idx] - rec.t).abs() <= 0.5 * dt {
            let ei = record.i[idx] - rec.i;
            let ep = record.phi[idx] - rec.phi;
            ni += ei * ei;
            di += record.i[idx] * record.i[idx];
            np += ep * ep;
            dp += record.phi[idx] * record.phi[idx];
            idx += 1;
        }
    }
    Ok((ni, di, np, dp))
}

/// Exponentially decaying sinusoid for degaussing: `cycles` full periods,
/// `rate` samples per period, per-cycle amplitude ratio `decay`. The final
/// cycle must reach below 10⁻³ of the initial amplitude.
pub fn degauss_waveform(
    amplitude: f64,
    decay: f64,
    cycles: usize,
    rate: usize,
) -> Result<Vec<f64>> {
    if cycles == 0 {
        return Ok(Vec::new());
    }
    if !(amplitude > 0.0) || !(decay > 0.0 && decay < 1.0) {
        return Err(Error::InvalidParam(format!(
            "degauss needs positive amplitude and decay in (0, 1), got {amplitude}, {decay}"
        )));
    }
    if rate < 8 {
        return Err(Error::InvalidParam(
            "degauss needs at least 8 samples per cycle".into(),
        ));
    }
    let final_amp = amplitude * decay.powi(cycles as i32 - 1);
    if final_amp >= 1e-3 * amplitude {
        return Err(Error::InvalidParam(format!(
            "degauss envelope only reaches {:.3e} of the initial amplitude after {cycles} cycles; \
             more cycles or faster decay required for a demagnetized end state",
            final_amp / amplitude
        )));
    }
    let mut out = Vec::with_capacity(cycles * rate + 1);
    for cycle in 0..cycles {
        let a = amplitude * decay.powi(cycle as i32);
        for k in 0..rate {
            let phase = 2.0 * std::f64::consts::PI * k as f64 / rate as f64;
            out.push(a * phase.sin());
        }
    }
    out.push(0.0);
    Ok(out)
}

/// Run `f` over `items`, fanning out across threads capped by
/// `RELUCTSIM_THREADS` (default: available parallelism). Results keep the
/// input order, so floating-point reductions stay deterministic.
fn parallel_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let threads = thread_cap().min(items.len().max(1));
    if threads <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let mut out: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    let chunk = items.len().div_ceil(threads);
    std::thread::scope(|scope| {
        for (slot_chunk, item_chunk) in out.chunks_mut(chunk).zip(items.chunks(chunk)) {
            let f = &f;
            scope.spawn(move || {
                for (slot, item) in slot_chunk.iter_mut().zip(item_chunk.iter()) {
                    *slot = Some(f(item));
                }
            });
        }
    });
    out.into_iter().map(|r| r.expect("worker filled slot")).collect()
}

fn thread_cap() -> usize {
    std::env::var("RELUCTSIM_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}
