//! Staircase evaluation of the classical and generalized Preisach models.
//!
//! Two evaluation paths are provided. The free functions recompute the full
//! staircase sum from an [`ExtremaHistory`] on every call; they mirror the
//! model equations directly and serve as the reference. [`HysteresisState`]
//! keeps the closed part of the staircase sum cached and updates it
//! incrementally on reversals and wipe-outs, so a simulation pays for exactly
//! one triangle evaluation per output query and one edge integral per
//! permeability query.

use crate::error::{Error, Result};
use crate::hysteresis::history::{ExtremaHistory, WipeOut};
use crate::hysteresis::triangle::{
    edge_integral_decreasing, edge_integral_increasing, triangle_integral,
};
use crate::hysteresis::{b_rev, mu_rev, Direction, GpmParams};
use std::cell::Cell;

fn check_input_bounds(h: f64, beta0: f64, alpha0: f64, context: &'static str) -> Result<()> {
    if !h.is_finite() {
        return Err(Error::NonFinite { context, value: h });
    }
    if h < beta0 || h > alpha0 {
        return Err(Error::OutOfRange {
            context,
            value: h,
            lo: beta0,
            hi: alpha0,
        });
    }
    Ok(())
}

/// Closed part of the staircase sum: −T(α₀,β₀) plus the alternating pair
/// terms, exclusive of the open term that depends on the present input.
fn closed_sum(
    hist: &ExtremaHistory,
    dist: &crate::hysteresis::PreisachDistribution,
    beta0: f64,
    t0: f64,
) -> Result<f64> {
    let maxima = hist.maxima();
    let minima = hist.minima();
    let mut acc = -t0;
    for (k, &a) in maxima.iter().enumerate() {
        let prev_min = if k == 0 { beta0 } else { minima[k - 1] };
        acc += 2.0 * triangle_integral(a, prev_min, dist)?;
        if k < minima.len() {
            acc -= 2.0 * triangle_integral(a, minima[k], dist)?;
        }
    }
    Ok(acc)
}

/// Classical Preisach output for input `h` given the reduced memory.
///
/// Increasing input closes the sum with +2T(h, β_n); decreasing input with
/// −2T(α_n, h). Bounded by ±T(α₀, β₀) for any valid state.
pub fn cpm_output(
    h: f64,
    hist: &ExtremaHistory,
    dir: Direction,
    dist: &crate::hysteresis::PreisachDistribution,
    alpha0: f64,
    beta0: f64,
) -> Result<f64> {
    check_input_bounds(h, beta0, alpha0, "cpm_output")?;
    hist.validate(beta0, alpha0)?;
    hist.check_direction(dir)?;
    let t0 = triangle_integral(alpha0, beta0, dist)?;
    let base = closed_sum(hist, dist, beta0, t0)?;
    let open = match dir {
        Direction::Increasing => {
            let bn = hist.innermost_min().unwrap_or(beta0);
            2.0 * triangle_integral(h.max(bn), bn, dist)?
        }
        Direction::Decreasing => {
            let an = hist.innermost_max().unwrap_or(alpha0);
            -2.0 * triangle_integral(an, h.min(an), dist)?
        }
    };
    Ok(base + open)
}

/// Generalized Preisach flux density: B_Rev(h) plus the saturating
/// irreversible part B̂_Irr·f_CPM/T(α₀,β₀).
pub fn gpm_b(
    h: f64,
    hist: &ExtremaHistory,
    dir: Direction,
    p: &GpmParams,
) -> Result<f64> {
    let t0 = triangle_integral(p.alpha0, p.beta0, &p.dist)?;
    let cpm = cpm_output(h, hist, dir, &p.dist, p.alpha0, p.beta0)?;
    Ok(b_rev(h, &p.rev) + p.b_irr_sat * cpm / t0)
}

/// Irreversible incremental permeability: the density line integral along the
/// active staircase edge, scaled by 2B̂_Irr/T(α₀,β₀). Zero exactly at a fresh
/// reversal, non-negative everywhere.
pub fn mu_irr(h: f64, hist: &ExtremaHistory, dir: Direction, p: &GpmParams) -> Result<f64> {
    check_input_bounds(h, p.beta0, p.alpha0, "mu_irr")?;
    hist.validate(p.beta0, p.alpha0)?;
    hist.check_direction(dir)?;
    let t0 = triangle_integral(p.alpha0, p.beta0, &p.dist)?;
    let edge = match dir {
        Direction::Increasing => {
            let bn = hist.innermost_min().unwrap_or(p.beta0);
            edge_integral_increasing(h.max(bn), bn, &p.dist)?
        }
        Direction::Decreasing => {
            let an = hist.innermost_max().unwrap_or(p.alpha0);
            edge_integral_decreasing(h.min(an), an, &p.dist)?
        }
    };
    Ok(2.0 * p.b_irr_sat * edge / t0)
}

/// Total incremental permeability μ'_Rev + μ'_Irr; strictly positive for
/// valid parameters.
pub fn mu_gpm(h: f64, hist: &ExtremaHistory, dir: Direction, p: &GpmParams) -> Result<f64> {
    Ok(mu_rev(h, &p.rev) + mu_irr(h, hist, dir, p)?)
}

/// Parameter set with the normalization constant T(α₀, β₀) computed once.
#[derive(Clone, Debug)]
pub struct GpmModel {
    params: GpmParams,
    t0: f64,
}

impl GpmModel {
    pub fn new(params: GpmParams) -> Result<Self> {
        params.validate()?;
        let t0 = triangle_integral(params.alpha0, params.beta0, &params.dist)?;
        if !(t0 > 0.0) {
            return Err(Error::InvalidParam(format!(
                "distribution carries no weight inside the input bounds (T0 = {t0:.3e})"
            )));
        }
        Ok(Self { params, t0 })
    }

    pub fn params(&self) -> &GpmParams {
        &self.params
    }

    /// Cached normalization T(α₀, β₀).
    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// Virgin state: empty memory rising from β₀.
    pub fn virgin_state(&self) -> HysteresisState {
        HysteresisState {
            hist: ExtremaHistory::new(),
            dir: Direction::Increasing,
            cum: vec![0.0],
            clamped: Cell::new(0),
            b_evals: Cell::new(0),
            mu_evals: Cell::new(0),
        }
    }

    /// Demagnetized state: `n` nested loops spanning the input bounds,
    /// increasing convention.
    ///
    /// The minima sit half a step inside the mirrored maxima, which centers
    /// every stair step on the anti-diagonal (corners alternate at
    /// h_m = ±Δ/4). A grid with exactly mirrored extrema keeps all of its
    /// steps on one side and leaves a residual output of order B̂_Irr·Δ/(4s_hm)
    /// at zero field; the balanced grid cancels it to the innermost band.
    pub fn demagnetized_state(&self, n: usize) -> Result<HysteresisState> {
        let p = &self.params;
        if n == 0 {
            return Err(Error::InvalidParam(
                "demagnetized_state requires n >= 1".into(),
            ));
        }
        if !(p.beta0 < 0.0 && p.alpha0 > 0.0) {
            return Err(Error::InvalidParam(format!(
                "demagnetized_state requires bounds straddling zero, got [{}, {}]",
                p.beta0, p.alpha0
            )));
        }
        let step_max = p.alpha0 / n as f64;
        let step_min = -p.beta0 / n as f64;
        let mut maxima = Vec::with_capacity(n);
        let mut minima = Vec::with_capacity(n);
        for k in 0..n {
            maxima.push(p.alpha0 - step_max * k as f64);
            minima.push(p.beta0 + step_min * (k as f64 + 0.5));
        }
        let hist = ExtremaHistory::from_parts(maxima, minima)?;
        self.state_from(hist, Direction::Increasing)
    }

    /// Build the cached state for an arbitrary history.
    pub fn state_from(&self, hist: ExtremaHistory, dir: Direction) -> Result<HysteresisState> {
        hist.validate(self.params.beta0, self.params.alpha0)?;
        hist.check_direction(dir)?;
        let maxima = hist.maxima();
        let minima = hist.minima();
        let mut cum = Vec::with_capacity(maxima.len() + minima.len() + 1);
        cum.push(0.0);
        for (k, &a) in maxima.iter().enumerate() {
            let prev_min = if k == 0 { self.params.beta0 } else { minima[k - 1] };
            let last = *cum.last().expect("cum never empty");
            cum.push(last + 2.0 * triangle_integral(a, prev_min, &self.params.dist)?);
            if k < minima.len() {
                let last = *cum.last().expect("cum never empty");
                cum.push(last - 2.0 * triangle_integral(a, minima[k], &self.params.dist)?);
            }
        }
        Ok(HysteresisState {
            hist,
            dir,
            cum,
            clamped: Cell::new(0),
            b_evals: Cell::new(0),
            mu_evals: Cell::new(0),
        })
    }

    /// Classical-model output through the cached state: one triangle
    /// evaluation per call.
    pub fn cpm(&self, s: &HysteresisState, h: f64) -> Result<f64> {
        let hc = self.clamp_input(s, h);
        let base = -self.t0 + *s.cum.last().expect("cum never empty");
        let open = match s.dir {
            Direction::Increasing => {
                let bn = s.hist.innermost_min().unwrap_or(self.params.beta0);
                2.0 * triangle_integral(hc.max(bn), bn, &self.params.dist)?
            }
            Direction::Decreasing => {
                let an = s.hist.innermost_max().unwrap_or(self.params.alpha0);
                -2.0 * triangle_integral(an, hc.min(an), &self.params.dist)?
            }
        };
        Ok(base + open)
    }

    /// Flux density with the irreversible part saturated outside the input
    /// bounds while the reversible part keeps following `h`.
    pub fn b(&self, s: &HysteresisState, h: f64) -> Result<f64> {
        s.b_evals.set(s.b_evals.get() + 1);
        let cpm = self.cpm(s, h)?;
        Ok(b_rev(h, &self.params.rev) + self.params.b_irr_sat * cpm / self.t0)
    }

    /// Irreversible incremental permeability at `h` (clamps to zero beyond
    /// the bounds: every hysteron has switched there).
    pub fn mu_irr_at(&self, s: &HysteresisState, h: f64) -> Result<f64> {
        if h < self.params.beta0 || h > self.params.alpha0 {
            return Ok(0.0);
        }
        let edge = match s.dir {
            Direction::Increasing => {
                let bn = s.hist.innermost_min().unwrap_or(self.params.beta0);
                edge_integral_increasing(h.max(bn), bn, &self.params.dist)?
            }
            Direction::Decreasing => {
                let an = s.hist.innermost_max().unwrap_or(self.params.alpha0);
                edge_integral_decreasing(h.min(an), an, &self.params.dist)?
            }
        };
        Ok(2.0 * self.params.b_irr_sat * edge / self.t0)
    }

    /// Total incremental permeability at `h`.
    pub fn mu(&self, s: &HysteresisState, h: f64) -> Result<f64> {
        s.mu_evals.set(s.mu_evals.get() + 1);
        Ok(mu_rev(h, &self.params.rev) + self.mu_irr_at(s, h)?)
    }

    fn clamp_input(&self, s: &HysteresisState, h: f64) -> f64 {
        if h < self.params.beta0 || h > self.params.alpha0 {
            s.clamped.set(s.clamped.get() + 1);
            h.clamp(self.params.beta0, self.params.alpha0)
        } else {
            h
        }
    }

    /// Erase the innermost loop pair (a wipe-out jump). Returns the erased
    /// corner, or `None` when no stored loop remains.
    pub fn wipe(&self, s: &mut HysteresisState) -> Option<WipeOut> {
        let w = s.hist.pop_pair()?;
        s.cum.pop();
        s.cum.pop();
        debug_assert!(!s.cum.is_empty());
        Some(w)
    }

    /// Record a direction reversal at field `h`: pushes the extremum
    /// (merging a nearly closed loop within the merge tolerance, clamping to
    /// the bounds beyond saturation) and flips the direction.
    pub fn reverse(&self, s: &mut HysteresisState, h: f64) -> Result<()> {
        if !h.is_finite() {
            return Err(Error::NonFinite {
                context: "reverse",
                value: h,
            });
        }
        let p = &self.params;
        let hc = h.clamp(p.beta0, p.alpha0);
        let tol = p.merge_tolerance();
        match s.dir {
            // Was increasing: hc becomes a maximum.
            Direction::Increasing => {
                if let Some(b) = s.hist.innermost_min() {
                    if hc <= b {
                        return Err(Error::History(format!(
                            "reversal at {hc} below innermost minimum {b}"
                        )));
                    }
                }
                if let Some(a) = s.hist.innermost_max() {
                    if hc >= a {
                        return Err(Error::History(format!(
                            "reversal at {hc} reaches stored maximum {a}; wipe-out must run first"
                        )));
                    }
                    if a - hc <= tol {
                        self.wipe(s);
                    }
                }
                let prev_min = s.hist.innermost_min().unwrap_or(p.beta0);
                let last = *s.cum.last().expect("cum never empty");
                s.cum
                    .push(last + 2.0 * triangle_integral(hc, prev_min, &p.dist)?);
                s.hist.push_max(hc);
                s.dir = Direction::Decreasing;
            }
            // Was decreasing: hc becomes a minimum.
            Direction::Decreasing => {
                if let Some(a) = s.hist.innermost_max() {
                    if hc >= a {
                        return Err(Error::History(format!(
                            "reversal at {hc} above innermost maximum {a}"
                        )));
                    }
                }
                if let Some(b) = s.hist.innermost_min() {
                    if hc <= b {
                        return Err(Error::History(format!(
                            "reversal at {hc} reaches stored minimum {b}; wipe-out must run first"
                        )));
                    }
                    if hc - b <= tol {
                        self.wipe(s);
                    }
                }
                let an = s
                    .hist
                    .innermost_max()
                    .expect("decreasing state has a stored maximum");
                let last = *s.cum.last().expect("cum never empty");
                s.cum
                    .push(last - 2.0 * triangle_integral(an, hc, &p.dist)?);
                s.hist.push_min(hc);
                s.dir = Direction::Increasing;
            }
        }
        Ok(())
    }

    /// Apply every wipe-out triggered by the input reaching `h` in the
    /// state's current direction.
    pub fn wipe_crossings(&self, s: &mut HysteresisState, h: f64) -> usize {
        let mut count = 0;
        loop {
            let crossed = match s.dir {
                Direction::Increasing => s.hist.innermost_max().is_some_and(|a| h >= a),
                Direction::Decreasing => s.hist.innermost_min().is_some_and(|b| h <= b),
            };
            if !crossed {
                return count;
            }
            if self.wipe(s).is_none() {
                return count;
            }
            count += 1;
        }
    }
}

/// Hysteresis state with the closed staircase sum cached incrementally.
///
/// `cum[k]` is the closed sum after the k-th pushed extremum (`cum[0] = 0`),
/// so output queries touch only the open term. The state is a plain value:
/// cloning it forks the magnetic memory.
#[derive(Debug)]
pub struct HysteresisState {
    hist: ExtremaHistory,
    dir: Direction,
    cum: Vec<f64>,
    clamped: Cell<u64>,
    b_evals: Cell<u64>,
    mu_evals: Cell<u64>,
}

impl Clone for HysteresisState {
    fn clone(&self) -> Self {
        Self {
            hist: self.hist.clone(),
            dir: self.dir,
            cum: self.cum.clone(),
            clamped: Cell::new(self.clamped.get()),
            b_evals: Cell::new(0),
            mu_evals: Cell::new(0),
        }
    }
}

impl HysteresisState {
    pub fn history(&self) -> &ExtremaHistory {
        &self.hist
    }

    pub fn direction(&self) -> Direction {
        self.dir
    }

    /// Number of output evaluations requested beyond the input bounds
    /// (saturation-clamp diagnostics).
    pub fn clamped_evals(&self) -> u64 {
        self.clamped.get()
    }

    /// Flux-density and permeability evaluation counters.
    pub fn eval_counts(&self) -> (u64, u64) {
        (self.b_evals.get(), self.mu_evals.get())
    }

    pub fn reset_eval_counts(&self) {
        self.b_evals.set(0);
        self.mu_evals.set(0);
    }
}

/// Drives a state through a sampled field sequence, handling reversals and
/// wipe-outs between consecutive samples.
pub struct Replay<'m> {
    model: &'m GpmModel,
    state: HysteresisState,
    h_prev: f64,
}

impl<'m> Replay<'m> {
    /// `h_start` anchors the field value the state currently sits at: 0 for a
    /// demagnetized state, β₀ for the virgin state. The first fed sample is
    /// treated as a move from this anchor.
    pub fn new(model: &'m GpmModel, state: HysteresisState, h_start: f64) -> Self {
        Self {
            model,
            state,
            h_prev: h_start,
        }
    }

    /// Replay starting from the demagnetized state at zero field.
    pub fn demagnetized(model: &'m GpmModel, pairs: usize) -> Result<Self> {
        Ok(Self::new(model, model.demagnetized_state(pairs)?, 0.0))
    }

    pub fn state(&self) -> &HysteresisState {
        &self.state
    }

    pub fn model(&self) -> &GpmModel {
        self.model
    }

    /// Feed the next field sample; returns the flux density there.
    pub fn feed(&mut self, h: f64) -> Result<f64> {
        let prev = self.h_prev;
        let moving = if h > prev {
            Some(Direction::Increasing)
        } else if h < prev {
            Some(Direction::Decreasing)
        } else {
            None
        };
        if let Some(m) = moving {
            if m != self.state.dir {
                self.model.reverse(&mut self.state, prev)?;
            }
            self.model.wipe_crossings(&mut self.state, h);
        }
        self.h_prev = h;
        self.model.b(&self.state, h)
    }

    /// Feed the sample and also return the incremental permeability.
    pub fn feed_with_mu(&mut self, h: f64) -> Result<(f64, f64)> {
        let b = self.feed(h)?;
        let mu = self.model.mu(&self.state, h)?;
        Ok((b, mu))
    }
}
