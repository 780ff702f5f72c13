//! Reduced Preisach memory: alternating sets of past maxima and minima.
//!
//! The bounds α₀ and β₀ are conceptual members of the sets but live in
//! [`GpmParams`](super::GpmParams); only the interior extrema are stored here.
//! Counting the bounds, |minima| = |maxima| holds while the input increases
//! and |minima| = |maxima| − 1 while it decreases, so the direction is
//! recoverable from the stored cardinalities.

use crate::error::{Error, Result};
use crate::hysteresis::Direction;
use serde::{Deserialize, Serialize};

/// Past extrema of the input, outermost first.
///
/// `maxima` is strictly decreasing, `minima` strictly increasing, and every
/// stored maximum exceeds every stored minimum. A stored extremum may sit
/// exactly on a bound (the state reached after saturating and reversing);
/// such a leading pair contributes zero to every staircase sum.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtremaHistory {
    maxima: Vec<f64>,
    minima: Vec<f64>,
}

/// One wiping-out event: the erased minor-loop corner pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WipeOut {
    pub removed_max: f64,
    pub removed_min: f64,
}

impl ExtremaHistory {
    /// Empty history: the virgin state rising from β₀.
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_parts(maxima: Vec<f64>, minima: Vec<f64>) -> Result<Self> {
        let h = Self { maxima, minima };
        h.check_shape()?;
        Ok(h)
    }

    pub fn maxima(&self) -> &[f64] {
        &self.maxima
    }

    pub fn minima(&self) -> &[f64] {
        &self.minima
    }

    /// Innermost stored maximum (the wipe-out threshold for increasing input).
    pub fn innermost_max(&self) -> Option<f64> {
        self.maxima.last().copied()
    }

    /// Innermost stored minimum (the wipe-out threshold for decreasing input).
    pub fn innermost_min(&self) -> Option<f64> {
        self.minima.last().copied()
    }

    /// Direction implied by the cardinality convention, or an error when the
    /// stored counts match neither case.
    pub fn direction(&self) -> Result<Direction> {
        let (n, m) = (self.maxima.len(), self.minima.len());
        if m == n {
            Ok(Direction::Increasing)
        } else if m + 1 == n {
            Ok(Direction::Decreasing)
        } else {
            Err(Error::History(format!(
                "invalid cardinalities: {n} maxima vs {m} minima"
            )))
        }
    }

    /// Structural invariants that do not involve the bounds.
    fn check_shape(&self) -> Result<()> {
        self.direction()?;
        for w in self.maxima.windows(2) {
            if !(w[1] < w[0]) {
                return Err(Error::History(format!(
                    "maxima not strictly decreasing at {} -> {}",
                    w[0], w[1]
                )));
            }
        }
        for w in self.minima.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::History(format!(
                    "minima not strictly increasing at {} -> {}",
                    w[0], w[1]
                )));
            }
        }
        if let (Some(&a), Some(&b)) = (self.maxima.last(), self.minima.last()) {
            if !(a > b) {
                return Err(Error::History(format!(
                    "innermost maximum {a} not above innermost minimum {b}"
                )));
            }
        }
        for v in self.maxima.iter().chain(self.minima.iter()) {
            if !v.is_finite() {
                return Err(Error::History("non-finite extremum".into()));
            }
        }
        Ok(())
    }

    /// Full validation against the model input bounds.
    pub fn validate(&self, beta0: f64, alpha0: f64) -> Result<()> {
        self.check_shape()?;
        for &a in &self.maxima {
            if a > alpha0 || a < beta0 {
                return Err(Error::History(format!(
                    "stored maximum {a} outside [{beta0}, {alpha0}]"
                )));
            }
        }
        for &b in &self.minima {
            if b > alpha0 || b < beta0 {
                return Err(Error::History(format!(
                    "stored minimum {b} outside [{beta0}, {alpha0}]"
                )));
            }
        }
        Ok(())
    }

    /// Consistency of an externally supplied direction with the cardinalities.
    pub fn check_direction(&self, dir: Direction) -> Result<()> {
        let implied = self.direction()?;
        if implied != dir {
            return Err(Error::History(format!(
                "direction {dir:?} inconsistent with stored cardinalities ({} maxima, {} minima)",
                self.maxima.len(),
                self.minima.len()
            )));
        }
        Ok(())
    }

    pub(crate) fn pop_pair(&mut self) -> Option<WipeOut> {
        match (self.maxima.pop(), self.minima.pop()) {
            (Some(a), Some(b)) => Some(WipeOut {
                removed_max: a,
                removed_min: b,
            }),
            (Some(a), None) => {
                // Restore; a lone maximum cannot be wiped.
                self.maxima.push(a);
                None
            }
            (None, Some(b)) => {
                self.minima.push(b);
                None
            }
            (None, None) => None,
        }
    }

    pub(crate) fn push_max(&mut self, h: f64) {
        self.maxima.push(h);
    }

    pub(crate) fn push_min(&mut self, h: f64) {
        self.minima.push(h);
    }
}

/// Apply the wiping-out rule for an input that has reached `h` while moving
/// in `dir`: every minor loop whose corner is crossed is erased. Returns the
/// reduced history and the erased pairs, outermost-crossed first.
pub fn history_update(
    hist: &ExtremaHistory,
    h: f64,
    dir: Direction,
) -> Result<(ExtremaHistory, Vec<WipeOut>)> {
    hist.check_direction(dir)?;
    let mut out = hist.clone();
    let mut events = Vec::new();
    loop {
        let crossed = match dir {
            Direction::Increasing => out.innermost_max().is_some_and(|a| h >= a),
            Direction::Decreasing => out.innermost_min().is_some_and(|b| h <= b),
        };
        if !crossed {
            break;
        }
        match out.pop_pair() {
            Some(w) => events.push(w),
            None => break,
        }
    }
    Ok((out, events))
}

/// Record a reversal: the input stalled at `h` and now moves in `new_dir`,
/// so `h` joins the maxima (turning downward) or minima (turning upward).
///
/// `h` must lie strictly between the innermost stored minimum and maximum —
/// crossings must be wiped first via [`history_update`] — and inside the
/// closed bounds; a reversal exactly at a bound stores the bound itself
/// (the saturated-then-reversed state). A reversal within `merge_tol` of the
/// innermost same-kind extremum erases the nearly closed loop instead of
/// appending a new corner.
pub fn push_extremum(
    hist: &ExtremaHistory,
    h: f64,
    new_dir: Direction,
    beta0: f64,
    alpha0: f64,
    merge_tol: f64,
) -> Result<ExtremaHistory> {
    if !h.is_finite() {
        return Err(Error::NonFinite {
            context: "push_extremum",
            value: h,
        });
    }
    // The input was moving opposite to `new_dir` before the reversal.
    hist.check_direction(new_dir.reversed())?;
    if h > alpha0 || h < beta0 {
        return Err(Error::OutOfRange {
            context: "push_extremum",
            value: h,
            lo: beta0,
            hi: alpha0,
        });
    }
    let mut out = hist.clone();
    match new_dir {
        // Turning downward: h is a new maximum.
        Direction::Decreasing => {
            if let Some(b) = out.innermost_min() {
                if h <= b {
                    return Err(Error::History(format!(
                        "new maximum {h} not above innermost minimum {b}; wipe-out must run first"
                    )));
                }
            }
            if let Some(a) = out.innermost_max() {
                if h >= a {
                    return Err(Error::History(format!(
                        "new maximum {h} reaches stored maximum {a}; wipe-out must run first"
                    )));
                }
                if a - h <= merge_tol {
                    // The loop nearly closed at the old corner: erase it.
                    out.pop_pair();
                }
            }
            out.push_max(h);
        }
        // Turning upward: h is a new minimum.
        Direction::Increasing => {
            if let Some(a) = out.innermost_max() {
                if h >= a {
                    return Err(Error::History(format!(
                        "new minimum {h} not below innermost maximum {a}; wipe-out must run first"
                    )));
                }
            }
            if let Some(b) = out.innermost_min() {
                if h <= b {
                    return Err(Error::History(format!(
                        "new minimum {h} reaches stored minimum {b}; wipe-out must run first"
                    )));
                }
                if h - b <= merge_tol {
                    out.pop_pair();
                }
            }
            out.push_min(h);
        }
    }
    out.check_shape()?;
    Ok(out)
}

/// Interleaved symmetric history representing a demagnetized material:
/// n maxima stepping down from `hi` and n minima stepping up from `lo`,
/// counting the pair at the range endpoints themselves.
///
/// With n = 100 over ±10⁴ A/m this is the standard demagnetized seed
/// (step 100 A/m). Equal cardinalities put the model in the increasing
/// convention.
pub fn demag_history(n: usize, range: (f64, f64)) -> Result<ExtremaHistory> {
    let (lo, hi) = range;
    if n == 0 {
        return Err(Error::InvalidParam("demag_history requires n >= 1".into()));
    }
    if !(lo < 0.0 && hi > 0.0) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidParam(format!(
            "demag_history range must straddle zero, got [{lo}, {hi}]"
        )));
    }
    let mut maxima = Vec::with_capacity(n);
    let mut minima = Vec::with_capacity(n);
    let n_f = n as f64;
    for k in 0..n {
        let k_f = k as f64;
        maxima.push(hi - hi / n_f * k_f);
        minima.push(lo - lo / n_f * k_f);
    }
    ExtremaHistory::from_parts(maxima, minima)
}
