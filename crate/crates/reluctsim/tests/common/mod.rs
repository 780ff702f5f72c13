//! Shared oracles and fixtures for the integration suites.
//!
//! Everything here evaluates the model by an independent route: hysterons are
//! materialized on a grid and switched one by one, and the flux-side dynamics
//! are integrated with the hysteresis model inverted numerically. None of it
//! shares code with the staircase/field-side implementation paths it checks.

#![allow(dead_code)]

use reluctsim::config::Config;
use reluctsim::hybrid::Actuator;
use reluctsim::hysteresis::{
    b_rev, GpmModel, HysteresisState, PreisachDistribution, Replay,
};
use reluctsim::identify::ExperimentRecord;
use std::path::Path;

pub fn valve_config() -> Config {
    Config::valve_example()
}

pub fn valve() -> Actuator {
    valve_config().build_actuator(Path::new(".")).unwrap()
}

/// Brute-force Preisach oracle: a uniform grid of relay hysterons over the
/// bounded triangle, each weighted by the density at its cell center.
pub struct HysteronGrid {
    cells: Vec<(f64, f64, f64)>, // (alpha, beta, weight)
    state: Vec<i8>,
    /// Sum of all weights: the grid's own full-triangle normalizer.
    pub t0: f64,
}

impl HysteronGrid {
    pub fn new(dist: &PreisachDistribution, alpha0: f64, beta0: f64, n: usize) -> Self {
        let step = (alpha0 - beta0) / n as f64;
        let mut cells = Vec::new();
        for ia in 0..n {
            let alpha = beta0 + (ia as f64 + 0.5) * step;
            for ib in 0..n {
                let beta = beta0 + (ib as f64 + 0.5) * step;
                if alpha >= beta {
                    // Diagonal cells straddle the α = β edge: only half of
                    // each lies inside the triangle.
                    let frac = if ia == ib { 0.5 } else { 1.0 };
                    cells.push((alpha, beta, frac * dist.density(alpha, beta) * step * step));
                }
            }
        }
        let t0 = cells.iter().map(|c| c.2).sum();
        let state = vec![-1; cells.len()];
        Self { cells, state, t0 }
    }

    /// Reset to negative saturation (the virgin state at u = β₀).
    pub fn reset(&mut self) {
        for s in &mut self.state {
            *s = -1;
        }
    }

    /// Apply one input value to every hysteron: u ≥ α switches up,
    /// u ≤ β switches down, otherwise the relay keeps its state.
    pub fn apply(&mut self, u: f64) {
        for (cell, s) in self.cells.iter().zip(self.state.iter_mut()) {
            if u >= cell.0 {
                *s = 1;
            } else if u <= cell.1 {
                *s = -1;
            }
        }
    }

    /// Weighted relay sum: the classical-model output.
    pub fn output(&self) -> f64 {
        self.cells
            .iter()
            .zip(self.state.iter())
            .map(|(c, s)| c.2 * f64::from(*s))
            .sum()
    }

    /// Replay the generating sequence of a staircase state: virgin start,
    /// then the interleaved extrema outermost-in, ending at `u_now`.
    pub fn load_state(&mut self, state: &HysteresisState, u_now: f64) {
        self.reset();
        let maxima = state.history().maxima();
        let minima = state.history().minima();
        for k in 0..maxima.len().max(minima.len()) {
            if let Some(a) = maxima.get(k) {
                self.apply(*a);
            }
            if let Some(b) = minima.get(k) {
                self.apply(*b);
            }
        }
        self.apply(u_now);
    }
}

/// Flux-side reference integrator: RK4 on the flux ODE with the hysteresis
/// relation inverted by bisection at every stage. Armature pinned.
pub struct FluxPathOracle<'a> {
    pub act: &'a Actuator,
    pub state: HysteresisState,
    pub phi: f64,
    pub h: f64,
    pub z: f64,
    /// Flux-density evaluations spent on inversions (for contrast with the
    /// field-side formulation).
    pub b_evals: u64,
}

impl<'a> FluxPathOracle<'a> {
    pub fn new(act: &'a Actuator, state: HysteresisState, z: f64) -> Self {
        Self {
            act,
            state,
            phi: 0.0,
            h: 0.0,
            z,
            b_evals: 0,
        }
    }

    /// Invert B(h) = b_target on the current branch by bisection.
    fn invert(&mut self, b_target: f64) -> f64 {
        let gpm = &self.act.circuit.gpm;
        let p = gpm.params();
        let (mut lo, mut hi) = (p.beta0, p.alpha0);
        for _ in 0..64 {
            let mid = 0.5 * (lo + hi);
            self.b_evals += 1;
            if gpm.b(&self.state, mid).unwrap() < b_target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn phi_dot(&mut self, phi: f64, v: f64) -> f64 {
        let c = &self.act.circuit;
        let (r_air, _) = c.table.reluctance(self.z).unwrap();
        let h = self.invert(phi / c.core.a_iron);
        let n = c.coil.turns_f();
        (n / c.coil.resistance * v - phi * r_air - h * c.core.l_iron)
            / (n * n / c.coil.resistance + c.eddy.k_ec)
    }

    /// One RK4 step at constant voltage; memory frozen within the step, then
    /// wiping applied at the step end.
    pub fn step(&mut self, v: f64, dt: f64) {
        let p0 = self.phi;
        let k1 = self.phi_dot(p0, v);
        let k2 = self.phi_dot(p0 + 0.5 * dt * k1, v);
        let k3 = self.phi_dot(p0 + 0.5 * dt * k2, v);
        let k4 = self.phi_dot(p0 + dt * k3, v);
        self.phi = p0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        let h_new = self.invert(self.phi / self.act.circuit.core.a_iron);
        self.act
            .circuit
            .gpm
            .wipe_crossings(&mut self.state, h_new);
        self.h = h_new;
    }
}

/// Deterministic xorshift for test-data generation where a full RNG crate
/// dependency is not warranted.
pub struct SplitMix(pub u64);

impl SplitMix {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }
}

/// Quasi-static sinusoidal-current records consistent with the given model:
/// H is prescribed, B replayed from a demagnetized state, and (i, φ) derived
/// from the static field balance at the fixed gap.
pub fn synth_static_records(
    act: &Actuator,
    model: &GpmModel,
    amplitudes: &[f64],
    samples_per_cycle: usize,
    cycles: usize,
    gap: f64,
) -> Vec<ExperimentRecord> {
    let c = &act.circuit;
    let (r_air, _) = c.table.reluctance(gap).unwrap();
    amplitudes
        .iter()
        .map(|amp| {
            let mut replay = Replay::demagnetized(model, 100).unwrap();
            let n = samples_per_cycle * cycles;
            let dt = 1e-4;
            let mut rec = ExperimentRecord {
                gap,
                wave: "sin".into(),
                level: *amp,
                ..Default::default()
            };
            for k in 0..n {
                let ph = 2.0 * std::f64::consts::PI * k as f64 / samples_per_cycle as f64;
                let h = amp * ph.sin();
                let b = replay.feed(h).unwrap();
                let phi = c.core.a_iron * b;
                let i = (h * c.core.l_iron + phi * r_air) / c.coil.turns_f();
                rec.t.push(k as f64 * dt);
                rec.i.push(i);
                rec.phi.push(phi);
            }
            rec
        })
        .collect()
}

/// Reversible-only flux density for generator cross-checks.
pub fn b_rev_series(h: &[f64], rev: &reluctsim::hysteresis::RevParams) -> Vec<f64> {
    h.iter().map(|x| b_rev(*x, rev)).collect()
}
