//! Six-mode hybrid automaton coupling the electromagnetic and motion
//! dynamics.
//!
//! The armature position splits the dynamics into two static boundary modes
//! and one motion mode; each is doubled by the field direction because the
//! hysteresis model evaluates differently on rising and falling field. Jumps
//! cover motion starts, boundary impacts (velocity reset), field-direction
//! switches (a new extremum enters the memory) and wiping-out (a closed minor
//! loop leaves the memory).
//!
//! Integration is fixed-step RK4 with the hysteresis memory frozen inside a
//! step; guard crossings are localized by bisection and the state is advanced
//! exactly to the event before the jump applies.

use crate::error::{Error, Result};
use crate::hysteresis::{Direction, HysteresisState};
use crate::magnetics::MagneticCircuit;
use serde::{Deserialize, Serialize};

/// Spring–mass armature parameters and travel limits.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MechParams {
    /// Moving mass, kg.
    pub mass: f64,
    /// Spring stiffness, N/m.
    pub k_s: f64,
    /// Gap length at spring equilibrium, m.
    pub z_s: f64,
    /// Viscous damping, N·s/m.
    pub damping: f64,
    /// Minimum gap (closed), m.
    pub z_min: f64,
    /// Maximum gap (open/rest), m.
    pub z_max: f64,
}

impl MechParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) {
            return Err(Error::InvalidParam(format!(
                "armature mass must be positive, got {}",
                self.mass
            )));
        }
        if !(self.k_s > 0.0) {
            return Err(Error::InvalidParam(format!(
                "spring stiffness must be positive, got {}",
                self.k_s
            )));
        }
        if !(self.damping >= 0.0) {
            return Err(Error::InvalidParam(format!(
                "damping must be non-negative, got {}",
                self.damping
            )));
        }
        if !(self.z_min < self.z_max) {
            return Err(Error::InvalidParam(format!(
                "travel limits require z_min < z_max, got [{}, {}]",
                self.z_min, self.z_max
            )));
        }
        Ok(())
    }
}

/// Discrete dynamic mode. The numbering fixes: 1–3 rising field at maximum
/// gap / in motion / at minimum gap, 4–6 the same positions with falling
/// field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum Mode {
    MaxGapIncreasing = 1,
    MotionIncreasing = 2,
    MinGapIncreasing = 3,
    MaxGapDecreasing = 4,
    MotionDecreasing = 5,
    MinGapDecreasing = 6,
}

/// Armature position class within a mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PositionKind {
    MaxGap,
    Moving,
    MinGap,
}

impl Mode {
    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn from_index(q: u8) -> Result<Self> {
        Ok(match q {
            1 => Mode::MaxGapIncreasing,
            2 => Mode::MotionIncreasing,
            3 => Mode::MinGapIncreasing,
            4 => Mode::MaxGapDecreasing,
            5 => Mode::MotionDecreasing,
            6 => Mode::MinGapDecreasing,
            _ => return Err(Error::InvalidParam(format!("mode index {q} not in 1..=6"))),
        })
    }

    pub fn direction(self) -> Direction {
        match self {
            Mode::MaxGapIncreasing | Mode::MotionIncreasing | Mode::MinGapIncreasing => {
                Direction::Increasing
            }
            _ => Direction::Decreasing,
        }
    }

    pub fn position(self) -> PositionKind {
        match self {
            Mode::MaxGapIncreasing | Mode::MaxGapDecreasing => PositionKind::MaxGap,
            Mode::MotionIncreasing | Mode::MotionDecreasing => PositionKind::Moving,
            Mode::MinGapIncreasing | Mode::MinGapDecreasing => PositionKind::MinGap,
        }
    }

    pub fn is_static(self) -> bool {
        self.position() != PositionKind::Moving
    }

    pub fn with_position(self, pos: PositionKind) -> Mode {
        Mode::compose(pos, self.direction())
    }

    pub fn with_direction(self, dir: Direction) -> Mode {
        Mode::compose(self.position(), dir)
    }

    pub fn compose(pos: PositionKind, dir: Direction) -> Mode {
        match (pos, dir) {
            (PositionKind::MaxGap, Direction::Increasing) => Mode::MaxGapIncreasing,
            (PositionKind::Moving, Direction::Increasing) => Mode::MotionIncreasing,
            (PositionKind::MinGap, Direction::Increasing) => Mode::MinGapIncreasing,
            (PositionKind::MaxGap, Direction::Decreasing) => Mode::MaxGapDecreasing,
            (PositionKind::Moving, Direction::Decreasing) => Mode::MotionDecreasing,
            (PositionKind::MinGap, Direction::Decreasing) => Mode::MinGapDecreasing,
        }
    }
}

/// Complete hybrid state: mode, continuous variables and magnetic memory.
#[derive(Clone, Debug)]
pub struct HybridState {
    pub mode: Mode,
    /// Field intensity in the iron, A/m.
    pub h_iron: f64,
    /// Gap length, m.
    pub z: f64,
    /// Gap-length rate, m/s.
    pub v_z: f64,
    /// Hysteresis memory (history plus direction).
    pub mag: HysteresisState,
}

impl HybridState {
    fn continuous(&self) -> [f64; 3] {
        [self.h_iron, self.z, self.v_z]
    }
}

/// Input voltage over the simulation horizon.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum VoltageWaveform {
    /// Sampled values held constant until the next sample.
    SampledZoh { times: Vec<f64>, values: Vec<f64> },
    /// Sampled values interpolated linearly.
    SampledLinear { times: Vec<f64>, values: Vec<f64> },
    /// Rectangular pulses on a base level; constant outside the pulses.
    Pulses { base: f64, pulses: Vec<Pulse> },
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Pulse {
    pub t_on: f64,
    pub t_off: f64,
    pub level: f64,
}

impl VoltageWaveform {
    pub fn constant(v: f64) -> Self {
        VoltageWaveform::Pulses {
            base: v,
            pulses: vec![],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            VoltageWaveform::SampledZoh { times, values }
            | VoltageWaveform::SampledLinear { times, values } => {
                if times.len() != values.len() || times.is_empty() {
                    return Err(Error::InvalidParam(format!(
                        "waveform needs matching non-empty columns, got {} times vs {} values",
                        times.len(),
                        values.len()
                    )));
                }
                for w in times.windows(2) {
                    if !(w[1] > w[0]) {
                        return Err(Error::InvalidParam(format!(
                            "waveform times must be strictly increasing, got {} then {}",
                            w[0], w[1]
                        )));
                    }
                }
                if times.iter().chain(values.iter()).any(|x| !x.is_finite()) {
                    return Err(Error::InvalidParam("waveform entries must be finite".into()));
                }
            }
            VoltageWaveform::Pulses { base, pulses } => {
                if !base.is_finite() {
                    return Err(Error::InvalidParam("pulse base level must be finite".into()));
                }
                let mut prev_off = f64::NEG_INFINITY;
                for p in pulses {
                    if !(p.t_off > p.t_on) || !p.level.is_finite() || !p.t_on.is_finite() {
                        return Err(Error::InvalidParam(format!(
                            "bad pulse: on {} off {} level {}",
                            p.t_on, p.t_off, p.level
                        )));
                    }
                    if p.t_on < prev_off {
                        return Err(Error::InvalidParam(
                            "pulses must be sorted and non-overlapping".into(),
                        ));
                    }
                    prev_off = p.t_off;
                }
            }
        }
        Ok(())
    }

    /// Latest time the waveform is defined for (sampled forms); pulse trains
    /// extend indefinitely.
    pub fn end_time(&self) -> Option<f64> {
        match self {
            VoltageWaveform::SampledZoh { times, .. }
            | VoltageWaveform::SampledLinear { times, .. } => times.last().copied(),
            VoltageWaveform::Pulses { .. } => None,
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            VoltageWaveform::SampledZoh { times, values } => {
                match times.binary_search_by(|x| x.total_cmp(&t)) {
                    Ok(i) => values[i],
                    Err(0) => values[0],
                    Err(i) => values[i - 1],
                }
            }
            VoltageWaveform::SampledLinear { times, values } => {
                match times.binary_search_by(|x| x.total_cmp(&t)) {
                    Ok(i) => values[i],
                    Err(0) => values[0],
                    Err(i) if i >= times.len() => values[times.len() - 1],
                    Err(i) => {
                        let w = (t - times[i - 1]) / (times[i] - times[i - 1]);
                        values[i - 1] * (1.0 - w) + values[i] * w
                    }
                }
            }
            VoltageWaveform::Pulses { base, pulses } => {
                for p in pulses {
                    if t >= p.t_on && t < p.t_off {
                        return p.level;
                    }
                }
                *base
            }
        }
    }

    /// Next discontinuity or kink strictly after `t`; integration steps never
    /// straddle one.
    pub fn next_breakpoint(&self, t: f64) -> Option<f64> {
        match self {
            VoltageWaveform::SampledZoh { times, .. }
            | VoltageWaveform::SampledLinear { times, .. } => {
                let i = match times.binary_search_by(|x| x.total_cmp(&t)) {
                    Ok(i) => i + 1,
                    Err(i) => i,
                };
                times.get(i).copied()
            }
            VoltageWaveform::Pulses { pulses, .. } => pulses
                .iter()
                .flat_map(|p| [p.t_on, p.t_off])
                .filter(|&e| e > t)
                .fold(None, |acc: Option<f64>, e| {
                    Some(acc.map_or(e, |a| a.min(e)))
                }),
        }
    }
}

/// Fixed-step integration settings.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SimConfig {
    /// Integration step, s.
    pub dt: f64,
    /// Simulation horizon, s.
    pub t_end: f64,
    /// Event localization tolerance, s.
    pub t_tol: f64,
    /// Emit a record every this many grid steps.
    pub record_every: usize,
    /// Hold the armature fixed (identification at an externally set
    /// position): motion guards are disabled.
    pub pin_position: bool,
    /// Abort when the jump count exceeds this bound.
    pub max_jumps: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-6,
            t_end: 0.1,
            t_tol: 1e-9,
            record_every: 10,
            pin_position: false,
            max_jumps: 1_000_000,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_end > 0.0) || !(self.t_tol > 0.0) {
            return Err(Error::InvalidParam(
                "simulation steps, horizon and tolerance must be positive".into(),
            ));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParam("record_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Kind of discrete transition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpKind {
    MotionStart,
    Impact,
    DirectionSwitch,
    WipeOut,
}

/// One discrete transition with the continuous state around it.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct JumpEvent {
    pub t: f64,
    pub kind: JumpKind,
    pub q_from: u8,
    pub q_to: u8,
    pub pre: [f64; 3],
    pub post: [f64; 3],
}

/// One sampled trajectory point with derived electrical quantities.
#[derive(Clone, Copy, Debug)]
pub struct TrajectoryRecord {
    pub t: f64,
    pub mode: Mode,
    pub h_iron: f64,
    pub z: f64,
    pub v_z: f64,
    pub i: f64,
    pub phi: f64,
    pub f_net: f64,
    pub i_ec: f64,
}

/// Full simulation output: uniformly sampled records plus the event log.
#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
    pub events: Vec<JumpEvent>,
    /// Saturation-clamp diagnostics accumulated over the run.
    pub clamped_evals: u64,
}

/// Simulation outcome carrying the trajectory prefix even on failure.
#[derive(Debug)]
pub struct SimRun {
    pub trajectory: Trajectory,
    pub failure: Option<Error>,
}

/// Point evaluation of every model quantity at one (H, z, v_z, v) tuple.
/// Costs exactly one flux-density and one permeability evaluation.
#[derive(Clone, Copy, Debug)]
pub struct PointEval {
    pub b: f64,
    pub mu: f64,
    pub r_air: f64,
    pub drdz: f64,
    pub phi: f64,
    pub h_dot: f64,
    pub phi_dot: f64,
    pub i: f64,
    pub i_ec: f64,
    pub f_mag: f64,
    pub f_net: f64,
}

/// The complete actuator: electromagnetic circuit plus mechanics.
#[derive(Clone, Debug)]
pub struct Actuator {
    pub circuit: MagneticCircuit,
    pub mech: MechParams,
}

impl Actuator {
    /// Net force on the armature: reluctance force, spring return, damping.
    pub fn net_force(&self, h: f64, z: f64, v_z: f64, mag: &HysteresisState) -> Result<f64> {
        let f_mag = self.circuit.magnetic_force(h, z, mag)?;
        Ok(f_mag - self.mech.k_s * (z - self.mech.z_s) - self.mech.damping * v_z)
    }

    /// Evaluate the full set of derived quantities at one point.
    pub fn evaluate(
        &self,
        h: f64,
        z: f64,
        v_z: f64,
        mag: &HysteresisState,
        v: f64,
    ) -> Result<PointEval> {
        let c = &self.circuit;
        let (r_air, drdz) = c.table.reluctance(z)?;
        let b = c.gpm.b(mag, h)?;
        let mu = c.gpm.mu(mag, h)?;
        if !(mu > 0.0) {
            return Err(Error::InvalidParam(format!(
                "incremental permeability not positive at H = {h}: {mu:.3e}"
            )));
        }
        let n = c.coil.turns_f();
        let r = c.coil.resistance;
        let a = c.core.a_iron;
        let phi = a * b;
        let numer = n / r * v - phi * r_air - h * c.core.l_iron;
        let h_dot = numer / ((n * n / r + c.eddy.k_ec) * a * mu);
        let phi_dot = a * mu * h_dot;
        let i = (h * c.core.l_iron + phi * r_air + c.eddy.k_ec * phi_dot) / n;
        let i_ec = -c.eddy.k_ec * phi_dot;
        let f_mag = -0.5 * phi * phi * drdz;
        let f_net = f_mag - self.mech.k_s * (z - self.mech.z_s) - self.mech.damping * v_z;
        Ok(PointEval {
            b,
            mu,
            r_air,
            drdz,
            phi,
            h_dot,
            phi_dot,
            i,
            i_ec,
            f_mag,
            f_net,
        })
    }

    /// Continuous flow of the active mode. Static modes pin the armature and
    /// integrate only the field; one flux-density and one permeability
    /// evaluation per call.
    pub fn flow(&self, state: &HybridState, v: f64) -> Result<[f64; 3]> {
        self.flow_x(state.mode, &state.mag, state.continuous(), v)
    }

    fn flow_x(&self, mode: Mode, mag: &HysteresisState, x: [f64; 3], v: f64) -> Result<[f64; 3]> {
        let e = self.evaluate(x[0], x[1], x[2], mag, v)?;
        Ok(flow_shape(mode, x, &e, self.mech.mass))
    }

    /// Rest state at maximum gap, demagnetized core, rising-field convention.
    pub fn initial_state(&self, demag_pairs: usize) -> Result<HybridState> {
        Ok(HybridState {
            mode: Mode::MaxGapIncreasing,
            h_iron: 0.0,
            z: self.mech.z_max,
            v_z: 0.0,
            mag: self.circuit.gpm.demagnetized_state(demag_pairs)?,
        })
    }

    /// Build a state from parts, inferring the mode from the position and the
    /// memory's direction convention.
    pub fn state_at(
        &self,
        h_iron: f64,
        z: f64,
        v_z: f64,
        mag: HysteresisState,
    ) -> Result<HybridState> {
        let dir = mag.direction();
        let pos = self.classify_position(z)?;
        if pos != PositionKind::Moving && v_z != 0.0 {
            return Err(Error::InvalidParam(format!(
                "static position z = {z} requires zero velocity, got {v_z}"
            )));
        }
        Ok(HybridState {
            mode: Mode::compose(pos, dir),
            h_iron,
            z,
            v_z,
            mag,
        })
    }

    fn classify_position(&self, z: f64) -> Result<PositionKind> {
        let snap = 1e-9 * (self.mech.z_max - self.mech.z_min).max(f64::MIN_POSITIVE);
        if (z - self.mech.z_min).abs() <= snap {
            Ok(PositionKind::MinGap)
        } else if (z - self.mech.z_max).abs() <= snap {
            Ok(PositionKind::MaxGap)
        } else if z > self.mech.z_min && z < self.mech.z_max {
            Ok(PositionKind::Moving)
        } else {
            Err(Error::OutOfRange {
                context: "armature position",
                value: z,
                lo: self.mech.z_min,
                hi: self.mech.z_max,
            })
        }
    }

    /// Run the automaton; the trajectory prefix survives failures.
    pub fn simulate_run(
        &self,
        initial: HybridState,
        waveform: &VoltageWaveform,
        cfg: &SimConfig,
    ) -> SimRun {
        let mut engine = match Engine::new(self, initial, waveform, cfg) {
            Ok(e) => e,
            Err(err) => {
                return SimRun {
                    trajectory: Trajectory::default(),
                    failure: Some(err),
                }
            }
        };
        let failure = engine.run().err();
        SimRun {
            trajectory: engine.finish(),
            failure,
        }
    }

    /// Run the automaton, failing without a partial trajectory.
    pub fn simulate(
        &self,
        initial: HybridState,
        waveform: &VoltageWaveform,
        cfg: &SimConfig,
    ) -> Result<Trajectory> {
        let run = self.simulate_run(initial, waveform, cfg);
        match run.failure {
            None => Ok(run.trajectory),
            Some(e) => Err(e),
        }
    }
}

/// Guard identity; doubles as the tie-breaking priority (impacts preempt
/// wipe-outs preempt direction switches preempt motion starts).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum GuardKind {
    Impact,
    WipeOut,
    DirectionSwitch,
    MotionStart,
}

struct Engine<'a> {
    act: &'a Actuator,
    waveform: &'a VoltageWaveform,
    cfg: SimConfig,
    t: f64,
    /// Index of the last grid point at or before `t` when `t` is on-grid.
    grid_k: Option<u64>,
    state: HybridState,
    /// Guard values and point evaluation at the current (t, state), reused
    /// across the step boundary.
    cached: Option<(Vec<(GuardKind, f64)>, PointEval)>,
    records: Vec<TrajectoryRecord>,
    events: Vec<JumpEvent>,
    jumps: u64,
}

impl<'a> Engine<'a> {
    fn new(
        act: &'a Actuator,
        initial: HybridState,
        waveform: &'a VoltageWaveform,
        cfg: &SimConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        waveform.validate()?;
        act.mech.validate()?;
        act.circuit.coil.validate()?;
        act.circuit.core.validate()?;
        act.circuit.eddy.validate()?;
        if let Some(end) = waveform.end_time() {
            if end + 1e-12 < cfg.t_end {
                return Err(Error::InvalidParam(format!(
                    "waveform ends at {end} s but the horizon is {} s",
                    cfg.t_end
                )));
            }
        }
        // Mode/position consistency.
        let mech = &act.mech;
        match initial.mode.position() {
            PositionKind::MaxGap if initial.z == mech.z_max && initial.v_z == 0.0 => {}
            PositionKind::MinGap if initial.z == mech.z_min && initial.v_z == 0.0 => {}
            PositionKind::Moving
                if initial.z >= mech.z_min && initial.z <= mech.z_max =>
            {}
            _ => {
                return Err(Error::InvalidParam(format!(
                    "initial mode {:?} inconsistent with z = {}, v_z = {}",
                    initial.mode, initial.z, initial.v_z
                )));
            }
        }
        if initial.mode.direction() != initial.mag.direction() {
            return Err(Error::InvalidParam(
                "initial mode family inconsistent with the memory direction".into(),
            ));
        }
        if cfg.pin_position && initial.mode.position() == PositionKind::Moving {
            return Err(Error::InvalidParam(
                "pinned simulations must start at a travel boundary".into(),
            ));
        }
        Ok(Self {
            act,
            waveform,
            cfg: *cfg,
            t: 0.0,
            grid_k: Some(0),
            state: initial,
            cached: None,
            records: Vec::new(),
            events: Vec::new(),
            jumps: 0,
        })
    }

    fn run(&mut self) -> Result<()> {
        self.instantaneous_jumps()?;
        self.record_if_due()?;
        while self.t < self.cfg.t_end - 0.5 * self.cfg.t_tol {
            self.step()?;
        }
        Ok(())
    }

    fn finish(self) -> Trajectory {
        Trajectory {
            records: self.records,
            events: self.events,
            clamped_evals: self.state.mag.clamped_evals(),
        }
    }

    /// Next canonical grid time strictly after `t`.
    fn next_grid(&self) -> (u64, f64) {
        let k = match self.grid_k {
            Some(k) => k + 1,
            None => (self.t / self.cfg.dt).floor() as u64 + 1,
        };
        (k, k as f64 * self.cfg.dt)
    }

    fn step(&mut self) -> Result<()> {
        let (grid_k, grid_t) = self.next_grid();
        let mut target = grid_t.min(self.cfg.t_end);
        let mut lands_on_grid = (target - grid_t).abs() < 1e-15 * grid_t.max(1.0);
        if let Some(bp) = self.waveform.next_breakpoint(self.t) {
            if bp < target - 0.25 * self.cfg.t_tol {
                target = bp;
                lands_on_grid = (target - grid_t).abs() < 1e-15 * grid_t.max(1.0);
            }
        }
        let dt = target - self.t;
        if dt <= 0.0 {
            return Err(Error::Simulation {
                t: self.t,
                msg: "step size collapsed to zero".into(),
            });
        }

        let x0 = self.state.continuous();
        // The cached end-of-step evaluation doubles as this step's start
        // guards and as the first RK4 stage.
        let (g_start, k1) = match self.cached.take() {
            Some((g, e)) => (g, Some(e)),
            None => {
                let e = self.eval_x(x0, self.t)?;
                (self.guards_from_eval(x0, &e), Some(e))
            }
        };
        let x_end = self.rk4_with_k1(x0, self.t, dt, k1)?;
        let eval_end = self.eval_x(x_end, self.t + dt)?;
        let g_end = self.guards_from_eval(x_end, &eval_end);
        let mut hit: Option<(GuardKind, f64)> = None;
        for (gs, ge) in g_start.iter().zip(g_end.iter()) {
            let (kind, s) = *gs;
            let (_, e) = *ge;
            if s >= 0.0 && e < 0.0 {
                let tau = self.localize(x0, self.t, dt, kind)?;
                hit = match hit {
                    None => Some((kind, tau)),
                    Some((bk, bt)) => {
                        if tau < bt - self.cfg.t_tol || (tau <= bt + self.cfg.t_tol && kind < bk) {
                            Some((kind, tau))
                        } else {
                            Some((bk, bt))
                        }
                    }
                };
            }
        }

        match hit {
            None => {
                self.set_continuous(x_end);
                self.t = target;
                self.grid_k = if lands_on_grid { Some(grid_k) } else { None };
                self.cached = Some((g_end, eval_end));
                self.check_finite()?;
                self.record_if_due()?;
            }
            Some((kind, tau)) => {
                let x_event = self.rk4(x0, self.t, tau)?;
                self.set_continuous(x_event);
                self.t += tau;
                self.cached = None;
                self.check_finite()?;
                self.apply_jump(kind)?;
                self.instantaneous_jumps()?;
                // Events localized exactly on a grid point (waveform edges,
                // typically) still owe that point's record, post-jump.
                let k_round = (self.t / self.cfg.dt).round();
                if (self.t - k_round * self.cfg.dt).abs() < 1e-12 * self.t.max(self.cfg.dt) {
                    self.grid_k = Some(k_round as u64);
                    self.record_if_due()?;
                } else {
                    self.grid_k = None;
                }
            }
        }
        Ok(())
    }

    fn set_continuous(&mut self, x: [f64; 3]) {
        self.state.h_iron = x[0];
        self.state.z = x[1];
        self.state.v_z = x[2];
    }

    /// One RK4 step of the active flow with the memory frozen.
    fn rk4(&self, x0: [f64; 3], t: f64, dt: f64) -> Result<[f64; 3]> {
        self.rk4_with_k1(x0, t, dt, None)
    }

    fn rk4_with_k1(
        &self,
        x0: [f64; 3],
        t: f64,
        dt: f64,
        k1_eval: Option<PointEval>,
    ) -> Result<[f64; 3]> {
        let mode = self.state.mode;
        let mag = &self.state.mag;
        let f = |x: [f64; 3], tt: f64| -> Result<[f64; 3]> {
            self.act.flow_x(mode, mag, x, self.waveform.value(tt))
        };
        let k1 = match k1_eval {
            Some(e) => flow_shape(mode, x0, &e, self.act.mech.mass),
            None => f(x0, t)?,
        };
        let k2 = f(stage(x0, k1, 0.5 * dt), t + 0.5 * dt)?;
        let k3 = f(stage(x0, k2, 0.5 * dt), t + 0.5 * dt)?;
        let k4 = f(stage(x0, k3, dt), t + dt)?;
        let mut out = x0;
        for j in 0..3 {
            out[j] = x0[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if mode.is_static() {
            out[1] = x0[1];
            out[2] = x0[2];
        }
        Ok(out)
    }

    fn eval_x(&self, x: [f64; 3], t: f64) -> Result<PointEval> {
        self.act
            .evaluate(x[0], x[1], x[2], &self.state.mag, self.waveform.value(t))
    }

    /// Guard values for the active mode; a guard fires when its value drops
    /// below zero.
    fn guards_x(&self, x: [f64; 3], t: f64) -> Result<Vec<(GuardKind, f64)>> {
        let e = self.eval_x(x, t)?;
        Ok(self.guards_from_eval(x, &e))
    }

    fn guards_from_eval(&self, x: [f64; 3], e: &PointEval) -> Vec<(GuardKind, f64)> {
        let mode = self.state.mode;
        let mag = &self.state.mag;
        let mut g = Vec::with_capacity(4);
        // Direction switch: the field-derivative numerator changes sign.
        let w = e.h_dot * e.mu; // numerator up to the positive denominator scale
        g.push((
            GuardKind::DirectionSwitch,
            match mode.direction() {
                Direction::Increasing => w,
                Direction::Decreasing => -w,
            },
        ));
        // Wipe-out: the field reaches the innermost stored extremum.
        let wipe = match mode.direction() {
            Direction::Increasing => mag.history().innermost_max().map(|a| a - x[0]),
            Direction::Decreasing => mag.history().innermost_min().map(|b| x[0] - b),
        };
        if let Some(val) = wipe {
            g.push((GuardKind::WipeOut, val));
        }
        if !self.cfg.pin_position {
            match mode.position() {
                PositionKind::Moving => {
                    g.push((GuardKind::Impact, x[1] - self.act.mech.z_min));
                    g.push((GuardKind::Impact, self.act.mech.z_max - x[1]));
                }
                // The gap can only close from the open stop and only open
                // from the closed stop.
                PositionKind::MaxGap => g.push((GuardKind::MotionStart, e.f_net)),
                PositionKind::MinGap => g.push((GuardKind::MotionStart, -e.f_net)),
            }
        }
        g
    }

    fn guard_value_x(&self, x: [f64; 3], t: f64, kind: GuardKind) -> Result<f64> {
        let all = self.guards_x(x, t)?;
        Ok(all
            .iter()
            .filter(|(k, _)| *k == kind)
            .map(|(_, v)| *v)
            .fold(f64::INFINITY, f64::min))
    }

    /// Bisection for the earliest time in (0, dt] where `kind` fires.
    fn localize(&self, x0: [f64; 3], t: f64, dt: f64, kind: GuardKind) -> Result<f64> {
        let mut lo = 0.0_f64;
        let mut hi = dt;
        while hi - lo > self.cfg.t_tol {
            let mid = 0.5 * (lo + hi);
            let x_mid = self.rk4(x0, t, mid)?;
            if self.guard_value_x(x_mid, t + mid, kind)? < 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }

    fn log_jump(&mut self, kind: JumpKind, from: Mode, pre: [f64; 3]) {
        self.events.push(JumpEvent {
            t: self.t,
            kind,
            q_from: from.index(),
            q_to: self.state.mode.index(),
            pre,
            post: self.state.continuous(),
        });
    }

    fn bump_jumps(&mut self) -> Result<()> {
        self.jumps += 1;
        if self.jumps > self.cfg.max_jumps {
            return Err(Error::Simulation {
                t: self.t,
                msg: format!("jump budget exceeded ({} jumps)", self.cfg.max_jumps),
            });
        }
        Ok(())
    }

    fn apply_jump(&mut self, kind: GuardKind) -> Result<()> {
        self.bump_jumps()?;
        self.cached = None;
        let from = self.state.mode;
        let pre = self.state.continuous();
        match kind {
            GuardKind::Impact => {
                let mech = &self.act.mech;
                let to_min = (self.state.z - mech.z_min).abs() < (self.state.z - mech.z_max).abs();
                self.state.z = if to_min { mech.z_min } else { mech.z_max };
                self.state.v_z = 0.0;
                self.state.mode = self.state.mode.with_position(if to_min {
                    PositionKind::MinGap
                } else {
                    PositionKind::MaxGap
                });
                self.log_jump(JumpKind::Impact, from, pre);
            }
            GuardKind::WipeOut => {
                let n = self
                    .act
                    .circuit
                    .gpm
                    .wipe_crossings(&mut self.state.mag, self.state.h_iron);
                if n == 0 {
                    // The guard fired at the threshold; erase the pair anyway.
                    self.act.circuit.gpm.wipe(&mut self.state.mag);
                }
                self.log_jump(JumpKind::WipeOut, from, pre);
            }
            GuardKind::DirectionSwitch => {
                // A reversal exactly on a wipe threshold closes that loop.
                self.act
                    .circuit
                    .gpm
                    .wipe_crossings(&mut self.state.mag, self.state.h_iron);
                self.act
                    .circuit
                    .gpm
                    .reverse(&mut self.state.mag, self.state.h_iron)?;
                self.state.mode = self.state.mode.with_direction(self.state.mag.direction());
                self.log_jump(JumpKind::DirectionSwitch, from, pre);
            }
            GuardKind::MotionStart => {
                self.state.mode = self.state.mode.with_position(PositionKind::Moving);
                self.log_jump(JumpKind::MotionStart, from, pre);
            }
        }
        Ok(())
    }

    /// Resolve guards that are already violated at the current instant —
    /// the initial state, after jumps, and across waveform discontinuities.
    fn instantaneous_jumps(&mut self) -> Result<()> {
        for _ in 0..16 {
            let g = self.guards_x(self.state.continuous(), self.t)?;
            let strict = self.strict_violation(&g);
            match strict {
                None => return Ok(()),
                Some(kind) => self.apply_jump(kind)?,
            }
        }
        Err(Error::Simulation {
            t: self.t,
            msg: "instantaneous jump resolution did not settle".into(),
        })
    }

    fn strict_violation(&self, guards: &[(GuardKind, f64)]) -> Option<GuardKind> {
        let mut best: Option<GuardKind> = None;
        for (kind, val) in guards {
            if *val < 0.0 {
                best = match best {
                    None => Some(*kind),
                    Some(b) if *kind < b => Some(*kind),
                    other => other,
                };
            }
        }
        best
    }

    fn check_finite(&self) -> Result<()> {
        let x = self.state.continuous();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Simulation {
                t: self.t,
                msg: format!("non-finite state {x:?}"),
            });
        }
        Ok(())
    }

    fn record_if_due(&mut self) -> Result<()> {
        let Some(k) = self.grid_k else { return Ok(()) };
        if k % self.cfg.record_every as u64 != 0 {
            return Ok(());
        }
        let e = match &self.cached {
            Some((_, e)) => *e,
            None => self.eval_x(self.state.continuous(), self.t)?,
        };
        self.records.push(TrajectoryRecord {
            t: self.t,
            mode: self.state.mode,
            h_iron: self.state.h_iron,
            z: self.state.z,
            v_z: self.state.v_z,
            i: e.i,
            phi: e.phi,
            f_net: e.f_net,
            i_ec: e.i_ec,
        });
        Ok(())
    }
}

fn stage(x0: [f64; 3], k: [f64; 3], dt: f64) -> [f64; 3] {
    [x0[0] + k[0] * dt, x0[1] + k[1] * dt, x0[2] + k[2] * dt]
}

fn flow_shape(mode: Mode, x: [f64; 3], e: &PointEval, mass: f64) -> [f64; 3] {
    if mode.is_static() {
        [e.h_dot, 0.0, 0.0]
    } else {
        [e.h_dot, x[2], e.f_net / mass]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hysteresis::{GpmModel, GpmParams, PreisachDistribution, RevParams, MU0};
    use crate::magnetics::{CoilParams, CoreGeometry, EddyParams, ReluctanceTable};

    /// Canonical valve: the identified coil/core/mechanics with the linear
    /// synthetic gap table.
    pub(crate) fn valve() -> Actuator {
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
        Actuator {
            circuit: MagneticCircuit {
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
            },
            mech: MechParams {
                mass: 1.6e-3,
                k_s: 55.0,
                z_s: 15e-3,
                damping: 0.0,
                z_min: 0.0,
                z_max: 0.9e-3,
            },
        }
    }

    #[test]
    fn net_force_spring_values() {
        let act = valve();
        let s = act.circuit.gpm.demagnetized_state(100).unwrap();
        // Open stop: spring preload −55·(0.0009 − 0.015) = +0.7755 N.
        let f = act.net_force(0.0, 0.9e-3, 0.0, &s).unwrap();
        assert!((f - 0.7755).abs() < 1e-3, "open-stop force {f}");
        // At the spring equilibrium gap the demagnetized force vanishes
        // (z_s is outside the travel, so probe the formula directly).
        let f_mag = act.circuit.magnetic_force(0.0, 0.45e-3, &s).unwrap();
        let f_eq = f_mag - act.mech.k_s * (0.45e-3 - act.mech.z_s);
        let f_op = act.net_force(0.0, 0.45e-3, 0.0, &s).unwrap();
        assert!((f_op - f_eq).abs() < 1e-12);
        // Damping is zero, so velocity does not enter.
        let f_v = act.net_force(0.0, 0.45e-3, 3.0, &s).unwrap();
        assert!((f_v - f_op).abs() < 1e-12);
    }

    #[test]
    fn flow_shapes_by_mode() {
        let act = valve();
        let mut st = act.initial_state(100).unwrap();
        // Static mode: armature pinned.
        let d = act.flow(&st, 18.0).unwrap();
        assert!(d[0] > 0.0);
        assert_eq!(d[1], 0.0);
        assert_eq!(d[2], 0.0);
        // Motion mode: gap rate is the velocity state.
        st.mode = Mode::MotionIncreasing;
        st.z = 0.5e-3;
        st.v_z = -0.2;
        let d = act.flow(&st, 18.0).unwrap();
        assert_eq!(d[1], -0.2);
    }

    #[test]
    fn waveform_sampling_and_breakpoints() {
        let w = VoltageWaveform::SampledZoh {
            times: vec![0.0, 1e-3, 2e-3],
            values: vec![0.0, 18.0, 0.0],
        };
        w.validate().unwrap();
        assert_eq!(w.value(0.5e-3), 0.0);
        assert_eq!(w.value(1e-3), 18.0);
        assert_eq!(w.value(1.5e-3), 18.0);
        assert_eq!(w.value(3e-3), 0.0);
        assert_eq!(w.next_breakpoint(0.0), Some(1e-3));
        assert_eq!(w.next_breakpoint(1e-3), Some(2e-3));
        assert_eq!(w.next_breakpoint(2e-3), None);

        let lin = VoltageWaveform::SampledLinear {
            times: vec![0.0, 1.0],
            values: vec![0.0, 10.0],
        };
        assert!((lin.value(0.25) - 2.5).abs() < 1e-12);

        let p = VoltageWaveform::Pulses {
            base: 0.0,
            pulses: vec![Pulse {
                t_on: 1e-3,
                t_off: 2e-3,
                level: 20.0,
            }],
        };
        p.validate().unwrap();
        assert_eq!(p.value(0.0), 0.0);
        assert_eq!(p.value(1.5e-3), 20.0);
        assert_eq!(p.value(2e-3), 0.0);
        assert_eq!(p.next_breakpoint(1e-3), Some(2e-3));
    }

    #[test]
    fn zero_input_stays_at_rest() {
        let act = valve();
        let init = act.initial_state(100).unwrap();
        let cfg = SimConfig {
            t_end: 5e-3,
            ..SimConfig::default()
        };
        let traj = act
            .simulate(init, &VoltageWaveform::constant(0.0), &cfg)
            .unwrap();
        assert!(traj.events.is_empty(), "events: {:?}", traj.events);
        for r in &traj.records {
            assert_eq!(r.mode, Mode::MaxGapIncreasing);
            assert_eq!(r.z, 0.9e-3);
            assert_eq!(r.v_z, 0.0);
            // The discretized demagnetized state self-corrects by a tiny
            // drift to the true zero-flux equilibrium.
            assert!(r.h_iron.abs() < 5.0, "drift {}", r.h_iron);
            assert!(r.phi.abs() < 2e-8, "residual flux {}", r.phi);
            assert!(r.i.abs() < 2e-3, "residual current {}", r.i);
        }
    }

    #[test]
    fn single_pulse_closes_and_releases() {
        let act = valve();
        let init = act.initial_state(100).unwrap();
        let wave = VoltageWaveform::Pulses {
            base: 0.0,
            pulses: vec![Pulse {
                t_on: 1e-3,
                t_off: 25e-3,
                level: 22.0,
            }],
        };
        let cfg = SimConfig {
            t_end: 50e-3,
            ..SimConfig::default()
        };
        let traj = act.simulate(init, &wave, &cfg).unwrap();
        // Mode path: closing 1→2→3, release 3→6→5→4.
        let path: Vec<(u8, u8)> = traj.events.iter().map(|e| (e.q_from, e.q_to)).collect();
        assert!(path.contains(&(1, 2)), "path {path:?}");
        assert!(path.contains(&(2, 3)), "path {path:?}");
        assert!(path.contains(&(3, 6)), "path {path:?}");
        assert!(path.contains(&(6, 5)), "path {path:?}");
        assert!(path.contains(&(5, 4)), "path {path:?}");
        // Valve closed while energized, reopened at the end.
        let closed = traj
            .records
            .iter()
            .find(|r| r.t > 20e-3 && r.t < 25e-3)
            .unwrap();
        assert_eq!(closed.z, 0.0);
        let last = traj.records.last().unwrap();
        assert_eq!(last.z, 0.9e-3);
        // Static modes carry zero velocity exactly.
        for r in &traj.records {
            if r.mode.is_static() {
                assert_eq!(r.v_z, 0.0);
            }
        }
    }

    #[test]
    fn pinned_simulation_never_moves() {
        let act = valve();
        let mag = act.circuit.gpm.demagnetized_state(100).unwrap();
        let init = act.state_at(0.0, 0.0, 0.0, mag).unwrap();
        assert_eq!(init.mode, Mode::MinGapIncreasing);
        let wave = VoltageWaveform::Pulses {
            base: 0.0,
            pulses: vec![Pulse {
                t_on: 0.5e-3,
                t_off: 6e-3,
                level: 10.0,
            }],
        };
        let cfg = SimConfig {
            t_end: 12e-3,
            pin_position: true,
            ..SimConfig::default()
        };
        let traj = act.simulate(init, &wave, &cfg).unwrap();
        for r in &traj.records {
            assert_eq!(r.z, 0.0);
            assert_eq!(r.v_z, 0.0);
            assert!(matches!(r.mode, Mode::MinGapIncreasing | Mode::MinGapDecreasing));
        }
        // The voltage cutoff flips the field direction: modes 3 and 6 only.
        assert!(traj.events.iter().any(|e| e.kind == JumpKind::DirectionSwitch));
        assert!(traj
            .events
            .iter()
            .all(|e| matches!(e.kind, JumpKind::DirectionSwitch | JumpKind::WipeOut)));
    }

    #[test]
    fn determinism_bitwise() {
        let act = valve();
        let wave = VoltageWaveform::Pulses {
            base: 0.0,
            pulses: vec![Pulse {
                t_on: 0.2e-3,
                t_off: 6e-3,
                level: 20.0,
            }],
        };
        let cfg = SimConfig {
            t_end: 10e-3,
            ..SimConfig::default()
        };
        let t1 = act
            .simulate(act.initial_state(100).unwrap(), &wave, &cfg)
            .unwrap();
        let t2 = act
            .simulate(act.initial_state(100).unwrap(), &wave, &cfg)
            .unwrap();
        assert_eq!(t1.records.len(), t2.records.len());
        for (a, b) in t1.records.iter().zip(t2.records.iter()) {
            assert_eq!(a.t.to_bits(), b.t.to_bits());
            assert_eq!(a.h_iron.to_bits(), b.h_iron.to_bits());
            assert_eq!(a.z.to_bits(), b.z.to_bits());
            assert_eq!(a.i.to_bits(), b.i.to_bits());
        }
        assert_eq!(t1.events.len(), t2.events.len());
    }

    #[test]
    fn mode_helpers() {
        assert_eq!(Mode::from_index(3).unwrap(), Mode::MinGapIncreasing);
        assert!(Mode::from_index(7).is_err());
        assert_eq!(Mode::MotionIncreasing.with_direction(Direction::Decreasing), Mode::MotionDecreasing);
        assert_eq!(Mode::MaxGapDecreasing.direction(), Direction::Decreasing);
        assert!(Mode::MinGapIncreasing.is_static());
        assert!(!Mode::MotionDecreasing.is_static());
    }
}
