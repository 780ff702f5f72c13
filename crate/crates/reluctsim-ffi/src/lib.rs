//! C ABI for the reluctsim toolkit.
//!
//! The surface is a small set of opaque handles with status-code returns so
//! the simulator can be driven from C, MATLAB or Python. Every function is
//! documented in `include/reluctsim.h`, which is maintained by hand and must
//! stay in sync with the `#[no_mangle]` items here (the `abi_surface` test
//! cross-checks the symbol list).
//!
//! Conventions: functions return [`RsimStatus`]; `RSIM_OK` is zero. On any
//! failure the thread-local message retrieved by [`rsim_last_error`] is
//! updated. Out-parameters are written only on success. Handles are freed
//! with their matching `_free` function; passing null is a no-op there and
//! an error everywhere else.

use libc::{c_char, size_t};
use reluctsim::config::Config;
use reluctsim::hybrid::{Actuator, SimConfig, Trajectory, VoltageWaveform};
use reluctsim::hysteresis::Replay;
use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::path::Path;

/// Status codes mirrored in the header.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RsimStatus {
    Ok = 0,
    InvalidArgument = 1,
    Io = 2,
    Simulation = 3,
    NullPointer = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| {
        *e.borrow_mut() = CString::new(text).unwrap_or_default();
    });
}

/// Message for the most recent failure on this thread. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn rsim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Opaque actuator model: configuration resolved into the full parameter set.
pub struct RsimModel {
    actuator: Actuator,
    sim: SimConfig,
    demag_pairs: usize,
}

/// Opaque simulation result.
pub struct RsimTrajectory {
    traj: Trajectory,
}

/// Trajectory column selector; values mirrored in the header.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RsimColumn {
    Time = 0,
    Mode = 1,
    FieldIntensity = 2,
    Gap = 3,
    GapRate = 4,
    Current = 5,
    Flux = 6,
    Force = 7,
    EddyCurrent = 8,
}

fn build_model(cfg: &Config, base_dir: &Path) -> Result<RsimModel, reluctsim::Error> {
    Ok(RsimModel {
        actuator: cfg.build_actuator(base_dir)?,
        sim: cfg.sim_config(),
        demag_pairs: cfg.demag.pairs,
    })
}

unsafe fn read_c_str<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, RsimStatus> {
    if ptr.is_null() {
        set_error(format!("{what} is null"));
        return Err(RsimStatus::NullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        RsimStatus::InvalidArgument
    })
}

/// Build a model from a configuration file on disk.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` must be a valid
/// pointer to receive the handle.
#[no_mangle]
pub unsafe extern "C" fn rsim_model_from_config_file(
    path: *const c_char,
    out: *mut *mut RsimModel,
) -> RsimStatus {
    if out.is_null() {
        set_error("out pointer is null");
        return RsimStatus::NullPointer;
    }
    let path = match read_c_str(path, "config path") {
        Ok(s) => s,
        Err(st) => return st,
    };
    let p = Path::new(path);
    let cfg = match Config::load(p) {
        Ok(c) => c,
        Err(e) => {
            set_error(e.to_string());
            return RsimStatus::Io;
        }
    };
    let base = p.parent().unwrap_or_else(|| Path::new("."));
    match build_model(&cfg, base) {
        Ok(m) => {
            *out = Box::into_raw(Box::new(m));
            RsimStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            RsimStatus::InvalidArgument
        }
    }
}

/// Build a model from a configuration JSON string.
///
/// # Safety
/// `json` must be a valid NUL-terminated string; `out` must be a valid
/// pointer to receive the handle. Relative reluctance-table paths resolve
/// against the working directory.
#[no_mangle]
pub unsafe extern "C" fn rsim_model_from_config_json(
    json: *const c_char,
    out: *mut *mut RsimModel,
) -> RsimStatus {
    if out.is_null() {
        set_error("out pointer is null");
        return RsimStatus::NullPointer;
    }
    let text = match read_c_str(json, "config JSON") {
        Ok(s) => s,
        Err(st) => return st,
    };
    let cfg: Config = match serde_json::from_str(text) {
        Ok(c) => c,
        Err(e) => {
            set_error(e.to_string());
            return RsimStatus::InvalidArgument;
        }
    };
    match build_model(&cfg, Path::new(".")) {
        Ok(m) => {
            *out = Box::into_raw(Box::new(m));
            RsimStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            RsimStatus::InvalidArgument
        }
    }
}

/// Free a model handle; null is a no-op.
///
/// # Safety
/// `model` must be a handle returned by a constructor, or null.
#[no_mangle]
pub unsafe extern "C" fn rsim_model_free(model: *mut RsimModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Simulate a zero-order-hold voltage waveform from the demagnetized rest
/// state over `t_end` seconds.
///
/// # Safety
/// `model` must be a live handle; `times`/`volts` must point to `n_samples`
/// readable doubles; `out` must be valid to receive the handle.
#[no_mangle]
pub unsafe extern "C" fn rsim_simulate(
    model: *const RsimModel,
    times: *const f64,
    volts: *const f64,
    n_samples: size_t,
    t_end: f64,
    out: *mut *mut RsimTrajectory,
) -> RsimStatus {
    if model.is_null() || out.is_null() || times.is_null() || volts.is_null() {
        set_error("null pointer argument");
        return RsimStatus::NullPointer;
    }
    if n_samples == 0 {
        set_error("waveform needs at least one sample");
        return RsimStatus::InvalidArgument;
    }
    let m = &*model;
    let wave = VoltageWaveform::SampledZoh {
        times: std::slice::from_raw_parts(times, n_samples).to_vec(),
        values: std::slice::from_raw_parts(volts, n_samples).to_vec(),
    };
    if let Err(e) = wave.validate() {
        set_error(e.to_string());
        return RsimStatus::InvalidArgument;
    }
    let mut sim = m.sim;
    sim.t_end = t_end;
    let init = match m.actuator.initial_state(m.demag_pairs) {
        Ok(s) => s,
        Err(e) => {
            set_error(e.to_string());
            return RsimStatus::InvalidArgument;
        }
    };
    match m.actuator.simulate(init, &wave, &sim) {
        Ok(traj) => {
            *out = Box::into_raw(Box::new(RsimTrajectory { traj }));
            RsimStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            RsimStatus::Simulation
        }
    }
}

/// Free a trajectory handle; null is a no-op.
///
/// # Safety
/// `traj` must be a handle returned by `rsim_simulate`, or null.
#[no_mangle]
pub unsafe extern "C" fn rsim_trajectory_free(traj: *mut RsimTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Number of sampled records in a trajectory.
///
/// # Safety
/// `traj` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn rsim_trajectory_len(traj: *const RsimTrajectory) -> size_t {
    if traj.is_null() {
        return 0;
    }
    (*traj).traj.records.len()
}

/// Number of discrete jumps in a trajectory's event log.
///
/// # Safety
/// `traj` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn rsim_trajectory_event_count(traj: *const RsimTrajectory) -> size_t {
    if traj.is_null() {
        return 0;
    }
    (*traj).traj.events.len()
}

/// Copy one trajectory column into a caller buffer of capacity `cap`
/// (must be at least `rsim_trajectory_len`). The mode column is the discrete
/// mode index 1..6 as doubles.
///
/// # Safety
/// `traj` must be a live handle; `out` must point to `cap` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn rsim_trajectory_column(
    traj: *const RsimTrajectory,
    column: RsimColumn,
    out: *mut f64,
    cap: size_t,
) -> RsimStatus {
    if traj.is_null() || out.is_null() {
        set_error("null pointer argument");
        return RsimStatus::NullPointer;
    }
    let records = &(*traj).traj.records;
    if cap < records.len() {
        set_error(format!(
            "buffer capacity {cap} below record count {}",
            records.len()
        ));
        return RsimStatus::InvalidArgument;
    }
    let dst = std::slice::from_raw_parts_mut(out, records.len());
    for (d, r) in dst.iter_mut().zip(records.iter()) {
        *d = match column {
            RsimColumn::Time => r.t,
            RsimColumn::Mode => f64::from(r.mode.index()),
            RsimColumn::FieldIntensity => r.h_iron,
            RsimColumn::Gap => r.z,
            RsimColumn::GapRate => r.v_z,
            RsimColumn::Current => r.i,
            RsimColumn::Flux => r.phi,
            RsimColumn::Force => r.f_net,
            RsimColumn::EddyCurrent => r.i_ec,
        };
    }
    RsimStatus::Ok
}

/// Replay a field-intensity sequence (A/m) through the hysteresis model from
/// the demagnetized state, writing the flux density (T) per sample.
///
/// # Safety
/// `model` must be a live handle; `h` must point to `n` readable and `b_out`
/// to `n` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn rsim_gpm_replay(
    model: *const RsimModel,
    h: *const f64,
    b_out: *mut f64,
    n: size_t,
) -> RsimStatus {
    if model.is_null() || h.is_null() || b_out.is_null() {
        set_error("null pointer argument");
        return RsimStatus::NullPointer;
    }
    let m = &*model;
    let gpm = &m.actuator.circuit.gpm;
    let mut replay = match gpm
        .demagnetized_state(m.demag_pairs)
        .map(|s| Replay::new(gpm, s, 0.0))
    {
        Ok(r) => r,
        Err(e) => {
            set_error(e.to_string());
            return RsimStatus::InvalidArgument;
        }
    };
    let h_in = std::slice::from_raw_parts(h, n);
    let b = std::slice::from_raw_parts_mut(b_out, n);
    for (hk, bk) in h_in.iter().zip(b.iter_mut()) {
        match replay.feed(*hk) {
            Ok(v) => *bk = v,
            Err(e) => {
                set_error(e.to_string());
                return RsimStatus::InvalidArgument;
            }
        }
    }
    RsimStatus::Ok
}
