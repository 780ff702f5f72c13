//! Simulation and identification toolkit for single-coil short-stroke
//! reluctance actuators.
//!
//! The model couples a generalized Preisach description of the core material
//! (saturation plus history-dependent hysteresis) with a lumped magnetic
//! circuit — tabulated air-gap reluctance, a lumped eddy-current loop — and
//! spring–mass armature mechanics. The coupled system is a six-mode hybrid
//! automaton integrated with event localization. A three-stage least-squares
//! procedure identifies the material and eddy-current parameters from
//! measured current/flux records.

pub mod cli;
pub mod config;
pub mod error;
pub mod interp;
pub mod io;
pub mod magnetics;
pub mod hybrid;
pub mod identify;
pub mod hysteresis;
pub mod quad;

pub use error::{Error, Result};
