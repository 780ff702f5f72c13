//! Command-line front end for the reluctance-actuator toolkit.

use clap::{Parser, Subcommand};
use reluctsim::cli;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "reluctsim",
    about = "Hybrid simulation and parameter identification for short-stroke reluctance actuators",
    version
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a voltage waveform through the configured actuator.
    Simulate {
        /// Configuration JSON.
        #[arg(long)]
        config: PathBuf,
        /// Input waveform CSV (t_s,v_V, zero-order hold).
        #[arg(long)]
        waveform: PathBuf,
        /// Output file prefix.
        #[arg(long)]
        out: String,
        /// Integration step override, seconds.
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Run one identification stage over experiment records.
    Identify {
        /// Stage: rev, gpm or kec (run in that order).
        stage: String,
        /// Configuration JSON.
        #[arg(long)]
        config: PathBuf,
        /// Experiment CSV path or single-`*` pattern (sidecar JSON required).
        #[arg(long)]
        data: String,
        /// Fit-result output path.
        #[arg(long)]
        out: PathBuf,
        /// Optimizer seed (restart jitter).
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate a decaying-sine degaussing waveform.
    Degauss {
        /// Initial amplitude (signal units).
        #[arg(long)]
        amplitude: f64,
        /// Per-cycle amplitude ratio in (0, 1).
        #[arg(long, default_value_t = 0.95)]
        decay: f64,
        /// Number of cycles.
        #[arg(long, default_value_t = 200)]
        cycles: usize,
        /// Samples per cycle.
        #[arg(long, default_value_t = 64)]
        rate: usize,
        /// Fundamental frequency, Hz.
        #[arg(long, default_value_t = 10.0)]
        freq: f64,
        /// Output waveform CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the fast invariant suite and print a pass/fail table.
    Selfcheck {
        /// Configuration JSON (defaults to the built-in valve example).
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn main() {
    let args = Args::parse();
    let code = match args.command {
        Command::Simulate {
            config,
            waveform,
            out,
            dt,
        } => cli::cmd_simulate(&config, &waveform, &out, dt),
        Command::Identify {
            stage,
            config,
            data,
            out,
            seed,
        } => match cli::IdentifyStage::parse(&stage) {
            Some(s) => cli::cmd_identify(s, &config, &data, &out, seed),
            None => {
                eprintln!("error: unknown stage '{stage}' (expected rev, gpm or kec)");
                cli::EXIT_INPUT
            }
        },
        Command::Degauss {
            amplitude,
            decay,
            cycles,
            rate,
            freq,
            out,
        } => cli::cmd_degauss(amplitude, decay, cycles, rate, freq, &out),
        Command::Selfcheck { config } => cli::cmd_selfcheck(config.as_deref()),
    };
    std::process::exit(code);
}
