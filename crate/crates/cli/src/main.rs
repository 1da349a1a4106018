//! `psmgc`: batch front end for trajectory generation, simulated data
//! collection, identification, gravity queries and drift tests.
//!
//! Exit codes: 0 success, 2 input or configuration error, 3 numerical failure.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "psmgc", version, about = "Gravity compensation pipeline for the dVRK-Si PSM")]
pub struct Cli {
    /// Seed for every random draw of the command.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Model config JSON; the built-in example PSM when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Gravity,
    Full,
}

impl From<Mode> for psmgc::model::InertialMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Gravity => psmgc::model::InertialMode::Gravity,
            Mode::Full => psmgc::model::InertialMode::Full,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize a Fourier excitation trajectory.
    GenTraj(GenTrajArgs),
    /// Play a trajectory through inverse dynamics to produce a data file.
    Simulate(SimulateArgs),
    /// Identify physically consistent parameters from a data file.
    Identify(IdentifyArgs),
    /// Print the gravity efforts G(q).
    Gravity(GravityArgs),
    /// Run the PD / open-loop hold drift test.
    DriftTest(DriftArgs),
}

#[derive(Debug, Args)]
pub struct GenTrajArgs {
    /// Joint limits JSON (SI units); placeholder limits when omitted.
    #[arg(long)]
    pub limits: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Mode::Gravity)]
    pub mode: Mode,
    #[arg(long, default_value_t = 5)]
    pub harmonics: usize,
    /// Period of the fundamental (s).
    #[arg(long, default_value_t = 10.0)]
    pub period: f64,
    /// Regressor samples per evaluation.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = 2000)]
    pub budget: usize,
    #[arg(long, default_value_t = 4)]
    pub starts: usize,
    /// Sampling rate of the written trajectory (Hz).
    #[arg(long, default_value_t = 100.0)]
    pub rate: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Ground-truth parameter JSON.
    #[arg(long)]
    pub params: PathBuf,
    /// Trajectory CSV from gen-traj.
    #[arg(long)]
    pub trajectory: PathBuf,
    /// Relative Gaussian torque noise: τ·(1 + σ·n).
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Leave out the exact qd/qdd columns.
    #[arg(long)]
    pub no_derivatives: bool,
}

#[derive(Debug, Args)]
pub struct IdentifyArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Gravity)]
    pub mode: Mode,
    /// Low-pass cutoff (Hz). Defaults to none with provided derivatives, 10 Hz otherwise.
    #[arg(long)]
    pub cutoff: Option<f64>,
    /// Differentiate positions even when the file has derivative columns.
    #[arg(long)]
    pub estimate_derivatives: bool,
    #[arg(long, default_value_t = psmgc::identification::DEFAULT_M_MIN)]
    pub m_min: f64,
    /// Tikhonov weight on the unidentifiable part, relative to the smallest
    /// identifiable singular value squared.
    #[arg(long, default_value_t = psmgc::identification::DEFAULT_REGULARIZATION)]
    pub regularization: f64,
    /// Iteration cap of the constrained solver.
    #[arg(long, default_value_t = psmgc::identification::QpSettings::default().max_iter)]
    pub max_iter: usize,
}

#[derive(Debug, Args)]
pub struct GravityArgs {
    #[arg(long)]
    pub params: PathBuf,
    /// Joint positions q1..q7 (rad, joint 3 in m).
    #[arg(num_args = 7, allow_negative_numbers = true, required = true)]
    pub q: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct DriftArgs {
    /// Plant parameter JSON.
    #[arg(long)]
    pub plant: PathBuf,
    /// Identified parameter JSON used for compensation.
    #[arg(long)]
    pub ident: PathBuf,
    /// Joint-target CSV `q1..q7`; seeded random targets when omitted.
    #[arg(long)]
    pub poses: Option<PathBuf>,
    /// Number of random targets.
    #[arg(long, default_value_t = 5)]
    pub n_poses: usize,
    /// Limits JSON for random targets.
    #[arg(long)]
    pub limits: Option<PathBuf>,
    /// Drift-test config JSON (simulation settings, PD gains, settling).
    #[arg(long)]
    pub sim: Option<PathBuf>,
}

/// Failure classes with their exit codes.
#[derive(Debug)]
pub enum Failure {
    Input(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let msg = match &f {
                Failure::Input(m) => format!("input error: {m}"),
                Failure::Numerical(m) => format!("numerical failure: {m}"),
            };
            if cli.json {
                println!("{}", serde_json::json!({ "error": msg, "exit_code": f.code() }));
            }
            eprintln!("psmgc: {msg}");
            ExitCode::from(f.code())
        }
    }
}
