use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ermakov::SolverKind;

#[derive(Debug, Parser)]
#[command(
    name = "ermakov",
    version,
    about = "Ermakov–Pinney solvers and invariant checks for a time-dependent-mass Stark oscillator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the modified Ermakov–Pinney equation and write sigma.csv.
    SolveEp(ScenarioArgs),
    /// Build the invariant coefficients by both routes and write coeffs.csv.
    Coeffs(ScenarioArgs),
    /// Evolve a wave packet and check that ⟨I(t)⟩ stays constant.
    Verify(VerifyArgs),
    /// Write the exponential mass curves m(t) for a family of frequencies.
    Figure1(Figure1Args),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    Rk4,
    Rk45,
}

impl From<SolverArg> for SolverKind {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Rk4 => SolverKind::Rk4Fixed,
            SolverArg::Rk45 => SolverKind::Rk45Adaptive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    /// Replace the mass and initial data by the closed-form exponential
    /// solution implied by ω and the monomial τ0.
    Exponential,
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// Scenario JSON file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Override the solver named in the config.
    #[arg(long, value_enum)]
    pub solver: Option<SolverArg>,
    #[arg(long, value_enum)]
    pub scenario: Option<ScenarioArg>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Scale δ in the measured invariant by (1 + this), leaving H untouched.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub perturb_delta: f64,
    /// Times at which to keep |ψ|² snapshots (comma-separated); overrides the config.
    #[arg(long, value_delimiter = ',')]
    pub snapshots: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args)]
pub struct Figure1Args {
    #[arg(long, default_value_t = 0.01)]
    pub tau0: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.3, 0.5, 0.7, 0.9])]
    pub omegas: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub m0: f64,
    #[arg(long, default_value_t = 10.0)]
    pub t_max: f64,
    #[arg(long, default_value_t = 1001)]
    pub samples: usize,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}
