//! `delayfront`: command-line driver for the wavefront library.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::output::{Exit, Failure};

#[derive(Parser, Debug)]
#[command(name = "delayfront", version, about = "Bistable wavefronts of delayed reaction-diffusion equations")]
struct Cli {
    /// Directory for outputs without an explicit path [env: DELAYFRONT_OUT, default: .]
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    /// Worker threads for parallel sweeps (1 runs sequentially)
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Real and complex roots of z^2 - c z + a + b exp(-z h) as JSON
    Roots(RootsArgs),
    /// Boundary clin(tau) of the monotonicity domain
    Domain(DomainArgs),
    /// Exact speeds and profiles of the piecewise-linear model
    Toy(ToyArgs),
    /// Solve for one wavefront and verify it
    Front(FrontArgs),
    /// Follow the wave speed as the delay grows
    Sweep(SweepArgs),
    /// Integrate the delayed reaction-diffusion equation from a step
    Simulate(SimulateArgs),
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
pub struct RootsArgs {
    #[arg(long)]
    pub a: f64,
    #[arg(long)]
    pub b: f64,
    #[arg(long)]
    pub c: f64,
    #[arg(long)]
    pub h: f64,
    /// Counting rectangle `re_min,re_max,im_max`
    #[arg(long, allow_hyphen_values = true, value_name = "RE_MIN,RE_MAX,IM_MAX")]
    pub window: Option<String>,
    /// Also write the report to this file (with a manifest)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
pub struct DomainArgs {
    #[arg(long)]
    pub a: f64,
    #[arg(long)]
    pub b: f64,
    #[arg(long)]
    pub tau_max: f64,
    #[arg(long, default_value_t = 200)]
    pub points: usize,
    /// Curve CSV [default: <out-dir>/domain.csv]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write a gnuplot script next to the CSV
    #[arg(long)]
    pub gnuplot: bool,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
pub struct ToyArgs {
    #[arg(long)]
    pub kappa: f64,
    #[arg(long)]
    pub p: f64,
    #[arg(long)]
    pub q: f64,
    /// Delay grid `lo:hi:step`
    #[arg(long, conflicts_with = "tau", required_unless_present = "tau")]
    pub tau_grid: Option<String>,
    /// A single delay
    #[arg(long)]
    pub tau: Option<f64>,
    /// Curve CSV [default: <out-dir>/toy_curve.csv]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the profile at the first delay of the grid to this CSV
    #[arg(long)]
    pub profile_out: Option<PathBuf>,
    /// Profile sample points `lo:hi:step`
    #[arg(long, default_value = "-20:40:0.05")]
    pub profile_grid: String,
    #[arg(long)]
    pub gnuplot: bool,
}

/// Solver flags shared by `front` and `sweep`; config keys `l`, `n`, `tol`,
/// `max_newton` supply defaults.
#[derive(Args, Debug, Clone)]
pub struct SolverArgs {
    /// Half-width of the computational interval [default: 40]
    #[arg(long)]
    pub l: Option<f64>,
    /// Grid intervals [default: 2000]
    #[arg(long)]
    pub n: Option<usize>,
    /// Residual tolerance [default: 1e-8]
    #[arg(long)]
    pub tol: Option<f64>,
    /// Newton iteration cap [default: 60]
    #[arg(long)]
    pub max_newton: Option<usize>,
}

#[derive(Args, Debug)]
pub struct FrontArgs {
    /// Model configuration file
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub tau: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Profile CSV [default: <out-dir>/front.csv]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report JSON [default: next to the profile, `<stem>.report.json`]
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub tau_max: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value_t = 0.05)]
    pub step: f64,
    #[arg(long, default_value_t = 0.1)]
    pub step_max: f64,
    /// How far to continue past the domain boundary
    #[arg(long, default_value_t = 0.5)]
    pub overshoot: f64,
    /// Curve CSV [default: <out-dir>/sweep.csv]
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub gnuplot: bool,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub tau: f64,
    #[arg(long, default_value_t = 200.0)]
    pub t_final: f64,
    #[arg(long, default_value_t = 400.0)]
    pub x_max: f64,
    #[arg(long, default_value_t = 4001)]
    pub nx: usize,
    /// Time step [default: largest stable step]
    #[arg(long)]
    pub dt: Option<f64>,
    /// Store a snapshot every this many time units
    #[arg(long)]
    pub snapshot_interval: Option<f64>,
    /// File name prefix inside the output directory
    #[arg(long, default_value = "sim")]
    pub prefix: String,
    #[arg(long)]
    pub gnuplot: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out_dir = cli.out_dir.clone().unwrap_or_else(output::default_out_dir);
    let result = setup_pool(cli.jobs).and_then(|exec| {
        let ctx = commands::Context { out_dir, exec };
        match cli.command {
            Command::Roots(a) => commands::roots(&ctx, a),
            Command::Domain(a) => commands::domain(&ctx, a),
            Command::Toy(a) => commands::toy(&ctx, a),
            Command::Front(a) => commands::front(&ctx, a),
            Command::Sweep(a) => commands::sweep(&ctx, a),
            Command::Simulate(a) => commands::simulate(&ctx, a),
        }
    });
    match result {
        Ok(Exit::Ok) => ExitCode::SUCCESS,
        Ok(code) => ExitCode::from(code as u8),
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit as u8)
        }
    }
}

fn setup_pool(jobs: Option<usize>) -> Result<delayfront::Exec, Failure> {
    use delayfront::Exec;
    match jobs {
        Some(0) => Err(Failure::usage("--jobs must be at least 1")),
        Some(1) => Ok(Exec::Sequential),
        #[cfg(feature = "parallel")]
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Failure::usage(format!("--jobs: {e}")))?;
            Ok(Exec::Parallel)
        }
        #[cfg(not(feature = "parallel"))]
        Some(_) => Ok(Exec::Sequential),
        None => Ok(Exec::default()),
    }
}
