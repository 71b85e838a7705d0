//! `qrc`: simulation, fitting and calibration front end.

// `!(x > 0.0)` is how validation rejects NaN alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qrc_core::calibration::MonteCarloOptions;
use qrc_core::homodyne::ProportionalityOptions;

use crate::commands::{FitCavityArgs, FitSweepArgs, SimOutput};
use crate::error::{CliError, ErrorReport};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  usage or schema error (bad flags, unknown config keys, malformed files)
  3  file I/O error
  4  domain error (invalid or unphysical values)
  5  fit failure (non-convergence, rank deficiency, insufficient phase range)
  6  mismatch against published values (replicate --strict)
Errors are written to stderr as JSON: {\"error\": {\"kind\", \"message\", \"exit_code\"}}.";

#[derive(Parser)]
#[command(name = "qrc", version, about = "Squeezed-light photodiode efficiency calibration", after_help = EXIT_CODES)]
struct Cli {
    /// Run every loop on one thread (results are identical either way).
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic traces from known ground truth.
    #[command(subcommand)]
    Simulate(Simulate),
    /// Fit a measured trace.
    #[command(subcommand)]
    Fit(Fit),
    /// Combine component efficiencies into detection and quantum efficiency.
    Calibrate {
        /// JSON input document.
        inputs: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measurement gates.
    #[command(subcommand)]
    Check(Check),
    /// Tabulate |S_P| = eta_DE^2 |4 - 8 eta| n as CSV.
    Precision {
        /// start:stop:step
        #[arg(long)]
        eta_range: String,
        /// Mean photon number of the pure state.
        #[arg(long)]
        n: f64,
        #[arg(long, default_value_t = 1.0)]
        eta_de: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute the reference calibration and diff against published values.
    #[command(subcommand)]
    Replicate(Replicate),
}

#[derive(Args)]
struct SimArgs {
    /// TOML config; unit-suffixed keys, unknown keys rejected.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
    /// JSON report path (stdout by default).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Simulate {
    /// Reflected power of a scanned resonator.
    Cavity(SimArgs),
    /// Raw noise power of a phase-swept homodyne measurement.
    Homodyne {
        #[command(flatten)]
        sim: SimArgs,
        /// Also write the vacuum/dark noise budget as JSON.
        #[arg(long)]
        budget_out: Option<PathBuf>,
    },
    /// Noise power versus LO power.
    Proportionality(SimArgs),
}

#[derive(Args)]
struct Window {
    /// Fit only samples at or after this time.
    #[arg(long)]
    t_start_s: Option<f64>,
    /// Fit only samples at or before this time.
    #[arg(long)]
    t_end_s: Option<f64>,
}

#[derive(Subcommand)]
enum Fit {
    /// Reflection scan: mirror reflectivity, round-trip loss, escape efficiency.
    Cavity {
        trace: PathBuf,
        #[command(flatten)]
        window: Window,
        /// Mode-matching efficiency used to deepen the observed dips.
        #[arg(long, conflicts_with = "peaks")]
        mode_matching: Option<f64>,
        /// Transmission peak heights (JSON) from which mode matching is derived.
        #[arg(long)]
        peaks: Option<PathBuf>,
        /// Reflectivity seeding auto-initialization.
        #[arg(long, default_value_t = qrc_core::cavity::DESIGN_R_SQ)]
        design_r_sq: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Swept homodyne trace(s): variances, efficiency, pure state.
    Sweep {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        /// Vacuum and dark noise levels (JSON).
        #[arg(long)]
        budget: PathBuf,
        #[command(flatten)]
        window: Window,
        /// Moving-average window in samples (1 = off).
        #[arg(long, default_value_t = 1)]
        smooth: usize,
        /// Fit residuals in dB instead of linear units.
        #[arg(long)]
        db: bool,
        /// Uniform weights instead of fractional ones.
        #[arg(long)]
        uniform: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum Check {
    /// Linearity of vacuum noise in LO power (CSV: lo_power_mw,noise_power).
    Proportionality {
        points: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        max_nonlinearity: f64,
        /// Dark noise subtracted before fitting.
        #[arg(long, default_value_t = 0.0)]
        dark_noise: f64,
        #[arg(long)]
        intercept_allowance: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum Replicate {
    /// Built-in reference scenario.
    Reference {
        /// Exit with code 6 if any quantity is outside tolerance.
        #[arg(long)]
        strict: bool,
        #[arg(long, default_value_t = 1_000_000)]
        draws: usize,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let exec = config::execution(cli.sequential);
    match cli.command {
        Command::Simulate(s) => match s {
            Simulate::Cavity(a) => commands::simulate_cavity(
                a.config.as_deref(),
                a.seed,
                SimOutput {
                    out: &a.out,
                    report: a.report.as_deref(),
                },
                exec,
            ),
            Simulate::Homodyne { sim: a, budget_out } => commands::simulate_homodyne(
                a.config.as_deref(),
                a.seed,
                SimOutput {
                    out: &a.out,
                    report: a.report.as_deref(),
                },
                budget_out.as_deref(),
                exec,
            ),
            Simulate::Proportionality(a) => commands::simulate_points(
                a.config.as_deref(),
                a.seed,
                SimOutput {
                    out: &a.out,
                    report: a.report.as_deref(),
                },
            ),
        },
        Command::Fit(Fit::Cavity {
            trace,
            window,
            mode_matching,
            peaks,
            design_r_sq,
            out,
        }) => commands::fit_cavity(
            FitCavityArgs {
                trace: &trace,
                window: (window.t_start_s, window.t_end_s),
                mode_matching,
                peaks: peaks.as_deref(),
                design_r_sq,
                out: out.as_deref(),
            },
            exec,
        ),
        Command::Fit(Fit::Sweep {
            traces,
            budget,
            window,
            smooth,
            db,
            uniform,
            out,
        }) => commands::fit_sweeps(
            FitSweepArgs {
                traces: &traces,
                budget: &budget,
                window: (window.t_start_s, window.t_end_s),
                smooth,
                decibel: db,
                uniform,
                out: out.as_deref(),
            },
            exec,
        ),
        Command::Calibrate { inputs, out } => {
            commands::calibrate_cmd(&inputs, out.as_deref(), exec)
        }
        Command::Check(Check::Proportionality {
            points,
            max_nonlinearity,
            dark_noise,
            intercept_allowance,
            out,
        }) => {
            let opts = ProportionalityOptions {
                max_nonlinearity,
                dark_noise,
                intercept_allowance,
            };
            commands::check_points(&points, opts, out.as_deref())
        }
        Command::Precision {
            eta_range,
            n,
            eta_de,
            out,
        } => commands::precision(&eta_range, n, eta_de, out.as_deref()),
        Command::Replicate(Replicate::Reference {
            strict,
            draws,
            seed,
            out,
        }) => commands::replicate(
            MonteCarloOptions { draws, seed },
            strict,
            out.as_deref(),
            exec,
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body =
                serde_json::to_string(&ErrorReport::from(&e)).expect("error report serializes");
            eprintln!("{body}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
