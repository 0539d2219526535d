//! `minmax-bounds`: lower bounds for input-constrained min-max control.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use minmax_bounds::config::TOLERANCE_PROFILE_ENV;
use minmax_bounds::{ErrorClass, Tolerances};

use crate::output::{emit, emit_error, Format};

const AFTER_HELP: &str = "\
Exit codes: 0 success, 1 user error (bad input, invalid instance, bad flags), 2 numerical failure.

Environment: MINMAX_BOUNDS_TOL_PROFILE selects the default tolerance profile
(default, strict, loose); --tol-profile and the individual overrides take precedence.

CSV output: `simulate` writes one row per time step with columns
t, x0..x(n-1), u0..u(m-1), w0..w(l-1), stage_cost, discounted_sum; the last row
holds x_T only. `simulate --all-adversaries` writes one row per policy/adversary
pair with columns policy, adversary, cost, tail_estimate, admissible,
lower_bound, verified. Other subcommands write key,value rows of the JSON report
flattened with dotted paths.";

#[derive(Debug, Parser)]
#[command(name = "minmax-bounds", version, about, after_help = AFTER_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Report format.
    #[arg(long, value_enum, default_value_t = Format::Text, global = true)]
    pub format: Format,
    /// Write the report to a file instead of stdout.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    /// Tolerance profile: default, strict or loose.
    #[arg(long, global = true, env = TOLERANCE_PROFILE_ENV, value_parser = parse_profile)]
    pub tol_profile: Option<Tolerances>,
    /// Riccati fixed-point tolerance, in (0, 1e-3].
    #[arg(long, global = true, value_parser = ranged(0.0, false, 1e-3))]
    pub riccati_tol: Option<f64>,
    /// Interior-point stopping tolerance, in (0, 1e-3].
    #[arg(long, global = true, value_parser = ranged(0.0, false, 1e-3))]
    pub sdp_tol: Option<f64>,
    /// Relative margin for strict LMIs, in [0, 1e-3].
    #[arg(long, global = true, value_parser = ranged(0.0, true, 1e-3))]
    pub sdp_margin: Option<f64>,
    /// Relative tolerance of the γ* bisection, in (0, 0.1].
    #[arg(long, global = true, value_parser = ranged(0.0, false, 0.1))]
    pub gamma_rel_tol: Option<f64>,
}

impl Common {
    pub fn tolerances(&self) -> Tolerances {
        let mut t = self.tol_profile.unwrap_or_default();
        if let Some(v) = self.riccati_tol {
            t.riccati_tol = v;
        }
        if let Some(v) = self.sdp_tol {
            t.sdp_tol = v;
        }
        if let Some(v) = self.sdp_margin {
            t.sdp_margin = v;
        }
        if let Some(v) = self.gamma_rel_tol {
            t.gamma_rel_tol = v;
        }
        t
    }
}

fn parse_profile(s: &str) -> Result<Tolerances, String> {
    Tolerances::profile(s).ok_or_else(|| format!("unknown tolerance profile {s:?} (default, strict, loose)"))
}

fn ranged(lo: f64, lo_closed: bool, hi: f64) -> impl Fn(&str) -> Result<f64, String> + Clone {
    move |s: &str| {
        let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
        let above = if lo_closed { v >= lo } else { v > lo };
        if above && v <= hi {
            Ok(v)
        } else {
            let open = if lo_closed { '[' } else { '(' };
            Err(format!("{v} is outside {open}{lo}, {hi}]"))
        }
    }
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("{s:?} must be a positive finite number")),
    }
}

fn relative_tol(s: &str) -> Result<f64, String> {
    ranged(0.0, false, 1.0)(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Clipped,
    Unconstrained,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AdversaryArg {
    Greedy,
    ClippedKw,
    Random,
    Zero,
    Unconstrained,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    /// Disturbance weight of the unconstrained game (default: the instance's γ0).
    #[arg(long, value_parser = positive)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    /// Alternation rounds.
    #[arg(long, default_value_t = 20)]
    pub rounds: usize,
    /// Stop when a round improves the bound by less than this, relative.
    #[arg(long, default_value_t = 1e-4, value_parser = relative_tol)]
    pub inner_tol: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check an instance file for consistency and the standing assumptions.
    Validate { file: PathBuf },
    /// H∞-optimal disturbance weight γ* of an instance.
    HinfGamma { file: PathBuf },
    /// Basic lower bound (R = R0, s = 0).
    Bound {
        file: PathBuf,
        #[command(flatten)]
        bound: BoundArgs,
        /// Also evaluate and verify the bound at this state (comma-separated).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
    },
    /// Optimized lower bound by alternating SDPs.
    Optimize {
        file: PathBuf,
        #[command(flatten)]
        bound: BoundArgs,
        #[command(flatten)]
        opt: OptimizeArgs,
    },
    /// Verify the initial states for which a bound is valid.
    Verify {
        file: PathBuf,
        /// Initial state (comma-separated).
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        x0: Vec<f64>,
        /// Steps checked pointwise before the invariant-ellipsoid LMI.
        #[arg(long, default_value_t = 50)]
        prefix_t: usize,
        /// Verify the optimized bound instead of the basic one.
        #[arg(long)]
        optimized: bool,
        #[command(flatten)]
        bound: BoundArgs,
        #[command(flatten)]
        opt: OptimizeArgs,
    },
    /// Simulate a policy against an adversary and compare with the bound.
    Simulate {
        file: PathBuf,
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        x0: Vec<f64>,
        #[arg(long, value_enum, default_value_t = PolicyArg::Clipped)]
        policy: PolicyArg,
        #[arg(long, value_enum, default_value_t = AdversaryArg::Greedy)]
        adversary: AdversaryArg,
        /// Run every adversary and report one row per pair.
        #[arg(long)]
        all_adversaries: bool,
        /// Seed of the random adversary.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Horizon (default: α^T below 1e-8).
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long, default_value_t = 50)]
        prefix_t: usize,
        #[command(flatten)]
        bound: BoundArgs,
    },
    /// Generate a seeded random instance with γ0 = factor·γ*.
    GenRandom {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        l: usize,
        #[arg(long)]
        p: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// γ0 as a multiple of γ*; 0 keeps the placeholder γ0 = 1.
        #[arg(long, default_value_t = 1.1)]
        gamma_factor: f64,
    },
    /// Four-state reference example: basic bound, optimized bound, report.
    #[command(alias = "paper-example")]
    ReferenceExample {
        /// Half-width of the input box (not part of the published data).
        #[arg(long, default_value_t = 1.0, value_parser = positive)]
        u_max: f64,
        #[command(flatten)]
        opt: OptimizeArgs,
        /// Also verify the bound at this state.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate { .. } => "validate",
            Command::HinfGamma { .. } => "hinf-gamma",
            Command::Bound { .. } => "bound",
            Command::Optimize { .. } => "optimize",
            Command::Verify { .. } => "verify",
            Command::Simulate { .. } => "simulate",
            Command::GenRandom { .. } => "gen-random",
            Command::ReferenceExample { .. } => "reference-example",
        }
    }
}

/// Failure of a command, classified for the exit code.
#[derive(Debug)]
pub struct Failure {
    pub class: ErrorClass,
    pub kind: String,
    pub message: String,
}

impl Failure {
    pub fn user(kind: &str, message: impl Into<String>) -> Self {
        Self {
            class: ErrorClass::User,
            kind: kind.into(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.class {
            ErrorClass::User => 1,
            ErrorClass::Numerical => 2,
        }
    }
}

impl<E: Into<minmax_bounds::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let e: minmax_bounds::Error = e.into();
        Self {
            class: e.class(),
            kind: e.kind().into(),
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let argv: Vec<String> = std::env::args().collect();
    ExitCode::from(run(&argv))
}

/// Parses `argv` and runs the command; returns the process exit code.
pub fn run(argv: &[String]) -> u8 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let tol = cli.common.tolerances();
    let name = cli.command.name();
    match commands::execute(&cli.command, &tol) {
        Ok(report) => match emit(&report, &cli.common) {
            Ok(()) => report.exit_code(),
            Err(f) => {
                emit_error(name, &f, &cli.common);
                f.exit_code()
            }
        },
        Err(f) => {
            emit_error(name, &f, &cli.common);
            f.exit_code()
        }
    }
}
