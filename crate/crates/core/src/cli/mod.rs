//! Command-line front end.
//!
//! Every command validates its flags up front, writes its artifacts under
//! the output directory (flag `--out`, environment `TIPPING_KIT_OUT`) and
//! prints a one-line summary. Failures are reported as a JSON object on
//! standard error with exit code 2 (invalid input) or 3 (numerical failure).

mod commands;
mod config;
mod reproduce;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::monsoon::YEARS_PER_DECADE;

pub use commands::{
    ClassifyArgs, CriterionArgs, CriticalCurveArgs, EstimateDbArgs, ExceedanceArgs, FoldArgs, Fpe1dArgs, Fpe2dArgs,
    McArgs, ModeArgs, RateChoice, SystemChoice,
};
pub use config::{ExperimentConfig, RunArgs};
pub use reproduce::{Figure, Manifest, ReproduceArgs, APPENDIX_B_NODES};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "tipping-kit",
    version,
    about = "Overshoots of fold tipping thresholds: criteria, critical curves and escape probabilities",
    long_about = "Overshoots of fold tipping thresholds: criteria, critical curves and escape probabilities.\n\n\
        Units: albedo is a fraction, model time is in decades (pass --years to read and write \
        exceedance times in years), canonical quantities (p0, p2, x) are dimensionless."
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalOpts {
    /// Directory for output files.
    #[arg(long, global = true, env = "TIPPING_KIT_OUT", default_value = "tipping-kit-out")]
    pub out: PathBuf,
    /// Worker threads [default: available parallelism].
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Exceedance times on the command line and in outputs are in years
    /// rather than decades.
    #[arg(long, global = true)]
    pub years: bool,
    /// Wall-clock budget for grid sweeps, in seconds. Nodes not started in
    /// time are reported as skipped.
    #[arg(long, global = true)]
    pub budget_secs: Option<f64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Locate the fold and its normal-form coefficients.
    #[command(allow_negative_numbers = true)]
    Fold(FoldArgs),
    /// Inverse-square or acceleration-form overshoot criterion.
    #[command(allow_negative_numbers = true)]
    Criterion(CriterionArgs),
    /// Time a forcing profile spends above a threshold.
    #[command(allow_negative_numbers = true)]
    Exceedance(ExceedanceArgs),
    /// Tipping verdict by direct simulation.
    #[command(allow_negative_numbers = true)]
    Classify(ClassifyArgs),
    /// Simulated critical amplitude against the asymptotic law.
    #[command(allow_negative_numbers = true)]
    CriticalCurve(CriticalCurveArgs),
    /// Escape probability of the canonical SDE from its Fokker-Planck equation.
    #[command(allow_negative_numbers = true)]
    Fpe1d(Fpe1dArgs),
    /// Escape probability of the noisy monsoon model from its 2D Fokker-Planck equation.
    #[command(allow_negative_numbers = true)]
    Fpe2d(Fpe2dArgs),
    /// Mode approximation of the escape probability.
    #[command(allow_negative_numbers = true)]
    Mode(ModeArgs),
    /// Monte-Carlo escape probability.
    #[command(allow_negative_numbers = true)]
    Mc(McArgs),
    /// Estimate d_b from the lag-1 autocorrelation of a time series.
    #[command(allow_negative_numbers = true)]
    EstimateDb(EstimateDbArgs),
    /// Emit the data behind a figure, with a manifest of solver settings.
    #[command(allow_negative_numbers = true)]
    Reproduce(ReproduceArgs),
    /// Run an experiment described by a TOML file.
    Run(RunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Fold(_) => "fold",
            Command::Criterion(_) => "criterion",
            Command::Exceedance(_) => "exceedance",
            Command::Classify(_) => "classify",
            Command::CriticalCurve(_) => "critical-curve",
            Command::Fpe1d(_) => "fpe1d",
            Command::Fpe2d(_) => "fpe2d",
            Command::Mode(_) => "mode",
            Command::Mc(_) => "mc",
            Command::EstimateDb(_) => "estimate-db",
            Command::Reproduce(_) => "reproduce",
            Command::Run(_) => "run",
        }
    }
}

/// What a command produced.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub summary: String,
    pub files: Vec<PathBuf>,
}

/// Settings shared by all commands.
#[derive(Debug, Clone)]
pub struct Context {
    pub out: PathBuf,
    pub years: bool,
    pub budget: Option<Duration>,
}

impl Context {
    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Exceedance time from user units to decades.
    pub fn time_in(&self, t: f64) -> f64 {
        if self.years {
            t / YEARS_PER_DECADE
        } else {
            t
        }
    }

    /// Exceedance time from decades to user units.
    pub fn time_out(&self, t: f64) -> f64 {
        if self.years {
            t * YEARS_PER_DECADE
        } else {
            t
        }
    }

    pub fn time_unit(&self) -> &'static str {
        if self.years {
            "years"
        } else {
            "decades"
        }
    }
}

/// Parse `args` (including the program name), run, print, and return the
/// process exit code.
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => return report_clap_error(e),
    };
    match execute(cli) {
        Ok(report) => {
            println!("{}", report.summary);
            EXIT_OK
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            exit_code(&e)
        }
    }
}

fn report_clap_error(e: clap::Error) -> i32 {
    use clap::error::ErrorKind;
    match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
            let _ = e.print();
            EXIT_OK
        }
        _ => {
            let message = e.render().to_string();
            let body = serde_json::json!({
                "error": "usage",
                "message": message.trim(),
            });
            eprintln!("{body}");
            EXIT_VALIDATION
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_validation() {
        EXIT_VALIDATION
    } else {
        EXIT_NUMERICAL
    }
}

/// Machine-readable description of an error.
pub fn error_json(e: &Error) -> String {
    let mut body = serde_json::json!({
        "error": e.kind(),
        "message": e.to_string(),
    });
    match e {
        Error::Validation(problems) => body["problems"] = serde_json::json!(problems),
        Error::BudgetExceeded { completed, total } => {
            body["completed"] = serde_json::json!(completed);
            body["total"] = serde_json::json!(total);
        }
        _ => {}
    }
    body.to_string()
}

/// Run a parsed command line inside a worker pool of the requested size.
pub fn execute(cli: Cli) -> Result<Report> {
    let g = &cli.global;
    let mut problems = Vec::new();
    if g.threads == Some(0) {
        problems.push("--threads must be positive".to_string());
    }
    if let Some(b) = g.budget_secs {
        if !(b >= 0.0 && b.is_finite()) {
            problems.push(format!("--budget-secs must be a nonnegative number (got {b})"));
        }
    }
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }
    let ctx = Context {
        out: g.out.clone(),
        years: g.years,
        budget: g.budget_secs.map(Duration::from_secs_f64),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(g.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?;
    pool.install(|| dispatch(cli.command, &ctx))
}

fn dispatch(command: Command, ctx: &Context) -> Result<Report> {
    match command {
        Command::Fold(a) => commands::fold(&a, ctx),
        Command::Criterion(a) => commands::criterion(&a, ctx),
        Command::Exceedance(a) => commands::exceedance(&a, ctx),
        Command::Classify(a) => commands::classify(&a, ctx),
        Command::CriticalCurve(a) => commands::critical_curve(&a, ctx),
        Command::Fpe1d(a) => commands::fpe1d(&a, ctx),
        Command::Fpe2d(a) => commands::fpe2d(&a, ctx),
        Command::Mode(a) => commands::mode(&a, ctx),
        Command::Mc(a) => commands::mc(&a, ctx),
        Command::EstimateDb(a) => commands::estimate_db(&a, ctx),
        Command::Reproduce(a) => reproduce::reproduce(&a, ctx),
        Command::Run(a) => config::run(&a, ctx),
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}
