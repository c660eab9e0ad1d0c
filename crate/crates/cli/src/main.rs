//! `taskqp` command line.
//!
//! Exit codes: 0 clean run, 1 I/O or other failure, 2 usage error,
//! 3 scenario parse error, 4 invariant violation, 5 QP infeasible during the
//! run, 6 instability flagged. When a run is both infeasible and unstable,
//! 5 wins.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use taskqp::acceptance::{self, Suite};
use taskqp::sim::{run_with_metrics, Scenario};
use taskqp::{catalog, Error};

const EXIT_IO: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_PARSE: u8 = 3;
const EXIT_INVARIANT: u8 = 4;
const EXIT_INFEASIBLE: u8 = 5;
const EXIT_UNSTABLE: u8 = 6;

#[derive(Parser)]
#[command(name = "taskqp", version, about = "Robust task-space QP control simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write log.csv and metrics.toml.
    Run {
        file: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run a built-in scenario.
    Builtin {
        name: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Print a built-in scenario as a scenario file.
    Show { name: String },
    /// List built-in scenarios.
    List,
    /// Run an acceptance suite: 1dof, qp-oracle, analysis, planar or all.
    Check { suite: String },
}

#[derive(clap::Args)]
struct Overrides {
    /// Control period, s.
    #[arg(long)]
    dt: Option<f64>,
    /// Horizon, s.
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    /// Accepted for script compatibility; runs are deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse(_) => EXIT_PARSE,
        Error::Config(_)
        | Error::InvalidParam(_)
        | Error::NotHurwitz(_)
        | Error::UnsupportedBarrier(_)
        | Error::Dimension { .. }
        | Error::NonFinite(_) => EXIT_INVARIANT,
        Error::Infeasible { .. } | Error::NotConverged(_) => EXIT_INFEASIBLE,
        Error::BlowUp(_) => EXIT_UNSTABLE,
        Error::Io(_) => EXIT_IO,
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_code(e))
}

fn execute(mut s: Scenario, o: &Overrides, out: &Path) -> ExitCode {
    if let Some(dt) = o.dt {
        s.dt_control = dt;
    }
    if let Some(t) = o.t_end {
        s.t_end = t;
    }
    let (log, metrics) = match run_with_metrics(&s) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    let written = (|| -> Result<(), Error> {
        fs::create_dir_all(out)?;
        log.write_csv(fs::File::create(out.join("log.csv"))?)?;
        fs::write(out.join("metrics.toml"), metrics.to_toml()?)?;
        Ok(())
    })();
    if let Err(e) = written {
        return fail(&e);
    }
    for ev in &log.events {
        eprintln!("step {} (t = {} s): {:?}", ev.step, ev.t, ev.kind);
    }
    println!(
        "{}: settling {:.3} s, steady-state error {:.3e}, oscillation index {:.3}, overshoot {:.3e}, unstable {}",
        metrics.scenario,
        metrics.settling_time,
        metrics.steady_state_error,
        metrics.oscillation_index,
        metrics.overshoot_beyond_boundary,
        metrics.instability_flag
    );
    if metrics.qp_failures > 0 {
        eprintln!("QP failed on {} steps", metrics.qp_failures);
        ExitCode::from(EXIT_INFEASIBLE)
    } else if metrics.instability_flag {
        ExitCode::from(EXIT_UNSTABLE)
    } else {
        ExitCode::SUCCESS
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { file, out, overrides } => {
            let text = match fs::read_to_string(&file) {
                Ok(t) => t,
                Err(e) => return fail(&Error::Io(format!("{}: {e}", file.display()))),
            };
            match Scenario::from_toml(&text) {
                Ok(s) => execute(s, &overrides, &out),
                Err(e) => fail(&e),
            }
        }
        Command::Builtin { name, out, overrides } => match catalog::get(&name) {
            Ok(s) => execute(s, &overrides, &out),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_USAGE)
            }
        },
        Command::Show { name } => match catalog::get(&name).and_then(|s| s.to_toml()) {
            Ok(t) => {
                print!("{t}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_USAGE)
            }
        },
        Command::List => {
            for s in catalog::all() {
                println!("{:<24} {}", s.name, s.description);
            }
            ExitCode::SUCCESS
        }
        Command::Check { suite } => {
            let Ok(suite) = suite.parse::<Suite>() else {
                eprintln!("error: unknown suite {suite:?} (expected one of {})", Suite::NAMES.join(", "));
                return ExitCode::from(EXIT_USAGE);
            };
            let verdicts = acceptance::run_suite(suite);
            for v in &verdicts {
                println!("{v}");
            }
            if verdicts.iter().all(|v| v.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_IO)
            }
        }
    }
}
