use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use spinchain_control::cli::{self, RunConfig, Summary};

#[derive(Parser)]
#[command(name = "spinchain", about = "Closed-loop entanglement control of Ising spin chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set n=20`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Control a single chain.
    Run(Common),
    /// Train one pulse on a disorder ensemble.
    Train(Common),
    /// Replay a stored pulse on an ensemble.
    Apply {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pulse: PathBuf,
    },
    /// Smooth a stored pulse with a moving average.
    Smooth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pulse: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Oracle, bond-dimension and gradient checks.
    Verify(Common),
}

fn load(common: &Common) -> anyhow::Result<RunConfig> {
    RunConfig::load(common.config.as_deref(), &common.overrides).context("loading configuration")
}

fn report(summary: &Summary) -> bool {
    for p in &summary.peaks {
        println!("c_1_{:<3} peak {:.6} at t = {:.4}  (member mean {:.6})", p.j, p.peak, p.time, p.mean_member_peak);
    }
    println!("completed: {}  duration: {:.4}  discarded weight: {:.3e}", summary.completed, summary.total_duration, summary.final_discarded_weight);
    for c in &summary.checks {
        println!("{} {}: {} (threshold {})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value, c.threshold);
    }
    summary.passed
}

fn execute(cli: Cli) -> anyhow::Result<bool> {
    cli::init_workers()?;
    match cli.command {
        Command::Run(common) => Ok(report(&cli::run_single(&load(&common)?)?.summary)),
        Command::Train(common) => Ok(report(&cli::run_ensemble_train(&load(&common)?)?.summary)),
        Command::Apply { common, pulse } => Ok(report(&cli::run_apply(&load(&common)?, &pulse)?.summary)),
        Command::Smooth { common, pulse, out } => {
            let s = cli::smooth(&load(&common)?, &pulse, &out)?;
            println!("wrote {} intervals to {}", s.frames.len(), out.display());
            Ok(true)
        }
        Command::Verify(common) => {
            let r = cli::run_verify(&load(&common)?)?;
            for c in &r.checks {
                println!("{} {}: {} (threshold {})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value, c.threshold);
            }
            println!(
                "closed-loop deviation d={} vs d={}: {:.3e}",
                r.bond_dimension.d_low, r.bond_dimension.d_high, r.bond_dimension.closed_loop_deviation
            );
            Ok(r.passed)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
