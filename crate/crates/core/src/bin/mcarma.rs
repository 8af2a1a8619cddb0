use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mcarma::harness::{cmd_fit, cmd_replicate, cmd_select, cmd_simulate, ExperimentConfig};
use mcarma::Result;

#[derive(Parser)]
#[command(name = "mcarma", version, about = "Simulate, fit and select Lévy-driven MCARMA models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write one CSV per replication
    Simulate(Args),
    /// Fit one space to a data CSV
    Fit(Args),
    /// Select among candidate spaces on a data CSV
    Select(Args),
    /// Repeat simulate + select and aggregate the choices
    Replicate(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `out`)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed (overrides `master_seed`)
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for `replicate` (overrides `threads`)
    #[arg(long)]
    threads: Option<usize>,
    /// Also write the steady-state filter at the estimate (`fit`)
    #[arg(long)]
    dump_filter: bool,
}

fn load(args: &Args) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(out) = &args.out {
        cfg.out = Some(std::env::current_dir().map(|d| d.join(out)).unwrap_or_else(|_| out.clone()));
    }
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if args.threads.is_some() {
        cfg.threads = args.threads;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Simulate(args) => {
            for path in cmd_simulate(&load(&args)?)? {
                println!("{}", path.display());
            }
        }
        Command::Fit(args) => {
            let report = cmd_fit(&load(&args)?, args.dump_filter)?;
            println!("objective {} converged {} evaluations {}", report.objective, report.converged, report.n_evals);
        }
        Command::Select(args) => {
            let report = cmd_select(&load(&args)?)?;
            for (c, choice) in report.criteria.iter().zip(&report.chosen) {
                println!("{c}: {}", choice.as_deref().unwrap_or("none"));
            }
        }
        Command::Replicate(args) => {
            let summary = cmd_replicate(&load(&args)?)?;
            print!("{}", summary.counts_csv()?);
            if let Some(o) = &summary.overfit {
                let p = |r: &Option<mcarma::harness::OverfitReference>| r.as_ref().map(|r| r.probability);
                println!(
                    "overfit {} within {}: empirical {:?} ({}/{}), plug-in {:?}, gaussian {:?}, simplified {:?}",
                    o.inner,
                    o.outer,
                    o.empirical,
                    o.overfits,
                    o.compared,
                    p(&o.plug_in),
                    p(&o.gaussian),
                    p(&o.simplified)
                );
            }
            if !summary.failed_replications.is_empty() {
                eprintln!("{} replication(s) failed", summary.failed_replications.len());
                return Ok(4);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
