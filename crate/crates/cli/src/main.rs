use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use mnchemo_cli::output::write_simulation;
use mnchemo_cli::sweep::{sweep, write_phase, Axis, SweepSpec};
use mnchemo_cli::verify::{all_pass, run_suite, SUITES};
use mnchemo_cli::{simulate_calibrated, RunConfig};

/// Radial chemotaxis runs, phase sweeps and verification suites.
///
/// Log verbosity is read from MNCHEMO_LOG (e.g. `info`, `debug`).
#[derive(Parser, Debug)]
#[command(name = "mnchemo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one configuration. Exit 0 bounded, 2 suspected blow-up, 3 inconclusive, 1 error.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a grid of configurations and write phase.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `name=start:stop:step` with name in m, chi, mu, alpha, beta, phi, r_star, cells
        #[arg(long = "axis", required = true)]
        axes: Vec<Axis>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        replicates: usize,
        /// Worker threads (default: all cores)
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run a verification suite; exit 0 iff every check passes.
    Verify {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(SUITES))]
        suite: String,
    },
}

fn execute(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Simulate { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let sim = simulate_calibrated(&cfg, None)?;
            write_simulation(&sim, &out)?;
            println!("{} ({})", sim.classification.label(), sim.regime.label());
            Ok(sim.exit_code() as u8)
        }
        Command::Sweep { config, axes, out, replicates, jobs } => {
            let cfg = RunConfig::load(&config)?;
            let spec = SweepSpec { axes, replicates, width: jobs };
            let results = sweep(&cfg, &spec)?;
            write_phase(&results, &spec, &out.join("phase.csv"))?;
            let failed = results.iter().filter(|r| r.verdict.is_err()).count();
            println!("{} cells, {failed} failed; wrote {}", results.len(), out.join("phase.csv").display());
            Ok(0)
        }
        Command::Verify { suite } => {
            let checks = run_suite(&suite)?;
            for c in &checks {
                println!("{c}");
            }
            Ok(if all_pass(&checks) { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MNCHEMO_LOG", "warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
