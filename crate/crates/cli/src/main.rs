use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::Ordering;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use jumpreach_cli::run::{self, INTERRUPT};
use jumpreach_cli::{Overrides, RunError, SolveFlags};

/// Auxiliary-value solver for state-constrained stochastic control with jumps.
#[derive(Parser)]
#[command(name = "jumpreach", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve W and extract the V profiles.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Continue from the most advanced checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
        #[arg(long, hide = true)]
        stop_after: Option<usize>,
    },
    /// Re-extract V from stored snapshots.
    Extract {
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo estimates at the configured start points.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Run the numerical diagnostics.
    Verify {
        #[command(flatten)]
        common: Common,
    },
    /// Summarize the artifacts of an output directory.
    Report {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epsilon: Option<f64>,
}

impl Common {
    fn load(&self) -> Result<jumpreach_cli::RunConfig, RunError> {
        let overrides = Overrides {
            out: self.out.clone(),
            threads: self.threads,
            seed: self.seed,
            epsilon: self.epsilon,
        };
        run::load_config(&self.config, &overrides)
    }
}

fn execute(command: Command) -> Result<(), RunError> {
    match command {
        Command::Solve { common, resume, stop_after } => {
            let config = common.load()?;
            let manifest = run::solve(&config, SolveFlags { resume, stop_after })?;
            println!("{} artifacts in {}", manifest.artifacts.len(), config.outputs.directory.display());
        }
        Command::Extract { common } => {
            let config = common.load()?;
            run::extract(&config)?;
            println!("profiles rewritten in {}", config.outputs.directory.join("profiles").display());
        }
        Command::Simulate { common } => {
            let config = common.load()?;
            run::simulate(&config)?;
            println!("estimates written to {}", config.outputs.directory.join("simulate").display());
        }
        Command::Verify { common } => {
            let config = common.load()?;
            let result = run::verify(&config);
            if let Ok(text) = run::report(&config.outputs.directory) {
                print!("{text}");
            }
            result?;
        }
        Command::Report { config, out } => {
            let dir = match (out, config) {
                (Some(dir), _) => dir,
                (None, Some(path)) => run::load_config(&path, &Overrides::default())?.outputs.directory,
                (None, None) => PathBuf::from("out"),
            };
            print!("{}", run::report(&dir)?);
        }
    }
    Ok(())
}

fn main() -> anyhow::Result<ExitCode> {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            e.print().context("writing usage")?;
            return Ok(ExitCode::from(code));
        }
    };
    ctrlc::set_handler(|| INTERRUPT.store(true, Ordering::SeqCst)).context("installing the signal handler")?;
    match execute(cli.command) {
        Ok(()) => Ok(ExitCode::SUCCESS),
        Err(e) => {
            eprintln!("error: {e}");
            Ok(ExitCode::from(e.exit_code() as u8))
        }
    }
}
