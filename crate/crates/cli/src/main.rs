mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

use commands::CliffArgs;
use config::{config_err, ConfigError, Overrides, ProviderKind, RunConfig};

#[derive(Parser)]
#[command(name = "molsearch", version, about = "Rule-guided tree search over molecules and descriptor sets")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    provider: Option<ProviderKind>,
    /// Parent directory for run directories.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize or read rule sentences and ground them into a rule set.
    Coldstart,
    /// Optimize each start molecule.
    Optimize,
    /// Search for a descriptor set, then score it once on the test split.
    Predict,
    /// Check the cliff lower bound and exhaustive-search convergence.
    Cliff {
        /// Use generated spaces instead of a file.
        #[arg(long, conflicts_with = "space")]
        demo: bool,
        /// Space document with points, neighbors and values.
        #[arg(long)]
        space: Option<PathBuf>,
        /// Lipschitz constant of the fit (file mode).
        #[arg(long, default_value_t = 0.0)]
        kappa: f64,
        /// Local constant at or above which a point counts as a cliff.
        #[arg(long, default_value_t = 1.0)]
        threshold: f64,
        /// Number of generated spaces (demo mode).
        #[arg(long, default_value_t = 5)]
        instances: usize,
    },
    /// Summarize a saved search trace.
    Trace { path: PathBuf },
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let ov = Overrides {
        seed: cli.seed,
        provider: cli.provider,
        out: cli.out.clone(),
    };
    let load = || -> anyhow::Result<RunConfig> {
        match &cli.config {
            Some(p) => RunConfig::load(p, &ov),
            None => config_err("--config is required for this command"),
        }
    };
    let (dir, ok) = match cli.command {
        Command::Coldstart => commands::coldstart(&load()?).map(|(d, ok)| (Some(d), ok))?,
        Command::Optimize => commands::optimize(&load()?).map(|(d, ok)| (Some(d), ok))?,
        Command::Predict => commands::predict(&load()?).map(|(d, ok)| (Some(d), ok))?,
        Command::Cliff {
            demo,
            space,
            kappa,
            threshold,
            instances,
        } => commands::cliff(&CliffArgs {
            demo,
            space,
            kappa,
            threshold,
            instances,
            seed: cli.seed.unwrap_or(0),
            out: cli.out.clone(),
        })?,
        Command::Trace { path } => (None, commands::show_trace(&path)?),
    };
    if let Some(d) = dir {
        println!("wrote {}", d.display());
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
