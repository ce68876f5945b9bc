use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Parser, Subcommand};
use trendgan_cli::commands::{self, IngestSource};
use trendgan_cli::config::{RunConfig, SynthSettings};

#[derive(Parser)]
#[command(name = "trendgan", version, about = "Scenario-based portfolio optimization pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a price CSV or generate a synthetic market, then write dataset.csv.
    Ingest {
        #[arg(long, conflicts_with = "synth", required_unless_present = "synth")]
        csv: Option<PathBuf>,
        #[arg(long)]
        synth: bool,
        /// Report day-over-day price jumps beyond 5x.
        #[arg(long)]
        sanity: bool,
        #[arg(long, default_value_t = 2)]
        assets: usize,
        #[arg(long, default_value_t = 0.8)]
        rho: f64,
        #[arg(long, default_value_t = 1000)]
        days: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the effective configuration with every key.
    Config {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train the scenario generator; one checkpoint and log per seed.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to every seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate scenarios from a checkpoint and draw a fan chart.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        /// Anchor date; defaults to the last training day.
        #[arg(long)]
        date: Option<NaiveDate>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Scenario-based and Markowitz frontiers on one date.
    Optimize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        date: Option<NaiveDate>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Backtest every strategy over the test period.
    Backtest {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to every seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, requires = "seed")]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dominance across seeds and the per-setting report.
    Report {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn seeds(cfg: &RunConfig, seed: Option<u64>) -> Vec<u64> {
    seed.map_or_else(|| cfg.seeds.clone(), |s| vec![s])
}

fn run(cli: Cli) -> trendgan::Result<()> {
    match cli.command {
        Command::Ingest { csv, synth: _, sanity, assets, rho, days, seed, out } => {
            let source = match csv {
                Some(p) => IngestSource::Csv(p),
                None => IngestSource::Synth(SynthSettings { assets, rho, days, seed }),
            };
            println!("{}", commands::ingest(source, &commands::resolve_out(out, None), sanity)?);
        }
        Command::Config { config } => print!("{}", commands::load_config(&config, None)?.to_text()),
        Command::Train { config, seed, steps, out } => {
            let cfg = commands::load_config(&config, out)?;
            for s in seeds(&cfg, seed) {
                println!("{}", commands::train(&cfg, s, steps)?);
            }
        }
        Command::Simulate { config, ckpt, date, n, seed, out } => {
            let cfg = commands::load_config(&config, out)?;
            println!("{}", commands::simulate(&cfg, &ckpt, date, n, seed)?);
        }
        Command::Optimize { config, ckpt, date, seed, out } => {
            let cfg = commands::load_config(&config, out)?;
            println!("{}", commands::optimize(&cfg, &ckpt, date, seed)?);
        }
        Command::Backtest { config, seed, ckpt, out } => {
            let cfg = commands::load_config(&config, out)?;
            for s in seeds(&cfg, seed) {
                println!("{}", commands::backtest(&cfg, s, ckpt.as_deref())?);
            }
        }
        Command::Report { config, out } => {
            let cfg = commands::load_config(&config, out)?;
            println!("{}", commands::report(&cfg)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
