//! `hearsay`: crawl web audio, train a sound-event classifier, rank the
//! crawl by class and gather human feedback on the rankings.

mod commands;
mod config;
mod error;
mod layout;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hearsay_core::dataset::DatasetId;
use hearsay_core::evaluator::GtMode;
use hearsay_core::fixture::FixtureConfig;

use crate::commands::Ctx;
use crate::config::{Overrides, PipelineConfig};
use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "hearsay", version, about)]
struct Cli {
    /// TOML config file.
    #[arg(long, global = true, env = "HEARSAY_CONFIG")]
    config: Option<PathBuf>,
    /// Restrict to these datasets (repeatable or comma-separated).
    #[arg(long, global = true, value_delimiter = ',', value_parser = parse_dataset)]
    dataset: Vec<DatasetId>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses one per core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Deepest rank evaluated.
    #[arg(long, global = true)]
    kmax: Option<usize>,
    /// Ground truth for precision curves.
    #[arg(long, global = true, value_parser = parse_gt)]
    gt: Option<GtMode>,
    #[arg(long, global = true)]
    port: Option<u16>,
    #[arg(long, global = true)]
    work_dir: Option<PathBuf>,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Stratified train/val/test split of each dataset manifest.
    Split,
    /// Fetch videos for every class query and store their audio.
    Crawl,
    /// Cache normalised feature patches for each split.
    Featurize,
    /// Train one classifier per dataset.
    Train,
    /// Score every crawled segment with its dataset's classifier.
    Predict,
    /// Write the top-ranked segments of each predicted class.
    Rank,
    /// Deal the top segments of each class to human evaluators.
    Assign,
    /// Precision@K curves, corpus precision and test accuracy.
    Evaluate,
    /// Run the feedback HTTP service.
    Serve,
    /// split, featurize, train, crawl, predict, rank, evaluate and assign.
    Run,
    /// Generate the synthetic tone dataset, a corpus and a config file.
    Fixture {
        /// Output directory.
        out: PathBuf,
        /// TOML overriding the generator settings.
        #[arg(long)]
        settings: Option<PathBuf>,
    },
    /// Print the effective configuration and its hash.
    Config,
}

fn parse_dataset(s: &str) -> std::result::Result<DatasetId, String> {
    s.parse().map_err(|e: hearsay_core::dataset::DatasetError| e.to_string())
}

fn parse_gt(s: &str) -> std::result::Result<GtMode, String> {
    s.parse()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.json_line());
            ExitCode::from(e.exit_code())
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    if let Command::Fixture { out, settings } = &cli.command {
        let fixture_cfg = match settings {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::MissingInput(format!("{}: {e}", path.display())))?;
                toml::from_str(&text).map_err(|e| CliError::BadConfig(e.to_string()))?
            }
            None => FixtureConfig::default(),
        };
        return commands::fixture(out, &fixture_cfg);
    }

    let overrides = Overrides {
        seed: cli.seed,
        threads: cli.threads,
        kmax: cli.kmax,
        gt: cli.gt,
        port: cli.port,
        work_dir: cli.work_dir.clone(),
    };
    let cfg = PipelineConfig::load(cli.config.as_deref(), &overrides)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build_global()
        .map_err(|e| CliError::BadConfig(e.to_string()))?;
    let ctx = Ctx::new(cfg);
    log::info!("config hash {}", ctx.hash);
    if let Command::Config = cli.command {
        print!("# config_hash={}\n{}", ctx.hash, ctx.cfg.to_toml());
        return Ok(());
    }
    let datasets = ctx.cfg.datasets(&cli.dataset)?;

    match cli.command {
        Command::Split => commands::split(&ctx, &datasets),
        Command::Crawl => commands::crawl(&ctx, &datasets),
        Command::Featurize => commands::featurize(&ctx, &datasets),
        Command::Train => commands::train(&ctx, &datasets),
        Command::Predict => commands::predict(&ctx, &datasets),
        Command::Rank => commands::rank(&ctx, &datasets),
        Command::Assign => commands::assign(&ctx, &datasets),
        Command::Evaluate => commands::evaluate(&ctx, &datasets),
        Command::Serve => commands::serve(&ctx, &datasets),
        Command::Run => commands::run(&ctx, &datasets),
        Command::Config | Command::Fixture { .. } => unreachable!("handled above"),
    }
}
