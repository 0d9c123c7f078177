use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use roisearch::planners::PlannerKind;
use roisearch_cli::config::parse_grid;
use roisearch_cli::{bench, load_settings, run, segment, CliError, Overrides, Source};

#[derive(Parser)]
#[command(name = "roisearch", version, about = "Region-of-interest search benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every scenario for the configured number of trials.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Re-run the exact configuration recorded in a manifest.ini.
        #[arg(long, value_name = "FILE", conflicts_with = "config")]
        from_manifest: Option<PathBuf>,
    },
    /// Run a single episode.
    Run {
        #[command(flatten)]
        common: Common,
        /// Scenario to run (default: the first one).
        #[arg(long)]
        scenario: Option<String>,
        /// Trial index inside the seeded batch.
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
    /// Segment a scenario's prior into regions of interest.
    Segment {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
}

#[derive(Args)]
struct Common {
    /// INI configuration file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u32>,
    /// puct, puct_regions, puct_regions_lite, greedy or dps.
    #[arg(long, value_parser = parse_planner)]
    planner: Option<PlannerKind>,
    /// Built-in mask name or a mask fixture file.
    #[arg(long)]
    mask: Option<String>,
    /// Grid size as ROWSxCOLS.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<roisearch::GridSpec>,
    #[arg(long)]
    max_steps: Option<u32>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
    /// Write JSON-lines decision traces.
    #[arg(long)]
    trace: bool,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn parse_planner(s: &str) -> Result<PlannerKind, String> {
    s.parse().map_err(|e: roisearch::Error| e.to_string())
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            trials: self.trials,
            planner: self.planner,
            mask: self.mask.clone(),
            grid: self.grid,
            max_steps: self.max_steps,
            workers: self.workers,
            out: self.out.clone(),
        }
    }

    fn source(&self, manifest: Option<&PathBuf>) -> Source {
        match (manifest, &self.config) {
            (Some(m), _) => Source::Manifest(m.clone()),
            (None, Some(c)) => Source::Config(c.clone()),
            (None, None) => Source::Defaults,
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let mut stdout = std::io::stdout();
    match cli.command {
        Command::Bench { common, from_manifest } => {
            let settings = load_settings(&common.source(from_manifest.as_ref()), &common.overrides())?;
            bench(&settings, common.trace, &mut stdout)?;
            eprintln!("wrote {}", settings.out.display());
        }
        Command::Run { common, scenario, trial } => {
            let settings = load_settings(&common.source(None), &common.overrides())?;
            run(&settings, scenario.as_deref(), trial, common.trace, &mut stdout)?;
        }
        Command::Segment { common, scenario, trial } => {
            let settings = load_settings(&common.source(None), &common.overrides())?;
            segment(&settings, scenario.as_deref(), trial, &mut stdout)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("roisearch: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
