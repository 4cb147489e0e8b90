//! `bess-align`: ingest wind and load records, sweep the power alignment
//! surface, and size a battery against it.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use bess_align::capacity::Engine;
use bess_align::{Error, Objective};

use commands::{Session, ValidationFailed};
use config::{Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "bess-align",
    version,
    about = "Battery sizing against a wind farm via the power alignment function"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Peaker statistic to minimize: avg or peak.
    #[arg(long, global = true)]
    objective: Option<Objective>,

    /// Cell evaluator: lp or greedy.
    #[arg(long, global = true)]
    engine: Option<Engine>,

    /// Storage duration c of the ray B = c P, in hours.
    #[arg(long, global = true)]
    hours: Option<f64>,

    /// Worker threads for surface sweeps (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Leave the generation time out of JSON outputs.
    #[arg(long, global = true)]
    no_timestamp: bool,

    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    /// Canonical wind series (default: <output-dir>/wind_series.csv).
    #[arg(long, global = true)]
    wind_series: Option<PathBuf>,

    /// Canonical demand series (default: <output-dir>/demand_series.csv).
    #[arg(long, global = true)]
    demand_series: Option<PathBuf>,

    /// Step length in hours.
    #[arg(long, global = true)]
    delta_hours: Option<f64>,

    /// Per-step energy retention alpha in (0, 1].
    #[arg(long, global = true, conflicts_with = "daily_loss")]
    retention: Option<f64>,

    /// Fraction of stored energy lost per 24 h, converted to a per-step retention.
    #[arg(long, global = true)]
    daily_loss: Option<f64>,

    /// Points in the default energy-rating grid (default 41).
    #[arg(long, global = true)]
    points: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Resample raw wind-speed and load CSVs onto a common grid.
    Ingest {
        #[arg(long)]
        wind: Option<PathBuf>,
        #[arg(long)]
        demand: Option<PathBuf>,
    },
    /// Sweep g(B, P) over the energy and power grids.
    Surface {
        /// Write the LP at the largest grid corner as MPS.
        #[arg(long)]
        dump_lp: Option<PathBuf>,
    },
    /// Capacity along the storage ray and the battery recovering a target share.
    Capacity {
        /// Share of g(0,0) to recover (default 0.5).
        #[arg(long)]
        target: Option<f64>,
        #[arg(long)]
        dump_lp: Option<PathBuf>,
    },
    /// Closed-form sizes B# and B#_g and the no-storage endpoints.
    Size,
    /// Cross-check the LP, greedy and run-structure engines.
    Validate {
        /// Check this many synthetic instances instead of the configured series.
        #[arg(long)]
        seeds: Option<usize>,
        /// Steps per synthetic instance.
        #[arg(long)]
        steps: Option<usize>,
        /// First synthetic seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<ValidationFailed>().is_some() {
            return 8;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Ingest(i) => i.exit_code() as u8,
                Error::Input(_) => 2,
                Error::Precondition(_) => 7,
                Error::Solver(_) | Error::Cell { .. } | Error::State { .. } => 8,
                Error::Unreachable { .. } => 9,
                Error::Io(_) | Error::Json(_) => 10,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 10;
        }
        if cause.downcast_ref::<toml::de::Error>().is_some() {
            return 2;
        }
    }
    1
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    let seed = match &cli.command {
        Command::Validate { seed, .. } => *seed,
        _ => None,
    };
    cfg.apply(&Overrides {
        objective: cli.objective,
        engine: cli.engine,
        hours: cli.hours,
        output_dir: cli.output_dir,
        wind_series: cli.wind_series,
        demand_series: cli.demand_series,
        delta_hours: cli.delta_hours,
        retention: cli.retention,
        daily_loss: cli.daily_loss,
        seed,
        points: cli.points,
    });
    cfg.validate().map_err(|e| Error::Input(e.to_string()))?;
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let session = Session {
        cfg,
        timestamp: !cli.no_timestamp,
    };
    match cli.command {
        Command::Ingest { wind, demand } => commands::ingest_cmd(&session, wind, demand),
        Command::Surface { dump_lp } => commands::surface_cmd(&session, dump_lp.as_deref()),
        Command::Capacity { target, dump_lp } => {
            commands::capacity_cmd(&session, target, dump_lp.as_deref())
        }
        Command::Size => commands::size_cmd(&session),
        Command::Validate { seeds, steps, .. } => commands::validate_cmd(&session, seeds, steps),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
