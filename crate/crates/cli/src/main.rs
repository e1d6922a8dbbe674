//! `sbd`: simulate scenes, build energy maps, run the optimizer and score it.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sbd_core::Schedule;

/// Exit code for usage and configuration errors.
const EXIT_USAGE: u8 = 1;
/// Exit code for unreadable, corrupt or inconsistent data.
const EXIT_DATA: u8 = 2;
/// Exit code when no configuration ever improved on the empty one.
const EXIT_NO_IMPROVEMENT: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "sbd", version, about = "Street furniture geolocation by stochastic birth and death")]
struct Cli {
    /// TOML pipeline configuration; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct OutArg {
    /// Output directory (created if missing).
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a street layout, its detections and contamination.
    Simulate {
        #[command(flatten)]
        out: OutArg,
        #[arg(long, value_parser = clap::value_parser!(u8).range(0..=3))]
        noise_level: Option<u8>,
    },
    /// Rasterize GeoJSON footprints onto the configured grid.
    RasterizeGis {
        /// GeoJSON file; defaults to `paths.gis` of the config.
        #[arg(long, value_name = "PATH")]
        geojson: Option<PathBuf>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Build the energy map from a scenario's detections.
    Energy {
        /// Directory holding detections.csv and cameras.csv.
        #[arg(long, value_name = "DIR")]
        scenario: PathBuf,
        /// GIS raster sidecar (.json) or GeoJSON footprints; none means no occupancy.
        #[arg(long, value_name = "PATH")]
        gis: Option<PathBuf>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Optimize a configuration on an energy map.
    Run {
        /// Energy raster sidecar (.json).
        #[arg(long, value_name = "PATH")]
        energy: PathBuf,
        #[arg(long)]
        schedule: Option<Schedule>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Precision, recall and F1 of predictions against ground truth.
    Eval {
        /// detections_out.csv of a run.
        #[arg(long, value_name = "PATH")]
        predictions: PathBuf,
        /// objects.csv of the scenario.
        #[arg(long, value_name = "PATH")]
        truth: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u8).range(0..=3))]
        noise_level: Option<u8>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Positional and count stability over repeated runs.
    Stability {
        /// objects.csv of the scenario.
        #[arg(long, value_name = "PATH")]
        truth: PathBuf,
        /// Energy raster to run on; each run writes `run_XXX/` under the output.
        #[arg(long, value_name = "PATH", conflicts_with = "run_dirs")]
        energy: Option<PathBuf>,
        /// Existing run directories to evaluate instead of running.
        #[arg(long, value_name = "DIR", num_args = 1..)]
        run_dirs: Vec<PathBuf>,
        #[arg(long, default_value_t = 10)]
        runs: u64,
        #[arg(long)]
        schedule: Option<Schedule>,
        #[arg(long, value_parser = clap::value_parser!(u8).range(0..=3))]
        noise_level: Option<u8>,
        #[command(flatten)]
        out: OutArg,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::dispatch(cli) {
        Ok(commands::Status::Done) => ExitCode::SUCCESS,
        Ok(commands::Status::NoImprovement) => ExitCode::from(EXIT_NO_IMPROVEMENT),
        Err(commands::Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(commands::Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_DATA)
        }
    }
}
