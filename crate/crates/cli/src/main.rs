//! `lotpair`: weak-supervision parking-occupancy pipeline.
//!
//! Every subcommand prints a one-line JSON summary on stdout and logs to
//! stderr. Exit status is 0 on success, 2 on invalid input or a missing file,
//! and 1 on any other failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigFile, Settings};

#[derive(Debug, Parser)]
#[command(name = "lotpair", version, about = "Parking-lot occupancy from weekend image pairs")]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory for default input and output file names.
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Repeat for more log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Normalize supermarket and DIY-store points into a POI GeoJSON file.
    IngestPoi(IngestArgs),
    /// Normalize parking polygons, computing area and size class.
    IngestParking(IngestArgs),
    /// Match each POI to its nearest parking lot within a distance threshold.
    Match(MatchArgs),
    /// Screen every stored chip for coverage, clouds and brightness.
    Qc(QcArgs),
    /// Enumerate weak-labeled weekend pairs.
    Pairs(PairsArgs),
    /// Split lots into train and test, stratified by size class.
    Split(SplitArgs),
    /// Train the pairwise model on the train-side pairs.
    Train(TrainArgs),
    /// Per-class AUC and accuracy on the test-side pairs.
    Eval(EvalArgs),
    /// Rank all dates of one lot by estimated occupancy.
    Rank(RankArgs),
    /// Generate a synthetic benchmark with known occupancy.
    SynthGen(SynthArgs),
    /// Render a ranking CSV as an SVG bar chart.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// GeoJSON FeatureCollection to normalize.
    #[arg(long, conflicts_with_all = ["bbox", "fixtures"])]
    input: Option<PathBuf>,
    /// Overpass bounding box `south,west,north,east`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    bbox: Option<Vec<f64>>,
    /// Directory of recorded Overpass responses to replay (and to record into with --live).
    #[arg(long, requires = "bbox")]
    fixtures: Option<PathBuf>,
    /// Query the Overpass endpoint and record the response.
    #[arg(long, requires = "fixtures")]
    live: bool,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MatchArgs {
    #[arg(long)]
    pois: Option<PathBuf>,
    #[arg(long)]
    parking: Option<PathBuf>,
    #[arg(long)]
    proximity_m: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct QcArgs {
    #[arg(long)]
    parking: Option<PathBuf>,
    /// Chip-store root; overrides LOTPAIR_CHIP_STORE.
    #[arg(long)]
    chips: Option<PathBuf>,
    #[arg(long)]
    tv_threshold: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PairsArgs {
    #[arg(long)]
    parking: Option<PathBuf>,
    #[arg(long)]
    chips: Option<PathBuf>,
    /// QC decisions; when given only kept chips are paired.
    #[arg(long)]
    qc: Option<PathBuf>,
    /// same-weekend or cross-weekend.
    #[arg(long)]
    window: Option<String>,
    /// Emit only (Saturday, Sunday, 1) pairs.
    #[arg(long)]
    single_order: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    parking: Option<PathBuf>,
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    parking: Option<PathBuf>,
    #[arg(long)]
    chips: Option<PathBuf>,
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    input_side: Option<usize>,
    /// Comma-separated conv block widths.
    #[arg(long)]
    blocks: Option<String>,
    #[arg(long)]
    head_hidden: Option<usize>,
    /// silu or relu.
    #[arg(long)]
    activation: Option<String>,
    /// Compute per-pair gradients on all cores; results are unchanged.
    #[arg(long)]
    parallel: bool,
    /// Checkpoint directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    parking: Option<PathBuf>,
    #[arg(long)]
    chips: Option<PathBuf>,
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long)]
    split: Option<PathBuf>,
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    score_threshold: Option<f64>,
    /// Synthetic-benchmark manifest; test pairs are relabeled by true occupancy.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Report JSON path; the CSV goes next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RankArgs {
    #[arg(long)]
    lot: String,
    #[arg(long)]
    parking: Option<PathBuf>,
    #[arg(long)]
    chips: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    /// QC decisions; when given only kept chips are ranked.
    #[arg(long)]
    qc: Option<PathBuf>,
    /// Tag dates before this day `pre` and the rest `post`.
    #[arg(long)]
    boundary: Option<NaiveDate>,
    /// Also write an SVG bar chart here.
    #[arg(long)]
    svg: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    lots: Option<usize>,
    #[arg(long)]
    weekends: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    cloud_rate: Option<f64>,
    /// Output directory; defaults to the out dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PlotArgs {
    #[arg(long)]
    ranking: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> lotpair::Result<serde_json::Value> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(config::require(path)?)?,
        None => ConfigFile::default(),
    };
    let s = Settings::new(file, cli.out_dir);
    match cli.command {
        Command::IngestPoi(a) => commands::ingest(&s, a, commands::Layer::Poi),
        Command::IngestParking(a) => commands::ingest(&s, a, commands::Layer::Parking),
        Command::Match(a) => commands::match_pois(&s, a),
        Command::Qc(a) => commands::qc(&s, a),
        Command::Pairs(a) => commands::pairs(&s, a),
        Command::Split(a) => commands::split(&s, a),
        Command::Train(a) => commands::train(&s, a),
        Command::Eval(a) => commands::eval(&s, a),
        Command::Rank(a) => commands::rank(&s, a),
        Command::SynthGen(a) => commands::synth_gen(&s, a),
        Command::Plot(a) => commands::plot(&s, a),
    }
}
