//! `ofbvr`: flow, JND, scoring, tiling, simulation and training from the shell.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "ofbvr", version, about = "Perceptually-aware tiled 360-degree video streaming")]
struct Cli {
    /// JSON file of flag defaults, keyed by command name.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate block flow between two frames, with optional velocity and depth maps.
    Flow(FlowArgs),
    /// Turn velocity and depth maps into a JND threshold map.
    Jnd(JndArgs),
    /// PSNR-OF and plain PSNR of encoded frames, per frame and per tile.
    Score(ScoreArgs),
    /// Group the basic tiles into K rectangles.
    Tile(TileArgs),
    /// Play one video over one bandwidth trace with a controller.
    Simulate(SimulateArgs),
    /// Train the actor-critic policy.
    Train(TrainArgs),
    /// Run controllers over every video and trace, one CSV row per controller and trace.
    Eval(EvalArgs),
    /// Synthetic videos and bandwidth traces.
    #[command(subcommand)]
    Gen(GenCommand),
}

#[derive(Args)]
pub struct FlowArgs {
    #[arg(long)]
    pub prev: PathBuf,
    #[arg(long)]
    pub next: PathBuf,
    #[arg(long, default_value_t = ofbvr::flowfield::DEFAULT_BLOCK)]
    pub block: usize,
    #[arg(long, default_value_t = ofbvr::flowfield::DEFAULT_RADIUS)]
    pub radius: usize,
    /// Flow output (OFBF).
    #[arg(long)]
    pub out: PathBuf,
    /// Relative-velocity map output (OFBS).
    #[arg(long)]
    pub dv: Option<PathBuf>,
    /// Relative-depth map output (OFBS).
    #[arg(long)]
    pub dd: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub yaw: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub pitch: f64,
    /// Gaze velocity, pixels per frame.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub gaze_vx: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub gaze_vy: f64,
    #[arg(long, default_value_t = ofbvr::flowfield::DEFAULT_BACKGROUND_EPS)]
    pub background_eps: f64,
}

#[derive(Args)]
pub struct JndArgs {
    #[arg(long)]
    pub dv: PathBuf,
    #[arg(long)]
    pub dd: PathBuf,
    #[arg(long, default_value_t = ofbvr::JndConfig::default().lambda)]
    pub lambda: f64,
    /// JND map output (OFBJ).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub orig: PathBuf,
    /// Encoded frames. Give one per non-blank level, lowest first, to get
    /// tile scores and efficiency too.
    #[arg(long, num_args = 1.., required = true)]
    pub enc: Vec<PathBuf>,
    /// JND map; without it every threshold is zero and PSNR-OF is plain PSNR.
    #[arg(long)]
    pub jnd: Option<PathBuf>,
    #[arg(long, default_value_t = ofbvr::qoe::DEFAULT_CAP_DB)]
    pub cap: f64,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct TileArgs {
    /// Efficiency grid JSON: `{"rows", "cols", "values"}`.
    #[arg(long, conflicts_with = "scores")]
    pub efficiency: Option<PathBuf>,
    /// Tile score grid JSON; efficiency is taken between `--high` and `--low`.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub high: usize,
    #[arg(long, default_value_t = 1)]
    pub low: usize,
    #[arg(long, default_value_t = 50)]
    pub k: usize,
    /// Layout JSON output; stdout if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone)]
pub struct SessionArgs {
    #[arg(long, default_value_t = 8.0)]
    pub buffer_cap: f64,
    #[arg(long, default_value_t = 2.0)]
    pub startup_threshold: f64,
    #[arg(long, default_value_t = ofbvr::abr::DEFAULT_FOV_DEG)]
    pub fov: f64,
    #[arg(long, default_value_t = ofbvr::abr::DEFAULT_MARGIN_DEG)]
    pub margin: f64,
    #[arg(long, default_value_t = ofbvr::abr::DEFAULT_REWARD_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = ofbvr::abr::DEFAULT_REWARD_BETA)]
    pub beta: f64,
    #[arg(long, default_value_t = ofbvr::sim::DEFAULT_PREDICT_WINDOW)]
    pub predict_window: usize,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Video manifest JSON.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Viewpoint CSV; defaults to the manifest path with `.viewpoints.csv`.
    #[arg(long)]
    pub viewpoints: Option<PathBuf>,
    /// Bandwidth CSV.
    #[arg(long)]
    pub bandwidth: PathBuf,
    /// rate, fixed_grid, random, rl, top, or fixed:C,S,O.
    #[arg(long, default_value = "rate")]
    pub controller: String,
    /// Policy parameters (OFBP) for the rl controller.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, env = "OFBVR_SEED", default_value_t = 42)]
    pub seed: u64,
    /// Per-chunk CSV output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Aggregate JSON output; stdout if absent.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[command(flatten)]
    pub session: SessionArgs,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Directory of `*.manifest.json` files with `*.viewpoints.csv` companions.
    #[arg(long)]
    pub videos: PathBuf,
    /// Directory of bandwidth CSVs, or a single CSV.
    #[arg(long)]
    pub traces: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub episodes: usize,
    #[arg(long, env = "OFBVR_SEED", default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Continue from these parameters instead of a fresh initialization.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Parameter output (OFBP).
    #[arg(long)]
    pub out: PathBuf,
    /// Per-episode CSV log.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long, default_value_t = 0.99)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub actor_lr: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub critic_lr: f64,
    #[arg(long, default_value_t = 8)]
    pub n_steps: usize,
    #[arg(long, default_value_t = 0.01)]
    pub entropy_start: f64,
    #[arg(long, default_value_t = 0.001)]
    pub entropy_end: f64,
    #[arg(long, default_value_t = 0.01)]
    pub reward_scale: f64,
    #[arg(long, value_enum, default_value = "adam")]
    pub optimizer: OptimizerArg,
    #[arg(long, default_value_t = 0.0)]
    pub max_grad_norm: f64,
    #[command(flatten)]
    pub session: SessionArgs,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub videos: PathBuf,
    /// Directory of bandwidth CSVs, or a single CSV.
    #[arg(long)]
    pub traces: PathBuf,
    /// Comma-separated controllers (see `simulate --controller`).
    #[arg(long, value_delimiter = ',', default_value = "rate,fixed_grid,rl")]
    pub controllers: Vec<String>,
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, env = "OFBVR_SEED", default_value_t = 42)]
    pub seed: u64,
    /// Summary CSV; stdout if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for sessions.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub session: SessionArgs,
}

#[derive(Subcommand)]
pub enum GenCommand {
    /// A moving-pattern video: manifest JSON, viewpoint CSV, optional PGM frames.
    Video(GenVideoArgs),
    /// A synthetic bandwidth trace CSV.
    Bw(GenBwArgs),
    /// Rescale a bandwidth trace to a target mean.
    Scale(GenScaleArgs),
}

#[derive(Args)]
pub struct GenVideoArgs {
    #[arg(long, env = "OFBVR_SEED", default_value_t = 42)]
    pub seed: u64,
    /// Number of videos, seeded `seed`, `seed + 1`, ...
    #[arg(long, default_value_t = 1)]
    pub count: u64,
    /// Video spec JSON; missing fields take their defaults.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub chunks: Option<usize>,
    /// Also write this many frames per video as PGM.
    #[arg(long, default_value_t = 0)]
    pub frames: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ProfileArg {
    Constant,
    TwoBand,
    RandomWalk,
}

#[derive(Args)]
pub struct GenBwArgs {
    #[arg(long, value_enum, default_value = "random-walk")]
    pub profile: ProfileArg,
    #[arg(long, default_value_t = 300.0)]
    pub duration: f64,
    #[arg(long, env = "OFBVR_SEED", default_value_t = 42)]
    pub seed: u64,
    /// Constant throughput, bits per second.
    #[arg(long, default_value_t = 5e6)]
    pub bps: f64,
    #[arg(long, default_value_t = 8e6)]
    pub high: f64,
    #[arg(long, default_value_t = 1e6)]
    pub low: f64,
    #[arg(long, default_value_t = 10.0)]
    pub period: f64,
    #[arg(long, default_value_t = 5e6)]
    pub start: f64,
    #[arg(long, default_value_t = 0.25)]
    pub sigma: f64,
    #[arg(long, default_value_t = 2e5)]
    pub min: f64,
    #[arg(long, default_value_t = 5e7)]
    pub max: f64,
    #[arg(long, default_value_t = 1.0)]
    pub interval: f64,
    #[arg(long, default_value_t = 0.15)]
    pub reversion: f64,
    /// Rescale the result to this mean, bits per second.
    #[arg(long)]
    pub mean: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct GenScaleArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Target time-weighted mean, bits per second.
    #[arg(long)]
    pub mean: f64,
    #[arg(long)]
    pub out: PathBuf,
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    e.chain()
        .find_map(|c| {
            if let Some(o) = c.downcast_ref::<ofbvr::Error>() {
                Some(o.kind())
            } else if c.is::<std::io::Error>() {
                Some("io")
            } else if c.is::<serde_json::Error>() {
                Some("json")
            } else if c.is::<csv::Error>() {
                Some("csv")
            } else {
                None
            }
        })
        .unwrap_or("error")
}

fn error_line(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": kind, "message": message.replace('\n', " ").trim() }).to_string()
}

fn main() -> ExitCode {
    let args = match config::apply(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("{}", error_line("config", &format!("{e:#}")));
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let detail = e.render().to_string();
            let first = detail.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("{}", error_line("usage", first));
            return ExitCode::from(2);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = error_kind(&e);
            eprintln!("{}", error_line(kind, &format!("{e:#}")));
            ExitCode::FAILURE
        }
    }
}
