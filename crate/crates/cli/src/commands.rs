use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use ofbvr::abr::{train_from, Optimizer, TrainConfig};
use ofbvr::flowfield::{depth_proxy_map, estimate_flow, relative_depth_map, relative_velocity_map};
use ofbvr::io::{self, BandwidthProfile, SessionSummary, VideoManifest, VideoSpec};
use ofbvr::perception::joint_jnd;
use ofbvr::qoe::{efficiency, psnr, psnr_of, tile_scores};
use ofbvr::sim::{
    run_session, Controller, FixedActionController, FixedGridController, PolicyController, PreparedVideo,
    RandomController, RateController, Scoring, SimEnv,
};
use ofbvr::tiling::{build_layout, EfficiencyGrid};
use ofbvr::{
    Action, BandwidthTrace, JndConfig, JndMap, PolicyParams, QualityLadder, SessionConfig, TileScoreGrid,
    ViewpointSample, ViewpointTrace,
};

use crate::{
    Command, EvalArgs, FlowArgs, GenBwArgs, GenCommand, GenScaleArgs, GenVideoArgs, JndArgs, OptimizerArg, ProfileArg,
    ScoreArgs, SessionArgs, SimulateArgs, TileArgs, TrainArgs,
};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Flow(a) => flow(a),
        Command::Jnd(a) => jnd(a),
        Command::Score(a) => score(a),
        Command::Tile(a) => tile(a),
        Command::Simulate(a) => simulate(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Gen(GenCommand::Video(a)) => gen_video(a),
        Command::Gen(GenCommand::Bw(a)) => gen_bw(a),
        Command::Gen(GenCommand::Scale(a)) => gen_scale(a),
    }
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(ofbvr::Error::from).with_context(|| format!("parsing {}", path.display()))
}

fn flow(a: FlowArgs) -> Result<()> {
    let prev = io::read_frame(&a.prev)?;
    let next = io::read_frame(&a.next)?;
    let flow = estimate_flow(&prev, &next, a.block, a.radius)?;
    io::save_flow(&a.out, &flow)?;
    if let Some(p) = &a.dv {
        io::save_scalar_map(p, &relative_velocity_map(&flow, [a.gaze_vx, a.gaze_vy]))?;
    }
    if let Some(p) = &a.dd {
        let depth = depth_proxy_map(&flow, a.background_eps)?;
        let vp = ViewpointSample::new(0.0, a.yaw, a.pitch);
        io::save_scalar_map(p, &relative_depth_map(&depth, &vp)?)?;
    }
    Ok(())
}

fn jnd(a: JndArgs) -> Result<()> {
    let dv = io::load_scalar_map(&a.dv)?;
    let dd = io::load_scalar_map(&a.dd)?;
    let map = joint_jnd(&dv, &dd, &JndConfig::new(a.lambda)?)?;
    io::save_jnd(&a.out, &map)?;
    Ok(())
}

#[derive(Serialize)]
struct FrameScore {
    file: String,
    psnr_of: f64,
    psnr: f64,
}

#[derive(Serialize)]
struct ScoreReport {
    frames: Vec<FrameScore>,
    /// `[row][col][level]`, blank level first.
    #[serde(skip_serializing_if = "Option::is_none")]
    tile_scores: Option<Vec<Vec<Vec<f64>>>>,
    /// `[row][col]`, mean gain per level from the lowest to the highest.
    #[serde(skip_serializing_if = "Option::is_none")]
    efficiency: Option<Vec<Vec<f64>>>,
}

fn score(a: ScoreArgs) -> Result<()> {
    let orig = io::read_frame(&a.orig)?;
    let encoded = a.enc.iter().map(|p| io::read_frame(p)).collect::<ofbvr::Result<Vec<_>>>()?;
    let map = match &a.jnd {
        Some(p) => io::load_jnd(p)?,
        None => JndMap::zeros(orig.width(), orig.height()),
    };
    let mut frames = Vec::new();
    for (path, enc) in a.enc.iter().zip(&encoded) {
        frames.push(FrameScore {
            file: path.display().to_string(),
            psnr_of: psnr_of(&orig, enc, &map, a.cap)?,
            psnr: psnr(&orig, enc, a.cap)?,
        });
    }
    let ladder = QualityLadder::default();
    let mut report = ScoreReport { frames, tile_scores: None, efficiency: None };
    if encoded.len() == ladder.len() - 1 {
        let scores = tile_scores(&orig, &encoded, &map, &ladder, a.cap)?;
        let (rows, cols, levels) = (ofbvr::GRID_ROWS, ofbvr::GRID_COLS, ladder.len());
        // sizes play no part in efficiency; any increasing placeholder will do
        let sizes = (0..rows * cols).flat_map(|_| 0..levels as u64).collect();
        let grid = TileScoreGrid::new(rows, cols, levels, scores.clone(), sizes)?;
        let eff = efficiency(&grid, ladder.top(), 1)?;
        report.tile_scores =
            Some(scores.chunks(cols * levels).map(|r| r.chunks(levels).map(<[f64]>::to_vec).collect()).collect());
        report.efficiency = Some(eff.chunks(cols).map(<[f64]>::to_vec).collect());
    }
    write_or_print(a.out.as_deref(), &serde_json::to_string_pretty(&report)?)
}

#[derive(Deserialize)]
struct EfficiencyFile {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

fn tile(a: TileArgs) -> Result<()> {
    let grid = match (&a.efficiency, &a.scores) {
        (Some(p), None) => {
            let f: EfficiencyFile = read_json(p)?;
            EfficiencyGrid::new(f.rows, f.cols, f.values)?
        }
        (None, Some(p)) => {
            let scores: TileScoreGrid = read_json(p)?;
            EfficiencyGrid::new(scores.rows(), scores.cols(), efficiency(&scores, a.high, a.low)?)?
        }
        _ => bail!("give exactly one of --efficiency or --scores"),
    };
    let layout = build_layout(&grid, a.k)?;
    write_or_print(a.out.as_deref(), &serde_json::to_string_pretty(&layout)?)
}

impl SessionArgs {
    fn config(&self) -> SessionConfig {
        SessionConfig {
            buffer_cap: self.buffer_cap,
            startup_threshold: self.startup_threshold,
            fov_deg: self.fov,
            margin_deg: self.margin,
            alpha: self.alpha,
            beta: self.beta,
            predict_window: self.predict_window,
            ..SessionConfig::default()
        }
    }

    /// The session config with the chunk duration taken from the videos.
    fn config_for(&self, videos: &[LoadedVideo]) -> Result<SessionConfig> {
        let mut cfg = self.config();
        if let Some(v) = videos.first() {
            cfg.chunk_duration = v.video.manifest.chunk_duration;
        }
        if videos.iter().any(|v| (v.video.manifest.chunk_duration - cfg.chunk_duration).abs() > 1e-9) {
            bail!("all videos must share one chunk duration");
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

const MANIFEST_SUFFIX: &str = ".manifest.json";
const VIEWPOINT_SUFFIX: &str = ".viewpoints.csv";

fn viewpoints_for(manifest: &Path) -> PathBuf {
    let name = manifest.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    let stem = name.strip_suffix(MANIFEST_SUFFIX).or_else(|| name.strip_suffix(".json")).unwrap_or(name);
    manifest.with_file_name(format!("{stem}{VIEWPOINT_SUFFIX}"))
}

struct LoadedVideo {
    video: Arc<PreparedVideo>,
    viewpoints: Arc<ViewpointTrace>,
}

fn load_video(manifest: &Path, viewpoints: Option<&Path>) -> Result<LoadedVideo> {
    let m = VideoManifest::load(manifest).with_context(|| format!("loading {}", manifest.display()))?;
    let vp_path = viewpoints.map_or_else(|| viewpoints_for(manifest), Path::to_path_buf);
    let vp = io::load_viewpoints(&vp_path).with_context(|| format!("loading {}", vp_path.display()))?;
    Ok(LoadedVideo { video: Arc::new(PreparedVideo::new(m)?), viewpoints: Arc::new(vp) })
}

fn sorted_files(dir: &Path, suffix: &str) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_str().is_some_and(|s| s.ends_with(suffix)))
        .collect();
    out.sort();
    Ok(out)
}

fn load_videos(dir: &Path) -> Result<Vec<LoadedVideo>> {
    let files = sorted_files(dir, MANIFEST_SUFFIX)?;
    if files.is_empty() {
        bail!(ofbvr::Error::Input(format!("no *{MANIFEST_SUFFIX} files in {}", dir.display())));
    }
    files.iter().map(|f| load_video(f, None)).collect()
}

/// Named traces from a CSV file or a directory of them.
fn load_traces(path: &Path) -> Result<Vec<(String, Arc<BandwidthTrace>)>> {
    let files = if path.is_dir() { sorted_files(path, ".csv")? } else { vec![path.to_path_buf()] };
    if files.is_empty() {
        bail!(ofbvr::Error::Input(format!("no bandwidth CSVs in {}", path.display())));
    }
    files
        .into_iter()
        .map(|f| {
            let name = f.file_stem().and_then(|s| s.to_str()).unwrap_or("trace").to_string();
            let tr = io::load_bandwidth(&f).with_context(|| format!("loading {}", f.display()))?;
            Ok((name, Arc::new(tr)))
        })
        .collect()
}

fn make_controller(spec: &str, params: Option<&PolicyParams>, seed: u64) -> Result<Box<dyn Controller + Send>> {
    Ok(match spec {
        "rate" => Box::new(RateController),
        "fixed_grid" => Box::new(FixedGridController),
        "random" => Box::new(RandomController::new(seed)),
        "top" => Box::new(FixedActionController::top()),
        "rl" => match params {
            Some(p) => Box::new(PolicyController::new(p.clone())),
            None => bail!(ofbvr::Error::Input("the rl controller needs --params".into())),
        },
        other => {
            let Some(levels) = other.strip_prefix("fixed:") else {
                bail!(ofbvr::Error::Input(format!("unknown controller {other:?}")));
            };
            let l: Vec<usize> = levels
                .split(',')
                .map(|v| v.trim().parse())
                .collect::<Result<_, _>>()
                .map_err(|_| ofbvr::Error::Input(format!("bad levels in {other:?}")))?;
            let [c, s, o] = l[..] else {
                bail!(ofbvr::Error::Input(format!("{other:?} needs three levels")));
            };
            Box::new(FixedActionController { action: Action::new(c, s, o)?, scoring: Scoring::Perceptual })
        }
    })
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let v = load_video(&a.manifest, a.viewpoints.as_deref())?;
    let bw = Arc::new(io::load_bandwidth(&a.bandwidth)?);
    let params = a.params.as_deref().map(io::load_params).transpose()?;
    let mut controller = make_controller(&a.controller, params.as_ref(), a.seed)?;
    let cfg = a.session.config_for(std::slice::from_ref(&v))?;
    let log = run_session(controller.as_mut(), v.video, bw, v.viewpoints, &cfg)?;
    if let Some(p) = &a.out {
        io::write_session_csv(BufWriter::new(File::create(p)?), &log)?;
    }
    let summary = SessionSummary::from(&log);
    write_or_print(a.summary.as_deref(), &serde_json::to_string_pretty(&summary)?)
}

fn train(a: TrainArgs) -> Result<()> {
    let videos = load_videos(&a.videos)?;
    let traces = load_traces(&a.traces)?;
    let cfg = a.session.config_for(&videos)?;
    let env = SimEnv::new(
        videos.into_iter().map(|v| (v.video, v.viewpoints)).collect(),
        traces.into_iter().map(|(_, t)| t).collect(),
        cfg,
    )?;
    let tcfg = TrainConfig {
        gamma: a.gamma,
        actor_lr: a.actor_lr,
        critic_lr: a.critic_lr,
        n_steps: a.n_steps,
        entropy_start: a.entropy_start,
        entropy_end: a.entropy_end,
        reward_scale: a.reward_scale,
        optimizer: match a.optimizer {
            OptimizerArg::Sgd => Optimizer::Sgd,
            OptimizerArg::Adam => Optimizer::Adam,
        },
        max_grad_norm: a.max_grad_norm,
        seed: a.seed,
        workers: a.workers,
    };
    let init = match &a.init {
        Some(p) => io::load_params(p)?,
        None => PolicyParams::new(a.seed),
    };
    let (params, log) = train_from(init, &env, a.episodes, &tcfg)?;
    io::save_params(&a.out, &params)?;
    if let Some(p) = &a.log {
        io::write_train_log(BufWriter::new(File::create(p)?), &log)?;
    }
    if let Some(msg) = log.aborted {
        bail!(ofbvr::Error::Training(format!("{msg} (partial parameters and log written)")));
    }
    Ok(())
}

#[derive(Serialize)]
struct EvalRow {
    controller: String,
    trace: String,
    sessions: usize,
    mean_reward: f64,
    mean_psnr_of: f64,
    mean_rebuffer_ratio: f64,
    mean_rebuffer_s: f64,
    mean_startup_s: f64,
    mean_bitrate_bps: f64,
}

fn eval(a: EvalArgs) -> Result<()> {
    let videos = load_videos(&a.videos)?;
    let traces = load_traces(&a.traces)?;
    let cfg = a.session.config_for(&videos)?;
    let params = a.params.as_deref().map(io::load_params).transpose()?;
    // validate every controller name before running anything
    for c in &a.controllers {
        make_controller(c, params.as_ref(), a.seed)?;
    }
    let jobs: Vec<(usize, usize)> =
        (0..a.controllers.len()).flat_map(|c| (0..traces.len()).map(move |t| (c, t))).collect();
    let run_job = |&(ci, ti): &(usize, usize)| -> Result<EvalRow> {
        let mut controller = make_controller(&a.controllers[ci], params.as_ref(), a.seed)?;
        let (name, trace) = &traces[ti];
        let mut acc = [0.0; 6];
        for v in &videos {
            let log = run_session(controller.as_mut(), v.video.clone(), trace.clone(), v.viewpoints.clone(), &cfg)?;
            let seconds = v.video.manifest.duration();
            let vals = [
                log.total_reward,
                log.mean_psnr_of,
                log.rebuffer_ratio,
                log.total_rebuffer,
                log.startup_delay,
                8.0 * log.total_bytes as f64 / seconds,
            ];
            for (s, x) in acc.iter_mut().zip(vals) {
                *s += x;
            }
        }
        let n = videos.len() as f64;
        Ok(EvalRow {
            controller: controller.name(),
            trace: name.clone(),
            sessions: videos.len(),
            mean_reward: acc[0] / n,
            mean_psnr_of: acc[1] / n,
            mean_rebuffer_ratio: acc[2] / n,
            mean_rebuffer_s: acc[3] / n,
            mean_startup_s: acc[4] / n,
            mean_bitrate_bps: acc[5] / n,
        })
    };
    let workers = a.jobs.clamp(1, jobs.len().max(1));
    let mut rows: BTreeMap<usize, EvalRow> = BTreeMap::new();
    std::thread::scope(|scope| -> Result<()> {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let (jobs, run_job) = (&jobs, &run_job);
                scope.spawn(move || {
                    jobs.iter()
                        .enumerate()
                        .skip(w)
                        .step_by(workers)
                        .map(|(i, j)| run_job(j).map(|r| (i, r)))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        for h in handles {
            rows.extend(h.join().expect("eval worker panicked")?);
        }
        Ok(())
    })?;
    let out: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv_writer(out);
    for row in rows.values() {
        w.serialize(row).map_err(ofbvr::Error::from)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::Writer::from_writer(w)
}

fn gen_video(a: GenVideoArgs) -> Result<()> {
    let mut spec: VideoSpec = match &a.spec {
        Some(p) => read_json(p)?,
        None => VideoSpec::default(),
    };
    if let Some(c) = a.chunks {
        spec.chunk_count = c;
    }
    std::fs::create_dir_all(&a.out)?;
    for seed in a.seed..a.seed + a.count {
        let v = io::gen_synthetic_video(&spec, seed)?;
        let id = v.manifest.video_id.clone();
        v.manifest.save(&a.out.join(format!("{id}{MANIFEST_SUFFIX}")))?;
        io::save_viewpoints(&a.out.join(format!("{id}{VIEWPOINT_SUFFIX}")), &v.viewpoints)?;
        if a.frames > 0 {
            let scene = io::Scene::new(&spec, seed)?;
            let dir = a.out.join(format!("{id}.frames"));
            std::fs::create_dir_all(&dir)?;
            for i in 0..a.frames {
                io::write_pgm(&dir.join(format!("{i:05}.pgm")), &scene.frame(i))?;
            }
        }
    }
    Ok(())
}

fn gen_bw(a: GenBwArgs) -> Result<()> {
    let profile = match a.profile {
        ProfileArg::Constant => BandwidthProfile::Constant { bps: a.bps },
        ProfileArg::TwoBand => BandwidthProfile::TwoBand { high: a.high, low: a.low, period: a.period },
        ProfileArg::RandomWalk => BandwidthProfile::RandomWalk {
            start: a.start,
            sigma: a.sigma,
            min: a.min,
            max: a.max,
            interval: a.interval,
            reversion: a.reversion,
        },
    };
    let mut trace = io::gen_synthetic_bw(&profile, a.duration, a.seed)?;
    if let Some(m) = a.mean {
        trace = io::scale_trace(&trace, m)?;
    }
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    io::save_bandwidth(&a.out, &trace)?;
    Ok(())
}

fn gen_scale(a: GenScaleArgs) -> Result<()> {
    let trace = io::load_bandwidth(&a.input)?;
    io::save_bandwidth(&a.out, &io::scale_trace(&trace, a.mean)?)?;
    Ok(())
}
