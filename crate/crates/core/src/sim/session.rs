use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::controllers::Controller;
use super::trace::{predict_viewpoint_window, BandwidthTrace, ViewpointTrace, DEFAULT_PREDICT_WINDOW};
use crate::abr::{
    allocate_with_options, chunk_reward, classify_areas, rect_options, window_cells, AbrState, Action, Area,
    ChunkOutcome, LevelOption, DEFAULT_FOV_DEG, DEFAULT_MARGIN_DEG, DEFAULT_REWARD_ALPHA, DEFAULT_REWARD_BETA, LEVELS,
};
use crate::error::{input_err, Error, Result};
use crate::flowfield::ViewpointSample;
use crate::io::VideoManifest;
use crate::tiling::TileLayout;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    /// Seconds of content per chunk; must match the manifest.
    pub chunk_duration: f64,
    /// Seconds of content the client may hold.
    pub buffer_cap: f64,
    /// Buffered seconds needed before playback starts.
    pub startup_threshold: f64,
    pub fov_deg: f64,
    pub margin_deg: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Viewpoint samples used by the gaze predictor.
    pub predict_window: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            chunk_duration: 1.0,
            buffer_cap: 8.0,
            startup_threshold: 2.0,
            fov_deg: DEFAULT_FOV_DEG,
            margin_deg: DEFAULT_MARGIN_DEG,
            alpha: DEFAULT_REWARD_ALPHA,
            beta: DEFAULT_REWARD_BETA,
            predict_window: DEFAULT_PREDICT_WINDOW,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.chunk_duration, self.buffer_cap, self.startup_threshold, self.fov_deg];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(input_err!("chunk duration, buffer cap, startup threshold and fov must be positive"));
        }
        if self.startup_threshold > self.buffer_cap {
            return Err(input_err!("startup threshold exceeds buffer cap"));
        }
        if self.buffer_cap < self.chunk_duration {
            return Err(input_err!("buffer cap must hold at least one chunk"));
        }
        if self.margin_deg < 0.0 || self.alpha < 0.0 || self.beta < 0.0 {
            return Err(input_err!("margin and reward weights must be >= 0"));
        }
        Ok(())
    }
}

/// Which layout and scores a controller allocates with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scoring {
    /// The manifest's versatile layout with PSNR-OF tile scores.
    Perceptual,
    /// Every basic tile on its own, scored by plain PSNR.
    FixedGrid,
}

/// A manifest with the per-chunk allocation inputs precomputed.
#[derive(Debug, Clone)]
pub struct PreparedVideo {
    pub manifest: VideoManifest,
    fixed: TileLayout,
    owners: [Vec<usize>; 2],
    options: [Vec<Vec<Vec<LevelOption>>>; 2],
}

impl PreparedVideo {
    pub fn new(manifest: VideoManifest) -> Result<Self> {
        manifest.validate()?;
        let fixed = TileLayout::fixed_grid(manifest.layout.rows, manifest.layout.cols);
        let perceptual = manifest.chunks.iter().map(|c| rect_options(&c.jnd, &manifest.layout)).collect();
        let plain = manifest.chunks.iter().map(|c| rect_options(&c.plain, &fixed)).collect();
        Ok(PreparedVideo {
            owners: [manifest.layout.cell_owners(), fixed.cell_owners()],
            options: [perceptual, plain],
            fixed,
            manifest,
        })
    }

    pub fn layout(&self, scoring: Scoring) -> &TileLayout {
        match scoring {
            Scoring::Perceptual => &self.manifest.layout,
            Scoring::FixedGrid => &self.fixed,
        }
    }

    fn slot(scoring: Scoring) -> usize {
        match scoring {
            Scoring::Perceptual => 0,
            Scoring::FixedGrid => 1,
        }
    }
}

/// What a controller sees before choosing the next chunk's action.
#[derive(Debug, Clone)]
pub struct DecisionContext<'a> {
    pub state: &'a AbrState,
    pub chunk: usize,
    pub chunk_duration: f64,
    /// Bytes for each area (core, surround, outside) if every rectangle in it
    /// were sent at the given level.
    pub area_costs: [[u64; LEVELS]; 3],
    pub predicted: ViewpointSample,
}

impl DecisionContext<'_> {
    /// Total bytes of `action` before per-rectangle refinement.
    pub fn cost(&self, action: &Action) -> u64 {
        Area::ALL.iter().map(|&a| self.area_costs[a.index()][action.level(a)]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChunkRecord {
    pub chunk: usize,
    pub action: Action,
    pub budgets: [u64; 3],
    /// Wall-clock time the download started, seconds.
    pub start: f64,
    /// Idle wait before the download because the buffer was full.
    pub sleep: f64,
    pub buffer_before: f64,
    pub buffer_after: f64,
    pub reward: f64,
    pub outcome: ChunkOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub video_id: String,
    pub controller: String,
    pub chunks: Vec<ChunkRecord>,
    /// Seconds before playback began; not counted as rebuffering.
    pub startup_delay: f64,
    pub total_rebuffer: f64,
    /// Session length including the final buffer drain.
    pub wall_clock: f64,
    pub mean_psnr_of: f64,
    /// Rebuffer seconds over wall-clock seconds.
    pub rebuffer_ratio: f64,
    pub total_reward: f64,
    pub total_bytes: u64,
}

struct Pending {
    predicted: ViewpointSample,
    labels: Vec<Area>,
    area_costs: [[u64; LEVELS]; 3],
}

/// One playback session, advanced a chunk at a time.
pub struct Session {
    video: Arc<PreparedVideo>,
    bw: Arc<BandwidthTrace>,
    vp: Arc<ViewpointTrace>,
    cfg: SessionConfig,
    scoring: Scoring,
    chunk: usize,
    clock: f64,
    buffer: f64,
    playing: bool,
    state: AbrState,
    prev_psnr: Option<f64>,
    out_share_sum: f64,
    pending: Option<Pending>,
    records: Vec<ChunkRecord>,
    startup_delay: f64,
    stall: f64,
}

impl Session {
    pub fn new(
        video: Arc<PreparedVideo>,
        bw: Arc<BandwidthTrace>,
        vp: Arc<ViewpointTrace>,
        cfg: SessionConfig,
        scoring: Scoring,
    ) -> Result<Self> {
        cfg.validate()?;
        let m = &video.manifest;
        if (m.chunk_duration - cfg.chunk_duration).abs() > 1e-9 {
            return Err(input_err!(
                "manifest chunks last {}s but the session expects {}s",
                m.chunk_duration,
                cfg.chunk_duration
            ));
        }
        let duration = m.duration();
        if vp.end() + vp.interval() < duration {
            return Err(input_err!("viewpoint trace ({:.2}s) is shorter than the video ({duration:.2}s)", vp.end()));
        }
        if bw.end() - bw.start() < duration {
            return Err(input_err!(
                "bandwidth trace ({:.2}s) is shorter than the video ({duration:.2}s)",
                bw.end() - bw.start()
            ));
        }
        let state = AbrState { rate: bw.throughput_at(bw.start()), ..AbrState::default() };
        Ok(Session {
            clock: bw.start(),
            video,
            bw,
            vp,
            cfg,
            scoring,
            chunk: 0,
            buffer: 0.0,
            playing: false,
            state,
            prev_psnr: None,
            out_share_sum: 0.0,
            pending: None,
            records: Vec::new(),
            startup_delay: 0.0,
            stall: 0.0,
        })
    }

    pub fn state(&self) -> &AbrState {
        &self.state
    }

    pub fn chunk(&self) -> usize {
        self.chunk
    }

    pub fn is_done(&self) -> bool {
        self.chunk >= self.video.manifest.chunk_count
    }

    pub fn records(&self) -> &[ChunkRecord] {
        &self.records
    }

    fn prepare(&mut self) -> Result<()> {
        if self.pending.is_some() {
            return Ok(());
        }
        if self.is_done() {
            return Err(Error::SessionExhausted(self.chunk));
        }
        let d = self.cfg.chunk_duration;
        // content position under the playhead, and the middle of the next chunk
        let playhead = self.chunk as f64 * d - self.buffer;
        let target = (self.chunk as f64 + 0.5) * d;
        let predicted = predict_viewpoint_window(&self.vp, playhead, target - playhead, self.cfg.predict_window);
        let layout = self.video.layout(self.scoring);
        let labels = classify_areas(layout, &predicted, self.cfg.fov_deg, self.cfg.margin_deg);
        let options = &self.video.options[PreparedVideo::slot(self.scoring)][self.chunk];
        let mut area_costs = [[0u64; LEVELS]; 3];
        for (rect, area) in labels.iter().enumerate() {
            for (l, cost) in area_costs[area.index()].iter_mut().enumerate() {
                *cost += options[rect][l].size;
            }
        }
        self.pending = Some(Pending { predicted, labels, area_costs });
        Ok(())
    }

    /// Inputs for the next decision.
    pub fn context(&mut self) -> Result<DecisionContext<'_>> {
        self.prepare()?;
        let p = self.pending.as_ref().expect("prepared");
        Ok(DecisionContext {
            state: &self.state,
            chunk: self.chunk,
            chunk_duration: self.cfg.chunk_duration,
            area_costs: p.area_costs,
            predicted: p.predicted,
        })
    }

    /// Downloads the next chunk with `action` and plays the buffer forward.
    pub fn step(&mut self, action: Action) -> Result<(AbrState, ChunkOutcome)> {
        self.prepare()?;
        let Pending { labels, area_costs, .. } = self.pending.take().expect("prepared");
        let d = self.cfg.chunk_duration;
        let slot = PreparedVideo::slot(self.scoring);
        let options = &self.video.options[slot][self.chunk];

        let mut budgets = [0u64; 3];
        for a in Area::ALL {
            budgets[a.index()] = area_costs[a.index()][action.level(a)];
        }
        let levels = allocate_with_options(&labels, budgets, options);
        let mut area_bytes = [0u64; 3];
        for (rect, (&area, &l)) in labels.iter().zip(&levels).enumerate() {
            area_bytes[area.index()] += options[rect][l].size;
        }
        let bytes: u64 = area_bytes.iter().sum();

        let buffer_before = self.buffer;
        let sleep = if self.playing { (self.buffer + d - self.cfg.buffer_cap).max(0.0) } else { 0.0 };
        self.clock += sleep;
        self.buffer -= sleep;
        let start = self.clock;
        let dt = self.bw.download_time(bytes, start)?;
        let rebuffer = if self.playing {
            let r = (dt - self.buffer).max(0.0);
            self.buffer = (self.buffer - dt).max(0.0);
            r
        } else {
            self.startup_delay += dt;
            0.0
        };
        self.clock += dt;
        self.buffer += d;
        self.stall += rebuffer;
        let last = self.chunk + 1 == self.video.manifest.chunk_count;
        if !self.playing
            && (self.buffer >= self.cfg.startup_threshold - 1e-12 || self.buffer + d > self.cfg.buffer_cap || last)
        {
            self.playing = true;
        }

        let (psnr_of, ratio) = self.score_chunk(&labels, &levels);
        let outcome = ChunkOutcome {
            psnr_of,
            rebuffer,
            ratio,
            area_bitrates: area_bytes.map(|b| 8.0 * b as f64 / d),
            download_time: dt,
            bytes,
        };
        let reward = chunk_reward(self.prev_psnr, &outcome, self.cfg.alpha, self.cfg.beta);
        self.prev_psnr = Some(psnr_of);

        self.out_share_sum += if bytes > 0 { area_bytes[2] as f64 / bytes as f64 } else { 0.0 };
        self.state.push_chunk(&outcome);
        self.state.buffer = self.buffer;
        self.state.rate =
            if bytes > 0 && dt > 0.0 { 8.0 * bytes as f64 / dt } else { self.bw.throughput_at(self.clock) };
        self.state.acc_out = self.out_share_sum / (self.chunk + 1) as f64;

        self.records.push(ChunkRecord {
            chunk: self.chunk,
            action,
            budgets,
            start,
            sleep,
            buffer_before,
            buffer_after: self.buffer,
            reward,
            outcome,
        });
        self.chunk += 1;
        Ok((self.state.clone(), outcome))
    }

    /// Viewport PSNR-OF at the actual gaze, and the share of viewport tiles
    /// that had been predicted outside.
    fn score_chunk(&self, labels: &[Area], levels: &[usize]) -> (f64, f64) {
        let m = &self.video.manifest;
        let grid = &m.chunks[self.chunk].jnd;
        let owners = &self.video.owners[PreparedVideo::slot(self.scoring)];
        let actual = self.vp.sample_at((self.chunk as f64 + 0.5) * self.cfg.chunk_duration);
        let view = window_cells(grid.rows(), grid.cols(), actual.yaw, actual.pitch, self.cfg.fov_deg);
        let (mut sum, mut seen, mut missed) = (0.0, 0usize, 0usize);
        for (cell, _) in view.iter().enumerate().filter(|(_, v)| **v) {
            let rect = owners[cell];
            sum += grid.score(cell / grid.cols(), cell % grid.cols(), levels[rect]);
            seen += 1;
            if labels[rect] == Area::Outside {
                missed += 1;
            }
        }
        if seen == 0 {
            return (0.0, 0.0);
        }
        (sum / seen as f64, missed as f64 / seen as f64)
    }

    /// Ends the session, draining the buffer, and returns the log.
    pub fn finish(self, controller: &str) -> SessionLog {
        let wall_clock = self.clock - self.bw.start() + self.buffer;
        let n = self.records.len().max(1) as f64;
        SessionLog {
            video_id: self.video.manifest.video_id.clone(),
            controller: controller.to_string(),
            startup_delay: self.startup_delay,
            total_rebuffer: self.stall,
            wall_clock,
            mean_psnr_of: self.records.iter().map(|r| r.outcome.psnr_of).sum::<f64>() / n,
            rebuffer_ratio: if wall_clock > 0.0 { self.stall / wall_clock } else { 0.0 },
            total_reward: self.records.iter().map(|r| r.reward).sum(),
            total_bytes: self.records.iter().map(|r| r.outcome.bytes).sum(),
            chunks: self.records,
        }
    }
}

/// Plays a whole video with `controller`.
pub fn run_session(
    controller: &mut dyn Controller,
    video: Arc<PreparedVideo>,
    bw: Arc<BandwidthTrace>,
    vp: Arc<ViewpointTrace>,
    cfg: &SessionConfig,
) -> Result<SessionLog> {
    let mut session = Session::new(video, bw, vp, *cfg, controller.scoring())?;
    controller.reset();
    while !session.is_done() {
        let action = controller.decide(&session.context()?)?;
        session.step(action)?;
    }
    Ok(session.finish(&controller.name()))
}
