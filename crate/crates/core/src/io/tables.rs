//! CSV traces and logs, and the JSON session summary.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::abr::{EpisodeRecord, TrainLog};
use crate::error::Result;
use crate::flowfield::ViewpointSample;
use crate::sim::{BandwidthTrace, SessionLog, ViewpointTrace};

#[derive(Serialize, Deserialize)]
struct BandwidthRow {
    t_seconds: f64,
    throughput_bps: f64,
}

#[derive(Serialize, Deserialize)]
struct ViewpointRow {
    t_seconds: f64,
    yaw_deg: f64,
    pitch_deg: f64,
}

fn rows<T: for<'de> Deserialize<'de>>(r: impl Read) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let mut out = Vec::new();
    for row in reader.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

fn write_rows<T: Serialize>(w: impl Write, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_bandwidth(r: impl Read) -> Result<BandwidthTrace> {
    let rows: Vec<BandwidthRow> = rows(r)?;
    BandwidthTrace::new(rows.into_iter().map(|r| (r.t_seconds, r.throughput_bps)).collect())
}

pub fn write_bandwidth(w: impl Write, trace: &BandwidthTrace) -> Result<()> {
    write_rows(w, trace.samples().iter().map(|&(t, b)| BandwidthRow { t_seconds: t, throughput_bps: b }))
}

/// Gaze velocity is not stored; read samples carry zero velocity.
pub fn read_viewpoints(r: impl Read) -> Result<ViewpointTrace> {
    let rows: Vec<ViewpointRow> = rows(r)?;
    ViewpointTrace::new(rows.into_iter().map(|r| ViewpointSample::new(r.t_seconds, r.yaw_deg, r.pitch_deg)).collect())
}

pub fn write_viewpoints(w: impl Write, trace: &ViewpointTrace) -> Result<()> {
    write_rows(w, trace.samples().iter().map(|s| ViewpointRow { t_seconds: s.t, yaw_deg: s.yaw, pitch_deg: s.pitch }))
}

pub fn load_bandwidth(path: &Path) -> Result<BandwidthTrace> {
    read_bandwidth(std::fs::File::open(path)?)
}

pub fn save_bandwidth(path: &Path, trace: &BandwidthTrace) -> Result<()> {
    write_bandwidth(std::fs::File::create(path)?, trace)
}

pub fn load_viewpoints(path: &Path) -> Result<ViewpointTrace> {
    read_viewpoints(std::fs::File::open(path)?)
}

pub fn save_viewpoints(path: &Path, trace: &ViewpointTrace) -> Result<()> {
    write_viewpoints(std::fs::File::create(path)?, trace)
}

#[derive(Serialize)]
struct ChunkRow {
    chunk: usize,
    core: usize,
    surround: usize,
    outside: usize,
    budget_core: u64,
    budget_surround: u64,
    budget_outside: u64,
    bytes: u64,
    start: f64,
    sleep: f64,
    download_time: f64,
    rebuffer: f64,
    buffer_before: f64,
    buffer_after: f64,
    psnr_of: f64,
    ratio: f64,
    bitrate_core: f64,
    bitrate_surround: f64,
    bitrate_outside: f64,
    reward: f64,
}

/// One row per chunk.
pub fn write_session_csv(w: impl Write, log: &SessionLog) -> Result<()> {
    write_rows(
        w,
        log.chunks.iter().map(|c| ChunkRow {
            chunk: c.chunk,
            core: c.action.core,
            surround: c.action.surround,
            outside: c.action.outside,
            budget_core: c.budgets[0],
            budget_surround: c.budgets[1],
            budget_outside: c.budgets[2],
            bytes: c.outcome.bytes,
            start: c.start,
            sleep: c.sleep,
            download_time: c.outcome.download_time,
            rebuffer: c.outcome.rebuffer,
            buffer_before: c.buffer_before,
            buffer_after: c.buffer_after,
            psnr_of: c.outcome.psnr_of,
            ratio: c.outcome.ratio,
            bitrate_core: c.outcome.area_bitrates[0],
            bitrate_surround: c.outcome.area_bitrates[1],
            bitrate_outside: c.outcome.area_bitrates[2],
            reward: c.reward,
        }),
    )
}

/// Session aggregates, written as JSON next to the per-chunk CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub video_id: String,
    pub controller: String,
    pub chunks: usize,
    pub mean_psnr_of: f64,
    pub rebuffer_ratio: f64,
    pub total_rebuffer: f64,
    pub startup_delay: f64,
    pub wall_clock: f64,
    pub total_reward: f64,
    pub total_bytes: u64,
}

impl From<&SessionLog> for SessionSummary {
    fn from(log: &SessionLog) -> Self {
        SessionSummary {
            video_id: log.video_id.clone(),
            controller: log.controller.clone(),
            chunks: log.chunks.len(),
            mean_psnr_of: log.mean_psnr_of,
            rebuffer_ratio: log.rebuffer_ratio,
            total_rebuffer: log.total_rebuffer,
            startup_delay: log.startup_delay,
            wall_clock: log.wall_clock,
            total_reward: log.total_reward,
            total_bytes: log.total_bytes,
        }
    }
}

pub fn write_train_log(w: impl Write, log: &TrainLog) -> Result<()> {
    write_rows(w, log.episodes.iter())
}

pub fn read_train_log(r: impl Read) -> Result<Vec<EpisodeRecord>> {
    rows(r)
}
