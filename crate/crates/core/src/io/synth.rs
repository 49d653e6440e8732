//! Synthetic videos, gaze traces and bandwidth traces, all deterministic in
//! their seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::manifest::{ChunkGrids, VideoManifest, MANIFEST_VERSION};
use crate::error::{input_err, Result};
use crate::flowfield::{
    depth_proxy_map, estimate_flow, relative_depth_map, relative_velocity_map, wrap_yaw, FlowField, Frame,
    ViewpointSample, DEFAULT_BACKGROUND_EPS,
};
use crate::perception::{joint_jnd, JndConfig, JndMap};
use crate::qoe::{efficiency, synthetic_encode, tile_scores, QualityLadder, TileScoreGrid, DEFAULT_CAP_DB};
use crate::sim::{BandwidthTrace, ViewpointTrace};
use crate::tiling::{build_layout, EfficiencyGrid};
use crate::{GRID_COLS, GRID_ROWS};

/// Head-motion model for generated viewpoint traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GazeSpec {
    pub rate_hz: f64,
    /// Spread of the slow yaw drift velocity, degrees per second.
    pub drift_sd: f64,
    /// Pull of the drift velocity back toward zero, per second.
    pub reversion: f64,
    /// Expected quick re-orientations per second.
    pub saccade_rate: f64,
    /// Spread of pitch around the horizon, degrees.
    pub pitch_sd: f64,
}

impl Default for GazeSpec {
    fn default() -> Self {
        GazeSpec { rate_hz: 30.0, drift_sd: 6.0, reversion: 0.5, saccade_rate: 0.03, pitch_sd: 10.0 }
    }
}

/// Parameters of a synthetic moving-pattern video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VideoSpec {
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    pub chunk_count: usize,
    pub chunk_duration: f64,
    /// Number of foreground rectangles.
    pub objects: usize,
    /// Horizontal speed, pixels per frame, of objects on each depth layer
    /// (farthest first). All zero gives a static scene.
    pub layer_speeds: Vec<f64>,
    /// Bytes of a level-1 tile of average texture over one second.
    pub base_size: f64,
    pub block: usize,
    pub radius: usize,
    pub lambda: f64,
    pub k: usize,
    pub cap_db: f64,
    pub gaze: GazeSpec,
}

impl Default for VideoSpec {
    fn default() -> Self {
        VideoSpec {
            width: 240,
            height: 120,
            fps: 30.0,
            chunk_count: 60,
            chunk_duration: 1.0,
            objects: 5,
            layer_speeds: vec![1.0, 2.0, 3.0],
            base_size: 220.0,
            block: 8,
            radius: 4,
            lambda: JndConfig::default().lambda,
            k: 50,
            cap_db: DEFAULT_CAP_DB,
            gaze: GazeSpec::default(),
        }
    }
}

impl VideoSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0
            || self.height == 0
            || !self.width.is_multiple_of(GRID_COLS)
            || !self.height.is_multiple_of(GRID_ROWS)
        {
            return Err(input_err!(
                "frame {}x{} must be a positive multiple of {GRID_COLS}x{GRID_ROWS}",
                self.width,
                self.height
            ));
        }
        if self.chunk_count == 0 || !(self.chunk_duration > 0.0) || !(self.fps > 0.0) {
            return Err(input_err!("chunk count, chunk duration and fps must be positive"));
        }
        if self.layer_speeds.is_empty() || self.layer_speeds.iter().any(|s| !s.is_finite()) {
            return Err(input_err!("need at least one finite layer speed"));
        }
        if !(self.base_size >= 1.0) || self.block == 0 {
            return Err(input_err!("base size must be >= 1 byte and block positive"));
        }
        if !(self.gaze.rate_hz > 0.0) {
            return Err(input_err!("gaze sampling rate must be positive"));
        }
        Ok(())
    }
}

fn hash3(x: u64, y: u64, seed: u64) -> u64 {
    let mut h = x.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ y.wrapping_mul(0xc2b2_ae3d_27d4_eb4f) ^ seed;
    h ^= h >> 31;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 29;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 32)
}

fn unit(x: u64, y: u64, seed: u64) -> f64 {
    (hash3(x, y, seed) >> 11) as f64 / (1u64 << 53) as f64
}

/// Bilinear value noise on a lattice of spacing `cell`, wrapping every
/// `period` lattice columns.
fn value_noise(x: f64, y: f64, cell: f64, period: u64, seed: u64) -> f64 {
    let (gx, gy) = (x / cell, y / cell);
    let (x0, y0) = (gx.floor(), gy.floor());
    let (fx, fy) = (gx - x0, gy - y0);
    let xi = (x0 as i64).rem_euclid(period as i64) as u64;
    let xj = (xi + 1) % period;
    let yi = y0.max(0.0) as u64;
    let v = |a, b| unit(a, b, seed);
    let top = v(xi, yi) * (1.0 - fx) + v(xj, yi) * fx;
    let bot = v(xi, yi + 1) * (1.0 - fx) + v(xj, yi + 1) * fx;
    top * (1.0 - fy) + bot * fy
}

#[derive(Debug, Clone)]
struct Object {
    x: f64,
    y: f64,
    w: usize,
    h: usize,
    speed: f64,
    layer: usize,
    tone: f64,
    seed: u64,
}

/// The moving-pattern scene behind a synthetic video.
#[derive(Debug, Clone)]
pub struct Scene {
    width: usize,
    height: usize,
    background: Vec<f64>,
    objects: Vec<Object>,
}

impl Scene {
    pub fn new(spec: &VideoSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let (w, h) = (spec.width, spec.height);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tex_seed: u64 = rng.random();
        // texture strength varies smoothly over the sphere so tiles differ
        let amp_cell = w as f64 / 6.0;
        let amp_period = 6;
        let mut background = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let (fx, fy) = (x as f64, y as f64);
                let amp = 6.0 + 70.0 * value_noise(fx, fy, amp_cell, amp_period, tex_seed ^ 1).powi(2);
                let coarse = value_noise(fx, fy, 4.0, (w / 4) as u64, tex_seed ^ 2);
                let fine = unit(x as u64, y as u64, tex_seed ^ 3);
                let tone = 90.0 + 70.0 * value_noise(fx, fy, w as f64 / 4.0, 4, tex_seed ^ 4);
                background.push(tone + amp * (0.7 * coarse + 0.3 * fine - 0.5));
            }
        }
        let objects = (0..spec.objects)
            .map(|_| {
                let layer = rng.random_range(0..spec.layer_speeds.len());
                let dir = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                Object {
                    x: rng.random_range(0.0..w as f64),
                    y: rng.random_range(0.1 * h as f64..0.7 * h as f64),
                    w: rng.random_range(w / 12..=w / 5),
                    h: rng.random_range(h / 10..=h / 4),
                    speed: dir * spec.layer_speeds[layer],
                    layer,
                    tone: if rng.random_bool(0.5) { 50.0 } else { 200.0 },
                    seed: rng.random(),
                }
            })
            .collect::<Vec<_>>();
        let mut objects = objects;
        objects.sort_by_key(|o| o.layer);
        Ok(Scene { width: w, height: h, background, objects })
    }

    /// Frame number `i`, 8-bit.
    pub fn frame(&self, i: usize) -> Frame {
        let (w, h) = (self.width, self.height);
        let mut px = self.background.clone();
        for o in &self.objects {
            let ox = (o.x + o.speed * i as f64).round() as i64;
            let oy = o.y as usize;
            for dy in 0..o.h.min(h.saturating_sub(oy)) {
                for dx in 0..o.w {
                    let x = (ox + dx as i64).rem_euclid(w as i64) as usize;
                    let v = o.tone
                        + 50.0
                            * (0.7 * value_noise(dx as f64, dy as f64, 3.0, 1 << 20, o.seed)
                                + 0.3 * unit(dx as u64, dy as u64, o.seed)
                                - 0.5);
                    px[(oy + dy) * w + x] = v;
                }
            }
        }
        Frame::new(w, h, 8, px.into_iter().map(|v| v.round().clamp(0.0, 255.0) as u16).collect())
            .expect("dimensions validated")
    }
}

/// A generated video: its manifest and the companion gaze trace the JND maps
/// were computed for.
#[derive(Debug, Clone)]
pub struct SyntheticVideo {
    pub manifest: VideoManifest,
    pub viewpoints: ViewpointTrace,
}

/// Gaze velocity at `t` in pixels per frame on a `width x height` frame.
fn gaze_velocity(trace: &ViewpointTrace, t: f64, fps: f64, width: usize, height: usize) -> [f64; 2] {
    let a = trace.sample_at(t);
    let b = trace.sample_at(t + 1.0 / fps);
    let vx = wrap_yaw(b.yaw - a.yaw) * width as f64 / 360.0;
    let vy = -(b.pitch - a.pitch) * height as f64 / 180.0;
    [vx, vy]
}

/// Flow, JND map, and the scored frame for one chunk.
pub struct ChunkAnalysis {
    pub frame: Frame,
    pub flow: FlowField,
    pub viewpoint: ViewpointSample,
    pub jnd: JndMap,
}

pub fn analyze_chunk(spec: &VideoSpec, scene: &Scene, vp: &ViewpointTrace, chunk: usize) -> Result<ChunkAnalysis> {
    let t = (chunk as f64 + 0.5) * spec.chunk_duration;
    let fi = (t * spec.fps).round() as usize;
    let frame = scene.frame(fi);
    let next = scene.frame(fi + 1);
    let flow = estimate_flow(&frame, &next, spec.block, spec.radius)?;
    let [vx, vy] = gaze_velocity(vp, t, spec.fps, spec.width, spec.height);
    let viewpoint = vp.sample_at(t).with_velocity(vx, vy);
    let dv = relative_velocity_map(&flow, viewpoint.velocity);
    let depth = depth_proxy_map(&flow, DEFAULT_BACKGROUND_EPS)?;
    let dd = relative_depth_map(&depth, &viewpoint)?;
    let jnd = joint_jnd(&dv, &dd, &JndConfig::new(spec.lambda)?)?;
    Ok(ChunkAnalysis { frame, flow, viewpoint, jnd })
}

/// Per-tile bytes at every level from texture and motion.
fn tile_sizes(spec: &VideoSpec, frame: &Frame, flow: &FlowField, levels: usize) -> Vec<u64> {
    let tw = spec.width / GRID_COLS;
    let th = spec.height / GRID_ROWS;
    let mut out = Vec::with_capacity(GRID_ROWS * GRID_COLS * levels);
    for r in 0..GRID_ROWS {
        for c in 0..GRID_COLS {
            let (mut s, mut s2, mut motion) = (0.0, 0.0, 0.0);
            for y in r * th..(r + 1) * th {
                for x in c * tw..(c + 1) * tw {
                    let p = f64::from(frame.get(x, y));
                    s += p;
                    s2 += p * p;
                    let [fx, fy] = flow.get(x, y);
                    motion += f64::from(fx).hypot(f64::from(fy));
                }
            }
            let n = (tw * th) as f64;
            let sd = (s2 / n - (s / n).powi(2)).max(0.0).sqrt();
            let texture = (0.4 + sd / 24.0).clamp(0.4, 2.5);
            let motion = 1.0 + 0.1 * motion / n;
            out.push(0);
            for l in 1..levels {
                let bytes = spec.base_size * 2f64.powi(l as i32 - 1) * texture * motion * spec.chunk_duration;
                out.push(bytes.round().max(l as f64) as u64);
            }
        }
    }
    out
}

/// Generates a moving-pattern video with its gaze trace and manifest.
pub fn gen_synthetic_video(spec: &VideoSpec, seed: u64) -> Result<SyntheticVideo> {
    spec.validate()?;
    let scene = Scene::new(spec, seed)?;
    let duration = spec.chunk_count as f64 * spec.chunk_duration;
    let viewpoints = gen_viewpoints(&spec.gaze, duration + 1.0, seed ^ 0x005e_ed0f_9a2e)?;
    let ladder = QualityLadder::default();
    let levels = ladder.len();
    let mut chunks = Vec::with_capacity(spec.chunk_count);
    let mut eff_sum = vec![0.0; GRID_ROWS * GRID_COLS];
    for chunk in 0..spec.chunk_count {
        let a = analyze_chunk(spec, &scene, &viewpoints, chunk)?;
        let encoded = (1..levels).map(|l| synthetic_encode(&a.frame, l)).collect::<Result<Vec<_>>>()?;
        let sizes = tile_sizes(spec, &a.frame, &a.flow, levels);
        let jnd_scores = tile_scores(&a.frame, &encoded, &a.jnd, &ladder, spec.cap_db)?;
        let zero = JndMap::zeros(spec.width, spec.height);
        let plain_scores = tile_scores(&a.frame, &encoded, &zero, &ladder, spec.cap_db)?;
        let jnd = TileScoreGrid::new(GRID_ROWS, GRID_COLS, levels, jnd_scores, sizes.clone())?;
        let plain = TileScoreGrid::new(GRID_ROWS, GRID_COLS, levels, plain_scores, sizes)?;
        for (acc, e) in eff_sum.iter_mut().zip(efficiency(&jnd, levels - 1, 1)?) {
            *acc += e;
        }
        chunks.push(ChunkGrids { jnd, plain });
    }
    let mean_eff = eff_sum.iter().map(|e| e / spec.chunk_count as f64).collect();
    let layout = build_layout(&EfficiencyGrid::new(GRID_ROWS, GRID_COLS, mean_eff)?, spec.k)?;
    let manifest = VideoManifest {
        version: MANIFEST_VERSION,
        video_id: format!("synth-{seed}"),
        chunk_count: spec.chunk_count,
        chunk_duration: spec.chunk_duration,
        fps: spec.fps,
        width: spec.width,
        height: spec.height,
        ladder,
        layout,
        chunks,
    };
    manifest.validate()?;
    Ok(SyntheticVideo { manifest, viewpoints })
}

/// A head-motion trace: slowly drifting yaw with occasional quick turns, and
/// pitch wandering around the horizon.
pub fn gen_viewpoints(spec: &GazeSpec, duration: f64, seed: u64) -> Result<ViewpointTrace> {
    if !(duration > 0.0) || !(spec.rate_hz > 0.0) {
        return Err(input_err!("viewpoint trace needs positive duration and rate"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let dt = 1.0 / spec.rate_hz;
    let n = (duration * spec.rate_hz).ceil() as usize + 1;
    let mut yaw: f64 = rng.random_range(-180.0..180.0);
    let mut pitch = 0.0;
    let mut vel = 0.0;
    let mut pitch_vel = 0.0;
    let mut saccade_left = 0usize;
    let mut saccade_step = 0.0;
    let turn_samples = (0.2 * spec.rate_hz).ceil().max(1.0) as usize;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        samples.push(ViewpointSample::new(i as f64 * dt, wrap_yaw(yaw), pitch));
        if saccade_left == 0 && rng.random_bool((spec.saccade_rate * dt).clamp(0.0, 1.0)) {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            saccade_step = sign * rng.random_range(40.0..120.0) / turn_samples as f64;
            saccade_left = turn_samples;
        }
        if saccade_left > 0 {
            yaw += saccade_step;
            saccade_left -= 1;
        }
        // Ornstein-Uhlenbeck drift so the gaze keeps a direction for a while
        vel += -spec.reversion * vel * dt + spec.drift_sd * (2.0 * spec.reversion * dt).sqrt() * std.sample(&mut rng);
        yaw += vel * dt;
        pitch_vel += -pitch_vel * dt - 0.5 * pitch * dt + spec.pitch_sd * dt.sqrt() * std.sample(&mut rng);
        pitch = (pitch + pitch_vel * dt).clamp(-80.0, 80.0);
    }
    ViewpointTrace::new(samples)
}

/// Shapes offered by [`gen_synthetic_bw`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum BandwidthProfile {
    Constant {
        bps: f64,
    },
    /// Alternates `high` and `low`, each held for half of `period` seconds.
    TwoBand {
        high: f64,
        low: f64,
        period: f64,
    },
    /// Log-normal steps every `interval` seconds, clamped to `[min, max]`.
    /// `reversion` in [0, 1] pulls the log throughput back toward `start`.
    RandomWalk {
        start: f64,
        sigma: f64,
        min: f64,
        max: f64,
        interval: f64,
        #[serde(default)]
        reversion: f64,
    },
}

pub fn gen_synthetic_bw(profile: &BandwidthProfile, duration: f64, seed: u64) -> Result<BandwidthTrace> {
    if !(duration > 0.0) {
        return Err(input_err!("trace duration must be positive"));
    }
    match *profile {
        BandwidthProfile::Constant { bps } => {
            if !(bps > 0.0) {
                return Err(input_err!("constant throughput must be positive"));
            }
            BandwidthTrace::constant(duration, bps)
        }
        BandwidthProfile::TwoBand { high, low, period } => {
            if !(high > 0.0 && low > 0.0 && period > 0.0) {
                return Err(input_err!("two-band levels and period must be positive"));
            }
            let half = period / 2.0;
            let mut samples = Vec::new();
            let mut i = 0usize;
            while (i as f64) * half < duration {
                samples.push((i as f64 * half, if i.is_multiple_of(2) { high } else { low }));
                i += 1;
            }
            let last = samples.last().expect("duration > 0").1;
            samples.push((duration, last));
            BandwidthTrace::new(samples)
        }
        BandwidthProfile::RandomWalk { start, sigma, min, max, interval, reversion } => {
            if !(min > 0.0 && max >= min && interval > 0.0 && sigma >= 0.0) {
                return Err(input_err!("random walk needs 0 < min <= max, interval > 0, sigma >= 0"));
            }
            if !(0.0..=1.0).contains(&reversion) {
                return Err(input_err!("random walk reversion must lie in [0, 1]"));
            }
            let anchor = start.clamp(min, max).ln();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let step = (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("positive sigma"));
            let mut v = start.clamp(min, max);
            let mut samples = Vec::new();
            let mut t = 0.0;
            while t < duration {
                samples.push((t, v));
                if let Some(step) = &step {
                    let log_v = v.ln() + reversion * (anchor - v.ln()) + step.sample(&mut rng);
                    v = log_v.exp().clamp(min, max);
                }
                t += interval;
            }
            samples.push((duration, v));
            BandwidthTrace::new(samples)
        }
    }
}

/// `trace` rescaled to a time-weighted mean of `target_mean`.
pub fn scale_trace(trace: &BandwidthTrace, target_mean: f64) -> Result<BandwidthTrace> {
    let mean = trace.mean();
    if !(mean > 0.0) {
        return Err(input_err!("cannot scale a trace whose mean throughput is zero"));
    }
    if !(target_mean >= 0.0 && target_mean.is_finite()) {
        return Err(input_err!("target mean must be finite and >= 0"));
    }
    trace.scaled(target_mean / mean)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> VideoSpec {
        VideoSpec { chunk_count: 3, k: 10, ..VideoSpec::default() }
    }

    #[test]
    fn constant_and_two_band() {
        let c = gen_synthetic_bw(&BandwidthProfile::Constant { bps: 5e6 }, 100.0, 0).unwrap();
        assert_eq!(c.samples().len(), 2);
        assert_eq!(c.mean(), 5e6);
        let t = gen_synthetic_bw(&BandwidthProfile::TwoBand { high: 8e6, low: 1e6, period: 10.0 }, 100.0, 0).unwrap();
        assert!((t.mean() - 4.5e6).abs() < 1e-6);
    }

    #[test]
    fn random_walk_is_clamped_and_seeded() {
        let p =
            BandwidthProfile::RandomWalk { start: 5e6, sigma: 0.5, min: 1e6, max: 9e6, interval: 1.0, reversion: 0.2 };
        let a = gen_synthetic_bw(&p, 200.0, 3).unwrap();
        assert!(a.samples().iter().all(|&(_, b)| (1e6..=9e6).contains(&b)));
        assert_eq!(a, gen_synthetic_bw(&p, 200.0, 3).unwrap());
        assert_ne!(a, gen_synthetic_bw(&p, 200.0, 4).unwrap());
    }

    #[test]
    fn scaling_examples() {
        let t = BandwidthTrace::new(vec![(0.0, 35e6), (1.0, 70e6), (3.0, 0.0), (4.0, 0.0)]).unwrap();
        // mean = (35 + 140 + 0) / 4 = 43.75 Mbps
        let s = scale_trace(&t, 5e6).unwrap();
        assert!((s.mean() - 5e6).abs() < 5e6 * 1e-9);
        let same = scale_trace(&t, t.mean()).unwrap();
        assert_eq!(same, t);
        let c = BandwidthTrace::constant(10.0, 10e6).unwrap();
        assert_eq!(scale_trace(&c, 2e6).unwrap().samples(), &[(0.0, 2e6), (10.0, 2e6)]);
        let z = BandwidthTrace::constant(10.0, 0.0).unwrap();
        assert!(scale_trace(&z, 2e6).is_err());
    }

    #[test]
    fn static_scene_has_no_flow() {
        let spec = VideoSpec { layer_speeds: vec![0.0], ..small_spec() };
        let scene = Scene::new(&spec, 1).unwrap();
        let flow = estimate_flow(&scene.frame(0), &scene.frame(1), 8, 4).unwrap();
        let [x, y] = flow.median_vector();
        assert!(f64::from(x).hypot(f64::from(y)) <= 0.1);
    }

    #[test]
    fn generator_is_deterministic() {
        let spec = small_spec();
        let a = gen_synthetic_video(&spec, 9).unwrap();
        let b = gen_synthetic_video(&spec, 9).unwrap();
        assert_eq!(a.manifest.to_json().unwrap(), b.manifest.to_json().unwrap());
        assert_eq!(a.viewpoints, b.viewpoints);
        assert_eq!(a.manifest.layout.rects.len(), 10);
    }

    #[test]
    fn gaze_trace_is_valid() {
        let tr = gen_viewpoints(&GazeSpec::default(), 30.0, 5).unwrap();
        assert!(tr.samples().len() >= 900);
        assert!(tr.samples().iter().all(|s| s.is_valid()));
    }
}
