use std::sync::Arc;

use ofbvr::io::{
    gen_synthetic_bw, gen_synthetic_video, BandwidthProfile, ChunkGrids, VideoManifest, VideoSpec, MANIFEST_VERSION,
};
use ofbvr::sim::{
    run_session, Controller, FixedActionController, FixedGridController, PreparedVideo, RandomController,
    RateController, Scoring, Session,
};
use ofbvr::{
    Action, BandwidthTrace, QualityLadder, SessionConfig, TileLayout, TileScoreGrid, ViewpointSample, ViewpointTrace,
};

const SCORES: [f64; 6] = [0.0, 20.0, 30.0, 40.0, 50.0, 60.0];
const SIZES: [u64; 6] = [0, 100, 200, 400, 800, 1600];

/// Every basic tile identical, on the fixed 12x24 layout.
fn flat_video(chunks: usize) -> Arc<PreparedVideo> {
    let cells = 12 * 24;
    let scores: Vec<f64> = (0..cells).flat_map(|_| SCORES).collect();
    let sizes: Vec<u64> = (0..cells).flat_map(|_| SIZES).collect();
    let grid = TileScoreGrid::new(12, 24, 6, scores, sizes).unwrap();
    let manifest = VideoManifest {
        version: MANIFEST_VERSION,
        video_id: "flat".into(),
        chunk_count: chunks,
        chunk_duration: 1.0,
        fps: 30.0,
        width: 240,
        height: 120,
        ladder: QualityLadder::default(),
        layout: TileLayout::fixed_grid(12, 24),
        chunks: vec![ChunkGrids { jnd: grid.clone(), plain: grid }; chunks],
    };
    Arc::new(PreparedVideo::new(manifest).unwrap())
}

fn gaze(duration: f64, yaw_at: impl Fn(f64) -> f64) -> Arc<ViewpointTrace> {
    let n = (duration * 30.0) as usize + 1;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / 30.0;
            ViewpointSample::new(t, yaw_at(t), 0.0)
        })
        .collect();
    Arc::new(ViewpointTrace::new(samples).unwrap())
}

fn constant(bps: f64, duration: f64) -> Arc<BandwidthTrace> {
    Arc::new(BandwidthTrace::constant(duration, bps).unwrap())
}

fn fixed(core: usize, surround: usize, outside: usize) -> FixedActionController {
    FixedActionController { action: Action::new(core, surround, outside).unwrap(), scoring: Scoring::Perceptual }
}

#[test]
fn ample_bandwidth_top_action_never_stalls() {
    let video = flat_video(10);
    let log = run_session(
        &mut FixedActionController::top(),
        video,
        constant(1e12, 100.0),
        gaze(20.0, |_| 0.0),
        &SessionConfig::default(),
    )
    .unwrap();
    assert_eq!(log.total_rebuffer, 0.0);
    assert_eq!(log.rebuffer_ratio, 0.0);
    assert!(log.chunks.iter().all(|c| c.outcome.psnr_of == 60.0));
    assert_eq!(log.mean_psnr_of, 60.0);
}

#[test]
fn bandwidth_hole_longer_than_buffer_stalls() {
    let video = flat_video(20);
    // one full frame at level 3 is 288 * 400 B = 0.92 Mbit
    let bw = Arc::new(BandwidthTrace::new(vec![(0.0, 4e6), (5.0, 0.0), (20.0, 4e6), (100.0, 4e6)]).unwrap());
    let log = run_session(&mut fixed(3, 3, 3), video, bw, gaze(30.0, |_| 0.0), &SessionConfig::default()).unwrap();
    assert!(log.total_rebuffer > 0.0);
    assert!(log.rebuffer_ratio > 0.0 && log.rebuffer_ratio <= 1.0);
}

#[test]
fn gaze_jump_shows_up_as_ratio_and_outside_quality() {
    // static at yaw 0 until 9.2 s, then at yaw 90; the last chunk's midpoint is 9.5 s
    let video = flat_video(10);
    let vp = gaze(20.0, |t| if t < 9.2 { 0.0 } else { 90.0 });
    let log = run_session(&mut fixed(5, 3, 1), video, constant(1e12, 100.0), vp, &SessionConfig::default()).unwrap();
    for c in &log.chunks[..9] {
        assert_eq!(c.outcome.ratio, 0.0);
        assert_eq!(c.outcome.psnr_of, 60.0);
    }
    // Predicted core columns 8..=15, surround adds 6, 7, 16, 17. The actual
    // viewport covers columns 14..=21 on rows 2..=9: per row two core, two
    // surround and four outside cells.
    let last = log.chunks[9].outcome;
    assert!((last.ratio - 0.5).abs() < 1e-12);
    let expected = (2.0 * 60.0 + 2.0 * 40.0 + 4.0 * 20.0) / 8.0;
    assert!((last.psnr_of - expected).abs() < 1e-12);
}

#[test]
fn rate_heuristic_floor_and_ceiling() {
    let video = flat_video(5);
    let cfg = SessionConfig::default();
    let starved =
        run_session(&mut RateController, video.clone(), constant(1.0, 100.0), gaze(10.0, |_| 0.0), &cfg).unwrap();
    assert!(starved.chunks.iter().all(|c| c.action == Action::uniform(0)));
    let ample = run_session(&mut RateController, video, constant(1e12, 100.0), gaze(10.0, |_| 0.0), &cfg).unwrap();
    assert!(ample.chunks.iter().all(|c| c.action == Action::uniform(5)));
}

#[test]
fn sessions_are_deterministic() {
    let spec = VideoSpec { chunk_count: 12, ..VideoSpec::default() };
    let v = gen_synthetic_video(&spec, 5).unwrap();
    let video = Arc::new(PreparedVideo::new(v.manifest).unwrap());
    let vp = Arc::new(v.viewpoints);
    let profile =
        BandwidthProfile::RandomWalk { start: 3e6, sigma: 0.3, min: 2e5, max: 2e7, interval: 1.0, reversion: 0.1 };
    let bw = Arc::new(gen_synthetic_bw(&profile, 60.0, 9).unwrap());
    let cfg = SessionConfig::default();
    let controllers: Vec<Box<dyn Fn() -> Box<dyn Controller>>> = vec![
        Box::new(|| Box::new(RateController)),
        Box::new(|| Box::new(FixedGridController)),
        Box::new(|| Box::new(RandomController::new(3))),
    ];
    for make in controllers {
        let a = run_session(make().as_mut(), video.clone(), bw.clone(), vp.clone(), &cfg).unwrap();
        let mut reused = make();
        run_session(reused.as_mut(), video.clone(), bw.clone(), vp.clone(), &cfg).unwrap();
        let b = run_session(reused.as_mut(), video.clone(), bw.clone(), vp.clone(), &cfg).unwrap();
        assert_eq!(a, b, "{}", a.controller);
    }
}

#[test]
fn short_traces_are_rejected() {
    let video = flat_video(10);
    let cfg = SessionConfig::default();
    let short_bw = Session::new(video.clone(), constant(1e6, 5.0), gaze(20.0, |_| 0.0), cfg, Scoring::Perceptual);
    assert!(short_bw.is_err());
    let short_vp = Session::new(video, constant(1e6, 50.0), gaze(3.0, |_| 0.0), cfg, Scoring::Perceptual);
    assert!(short_vp.is_err());
}

#[test]
fn exhausted_session_refuses_more_chunks() {
    let video = flat_video(2);
    let mut s =
        Session::new(video, constant(1e9, 50.0), gaze(10.0, |_| 0.0), SessionConfig::default(), Scoring::Perceptual)
            .unwrap();
    s.step(Action::uniform(1)).unwrap();
    s.step(Action::uniform(1)).unwrap();
    assert!(s.is_done());
    assert!(s.step(Action::uniform(1)).is_err());
}

#[test]
fn higher_actions_never_cost_less() {
    let spec = VideoSpec { chunk_count: 3, ..VideoSpec::default() };
    let v = gen_synthetic_video(&spec, 2).unwrap();
    let video = Arc::new(PreparedVideo::new(v.manifest).unwrap());
    let mut s =
        Session::new(video, constant(1e7, 50.0), Arc::new(v.viewpoints), SessionConfig::default(), Scoring::Perceptual)
            .unwrap();
    let ctx = s.context().unwrap();
    for i in 0..216 {
        let a = Action::from_index(i).unwrap();
        for bump in 0..3 {
            let mut b = a;
            let slot = match bump {
                0 => &mut b.core,
                1 => &mut b.surround,
                _ => &mut b.outside,
            };
            if *slot < 5 {
                *slot += 1;
                assert!(ctx.cost(&b) >= ctx.cost(&a));
            }
        }
    }
}
