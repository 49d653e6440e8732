//! Trace-driven playback: chunk downloads over a bandwidth trace, buffer and
//! stall accounting, gaze prediction, and the controllers under comparison.

mod controllers;
mod env;
mod session;
mod trace;

pub use controllers::{
    Controller, FixedActionController, FixedGridController, PolicyController, RandomController, RateController,
};
pub use env::SimEnv;
pub use session::{
    run_session, ChunkRecord, DecisionContext, PreparedVideo, Scoring, Session, SessionConfig, SessionLog,
};
pub use trace::{
    predict_viewpoint, predict_viewpoint_window, BandwidthTrace, ViewpointTrace, DEFAULT_PREDICT_WINDOW,
    DEFAULT_VIEWPOINT_HZ,
};
