use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::session::{PreparedVideo, Scoring, Session, SessionConfig};
use super::trace::{BandwidthTrace, ViewpointTrace};
use crate::abr::{AbrState, Action, EnvStep, Environment};
use crate::error::{input_err, Error, Result};

/// Training environment: every episode plays a random video against a random
/// bandwidth trace, starting at a random offset into the trace.
pub struct SimEnv {
    videos: Arc<Vec<(Arc<PreparedVideo>, Arc<ViewpointTrace>)>>,
    traces: Arc<Vec<Arc<BandwidthTrace>>>,
    cfg: SessionConfig,
    session: Option<Session>,
}

impl Clone for SimEnv {
    fn clone(&self) -> Self {
        SimEnv { videos: Arc::clone(&self.videos), traces: Arc::clone(&self.traces), cfg: self.cfg, session: None }
    }
}

impl SimEnv {
    pub fn new(
        videos: Vec<(Arc<PreparedVideo>, Arc<ViewpointTrace>)>,
        traces: Vec<Arc<BandwidthTrace>>,
        cfg: SessionConfig,
    ) -> Result<Self> {
        if videos.is_empty() || traces.is_empty() {
            return Err(input_err!("training needs at least one video and one bandwidth trace"));
        }
        cfg.validate()?;
        Ok(SimEnv { videos: Arc::new(videos), traces: Arc::new(traces), cfg, session: None })
    }
}

impl Environment for SimEnv {
    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Result<AbrState> {
        let (video, vp) = &self.videos[rng.random_range(0..self.videos.len())];
        let trace = &self.traces[rng.random_range(0..self.traces.len())];
        let slack = (trace.end() - trace.start()) - video.manifest.duration();
        let offset: f64 = if slack > 0.0 { rng.random_range(0.0..=slack) } else { 0.0 };
        let bw = Arc::new(trace.starting_at(trace.start() + offset)?);
        let session = Session::new(Arc::clone(video), bw, Arc::clone(vp), self.cfg, Scoring::Perceptual)?;
        let state = session.state().clone();
        self.session = Some(session);
        Ok(state)
    }

    fn step(&mut self, action: usize) -> Result<EnvStep> {
        let session = self.session.as_mut().ok_or(Error::SessionExhausted(0))?;
        let (state, _) = session.step(Action::from_index(action)?)?;
        let reward = session.records().last().expect("stepped").reward;
        Ok(EnvStep { state, reward, done: session.is_done() })
    }
}
