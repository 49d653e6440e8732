//! Adaptive-bitrate decisions: state encoding, reward, area classification,
//! per-tile knapsack allocation and the actor-critic policy.

mod allocate;
mod areas;
pub mod net;
mod policy;
mod reward;
pub mod train;

pub(crate) use allocate::allocate_with_options;
pub use allocate::{allocate_tiles, knapsack, rect_options, LevelOption};
pub use areas::{classify_areas, window_cells, DEFAULT_FOV_DEG, DEFAULT_MARGIN_DEG};
pub use policy::{critic_forward, policy_forward, PolicyParams};
pub use reward::{chunk_reward, reward, DEFAULT_REWARD_ALPHA, DEFAULT_REWARD_BETA};
pub use train::{
    advantage, compute_gradients, greedy_action, policy_gradient_step, sample_action, train, train_from, EnvStep,
    Environment, EpisodeRecord, Gradients, Optimizer, OptimizerState, StepConfig, StepStats, TrainConfig, TrainLog,
    Transition,
};

use serde::{Deserialize, Serialize};

use crate::error::{input_err, Result};

/// Length of every history vector in [`AbrState`].
pub const HISTORY_LEN: usize = 8;
/// Number of quality levels an area can take, blank included.
pub const LEVELS: usize = 6;
/// Size of the joint action space, one level per area.
pub const ACTION_COUNT: usize = LEVELS * LEVELS * LEVELS;

/// Tile classes by distance from the predicted viewport.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Area {
    Core,
    Surround,
    Outside,
}

impl Area {
    pub const ALL: [Area; 3] = [Area::Core, Area::Surround, Area::Outside];

    pub fn index(self) -> usize {
        match self {
            Area::Core => 0,
            Area::Surround => 1,
            Area::Outside => 2,
        }
    }
}

/// One quality level per area.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub core: usize,
    pub surround: usize,
    pub outside: usize,
}

impl Action {
    pub fn new(core: usize, surround: usize, outside: usize) -> Result<Self> {
        if core >= LEVELS || surround >= LEVELS || outside >= LEVELS {
            return Err(input_err!("action levels must be below {LEVELS}: ({core}, {surround}, {outside})"));
        }
        Ok(Action { core, surround, outside })
    }

    pub fn uniform(level: usize) -> Self {
        assert!(level < LEVELS);
        Action { core: level, surround: level, outside: level }
    }

    pub fn from_index(index: usize) -> Result<Self> {
        if index >= ACTION_COUNT {
            return Err(input_err!("action index {index} out of range"));
        }
        Ok(Action { core: index / (LEVELS * LEVELS), surround: index / LEVELS % LEVELS, outside: index % LEVELS })
    }

    pub fn index(&self) -> usize {
        (self.core * LEVELS + self.surround) * LEVELS + self.outside
    }

    pub fn level(&self, area: Area) -> usize {
        match area {
            Area::Core => self.core,
            Area::Surround => self.surround,
            Area::Outside => self.outside,
        }
    }
}

/// What the simulator reports back after one chunk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChunkOutcome {
    /// Viewport PSNR-OF of the chunk, dB.
    pub psnr_of: f64,
    /// Stall time caused by this chunk's download, seconds.
    pub rebuffer: f64,
    /// Share of viewport tiles that had been predicted to be outside.
    pub ratio: f64,
    /// Bits per second sent for the core, surround and outside areas.
    pub area_bitrates: [f64; 3],
    /// Seconds spent downloading the chunk.
    pub download_time: f64,
    pub bytes: u64,
}

/// Observation fed to the policy: five histories plus scalar features.
///
/// Histories hold the last [`HISTORY_LEN`] values, oldest first; missing
/// history is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbrState {
    /// Viewport PSNR-OF of past chunks, dB.
    pub psnr_hist: Vec<f64>,
    /// Download time of past chunks, seconds.
    pub download_hist: Vec<f64>,
    /// Core, surround and outside bitrates of past chunks, bits per second.
    pub core_hist: Vec<f64>,
    pub surround_hist: Vec<f64>,
    pub outside_hist: Vec<f64>,
    /// Buffered playback, seconds.
    pub buffer: f64,
    /// Throughput measured over the last download, bits per second.
    pub rate: f64,
    /// Outside-prediction error of the last chunk, in `[0, 1]`.
    pub ratio: f64,
    /// Running mean of the outside area's share of bytes.
    pub acc_out: f64,
}

impl Default for AbrState {
    fn default() -> Self {
        AbrState {
            psnr_hist: vec![0.0; HISTORY_LEN],
            download_hist: vec![0.0; HISTORY_LEN],
            core_hist: vec![0.0; HISTORY_LEN],
            surround_hist: vec![0.0; HISTORY_LEN],
            outside_hist: vec![0.0; HISTORY_LEN],
            buffer: 0.0,
            rate: 0.0,
            ratio: 0.0,
            acc_out: 0.0,
        }
    }
}

/// Fixed input scales so every feature is O(1) for the network.
const PSNR_SCALE: f64 = 100.0;
const TIME_SCALE: f64 = 4.0;
const BITRATE_SCALE: f64 = 1e7;
const BUFFER_SCALE: f64 = 8.0;

impl AbrState {
    pub fn histories(&self) -> [&[f64]; 5] {
        [&self.psnr_hist, &self.download_hist, &self.core_hist, &self.surround_hist, &self.outside_hist]
    }

    pub fn scalars(&self) -> [f64; 4] {
        [self.buffer, self.rate, self.ratio, self.acc_out]
    }

    pub fn validate(&self) -> Result<()> {
        for h in self.histories() {
            if h.len() != HISTORY_LEN {
                return Err(input_err!("history length {} != {HISTORY_LEN}", h.len()));
            }
        }
        let all_finite =
            self.histories().iter().flat_map(|h| h.iter()).chain(self.scalars().iter()).all(|v| v.is_finite());
        if !all_finite {
            return Err(input_err!("state contains non-finite entries"));
        }
        if self.buffer < 0.0 || !(0.0..=1.0).contains(&self.ratio) {
            return Err(input_err!("buffer must be >= 0 and ratio in [0, 1]"));
        }
        Ok(())
    }

    /// Appends one chunk's observations, dropping the oldest.
    pub fn push_chunk(&mut self, outcome: &ChunkOutcome) {
        fn push(h: &mut Vec<f64>, v: f64) {
            h.remove(0);
            h.push(v);
        }
        push(&mut self.psnr_hist, outcome.psnr_of);
        push(&mut self.download_hist, outcome.download_time);
        push(&mut self.core_hist, outcome.area_bitrates[0]);
        push(&mut self.surround_hist, outcome.area_bitrates[1]);
        push(&mut self.outside_hist, outcome.area_bitrates[2]);
        self.ratio = outcome.ratio;
    }

    /// Network input: histories flattened in order, then scalars, all scaled.
    pub fn features(&self) -> (Vec<f64>, Vec<f64>) {
        let scales = [PSNR_SCALE, TIME_SCALE, BITRATE_SCALE, BITRATE_SCALE, BITRATE_SCALE];
        let hist = self.histories().iter().zip(scales).flat_map(|(h, s)| h.iter().map(move |v| v / s)).collect();
        let scalars = vec![self.buffer / BUFFER_SCALE, self.rate / BITRATE_SCALE, self.ratio, self.acc_out];
        (hist, scalars)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_index_round_trip() {
        for i in 0..ACTION_COUNT {
            assert_eq!(Action::from_index(i).unwrap().index(), i);
        }
        assert_eq!(Action::new(5, 5, 5).unwrap().index(), 215);
        assert_eq!(Action::new(1, 0, 0).unwrap().index(), 36);
        assert!(Action::from_index(216).is_err());
        assert!(Action::new(6, 0, 0).is_err());
    }

    #[test]
    fn state_history_shifts() {
        let mut s = AbrState::default();
        s.validate().unwrap();
        let out = ChunkOutcome {
            psnr_of: 50.0,
            rebuffer: 0.0,
            ratio: 0.25,
            area_bitrates: [1.0, 2.0, 3.0],
            download_time: 0.5,
            bytes: 10,
        };
        s.push_chunk(&out);
        assert_eq!(s.psnr_hist[HISTORY_LEN - 1], 50.0);
        assert_eq!(s.outside_hist[HISTORY_LEN - 1], 3.0);
        assert_eq!(s.ratio, 0.25);
        assert_eq!(s.psnr_hist.len(), HISTORY_LEN);
        s.buffer = f64::NAN;
        assert!(s.validate().is_err());
    }
}
