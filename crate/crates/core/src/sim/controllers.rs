use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::session::{DecisionContext, Scoring};
use crate::abr::{greedy_action, policy_forward, Action, PolicyParams, ACTION_COUNT, LEVELS};
use crate::error::Result;

/// Picks one action per chunk.
pub trait Controller {
    fn name(&self) -> String;

    /// Layout and scores the session allocates with for this controller.
    fn scoring(&self) -> Scoring {
        Scoring::Perceptual
    }

    /// Called at the start of every session.
    fn reset(&mut self) {}

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Action>;
}

/// Bytes the last measured throughput delivers in one chunk duration.
fn affordable_bytes(ctx: &DecisionContext<'_>) -> f64 {
    ctx.state.rate / 8.0 * ctx.chunk_duration
}

/// Highest uniform level whose cost fits the last measured rate.
#[derive(Debug, Clone, Default)]
pub struct RateController;

impl Controller for RateController {
    fn name(&self) -> String {
        "rate".into()
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Action> {
        let budget = affordable_bytes(ctx);
        let level = (1..LEVELS).rev().find(|&l| ctx.cost(&Action::uniform(l)) as f64 <= budget).unwrap_or(0);
        Ok(Action::uniform(level))
    }
}

/// Fixed 12x24 tiling with plain-PSNR scores. Sends the predicted viewport at
/// the highest level `q` for which `(q, q - 1, 1)` fits the last measured
/// rate, with the surround one step lower and the rest at the lowest level.
#[derive(Debug, Clone, Default)]
pub struct FixedGridController;

impl FixedGridController {
    fn tier(q: usize) -> Action {
        Action { core: q, surround: q.saturating_sub(1).max(1), outside: 1 }
    }
}

impl Controller for FixedGridController {
    fn name(&self) -> String {
        "fixed_grid".into()
    }

    fn scoring(&self) -> Scoring {
        Scoring::FixedGrid
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Action> {
        let budget = affordable_bytes(ctx);
        Ok((1..LEVELS).rev().map(Self::tier).find(|a| ctx.cost(a) as f64 <= budget).unwrap_or(Action::uniform(0)))
    }
}

/// Always the same action.
#[derive(Debug, Clone)]
pub struct FixedActionController {
    pub action: Action,
    pub scoring: Scoring,
}

impl FixedActionController {
    pub fn top() -> Self {
        FixedActionController { action: Action::uniform(LEVELS - 1), scoring: Scoring::Perceptual }
    }
}

impl Controller for FixedActionController {
    fn name(&self) -> String {
        format!("fixed_{}_{}_{}", self.action.core, self.action.surround, self.action.outside)
    }

    fn scoring(&self) -> Scoring {
        self.scoring
    }

    fn decide(&mut self, _: &DecisionContext<'_>) -> Result<Action> {
        Ok(self.action)
    }
}

/// Uniformly random joint actions, reseeded every session.
#[derive(Debug, Clone)]
pub struct RandomController {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomController {
    pub fn new(seed: u64) -> Self {
        RandomController { seed, rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Controller for RandomController {
    fn name(&self) -> String {
        "random".into()
    }

    fn reset(&mut self) {
        self.rng = ChaCha8Rng::seed_from_u64(self.seed);
    }

    fn decide(&mut self, _: &DecisionContext<'_>) -> Result<Action> {
        Action::from_index(self.rng.random_range(0..ACTION_COUNT))
    }
}

/// The learned policy's most probable action.
#[derive(Debug, Clone)]
pub struct PolicyController {
    pub params: PolicyParams,
}

impl PolicyController {
    pub fn new(params: PolicyParams) -> Self {
        PolicyController { params }
    }
}

impl Controller for PolicyController {
    fn name(&self) -> String {
        "rl".into()
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Action> {
        let probs = policy_forward(ctx.state, &self.params)?;
        Action::from_index(greedy_action(&probs))
    }
}
