use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::net::{softmax, NetShape, Network, Real};
use super::{AbrState, ACTION_COUNT};
use crate::error::Result;

/// Actor and critic weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams<F = f32> {
    pub actor: Network<F>,
    pub critic: Network<F>,
}

impl<F: Real> PolicyParams<F> {
    /// Standard architecture over the 216-action space, seeded.
    pub fn new(seed: u64) -> Self {
        Self::with_shapes(NetShape::standard(ACTION_COUNT), NetShape::standard(1), seed)
            .expect("standard shapes are valid")
    }

    pub fn with_shapes(actor: NetShape, critic: NetShape, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(PolicyParams { actor: Network::new(actor, &mut rng)?, critic: Network::new(critic, &mut rng)? })
    }

    /// Action probabilities for raw network inputs.
    pub fn action_probs(&self, hist: &[f64], scalars: &[f64]) -> Result<Vec<f64>> {
        let c = self.actor.forward(hist, scalars)?;
        Ok(softmax(&c.outputs).into_iter().map(Real::as_f64).collect())
    }

    /// Critic value for raw network inputs.
    pub fn value(&self, hist: &[f64], scalars: &[f64]) -> Result<f64> {
        Ok(self.critic.forward(hist, scalars)?.outputs[0].as_f64())
    }

    pub fn cast<G: Real>(&self) -> PolicyParams<G> {
        PolicyParams { actor: self.actor.cast(), critic: self.critic.cast() }
    }
}

/// Probability of each of the 216 joint actions in `state`.
pub fn policy_forward<F: Real>(state: &AbrState, params: &PolicyParams<F>) -> Result<Vec<f64>> {
    state.validate()?;
    let (hist, scalars) = state.features();
    params.action_probs(&hist, &scalars)
}

/// The critic's value estimate of `state`.
pub fn critic_forward<F: Real>(state: &AbrState, params: &PolicyParams<F>) -> Result<f64> {
    state.validate()?;
    let (hist, scalars) = state.features();
    params.value(&hist, &scalars)
}
