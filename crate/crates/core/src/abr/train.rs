//! Advantage actor-critic training.
//!
//! Rollouts of up to `n_steps` transitions are turned into n-step advantages
//! with the critic as baseline. The actor follows `grad log pi(a|s) * A`
//! (plus an entropy bonus), the critic regresses toward the n-step returns.
//! With more than one worker, each worker computes gradients against the most
//! recent parameter snapshot and the trainer applies them in arrival order.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc, RwLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::{softmax, Real};
use super::{AbrState, PolicyParams};
use crate::error::{Error, Result};

/// Something the policy can act in, episode by episode.
pub trait Environment {
    /// Starts a new episode and returns its first state.
    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Result<AbrState>;
    /// Applies action `action` (an index into the policy's outputs).
    fn step(&mut self, action: usize) -> Result<EnvStep>;
}

#[derive(Debug, Clone)]
pub struct EnvStep {
    pub state: AbrState,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct Transition {
    pub state: AbrState,
    pub action: usize,
    pub reward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Plain gradient steps, `theta <- theta - lr * grad`.
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Rollout length for n-step returns.
    pub n_steps: usize,
    /// Entropy bonus weight, decayed linearly from `entropy_start` at the
    /// first episode to `entropy_end` at the last.
    pub entropy_start: f64,
    pub entropy_end: f64,
    /// Rewards are multiplied by this before training; it rescales the
    /// objective without changing which policy is optimal.
    pub reward_scale: f64,
    pub optimizer: Optimizer,
    /// Global gradient-norm clip per network; 0 disables it.
    pub max_grad_norm: f64,
    pub seed: u64,
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.99,
            actor_lr: 1e-4,
            critic_lr: 1e-4,
            n_steps: 8,
            entropy_start: 0.01,
            entropy_end: 0.001,
            reward_scale: 0.01,
            optimizer: Optimizer::Adam,
            max_grad_norm: 0.0,
            seed: 42,
            workers: 1,
        }
    }
}

impl TrainConfig {
    fn entropy_weight(&self, episode: usize, episodes: usize) -> f64 {
        if episodes <= 1 {
            return self.entropy_start;
        }
        let frac = episode as f64 / (episodes - 1) as f64;
        self.entropy_start + (self.entropy_end - self.entropy_start) * frac
    }
}

/// Hyperparameters of a single update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub entropy_weight: f64,
    pub reward_scale: f64,
    pub max_grad_norm: f64,
}

impl StepConfig {
    pub fn from_train(cfg: &TrainConfig, entropy_weight: f64) -> Self {
        StepConfig {
            gamma: cfg.gamma,
            actor_lr: cfg.actor_lr,
            critic_lr: cfg.critic_lr,
            entropy_weight,
            reward_scale: cfg.reward_scale,
            max_grad_norm: cfg.max_grad_norm,
        }
    }
}

/// `r_t + g r_{t+1} + ... + g^{n-1} r_{t+n-1} + g^n V(s') - V(s)`.
pub fn advantage(rewards: &[f64], bootstrap: f64, current: f64, gamma: f64) -> f64 {
    let mut ret = bootstrap;
    for &r in rewards.iter().rev() {
        ret = r + gamma * ret;
    }
    ret - current
}

/// Mean losses over one update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepStats {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
}

/// Gradients of the actor and critic losses for one rollout.
#[derive(Debug, Clone)]
pub struct Gradients<F> {
    pub actor: Vec<F>,
    pub critic: Vec<F>,
    pub stats: StepStats,
}

/// Smallest probability inside a logarithm.
const PROB_FLOOR: f64 = 1e-12;

/// Loss gradients for `trajectory`, bootstrapped from `bootstrap` (or zero when
/// the episode ended).
pub fn compute_gradients<F: Real>(
    params: &PolicyParams<F>,
    trajectory: &[Transition],
    bootstrap: Option<&AbrState>,
    cfg: &StepConfig,
) -> Result<Gradients<F>> {
    let mut actor = vec![F::zero(); params.actor.param_count()];
    let mut critic = vec![F::zero(); params.critic.param_count()];
    let mut stats = StepStats::default();
    if trajectory.is_empty() {
        return Ok(Gradients { actor, critic, stats });
    }
    let rewards: Vec<f64> = trajectory.iter().map(|t| t.reward * cfg.reward_scale).collect();
    let v_boot = match bootstrap {
        Some(s) => {
            let (h, sc) = s.features();
            params.value(&h, &sc)?
        }
        None => 0.0,
    };
    for (t, tr) in trajectory.iter().enumerate() {
        let (hist, scalars) = tr.state.features();
        let c_cache = params.critic.forward(&hist, &scalars)?;
        let value = c_cache.outputs[0].as_f64();
        let adv = advantage(&rewards[t..], v_boot, value, cfg.gamma);
        let target = adv + value;

        let a_cache = params.actor.forward(&hist, &scalars)?;
        let probs: Vec<f64> = softmax(&a_cache.outputs).into_iter().map(Real::as_f64).collect();
        let logs: Vec<f64> = probs.iter().map(|p| p.max(PROB_FLOOR).ln()).collect();
        let entropy: f64 = -probs.iter().zip(&logs).map(|(p, l)| p * l).sum::<f64>();
        let beta = cfg.entropy_weight;
        // d/dz of  -A log p_a - beta H
        let d_logits: Vec<F> = probs
            .iter()
            .zip(&logs)
            .enumerate()
            .map(|(j, (&p, &lp))| {
                let onehot = if j == tr.action { 1.0 } else { 0.0 };
                F::from_f64(-adv * (onehot - p) + beta * p * (lp + entropy))
            })
            .collect();
        params.actor.backward(&a_cache, &d_logits, &mut actor);
        params.critic.backward(&c_cache, &[F::from_f64(value - target)], &mut critic);

        stats.actor_loss += -adv * logs[tr.action];
        stats.critic_loss += 0.5 * (target - value).powi(2);
        stats.entropy += entropy;
    }
    let n = trajectory.len() as f64;
    stats.actor_loss /= n;
    stats.critic_loss /= n;
    stats.entropy /= n;
    if !(stats.actor_loss.is_finite() && stats.critic_loss.is_finite()) {
        return Err(Error::Training(format!(
            "non-finite loss (actor {}, critic {})",
            stats.actor_loss, stats.critic_loss
        )));
    }
    for (name, g) in [("actor", &actor), ("critic", &critic)] {
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::Training(format!("non-finite {name} gradient at parameter {i}")));
        }
    }
    Ok(Gradients { actor, critic, stats })
}

#[derive(Debug, Clone)]
struct AdamState<F> {
    m: Vec<F>,
    v: Vec<F>,
    t: i32,
}

impl<F: Real> AdamState<F> {
    fn new(n: usize) -> Self {
        AdamState { m: vec![F::zero(); n], v: vec![F::zero(); n], t: 0 }
    }

    fn step(&mut self, params: &mut [F], grads: &[F], lr: f64) {
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        self.t += 1;
        let c1 = 1.0 - f64::powi(b1, self.t);
        let c2 = 1.0 - f64::powi(b2, self.t);
        let step = F::from_f64(lr * c2.sqrt() / c1);
        let (b1, b2, eps) = (F::from_f64(b1), F::from_f64(b2), F::from_f64(eps));
        let one = F::one();
        for ((p, &g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            *p -= step * *m / (v.sqrt() + eps);
        }
    }
}

/// Per-parameter optimizer memory for both networks.
#[derive(Debug, Clone)]
pub struct OptimizerState<F> {
    kind: Optimizer,
    actor: AdamState<F>,
    critic: AdamState<F>,
}

impl<F: Real> OptimizerState<F> {
    pub fn new(kind: Optimizer, params: &PolicyParams<F>) -> Self {
        let sizes = match kind {
            Optimizer::Sgd => (0, 0),
            Optimizer::Adam => (params.actor.param_count(), params.critic.param_count()),
        };
        OptimizerState { kind, actor: AdamState::new(sizes.0), critic: AdamState::new(sizes.1) }
    }

    /// Descends both networks along `grads`.
    pub fn apply(&mut self, params: &mut PolicyParams<F>, grads: &mut Gradients<F>, cfg: &StepConfig) {
        if cfg.max_grad_norm > 0.0 {
            clip(&mut grads.actor, cfg.max_grad_norm);
            clip(&mut grads.critic, cfg.max_grad_norm);
        }
        match self.kind {
            Optimizer::Sgd => {
                sgd(params.actor.params_mut(), &grads.actor, cfg.actor_lr);
                sgd(params.critic.params_mut(), &grads.critic, cfg.critic_lr);
            }
            Optimizer::Adam => {
                self.actor.step(params.actor.params_mut(), &grads.actor, cfg.actor_lr);
                self.critic.step(params.critic.params_mut(), &grads.critic, cfg.critic_lr);
            }
        }
    }
}

fn clip<F: Real>(g: &mut [F], max_norm: f64) {
    let norm = g.iter().map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = F::from_f64(max_norm / norm);
        g.iter_mut().for_each(|v| *v *= s);
    }
}

fn sgd<F: Real>(params: &mut [F], grads: &[F], lr: f64) {
    let lr = F::from_f64(lr);
    for (p, &g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
}

/// One actor-critic update over `trajectory`.
///
/// The actor moves along `lr * grad log pi(s, a) * A(s, t)` summed over the
/// trajectory; the critic descends the squared error to the n-step returns.
pub fn policy_gradient_step<F: Real>(
    params: &mut PolicyParams<F>,
    optimizer: &mut OptimizerState<F>,
    trajectory: &[Transition],
    bootstrap: Option<&AbrState>,
    cfg: &StepConfig,
) -> Result<StepStats> {
    let mut grads = compute_gradients(params, trajectory, bootstrap, cfg)?;
    optimizer.apply(params, &mut grads, cfg);
    let finite = params.actor.params().iter().chain(params.critic.params()).all(|p| p.is_finite());
    if !finite {
        return Err(Error::Training("parameters became non-finite after update".into()));
    }
    Ok(grads.stats)
}

/// Draws an index from `probs`.
pub fn sample_action<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Index of the most probable action; ties go to the lower index.
pub fn greedy_action(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// Mean per-step reward, in the environment's own units.
    pub mean_reward: f64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub episodes: Vec<EpisodeRecord>,
    /// Set when training stopped early on a non-finite loss or gradient.
    pub aborted: Option<String>,
}

struct EpisodeAccum {
    reward: f64,
    steps: usize,
    stats: StepStats,
    updates: usize,
}

impl EpisodeAccum {
    fn new() -> Self {
        EpisodeAccum { reward: 0.0, steps: 0, stats: StepStats::default(), updates: 0 }
    }

    fn add(&mut self, s: &StepStats) {
        self.stats.actor_loss += s.actor_loss;
        self.stats.critic_loss += s.critic_loss;
        self.stats.entropy += s.entropy;
        self.updates += 1;
    }

    fn finish(self, episode: usize) -> EpisodeRecord {
        let u = self.updates.max(1) as f64;
        EpisodeRecord {
            episode,
            mean_reward: self.reward / self.steps.max(1) as f64,
            actor_loss: self.stats.actor_loss / u,
            critic_loss: self.stats.critic_loss / u,
            entropy: self.stats.entropy / u,
        }
    }
}

/// Trains fresh parameters seeded from `cfg.seed`.
pub fn train<E>(env: &E, episodes: usize, cfg: &TrainConfig) -> Result<(PolicyParams, TrainLog)>
where
    E: Environment + Clone + Send,
{
    train_from(PolicyParams::new(cfg.seed), env, episodes, cfg)
}

/// Continues training `params` for `episodes` episodes.
pub fn train_from<F, E>(
    params: PolicyParams<F>,
    env: &E,
    episodes: usize,
    cfg: &TrainConfig,
) -> Result<(PolicyParams<F>, TrainLog)>
where
    F: Real,
    E: Environment + Clone + Send,
{
    if cfg.n_steps == 0 {
        return Err(crate::error::input_err!("n_steps must be positive"));
    }
    if cfg.workers <= 1 {
        train_single(params, env.clone(), episodes, cfg)
    } else {
        train_parallel(params, env, episodes, cfg)
    }
}

fn train_single<F: Real, E: Environment>(
    mut params: PolicyParams<F>,
    mut env: E,
    episodes: usize,
    cfg: &TrainConfig,
) -> Result<(PolicyParams<F>, TrainLog)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = OptimizerState::new(cfg.optimizer, &params);
    let mut log = TrainLog::default();
    for ep in 0..episodes {
        let step_cfg = StepConfig::from_train(cfg, cfg.entropy_weight(ep, episodes));
        let mut acc = EpisodeAccum::new();
        let mut state = env.reset(&mut rng)?;
        let mut rollout = Vec::with_capacity(cfg.n_steps);
        loop {
            let (h, s) = state.features();
            let action = sample_action(&params.action_probs(&h, &s)?, &mut rng);
            let step = env.step(action)?;
            acc.reward += step.reward;
            acc.steps += 1;
            rollout.push(Transition { state, action, reward: step.reward });
            state = step.state;
            if rollout.len() == cfg.n_steps || step.done {
                let boot = if step.done { None } else { Some(&state) };
                match policy_gradient_step(&mut params, &mut opt, &rollout, boot, &step_cfg) {
                    Ok(stats) => acc.add(&stats),
                    Err(Error::Training(msg)) => {
                        log.aborted = Some(format!("episode {ep}: {msg}"));
                        return Ok((params, log));
                    }
                    Err(e) => return Err(e),
                }
                rollout.clear();
            }
            if step.done {
                break;
            }
        }
        log.episodes.push(acc.finish(ep));
    }
    Ok((params, log))
}

enum WorkerMsg<F> {
    Gradients(Gradients<F>, StepConfig),
    Episode(EpisodeRecord),
    Failed(Error),
}

fn train_parallel<F, E>(
    mut params: PolicyParams<F>,
    env: &E,
    episodes: usize,
    cfg: &TrainConfig,
) -> Result<(PolicyParams<F>, TrainLog)>
where
    F: Real,
    E: Environment + Clone + Send,
{
    let snapshot = RwLock::new(Arc::new(params.clone()));
    let next_episode = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let mut opt = OptimizerState::new(cfg.optimizer, &params);
    let mut log = TrainLog::default();
    let mut failure = None;
    let (tx, rx) = mpsc::channel::<WorkerMsg<F>>();

    std::thread::scope(|scope| {
        for w in 0..cfg.workers {
            let tx = tx.clone();
            let mut env = env.clone();
            let (snapshot, next_episode, stop) = (&snapshot, &next_episode, &stop);
            scope.spawn(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9 * (w as u64 + 1)));
                let run = |rng: &mut ChaCha8Rng, env: &mut E, ep: usize| -> Result<EpisodeRecord> {
                    let step_cfg = StepConfig::from_train(cfg, cfg.entropy_weight(ep, episodes));
                    let mut acc = EpisodeAccum::new();
                    let mut state = env.reset(rng)?;
                    let mut rollout = Vec::with_capacity(cfg.n_steps);
                    loop {
                        let current = snapshot.read().expect("snapshot lock").clone();
                        let (h, s) = state.features();
                        let action = sample_action(&current.action_probs(&h, &s)?, rng);
                        let step = env.step(action)?;
                        acc.reward += step.reward;
                        acc.steps += 1;
                        rollout.push(Transition { state, action, reward: step.reward });
                        state = step.state;
                        if rollout.len() == cfg.n_steps || step.done {
                            let boot = if step.done { None } else { Some(&state) };
                            let grads = compute_gradients(&current, &rollout, boot, &step_cfg)?;
                            acc.add(&grads.stats);
                            if tx.send(WorkerMsg::Gradients(grads, step_cfg)).is_err() {
                                return Err(Error::Training("trainer hung up".into()));
                            }
                            rollout.clear();
                        }
                        if step.done {
                            return Ok(acc.finish(ep));
                        }
                    }
                };
                while !stop.load(Ordering::SeqCst) {
                    let ep = next_episode.fetch_add(1, Ordering::SeqCst);
                    if ep >= episodes {
                        break;
                    }
                    let msg = match run(&mut rng, &mut env, ep) {
                        Ok(rec) => WorkerMsg::Episode(rec),
                        Err(e) => WorkerMsg::Failed(e),
                    };
                    let failed = matches!(msg, WorkerMsg::Failed(_));
                    if tx.send(msg).is_err() || failed {
                        break;
                    }
                }
            });
        }
        drop(tx);
        for msg in rx {
            match msg {
                WorkerMsg::Gradients(mut grads, step_cfg) => {
                    if stop.load(Ordering::SeqCst) {
                        continue;
                    }
                    opt.apply(&mut params, &mut grads, &step_cfg);
                    *snapshot.write().expect("snapshot lock") = Arc::new(params.clone());
                }
                WorkerMsg::Episode(rec) => log.episodes.push(rec),
                WorkerMsg::Failed(Error::Training(msg)) => {
                    log.aborted.get_or_insert(msg);
                    stop.store(true, Ordering::SeqCst);
                }
                WorkerMsg::Failed(e) => {
                    failure.get_or_insert(e);
                    stop.store(true, Ordering::SeqCst);
                }
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    log.episodes.sort_by_key(|r| r.episode);
    Ok((params, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abr::net::NetShape;

    #[test]
    fn advantage_examples() {
        assert_eq!(advantage(&[1.0, 2.0, 3.0], 0.0, 0.0, 1.0), 6.0);
        assert_eq!(advantage(&[1.0], 4.0, 2.0, 0.5), 1.0);
        assert_eq!(advantage(&[0.0, 0.0], 3.0, 3.0, 1.0), 0.0);
        // 1 + 0.9*2 + 0.81*5 - 1
        assert!((advantage(&[1.0, 2.0], 5.0, 1.0, 0.9) - (1.0 + 1.8 + 4.05 - 1.0)).abs() < 1e-12);
    }

    fn tiny_params() -> PolicyParams<f64> {
        let shape = |outputs| NetShape {
            n_hist: 5,
            hist_len: 8,
            filters: 4,
            kernel: 3,
            n_scalars: 4,
            scalar_units: 4,
            outputs,
        };
        PolicyParams::with_shapes(shape(4), shape(1), 3).unwrap()
    }

    #[test]
    fn zero_advantage_leaves_actor_unchanged() {
        let mut params = tiny_params();
        let state = AbrState::default();
        // make V(s) equal the discounted return so A = 0: reward r with terminal
        // bootstrap gives A = r - V(s)
        let v = params.value(&state.features().0, &state.features().1).unwrap();
        let traj = vec![Transition { state: state.clone(), action: 1, reward: v }];
        let cfg = StepConfig {
            gamma: 0.99,
            actor_lr: 0.1,
            critic_lr: 0.1,
            entropy_weight: 0.0,
            reward_scale: 1.0,
            max_grad_norm: 0.0,
        };
        let before = params.actor.clone();
        let mut opt = OptimizerState::new(Optimizer::Sgd, &params);
        policy_gradient_step(&mut params, &mut opt, &traj, None, &cfg).unwrap();
        assert_eq!(params.actor, before);
    }

    #[test]
    fn sampling_and_greedy() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_action(&[0.0, 1.0, 0.0], &mut rng), 1);
        assert_eq!(greedy_action(&[0.2, 0.5, 0.5]), 1);
    }

    #[test]
    fn entropy_schedule_is_linear() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.entropy_weight(0, 11), 0.01);
        assert!((cfg.entropy_weight(10, 11) - 0.001).abs() < 1e-15);
        assert!((cfg.entropy_weight(5, 11) - 0.0055).abs() < 1e-15);
    }
}
