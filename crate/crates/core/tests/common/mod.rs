#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ofbvr::abr::net::NetShape;
use ofbvr::abr::{
    compute_gradients, critic_forward, policy_forward, policy_gradient_step, sample_action, EnvStep, Environment,
    Optimizer, OptimizerState, StepConfig, Transition,
};
use ofbvr::{AbrState, PolicyParams, Result};

pub fn random_state(rng: &mut ChaCha8Rng) -> AbrState {
    let mut s = AbrState::default();
    let mut fill = |v: &mut Vec<f64>, scale: f64| v.iter_mut().for_each(|x| *x = rng.random_range(0.0..scale));
    fill(&mut s.psnr_hist, 100.0);
    fill(&mut s.download_hist, 3.0);
    fill(&mut s.core_hist, 8e6);
    fill(&mut s.surround_hist, 4e6);
    fill(&mut s.outside_hist, 2e6);
    s.buffer = rng.random_range(0.0..8.0);
    s.rate = rng.random_range(1e5..1e7);
    s.ratio = rng.random_range(0.0..1.0);
    s.acc_out = rng.random_range(0.0..1.0);
    s
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Actor objective with advantages held fixed: sum of -A log p_a - beta H.
fn actor_loss(params: &PolicyParams<f64>, traj: &[Transition], adv: &[f64], beta: f64) -> f64 {
    traj.iter()
        .zip(adv)
        .map(|(t, &a)| {
            let (h, s) = t.state.features();
            let p = softmax(&params.actor.forward(&h, &s).unwrap().outputs);
            let ent: f64 = -p.iter().map(|q| q * q.ln()).sum::<f64>();
            -a * p[t.action].ln() - beta * ent
        })
        .sum()
}

/// Critic objective with targets held fixed: sum of (V - target)^2 / 2.
fn critic_loss(params: &PolicyParams<f64>, traj: &[Transition], targets: &[f64]) -> f64 {
    traj.iter()
        .zip(targets)
        .map(|(t, &y)| {
            let (h, s) = t.state.features();
            let v = params.critic.forward(&h, &s).unwrap().outputs[0];
            0.5 * (v - y).powi(2)
        })
        .sum()
}

/// Discounted n-step targets, computed directly.
fn targets(
    params: &PolicyParams<f64>,
    traj: &[Transition],
    boot: Option<&AbrState>,
    gamma: f64,
    scale: f64,
) -> Vec<f64> {
    let v_boot = boot.map_or(0.0, |s| critic_forward(s, params).unwrap());
    (0..traj.len())
        .map(|t| {
            let n = traj.len() - t;
            let mut g = gamma.powi(n as i32) * v_boot;
            for (k, tr) in traj[t..].iter().enumerate() {
                g += gamma.powi(k as i32) * tr.reward * scale;
            }
            g
        })
        .collect()
}

/// Largest per-tensor relative error `|a - n| / (|a| + |n|)` in vector norms.
fn worst_tensor_error(shape: &NetShape, analytic: &[f64], numeric: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    let mut at = 0;
    for (_, dims) in shape.tensors() {
        let n: usize = dims.iter().product();
        let (a, b) = (&analytic[at..at + n], &numeric[at..at + n]);
        let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-10 {
            worst = worst.max(diff / norm);
        }
        at += n;
    }
    worst
}

fn weights(p: &mut PolicyParams<f64>, actor: bool) -> &mut [f64] {
    if actor {
        p.actor.params_mut()
    } else {
        p.critic.params_mut()
    }
}

fn central_difference(params: &PolicyParams<f64>, actor: bool, f: impl Fn(&PolicyParams<f64>) -> f64) -> Vec<f64> {
    let h = 1e-5;
    let mut work = params.clone();
    let n = weights(&mut work, actor).len();
    (0..n)
        .map(|i| {
            let orig = weights(&mut work, actor)[i];
            weights(&mut work, actor)[i] = orig + h;
            let up = f(&work);
            weights(&mut work, actor)[i] = orig - h;
            let down = f(&work);
            weights(&mut work, actor)[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Worst per-tensor relative error between analytic and central-difference
/// gradients over `nets` random tiny networks.
pub fn gradient_check(nets: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for net in 0..nets as u64 {
        let mut shape = |outputs| NetShape {
            n_hist: 5,
            hist_len: 8,
            filters: rng.random_range(1..=3),
            kernel: rng.random_range(1..=3),
            n_scalars: 4,
            scalar_units: rng.random_range(1..=3),
            outputs,
        };
        let (a_shape, c_shape) = (shape(4), shape(1));
        let params = PolicyParams::<f64>::with_shapes(a_shape, c_shape, net).unwrap();
        let len = rng.random_range(1..=4);
        let traj: Vec<Transition> = (0..len)
            .map(|_| Transition {
                state: random_state(&mut rng),
                action: rng.random_range(0..4),
                reward: rng.random_range(-50.0..100.0),
            })
            .collect();
        let boot = if rng.random_bool(0.5) { Some(random_state(&mut rng)) } else { None };
        let cfg = StepConfig {
            gamma: 0.9,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            entropy_weight: rng.random_range(0.0..0.1),
            reward_scale: 0.01,
            max_grad_norm: 0.0,
        };
        let y = targets(&params, &traj, boot.as_ref(), cfg.gamma, cfg.reward_scale);
        let adv: Vec<f64> = traj.iter().zip(&y).map(|(t, y)| y - critic_forward(&t.state, &params).unwrap()).collect();
        let grads = compute_gradients(&params, &traj, boot.as_ref(), &cfg).unwrap();

        let num_a = central_difference(&params, true, |p| actor_loss(p, &traj, &adv, cfg.entropy_weight));
        let num_c = central_difference(&params, false, |p| critic_loss(p, &traj, &y));
        let ea = worst_tensor_error(&a_shape, &grads.actor, &num_a);
        let ec = worst_tensor_error(&c_shape, &grads.critic, &num_c);
        worst = worst.max(ea).max(ec);
    }
    worst
}

/// Two states told apart by the buffer; each has one paying action.
#[derive(Clone)]
pub struct Bandit {
    pub state: usize,
    pub winners: [usize; 2],
}

impl Bandit {
    pub fn observe(i: usize) -> AbrState {
        AbrState { buffer: 2.0 + 4.0 * i as f64, rate: 1e6, ..AbrState::default() }
    }
}

impl Environment for Bandit {
    fn reset(&mut self, rng: &mut ChaCha8Rng) -> Result<AbrState> {
        self.state = rng.random_range(0..2);
        Ok(Self::observe(self.state))
    }

    fn step(&mut self, action: usize) -> Result<EnvStep> {
        let reward = if action == self.winners[self.state] { 1.0 } else { 0.0 };
        Ok(EnvStep { state: Self::observe(self.state), reward, done: true })
    }
}

/// Policy-gradient steps until both states pick their paying action with
/// probability 0.99, or `None` if `max_steps` is not enough.
pub fn bandit_steps(max_steps: usize) -> Option<usize> {
    let winners = [17, 200];
    let mut env = Bandit { state: 0, winners };
    let cfg = StepConfig {
        gamma: 0.99,
        actor_lr: 1e-3,
        critic_lr: 1e-3,
        entropy_weight: 0.0,
        reward_scale: 1.0,
        max_grad_norm: 0.0,
    };
    let mut params = PolicyParams::<f32>::new(7);
    let mut opt = OptimizerState::new(Optimizer::Adam, &params);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let converged =
        |p: &PolicyParams<f32>| (0..2).all(|i| policy_forward(&Bandit::observe(i), p).unwrap()[winners[i]] >= 0.99);
    let mut steps = 0;
    while steps < max_steps && !converged(&params) {
        let state = env.reset(&mut rng).unwrap();
        let action = sample_action(&policy_forward(&state, &params).unwrap(), &mut rng);
        let reward = env.step(action).unwrap().reward;
        policy_gradient_step(&mut params, &mut opt, &[Transition { state, action, reward }], None, &cfg).unwrap();
        steps += 1;
    }
    converged(&params).then_some(steps)
}
