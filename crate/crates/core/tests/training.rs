mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{bandit_steps, gradient_check, random_state, Bandit};
use ofbvr::abr::{
    critic_forward, policy_forward, policy_gradient_step, train, train_from, EnvStep, Environment, Optimizer,
    OptimizerState, StepConfig, TrainConfig, Transition,
};
use ofbvr::{AbrState, PolicyParams, Result};

#[test]
fn gradients_match_finite_differences_on_tiny_networks() {
    let worst = gradient_check(50);
    assert!(worst <= 1e-4, "worst relative error {worst:e}");
}

#[test]
fn bandit_converges_to_the_paying_action() {
    assert!(bandit_steps(5000).is_some());
}

#[test]
fn zero_episodes_leave_params_unchanged() {
    let env = Bandit { state: 0, winners: [0, 1] };
    let p = PolicyParams::<f32>::new(3);
    let (q, log) = train_from(p.clone(), &env, 0, &TrainConfig::default()).unwrap();
    assert_eq!(p, q);
    assert!(log.episodes.is_empty());
}

#[test]
fn single_worker_training_is_bit_identical() {
    let env = Bandit { state: 0, winners: [3, 4] };
    let cfg = TrainConfig { seed: 11, ..TrainConfig::default() };
    let (a, la) = train(&env, 40, &cfg).unwrap();
    let (b, lb) = train(&env, 40, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(la.episodes.len(), 40);
    for (x, y) in la.episodes.iter().zip(&lb.episodes) {
        assert_eq!(x.mean_reward.to_bits(), y.mean_reward.to_bits());
        assert_eq!(x.actor_loss.to_bits(), y.actor_loss.to_bits());
        assert_eq!(x.critic_loss.to_bits(), y.critic_loss.to_bits());
        assert_eq!(x.entropy.to_bits(), y.entropy.to_bits());
    }
}

#[test]
fn multi_worker_training_runs() {
    let env = Bandit { state: 0, winners: [3, 4] };
    let cfg = TrainConfig { seed: 11, workers: 3, ..TrainConfig::default() };
    let (p, log) = train(&env, 30, &cfg).unwrap();
    assert_eq!(log.episodes.len(), 30);
    assert!(log.episodes.iter().enumerate().all(|(i, e)| e.episode == i));
    assert!(p.actor.params().iter().all(|v| v.is_finite()));
}

#[test]
fn one_update_moves_the_critic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut params = PolicyParams::<f64>::new(5);
    let s = random_state(&mut rng);
    let before = critic_forward(&s, &params).unwrap();
    let traj = vec![Transition { state: s.clone(), action: 10, reward: 50.0 }];
    let cfg = StepConfig::from_train(&TrainConfig::default(), 0.01);
    let mut opt = OptimizerState::new(Optimizer::Sgd, &params);
    policy_gradient_step(&mut params, &mut opt, &traj, None, &cfg).unwrap();
    assert_ne!(critic_forward(&s, &params).unwrap(), before);
}

#[test]
fn trained_policy_depends_on_buffer() {
    let env = Bandit { state: 0, winners: [30, 150] };
    let cfg = TrainConfig { actor_lr: 1e-3, critic_lr: 1e-3, reward_scale: 1.0, ..TrainConfig::default() };
    let (p, _) = train(&env, 300, &cfg).unwrap();
    let a = policy_forward(&Bandit::observe(0), &p).unwrap();
    let b = policy_forward(&Bandit::observe(1), &p).unwrap();
    assert_ne!(a, b);
    assert!(a[30] > b[30] && b[150] > a[150]);
}

#[test]
fn non_finite_rewards_abort_with_a_log() {
    #[derive(Clone)]
    struct Broken;
    impl Environment for Broken {
        fn reset(&mut self, _: &mut ChaCha8Rng) -> Result<AbrState> {
            Ok(AbrState::default())
        }
        fn step(&mut self, _: usize) -> Result<EnvStep> {
            Ok(EnvStep { state: AbrState::default(), reward: f64::NAN, done: true })
        }
    }
    let (_, log) = train(&Broken, 5, &TrainConfig::default()).unwrap();
    assert!(log.aborted.is_some());
    assert!(log.episodes.is_empty());
}
