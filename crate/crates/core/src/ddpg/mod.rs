//! Actor-critic training with target networks, replay and OU exploration.

mod bandit;
mod noise;
mod replay;

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use bandit::QuadraticBandit;
pub use noise::OuNoise;
pub use replay::{ReplayBuffer, Transition};

use crate::error::{Error, Result};
use crate::nn::{adam_step, read_checkpoint, soft_update, write_checkpoint, AdamState, Mlp, OutputActivation};

/// What the training loop needs from an environment.
pub trait Environment {
    type Snapshot: Clone;

    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn action_bound(&self) -> f64;
    /// Restores the episode start and returns its state.
    fn reset(&mut self) -> Result<Vec<f64>>;
    fn step(&mut self, action: &[f64]) -> Result<EnvStep>;
    fn snapshot(&self) -> Self::Snapshot;
    /// Reward of holding the current configuration without moving.
    fn current_reward(&self) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub rate: f64,
    /// Smallest sensing slack `ϖ_k − Γ`; infinite without targets.
    pub min_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DdpgConfig {
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub critic_weight_decay: f64,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Transitions collected before the first update.
    pub warmup: usize,
    pub final_layer_init: f64,
    pub ou_xi: f64,
    /// OU scale at the first episode, as a fraction of the action bound.
    pub ou_sigma_start: f64,
    /// OU scale at the last episode, as a fraction of the action bound.
    pub ou_sigma_end: f64,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        Self {
            actor_hidden: vec![400, 300],
            critic_hidden: vec![400, 300],
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            critic_weight_decay: 0.0,
            gamma: 0.99,
            tau: 0.001,
            batch_size: 64,
            buffer_capacity: 10_000,
            warmup: 1000,
            final_layer_init: 3e-3,
            ou_xi: 0.15,
            ou_sigma_start: 0.2,
            ou_sigma_end: 0.02,
        }
    }
}

impl DdpgConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.actor_hidden.is_empty() || self.critic_hidden.is_empty() {
            return bad("actor and critic need at least one hidden layer".into());
        }
        if self.actor_hidden.iter().chain(&self.critic_hidden).any(|&h| h == 0) {
            return bad("hidden layer widths must be positive".into());
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("discount must lie in [0, 1), got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("soft update rate must lie in (0, 1], got {}", self.tau));
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad("batch size must be positive and no larger than the buffer".into());
        }
        for (name, v) in [
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
            ("final_layer_init", self.final_layer_init),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.critic_weight_decay >= 0.0) {
            return bad("critic weight decay must be non-negative".into());
        }
        if !(self.ou_xi > 0.0 && self.ou_xi <= 1.0) {
            return bad(format!("OU reversion rate must lie in (0, 1], got {}", self.ou_xi));
        }
        if !(self.ou_sigma_start >= 0.0 && self.ou_sigma_end >= 0.0) {
            return bad("OU scales must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub critic_loss: f64,
    pub actor_objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrainOutcome {
    Trained(LossReport),
    InsufficientData { available: usize, needed: usize },
}

#[derive(Debug, Clone)]
pub struct DdpgAgent {
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_target: Mlp,
    pub critic_target: Mlp,
    pub actor_opt: AdamState,
    pub critic_opt: AdamState,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub action_bound: f64,
}

fn dims(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut d = vec![input];
    d.extend_from_slice(hidden);
    d.push(output);
    d
}

fn columns<'a>(rows: usize, items: impl ExactSizeIterator<Item = &'a [f64]>) -> DMatrix<f64> {
    let n = items.len();
    let mut m = DMatrix::zeros(rows, n);
    for (j, v) in items.enumerate() {
        m.column_mut(j).copy_from_slice(v);
    }
    m
}

impl DdpgAgent {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        action_bound: f64,
        config: &DdpgConfig,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        if !(action_bound > 0.0 && action_bound.is_finite()) {
            return Err(Error::Config(format!("action bound must be positive, got {action_bound}")));
        }
        let actor = Mlp::new(
            &dims(state_dim, &config.actor_hidden, action_dim),
            OutputActivation::TanhScaled(action_bound),
            None,
            config.final_layer_init,
            rng,
        )?;
        let critic = Mlp::new(
            &dims(state_dim, &config.critic_hidden, 1),
            OutputActivation::Linear,
            Some(action_dim),
            config.final_layer_init,
            rng,
        )?;
        let actor_opt = AdamState::new(&actor, config.actor_lr);
        let mut critic_opt = AdamState::new(&critic, config.critic_lr);
        critic_opt.weight_decay = config.critic_weight_decay;
        Ok(Self {
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            actor_opt,
            critic_opt,
            gamma: config.gamma,
            tau: config.tau,
            batch_size: config.batch_size,
            action_bound,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.actor.output_dim()
    }

    /// Deterministic policy action.
    pub fn act(&self, state: &[f64]) -> Result<Vec<f64>> {
        if state.len() != self.state_dim() {
            return Err(Error::Dimension(format!(
                "state has {} components, actor expects {}",
                state.len(),
                self.state_dim()
            )));
        }
        self.actor.predict(state, None)
    }

    /// Policy action plus one OU step, clipped to the action bound.
    pub fn act_noisy<R: Rng + ?Sized>(&self, state: &[f64], noise: &mut OuNoise, rng: &mut R) -> Result<Vec<f64>> {
        let mut a = self.act(state)?;
        if noise.state.len() != a.len() {
            return Err(Error::Dimension("noise dimension does not match action".into()));
        }
        let b = self.action_bound;
        for (ai, z) in a.iter_mut().zip(noise.step(rng)) {
            *ai = (*ai + z).clamp(-b, b);
        }
        Ok(a)
    }

    /// One critic and one actor update on a uniform mini-batch, then soft
    /// target updates.
    pub fn train_step<R: Rng + ?Sized>(&mut self, buffer: &ReplayBuffer, rng: &mut R) -> Result<TrainOutcome> {
        if buffer.len() < self.batch_size {
            return Ok(TrainOutcome::InsufficientData { available: buffer.len(), needed: self.batch_size });
        }
        let slots = buffer.sample_indices(self.batch_size, rng);
        let batch: Vec<&Transition> = slots.iter().map(|&s| buffer.slot(s)).collect();
        let (sd, ad) = (self.state_dim(), self.action_dim());
        let states = columns(sd, batch.iter().map(|t| t.state.as_slice()));
        let actions = columns(ad, batch.iter().map(|t| t.action.as_slice()));
        let next_states = columns(sd, batch.iter().map(|t| t.next_state.as_slice()));
        let b = self.batch_size as f64;

        let next_actions = self.actor_target.forward(&next_states, None)?.output().clone();
        let next_q = self.critic_target.forward(&next_states, Some(&next_actions))?;
        let targets = DMatrix::from_fn(1, batch.len(), |_, j| batch[j].reward + self.gamma * next_q.output()[(0, j)]);

        let cache = self.critic.forward(&states, Some(&actions))?;
        let residual = cache.output() - &targets;
        let critic_loss = residual.norm_squared() / b;
        let grads = self.critic.backward(&cache, &(residual * (2.0 / b)))?;
        adam_step(&mut self.critic_opt, &mut self.critic, &grads)?;

        let actor_cache = self.actor.forward(&states, None)?;
        let q_cache = self.critic.forward(&states, Some(actor_cache.output()))?;
        let actor_objective = q_cache.output().sum() / b;
        let dq_da = self.critic.aux_gradient(&q_cache, &DMatrix::from_element(1, batch.len(), 1.0 / b))?;
        let actor_grads = self.actor.backward(&actor_cache, &(-dq_da))?;
        adam_step(&mut self.actor_opt, &mut self.actor, &actor_grads)?;

        soft_update(&mut self.critic_target, &self.critic, self.tau)?;
        soft_update(&mut self.actor_target, &self.actor, self.tau)?;
        Ok(TrainOutcome::Trained(LossReport { critic_loss, actor_objective }))
    }

    /// Writes actor, critic (with optimizer states) and both targets.
    pub fn save<W: Write>(&self, w: &mut W) -> Result<()> {
        write_checkpoint(
            w,
            &[
                (&self.actor, Some(&self.actor_opt)),
                (&self.critic, Some(&self.critic_opt)),
                (&self.actor_target, None),
                (&self.critic_target, None),
            ],
        )
    }

    /// Restores networks saved by [`DdpgAgent::save`]; scalar settings come
    /// from `config`.
    pub fn load<R: Read>(r: &mut R, config: &DdpgConfig) -> Result<Self> {
        config.validate()?;
        let mut nets = read_checkpoint(r)?.into_iter();
        let mut next = || nets.next().ok_or_else(|| Error::Checkpoint("agent checkpoint needs 4 networks".into()));
        let (actor, actor_opt) = next()?;
        let (critic, critic_opt) = next()?;
        let (actor_target, _) = next()?;
        let (critic_target, _) = next()?;
        let action_bound = match actor.output_activation() {
            OutputActivation::TanhScaled(s) => s,
            OutputActivation::Linear => return Err(Error::Checkpoint("actor must have a bounded output".into())),
        };
        if critic.late_concat_dim() != Some(actor.output_dim()) || critic.input_dim() != actor.input_dim() {
            return Err(Error::Checkpoint("critic does not match actor dimensions".into()));
        }
        if actor_target.layer_dims() != actor.layer_dims() || critic_target.layer_dims() != critic.layer_dims() {
            return Err(Error::Checkpoint("target networks differ in shape from online networks".into()));
        }
        let actor_opt = actor_opt.ok_or_else(|| Error::Checkpoint("missing actor optimizer state".into()))?;
        let critic_opt = critic_opt.ok_or_else(|| Error::Checkpoint("missing critic optimizer state".into()))?;
        Ok(Self {
            actor,
            critic,
            actor_target,
            critic_target,
            actor_opt,
            critic_opt,
            gamma: config.gamma,
            tau: config.tau,
            batch_size: config.batch_size,
            action_bound,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub steps: usize,
    pub total_return: f64,
    pub mean_rate: f64,
    pub final_rate: f64,
    pub min_sensing_slack: f64,
    pub noise_scale: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingLog<S> {
    pub episodes: Vec<EpisodeLog>,
    pub best_snapshot: S,
    pub best_reward: f64,
    pub updates: usize,
}

/// Agent, replay memory and exploration state carried across calls.
#[derive(Debug, Clone)]
pub struct DdpgTrainer {
    pub agent: DdpgAgent,
    pub buffer: ReplayBuffer,
    pub noise: OuNoise,
    pub config: DdpgConfig,
    pub total_steps: usize,
}

impl DdpgTrainer {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        action_bound: f64,
        config: DdpgConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let agent = DdpgAgent::new(state_dim, action_dim, action_bound, &config, rng)?;
        let noise = OuNoise::new(action_dim, config.ou_xi, config.ou_sigma_start * action_bound)?;
        let buffer = ReplayBuffer::new(config.buffer_capacity)?;
        Ok(Self { agent, buffer, noise, config, total_steps: 0 })
    }

    pub fn for_env<E: Environment, R: Rng + ?Sized>(env: &E, config: DdpgConfig, rng: &mut R) -> Result<Self> {
        Self::new(env.state_dim(), env.action_dim(), env.action_bound(), config, rng)
    }

    fn noise_scale(&self, episode: usize, episodes: usize) -> f64 {
        let progress = if episodes > 1 { episode as f64 / (episodes - 1) as f64 } else { 0.0 };
        let c = &self.config;
        (c.ou_sigma_start + (c.ou_sigma_end - c.ou_sigma_start) * progress) * self.agent.action_bound
    }

    /// Standard interaction loop: noisy action, step, store, train.
    ///
    /// The exploration scale anneals linearly across the episodes of this
    /// call. The best-reward snapshot starts from the environment as given.
    pub fn run_episodes<E: Environment, R: Rng + ?Sized>(
        &mut self,
        env: &mut E,
        episodes: usize,
        steps_per_episode: usize,
        rng: &mut R,
    ) -> Result<TrainingLog<E::Snapshot>> {
        if env.state_dim() != self.agent.state_dim() || env.action_dim() != self.agent.action_dim() {
            return Err(Error::Dimension("environment does not match agent dimensions".into()));
        }
        let mut log = TrainingLog {
            episodes: Vec::with_capacity(episodes),
            best_snapshot: env.snapshot(),
            best_reward: env.current_reward()?,
            updates: 0,
        };
        let ready = self.config.warmup.max(self.agent.batch_size);
        for episode in 0..episodes {
            self.noise.varsigma = self.noise_scale(episode, episodes);
            self.noise.reset();
            let mut state = env.reset()?;
            let mut entry = EpisodeLog {
                episode,
                steps: 0,
                total_return: 0.0,
                mean_rate: 0.0,
                final_rate: 0.0,
                min_sensing_slack: f64::INFINITY,
                noise_scale: self.noise.varsigma,
            };
            for _ in 0..steps_per_episode {
                let action = self.agent.act_noisy(&state, &mut self.noise, rng)?;
                let out = env.step(&action)?;
                self.buffer.push(Transition {
                    state: std::mem::take(&mut state),
                    action,
                    reward: out.reward,
                    next_state: out.next_state.clone(),
                });
                self.total_steps += 1;
                if out.reward > log.best_reward {
                    log.best_reward = out.reward;
                    log.best_snapshot = env.snapshot();
                }
                entry.steps += 1;
                entry.total_return += out.reward;
                entry.mean_rate += out.rate;
                entry.final_rate = out.rate;
                entry.min_sensing_slack = entry.min_sensing_slack.min(out.min_slack);
                if self.buffer.len() >= ready {
                    if let TrainOutcome::Trained(_) = self.agent.train_step(&self.buffer, rng)? {
                        log.updates += 1;
                    }
                }
                state = out.next_state;
                if out.done {
                    break;
                }
            }
            if entry.steps > 0 {
                entry.mean_rate /= entry.steps as f64;
            }
            log.episodes.push(entry);
        }
        Ok(log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_config() -> DdpgConfig {
        DdpgConfig {
            actor_hidden: vec![16, 12],
            critic_hidden: vec![16, 12],
            batch_size: 8,
            buffer_capacity: 64,
            warmup: 8,
            ..Default::default()
        }
    }

    #[test]
    fn targets_start_as_copies() {
        let agent = DdpgAgent::new(3, 2, 0.5, &small_config(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(agent.actor.flat_params(), agent.actor_target.flat_params());
        assert_eq!(agent.critic.flat_params(), agent.critic_target.flat_params());
    }

    #[test]
    fn actions_are_deterministic_and_small() {
        let agent = DdpgAgent::new(3, 2, 0.5, &small_config(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let s = [0.3, -0.2, 1.0];
        let a = agent.act(&s).unwrap();
        assert_eq!(a, agent.act(&s).unwrap());
        assert!(a.iter().all(|v| v.abs() < 0.5 * 0.1));

        let mut silent = OuNoise::new(2, 1.0, 0.0).unwrap();
        let noisy = agent.act_noisy(&s, &mut silent, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(noisy, a);

        let mut loud = OuNoise::new(2, 0.15, 10.0).unwrap();
        let clipped = agent.act_noisy(&s, &mut loud, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert!(clipped.iter().all(|v| v.abs() <= 0.5));
        assert!(agent.act(&[1.0]).is_err());
    }

    #[test]
    fn train_step_needs_a_full_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut agent = DdpgAgent::new(1, 1, 1.0, &small_config(), &mut rng).unwrap();
        let buf = ReplayBuffer::new(16).unwrap();
        assert_eq!(
            agent.train_step(&buf, &mut rng).unwrap(),
            TrainOutcome::InsufficientData { available: 0, needed: 8 }
        );
    }

    #[test]
    fn one_step_moves_targets_by_tau() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut cfg = small_config();
        cfg.tau = 0.25;
        let mut agent = DdpgAgent::new(2, 1, 1.0, &cfg, &mut rng).unwrap();
        let mut buf = ReplayBuffer::new(32).unwrap();
        for i in 0..32 {
            let x = i as f64 / 32.0;
            buf.push(Transition { state: vec![x, -x], action: vec![0.1], reward: x, next_state: vec![x, x] });
        }
        let before_actor = agent.actor_target.flat_params();
        let before_critic = agent.critic_target.flat_params();
        assert!(matches!(agent.train_step(&buf, &mut rng).unwrap(), TrainOutcome::Trained(_)));
        for (before, target, online) in [
            (before_actor, agent.actor_target.flat_params(), agent.actor.flat_params()),
            (before_critic, agent.critic_target.flat_params(), agent.critic.flat_params()),
        ] {
            for ((b, t), o) in before.iter().zip(&target).zip(&online) {
                assert!((t - (b + 0.25 * (o - b))).abs() <= 1e-15 * (1.0 + b.abs() + o.abs()));
            }
        }
    }

    #[test]
    fn zero_episodes_returns_initial_snapshot() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut env = QuadraticBandit::new(0.3, 1.0).unwrap();
        let mut trainer = DdpgTrainer::for_env(&env, small_config(), &mut rng).unwrap();
        let log = trainer.run_episodes(&mut env, 0, 10, &mut rng).unwrap();
        assert!(log.episodes.is_empty());
        assert_eq!(log.best_snapshot, 0.0);
        assert_eq!(log.updates, 0);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = small_config();
        let agent = DdpgAgent::new(3, 2, 0.5, &cfg, &mut rng).unwrap();
        let mut bytes = Vec::new();
        agent.save(&mut bytes).unwrap();
        let back = DdpgAgent::load(&mut bytes.as_slice(), &cfg).unwrap();
        assert_eq!(back.actor.flat_params(), agent.actor.flat_params());
        assert_eq!(back.critic_opt, agent.critic_opt);
        assert_eq!(back.action_bound, 0.5);
    }
}
