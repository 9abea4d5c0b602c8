//! Deterministic policy-gradient trainer for the high-level controller.
//!
//! Every control period the actor maps the 12-dimensional torso
//! observation to `phi`, which modulates the sagittal hips for the next
//! period. Transitions are stored during exploration episodes and each
//! stored transition triggers one minibatch update.

use std::collections::VecDeque;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::highlevel::phi_to_psi;
use crate::mlp::{stack_rows, Adam, Critic, Mlp, MlpCache, ParamSet};
use crate::network::CpgNetworkConfig;
use crate::plant::{EpisodeMetrics, PlantConfig};
use crate::rollout::{EpisodeTiming, Walker};

pub const STATE_DIM: usize = 12;
pub const ACTION_DIM: usize = 2;

/// Reward on a fall.
pub const FALL_REWARD: f64 = -100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: [f64; STATE_DIM],
    pub a: [f64; ACTION_DIM],
    pub r: f64,
    pub s_next: [f64; STATE_DIM],
    pub done: bool,
}

/// Fixed-capacity FIFO of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config(
                "replay buffer capacity must be positive".into(),
            ));
        }
        Ok(ReplayBuffer {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Appends, evicting the oldest transition when full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Uniform minibatch without replacement.
    pub fn sample(&self, batch: usize, rng: &mut impl Rng) -> Result<Vec<&Transition>> {
        if batch == 0 || self.items.len() < batch {
            return Err(Error::BufferUnderfull {
                have: self.items.len(),
                need: batch.max(1),
            });
        }
        Ok(index::sample(rng, self.items.len(), batch)
            .into_iter()
            .map(|i| &self.items[i])
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub zeta_dev: f64,
    pub zeta_dist: f64,
    pub zeta_gamma: f64,
    pub xi: f64,
}

impl RewardWeights {
    pub const S1: RewardWeights = RewardWeights {
        zeta_dev: 1.0,
        zeta_dist: 0.5,
        zeta_gamma: 1.0,
        xi: 0.1,
    };
    pub const S2: RewardWeights = RewardWeights {
        zeta_dev: 1.0,
        zeta_dist: 0.5,
        zeta_gamma: 1.0,
        xi: 0.4,
    };
    pub const S3: RewardWeights = RewardWeights {
        zeta_dev: 1.0,
        zeta_dist: 0.3,
        zeta_gamma: 1.0,
        xi: 0.1,
    };
    pub const S4: RewardWeights = RewardWeights {
        zeta_dev: 1.0,
        zeta_dist: 0.3,
        zeta_gamma: 1.0,
        xi: 0.4,
    };

    pub fn validate(&self) -> Result<()> {
        if [self.zeta_dev, self.zeta_dist, self.zeta_gamma]
            .iter()
            .any(|w| !(*w >= 0.0) || !w.is_finite())
        {
            return Err(Error::Config(format!(
                "reward weights must be finite and >= 0: {self:?}"
            )));
        }
        if !(0.0..=1.0).contains(&self.xi) {
            return Err(Error::Config(format!(
                "xi must lie in [0, 1], got {}",
                self.xi
            )));
        }
        Ok(())
    }
}

/// `-100` after a fall, else `-zeta_dev |d_y| + zeta_dist d_x - zeta_gamma |gamma|`
/// on the current pose.
pub fn reward(metrics: &EpisodeMetrics, weights: &RewardWeights, fell: bool) -> f64 {
    if fell {
        return FALL_REWARD;
    }
    -weights.zeta_dev * metrics.d_y.abs() + weights.zeta_dist * metrics.d_x
        - weights.zeta_gamma * metrics.gamma_final.abs()
}

/// Ornstein-Uhlenbeck process with unit time step.
#[derive(Debug, Clone, PartialEq)]
pub struct OuNoise {
    pub theta: f64,
    pub sigma: f64,
    pub mu: f64,
    state: [f64; ACTION_DIM],
}

impl OuNoise {
    pub fn new(theta: f64, sigma: f64) -> Self {
        OuNoise {
            theta,
            sigma,
            mu: 0.0,
            state: [0.0; ACTION_DIM],
        }
    }

    pub fn reset(&mut self) {
        self.state = [self.mu; ACTION_DIM];
    }

    pub fn sample(&mut self, rng: &mut impl Rng) -> [f64; ACTION_DIM] {
        for x in self.state.iter_mut() {
            let n: f64 = StandardNormal.sample(rng);
            *x += self.theta * (self.mu - *x) + self.sigma * n;
        }
        self.state
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DdpgConfig {
    pub discount: f64,
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub critic_weight_decay: f64,
    pub batch_size: usize,
    pub ou_theta: f64,
    pub ou_sigma: f64,
    pub buffer_capacity: usize,
    pub hidden: (usize, usize),
    pub episodes: usize,
    pub eval_every: usize,
    pub checkpoint_every: usize,
    pub timing: EpisodeTiming,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        DdpgConfig {
            discount: 0.99,
            tau: 0.001,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            critic_weight_decay: 1e-2,
            batch_size: 64,
            ou_theta: 0.15,
            ou_sigma: 0.2,
            buffer_capacity: 100_000,
            hidden: (400, 300),
            episodes: 1000,
            eval_every: 10,
            checkpoint_every: 50,
            timing: EpisodeTiming::default(),
        }
    }
}

impl DdpgConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return bad("discount must lie in [0, 1]");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0 && self.critic_weight_decay >= 0.0) {
            return bad("learning rates must be positive and weight decay >= 0");
        }
        if self.batch_size == 0 || self.batch_size > self.buffer_capacity {
            return bad("batch size must be in 1..=buffer capacity");
        }
        if self.hidden.0 == 0 || self.hidden.1 == 0 {
            return bad("hidden layer sizes must be positive");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be positive");
        }
        if !(self.timing.duration > 0.0 && self.timing.control_period > 0.0)
            || self.timing.control_steps() == 0
        {
            return bad("episode duration and control period must be positive");
        }
        if self.ou_theta < 0.0 || self.ou_sigma < 0.0 {
            return bad("OU parameters must be >= 0");
        }
        Ok(())
    }
}

/// Online and target networks with their optimizers.
#[derive(Debug, Clone)]
pub struct Agent {
    pub actor: Mlp,
    pub critic: Critic,
    pub target_actor: Mlp,
    pub target_critic: Critic,
    actor_opt: Adam,
    critic_opt: Adam,
    pub config: DdpgConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Losses {
    pub critic: f64,
    /// Mean Q of the current policy's actions.
    pub actor_q: f64,
}

fn rows_to_matrix<const N: usize>(rows: impl Iterator<Item = [f64; N]>) -> Result<Array2<f64>> {
    let owned: Vec<[f64; N]> = rows.collect();
    let refs: Vec<&[f64]> = owned.iter().map(|r| r.as_slice()).collect();
    stack_rows(&refs)
}

impl Agent {
    pub fn new(config: DdpgConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let actor = Mlp::actor(STATE_DIM, config.hidden, ACTION_DIM, rng)?;
        let critic = Critic::new(STATE_DIM, ACTION_DIM, config.hidden, rng)?;
        Ok(Self::from_networks(actor, critic, config))
    }

    pub fn from_networks(actor: Mlp, critic: Critic, config: DdpgConfig) -> Self {
        Agent {
            actor_opt: Adam::new(&actor.params, config.actor_lr),
            critic_opt: Adam::new(&critic.params, config.critic_lr),
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
            config,
        }
    }

    pub fn act(&self, state: &[f64; STATE_DIM]) -> Result<[f64; ACTION_DIM]> {
        let out = self.actor.forward_one(state)?;
        Ok([out[0], out[1]])
    }

    /// Critic regression toward the bootstrapped target, one policy-gradient
    /// step for the actor, then soft target updates.
    pub fn train_step(&mut self, buffer: &ReplayBuffer, rng: &mut impl Rng) -> Result<Losses> {
        let batch = buffer.sample(self.config.batch_size, rng)?;
        self.train_on(&batch)
    }

    pub fn train_on(&mut self, batch: &[&Transition]) -> Result<Losses> {
        let n = batch.len();
        if n == 0 {
            return Err(Error::BufferUnderfull { have: 0, need: 1 });
        }
        let s = rows_to_matrix(batch.iter().map(|t| t.s))?;
        let a = rows_to_matrix(batch.iter().map(|t| t.a))?;
        let s_next = rows_to_matrix(batch.iter().map(|t| t.s_next))?;

        let next_a = self.target_actor.forward(s_next.view())?;
        let next_q = self.target_critic.forward(s_next.view(), next_a.view())?;
        let targets: Vec<f64> = batch
            .iter()
            .zip(next_q.column(0))
            .map(|(t, &q)| critic_target(t.r, t.done, self.config.discount, q))
            .collect();

        let cache = self.critic.forward_cached(s.view(), a.view())?;
        let mut grad_q = Array2::zeros((n, 1));
        let mut loss = 0.0;
        for (i, y) in targets.iter().enumerate() {
            let err = cache.q[[i, 0]] - y;
            loss += err * err;
            grad_q[[i, 0]] = 2.0 * err / n as f64;
        }
        let (mut critic_grads, _) = self.critic.backward(&cache, grad_q.view())?;
        let decay = self.config.critic_weight_decay;
        if decay > 0.0 {
            for &i in &Critic::WEIGHT_TENSORS {
                critic_grads.tensors[i].scaled_add(decay, &self.critic.params.tensors[i]);
            }
        }
        self.critic_opt
            .step(&mut self.critic.params, &critic_grads)?;

        let actor_cache = self.actor.forward_cached(s.view())?;
        let mu = actor_cache.output().clone();
        let q_cache = self.critic.forward_cached(s.view(), mu.view())?;
        let actor_q = q_cache.q.mean_axis(Axis(0)).map_or(0.0, |m| m[0]);
        let ones = Array2::from_elem((n, 1), 1.0);
        let (_, dq_da) = self.critic.backward(&q_cache, ones.view())?;
        let actor_grads = actor_gradient(&self.actor, &actor_cache, dq_da.view())?;
        self.actor_opt.step(&mut self.actor.params, &actor_grads)?;

        soft_update(
            &mut self.target_actor.params,
            &self.actor.params,
            self.config.tau,
        )?;
        soft_update(
            &mut self.target_critic.params,
            &self.critic.params,
            self.config.tau,
        )?;
        if !self.actor.params.is_finite() || !self.critic.params.is_finite() {
            return Err(Error::Divergence(
                "non-finite network parameters after update".into(),
            ));
        }
        Ok(Losses {
            critic: loss / n as f64,
            actor_q,
        })
    }
}

/// Gradient of the loss `-mean_i Q(s_i, mu(s_i))` with respect to the actor's
/// parameters, given `dQ/da` at the actor's outputs (one row per sample).
pub fn actor_gradient(actor: &Mlp, cache: &MlpCache, dq_da: ArrayView2<f64>) -> Result<ParamSet> {
    let n = dq_da.nrows().max(1) as f64;
    let upstream = dq_da.mapv(|g| -g / n);
    Ok(actor.backward(cache, upstream.view())?.0)
}

/// `r + discount * (1 - done) * q_next`; a terminal transition uses `r` alone.
pub fn critic_target(r: f64, done: bool, discount: f64, q_next: f64) -> f64 {
    if done {
        r
    } else {
        r + discount * q_next
    }
}

/// `target <- tau * online + (1 - tau) * target`.
pub fn soft_update(target: &mut ParamSet, online: &ParamSet, tau: f64) -> Result<()> {
    target.soft_update(online, tau)
}

/// One control period of an episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub phi: [f64; ACTION_DIM],
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub steps: Vec<StepRecord>,
    pub transitions: Vec<Transition>,
    pub total_reward: f64,
    pub metrics: EpisodeMetrics,
}

/// Everything an episode needs besides the agent.
#[derive(Debug, Clone)]
pub struct Env<'a> {
    pub network: &'a CpgNetworkConfig,
    pub plant: PlantConfig,
    pub weights: RewardWeights,
    pub timing: EpisodeTiming,
}

/// Runs one episode. With `explore`, OU noise is added to the actor's output
/// (clipped to `[0, 1]`) and each transition is pushed to `learn`'s buffer,
/// followed by one update once the buffer holds a full batch.
pub fn run_episode(
    env: &Env<'_>,
    agent: &mut Agent,
    explore: bool,
    noise: &mut OuNoise,
    mut learn: Option<&mut ReplayBuffer>,
    rng: &mut impl Rng,
) -> Result<EpisodeTrace> {
    let mut walker = Walker::new(env.network, env.plant)?;
    noise.reset();
    let mut steps = Vec::new();
    let mut transitions = Vec::new();
    let mut total = 0.0;
    let ticks = env.timing.ticks_per_step();
    for _ in 0..env.timing.control_steps() {
        let s = walker.plant.observe().to_array();
        let mut a = agent.act(&s)?;
        if explore {
            let n = noise.sample(rng);
            for (ai, ni) in a.iter_mut().zip(n) {
                *ai = (*ai + ni).clamp(0.0, 1.0);
            }
        }
        let psi = phi_to_psi(a, env.weights.xi)?;
        walker.run(psi, ticks)?;
        let fell = walker.plant.is_fallen();
        let r = reward(&walker.metrics(), &env.weights, fell);
        total += r;
        let t = Transition {
            s,
            a,
            r,
            s_next: walker.plant.observe().to_array(),
            done: fell,
        };
        steps.push(StepRecord {
            t: walker.time(),
            phi: a,
            reward: r,
            done: fell,
        });
        if explore {
            if let Some(buffer) = learn.as_deref_mut() {
                buffer.push(t);
                if buffer.len() >= agent.config.batch_size {
                    agent.train_step(buffer, rng)?;
                }
            }
            transitions.push(t);
        }
        if fell {
            break;
        }
    }
    Ok(EpisodeTrace {
        steps,
        transitions,
        total_reward: total,
        metrics: walker.metrics(),
    })
}

/// One evaluation row of a training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub episode: usize,
    pub eval_reward: f64,
    pub d_x: f64,
    pub d_y: f64,
    pub gamma: f64,
    pub fell: bool,
}

/// Plant seeds for training episode `i` and for the evaluation after
/// episode `i`.
pub fn episode_plant_seed(base: u64, episode: usize, eval: bool) -> u64 {
    crate::seeds::derive(base, if eval { 2 } else { 1 }, episode as u64)
}

/// Full training loop: exploration episodes with one update per stored
/// transition, and a noise-free evaluation every `eval_every` episodes.
/// `on_episode` is called after every training episode with its 1-based
/// index.
pub fn train(
    network: &CpgNetworkConfig,
    plant: PlantConfig,
    weights: RewardWeights,
    config: DdpgConfig,
    seed: u64,
    mut on_episode: impl FnMut(usize, &Agent, Option<&EvalRow>) -> Result<()>,
) -> Result<(Agent, Vec<EvalRow>)> {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    weights.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(crate::seeds::derive(seed, 0, 0));
    let mut agent = Agent::new(config, &mut rng)?;
    let mut buffer = ReplayBuffer::new(config.buffer_capacity)?;
    let mut noise = OuNoise::new(config.ou_theta, config.ou_sigma);
    let mut rows = Vec::new();
    for episode in 1..=config.episodes {
        let env = Env {
            network,
            plant: PlantConfig {
                seed: episode_plant_seed(plant.seed ^ seed, episode, false),
                ..plant
            },
            weights,
            timing: config.timing,
        };
        let trace = run_episode(
            &env,
            &mut agent,
            true,
            &mut noise,
            Some(&mut buffer),
            &mut rng,
        )?;
        log::debug!(
            "episode {episode}: return {:.3} {:?}",
            trace.total_reward,
            trace.metrics
        );
        let mut row = None;
        if episode % config.eval_every == 0 {
            let eval_env = Env {
                plant: PlantConfig {
                    seed: episode_plant_seed(plant.seed ^ seed, episode, true),
                    ..plant
                },
                ..env
            };
            let eval = run_episode(&eval_env, &mut agent, false, &mut noise, None, &mut rng)?;
            let r = EvalRow {
                episode,
                eval_reward: eval.total_reward,
                d_x: eval.metrics.d_x,
                d_y: eval.metrics.d_y,
                gamma: eval.metrics.gamma_final,
                fell: eval.metrics.fell,
            };
            log::info!(
                "eval after episode {episode}: reward {:.3} d_x {:.3} d_y {:.3} gamma {:.3} fell {}",
                r.eval_reward,
                r.d_x,
                r.d_y,
                r.gamma,
                r.fell
            );
            rows.push(r);
            row = rows.last();
        }
        on_episode(episode, &agent, row)?;
    }
    Ok((agent, rows))
}
