//! Staged training pipeline: behavior cloning from the reference gait,
//! then soft actor-critic fine-tuning with a frozen-actor warm-up and a
//! decaying critic learning rate.
//!
//! The actor is a squashed-Gaussian policy: a dense network produces the
//! pre-squash mean and a state-independent log-std vector sets the spread;
//! actions are `tanh` of the reparameterized sample. The critic pair maps
//! `[observation; action]` to a scalar value. Training is generic over
//! [`Task`] so the same loop drives both the robot environment and the
//! built-in one-dimensional reach task used for oracle checks.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use thiserror::Error;

use crate::config::TrainConfig;
use crate::env::{Env, EnvError, ACTION_DIM, STACK_DIM};
use crate::gait::{reference_action, GaitSchedule};
use crate::nn::{Adam, Checkpoint, Mlp, NnError};
use std::path::Path;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("demonstration dataset is empty (all episodes discarded)")]
    EmptyDataset,
    #[error("cloning diverged: validation loss never improved")]
    BcDiverged,
    #[error("critic diverged at episode {0}: loss {1}")]
    CriticDiverged(usize, f64),
    #[error("action width {0} does not match the task")]
    ActionWidth(usize),
}

/// Episodic task interface shared by the robot environment and the
/// built-in reach task.
pub trait Task {
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Result<DVector<f64>, LearnError>;
    /// Returns `(next_obs, reward, done, terminal)`. `terminal` marks a
    /// genuine terminal state (fall): the value target does not bootstrap
    /// through it; a timeout `done` still bootstraps.
    fn step(&mut self, action: &[f64]) -> Result<(DVector<f64>, f64, bool, bool), LearnError>;
}

impl Task for Env {
    fn obs_dim(&self) -> usize {
        STACK_DIM
    }

    fn action_dim(&self) -> usize {
        ACTION_DIM
    }

    fn reset(&mut self, seed: u64) -> Result<DVector<f64>, LearnError> {
        let obs = Env::reset(self, seed)?;
        Ok(DVector::from_column_slice(&obs.stack))
    }

    fn step(&mut self, action: &[f64]) -> Result<(DVector<f64>, f64, bool, bool), LearnError> {
        let out = Env::step(self, action)?;
        Ok((
            DVector::from_column_slice(&out.observation.stack),
            out.reward,
            out.terminated,
            out.info.fell,
        ))
    }
}

/// One-dimensional reach task with a known optimal return, used as the
/// learning-loop oracle: `x' = x + 0.1·a`, reward `1 − |x|`, fixed start.
pub struct ToyReach {
    x: f64,
    steps: usize,
    pub horizon: usize,
}

impl ToyReach {
    pub fn new() -> Self {
        Self {
            x: 1.0,
            steps: 0,
            horizon: 50,
        }
    }

    /// Best achievable undiscounted episode return: close at full speed,
    /// then hold the target.
    pub fn optimal_return(&self) -> f64 {
        let mut x: f64 = 1.0;
        let mut total = 0.0;
        for _ in 0..self.horizon {
            x = (x - 0.1).max(0.0);
            total += 1.0 - x;
        }
        total
    }
}

impl Default for ToyReach {
    fn default() -> Self {
        Self::new()
    }
}

impl Task for ToyReach {
    fn obs_dim(&self) -> usize {
        1
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn reset(&mut self, _seed: u64) -> Result<DVector<f64>, LearnError> {
        self.x = 1.0;
        self.steps = 0;
        Ok(DVector::from_element(1, self.x))
    }

    fn step(&mut self, action: &[f64]) -> Result<(DVector<f64>, f64, bool, bool), LearnError> {
        if action.len() != 1 {
            return Err(LearnError::ActionWidth(action.len()));
        }
        self.x += 0.1 * action[0].clamp(-1.0, 1.0);
        self.steps += 1;
        let reward = 1.0 - self.x.abs();
        let done = self.steps >= self.horizon;
        Ok((DVector::from_element(1, self.x), reward, done, false))
    }
}

/// Squashed-Gaussian policy: `a = tanh(μ(s) + σ·ε)` with a
/// state-independent log-std vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub net: Mlp<f64>,
    pub log_std: DVector<f64>,
    /// Per-channel observation whitening applied before the network.
    pub obs_mean: DVector<f64>,
    pub obs_std: DVector<f64>,
}

/// Squash correction floor keeping `log(1 − a²)` finite at saturation.
const SQUASH_EPS: f64 = 1e-6;

impl GaussianPolicy {
    pub fn new(
        obs_dim: usize,
        hidden: &[usize],
        action_dim: usize,
        init_log_std: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, LearnError> {
        let mut widths = vec![obs_dim];
        widths.extend_from_slice(hidden);
        widths.push(action_dim);
        Ok(Self {
            net: Mlp::new(&widths, rng)?,
            log_std: DVector::from_element(action_dim, init_log_std),
            obs_mean: DVector::zeros(obs_dim),
            obs_std: DVector::from_element(obs_dim, 1.0),
        })
    }

    pub fn action_dim(&self) -> usize {
        self.net.output_width()
    }

    pub fn whiten_vec(&self, obs: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(obs.len(), |i, _| (obs[i] - self.obs_mean[i]) / self.obs_std[i])
    }

    pub fn whiten_batch(&self, obs: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(obs.nrows(), obs.ncols(), |r, c| {
            (obs[(r, c)] - self.obs_mean[r]) / self.obs_std[r]
        })
    }

    /// Deterministic action: the squashed mean.
    pub fn mean_action(&self, obs: &DVector<f64>) -> Result<DVector<f64>, LearnError> {
        let u = self.net.forward_vec(&self.whiten_vec(obs))?;
        Ok(u.map(|x| x.tanh()))
    }

    /// Reparameterized sample with its log-probability.
    pub fn sample(
        &self,
        obs: &DVector<f64>,
        rng: &mut ChaCha8Rng,
    ) -> Result<(DVector<f64>, f64), LearnError> {
        let u_mean = self.net.forward_vec(&self.whiten_vec(obs))?;
        let mut a = DVector::zeros(u_mean.len());
        let mut logp = 0.0;
        for j in 0..u_mean.len() {
            let sigma = self.log_std[j].exp();
            let eps: f64 = StandardNormal.sample(rng);
            let u = u_mean[j] + sigma * eps;
            let t = u.tanh();
            a[j] = t;
            logp += -self.log_std[j]
                - 0.5 * (2.0 * std::f64::consts::PI).ln()
                - 0.5 * eps * eps
                - (1.0 - t * t + SQUASH_EPS).ln();
        }
        Ok((a, logp))
    }

    /// Batch sample on column observations: returns actions, per-column
    /// log-probabilities, pre-squash values, and the noise draws.
    fn sample_batch(
        &self,
        obs: &DMatrix<f64>,
        rng: &mut ChaCha8Rng,
    ) -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>, DMatrix<f64>), LearnError> {
        let u_mean = self.net.forward(&self.whiten_batch(obs))?;
        let (dim, k) = u_mean.shape();
        let mut eps = DMatrix::zeros(dim, k);
        let mut u = DMatrix::zeros(dim, k);
        let mut a = DMatrix::zeros(dim, k);
        let mut logp: DVector<f64> = DVector::zeros(k);
        for c in 0..k {
            for j in 0..dim {
                let sigma = self.log_std[j].exp();
                let e: f64 = StandardNormal.sample(rng);
                let uu = u_mean[(j, c)] + sigma * e;
                let t = uu.tanh();
                eps[(j, c)] = e;
                u[(j, c)] = uu;
                a[(j, c)] = t;
                logp[c] += -self.log_std[j]
                    - 0.5 * (2.0 * std::f64::consts::PI).ln()
                    - 0.5 * e * e
                    - (1.0 - t * t + SQUASH_EPS).ln();
            }
        }
        Ok((a, logp, u, eps))
    }
}

/// One recorded demonstration pair.
#[derive(Debug, Clone)]
pub struct DemoPair {
    pub episode: usize,
    pub time: f64,
    pub obs: Vec<f64>,
    pub action: [f64; ACTION_DIM],
}

/// Time-ordered, episode-tagged demonstration dataset.
#[derive(Debug, Clone, Default)]
pub struct DemoDataset {
    pub pairs: Vec<DemoPair>,
    /// Episodes dropped because the gait fell.
    pub discarded: usize,
}

/// Rolls the reference gait in the environment (randomization as
/// configured) and records stacked observations with the exact increments
/// taken. Episodes where the gait falls are discarded.
pub fn collect_demonstrations(
    env: &mut Env,
    schedule: &GaitSchedule,
    n_episodes: usize,
    seed: u64,
) -> Result<DemoDataset, LearnError> {
    let mut dataset = DemoDataset::default();
    for ep in 0..n_episodes {
        let mut obs = Env::reset(env, mix_seed(seed, ep as u64))?;
        let mut episode_pairs = Vec::with_capacity(env.cfg.env.episode_steps);
        let fell;
        loop {
            let t = env.time();
            let sim = env.sim.as_ref().expect("reset above");
            let action = reference_action(schedule, t, &sim.pneu, &env.cfg.pneumatics);
            let out = Env::step(env, &action)?;
            episode_pairs.push(DemoPair {
                episode: ep,
                time: t,
                obs: obs.stack.to_vec(),
                action,
            });
            obs = out.observation;
            if out.terminated {
                fell = out.info.fell;
                break;
            }
        }
        if fell {
            dataset.discarded += 1;
        } else {
            dataset.pairs.extend(episode_pairs);
        }
    }
    if dataset.pairs.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    Ok(dataset)
}

/// Cloning accuracy on the held-out split.
#[derive(Debug, Clone, Copy)]
pub struct BcReport {
    pub train_mse: f64,
    pub holdout_mse: f64,
    pub epochs_run: usize,
}

/// Trains the actor mean to imitate the demonstrations with a 90/10
/// train/validation split; the log-std is set to the configured starting
/// spread afterwards.
pub fn behavior_clone(
    dataset: &DemoDataset,
    train: &TrainConfig,
    seed: u64,
) -> Result<(GaussianPolicy, BcReport), LearnError> {
    if dataset.pairs.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    let obs_dim = dataset.pairs[0].obs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut policy = GaussianPolicy::new(
        obs_dim,
        &train.hidden,
        ACTION_DIM,
        train.bc_init_log_std,
        &mut rng,
    )?;
    let mut opt = Adam::new(&policy.net, train.bc_lr);

    // deterministic shuffle, then 90/10 split
    let mut order: Vec<usize> = (0..dataset.pairs.len()).collect();
    shuffle(&mut order, &mut rng);
    let n_holdout = (order.len() / 10).max(1);
    let (holdout_idx, train_idx) = order.split_at(n_holdout);

    // per-channel whitening fitted on the training split
    let mut mean = DVector::zeros(obs_dim);
    for &i in train_idx {
        for j in 0..obs_dim {
            mean[j] += dataset.pairs[i].obs[j];
        }
    }
    mean /= train_idx.len() as f64;
    let mut var = DVector::zeros(obs_dim);
    for &i in train_idx {
        for j in 0..obs_dim {
            let d = dataset.pairs[i].obs[j] - mean[j];
            var[j] += d * d;
        }
    }
    var /= train_idx.len() as f64;
    policy.obs_mean = mean;
    policy.obs_std = var.map(|v: f64| if v.sqrt() < 1e-6 { 1.0 } else { v.sqrt() });

    let column = |i: usize| &dataset.pairs[i];
    let batch_mats = |idx: &[usize]| {
        let k = idx.len();
        let mut x = DMatrix::zeros(obs_dim, k);
        let mut y = DMatrix::zeros(ACTION_DIM, k);
        for (c, &i) in idx.iter().enumerate() {
            let p = column(i);
            x.column_mut(c).copy_from_slice(&p.obs);
            y.column_mut(c).copy_from_slice(&p.action);
        }
        (x, y)
    };
    let mse = |policy: &GaussianPolicy, idx: &[usize]| -> Result<f64, LearnError> {
        let (x, y) = batch_mats(idx);
        let out = policy.net.forward(&policy.whiten_batch(&x))?.map(|v| v.tanh());
        let diff = out - y;
        Ok(diff.iter().map(|d| d * d).sum::<f64>() / diff.len() as f64)
    };

    let mut train_order = train_idx.to_vec();
    let mut best_holdout = f64::INFINITY;
    let mut improved = false;
    let mut epochs_run = 0;
    for _epoch in 0..train.bc_epochs {
        shuffle(&mut train_order, &mut rng);
        for chunk in train_order.chunks(train.bc_batch) {
            let (x, y) = batch_mats(chunk);
            let (out, tape) = policy.net.forward_cached(&policy.whiten_batch(&x))?;
            let k = chunk.len() as f64;
            let mut upstream = DMatrix::zeros(ACTION_DIM, chunk.len());
            for c in 0..chunk.len() {
                for r in 0..ACTION_DIM {
                    let t = out[(r, c)].tanh();
                    upstream[(r, c)] =
                        2.0 * (t - y[(r, c)]) * (1.0 - t * t) / (k * ACTION_DIM as f64);
                }
            }
            let (grads, _) = policy.net.backward(&tape, &upstream)?;
            opt.step(&mut policy.net, &grads)?;
        }
        epochs_run += 1;
        let h = mse(&policy, holdout_idx)?;
        if h < best_holdout {
            if epochs_run > 1 {
                improved = true;
            }
            best_holdout = h;
        }
    }
    if !improved && train.bc_epochs > 1 {
        return Err(LearnError::BcDiverged);
    }
    let report = BcReport {
        train_mse: mse(&policy, train_idx)?,
        holdout_mse: mse(&policy, holdout_idx)?,
        epochs_run,
    };
    Ok((policy, report))
}

/// One stored transition batch in column form.
pub struct Batch {
    pub obs: DMatrix<f64>,
    pub action: DMatrix<f64>,
    pub reward: DVector<f64>,
    pub next_obs: DMatrix<f64>,
    /// 1 when the value target bootstraps through `next_obs` (not a fall).
    pub bootstrap: DVector<f64>,
}

/// Ring buffer of transitions; oldest entries are overwritten first.
pub struct ReplayBuffer {
    obs_dim: usize,
    act_dim: usize,
    capacity: usize,
    obs: Vec<f32>,
    action: Vec<f32>,
    reward: Vec<f32>,
    next_obs: Vec<f32>,
    terminal: Vec<bool>,
    cursor: usize,
    len: usize,
}

impl ReplayBuffer {
    pub fn new(obs_dim: usize, act_dim: usize, capacity: usize) -> Self {
        Self {
            obs_dim,
            act_dim,
            capacity,
            obs: Vec::new(),
            action: Vec::new(),
            reward: Vec::new(),
            next_obs: Vec::new(),
            terminal: Vec::new(),
            cursor: 0,
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Stores one transition; `terminal` is true only for genuine terminal
    /// states (falls), not timeouts.
    pub fn push(
        &mut self,
        obs: &DVector<f64>,
        action: &[f64],
        reward: f64,
        next_obs: &DVector<f64>,
        terminal: bool,
    ) {
        let write = |dst: &mut Vec<f32>, src: &[f64], width: usize, cursor: usize| {
            if dst.len() < (cursor + 1) * width {
                dst.resize((cursor + 1) * width, 0.0);
            }
            for (i, v) in src.iter().enumerate() {
                dst[cursor * width + i] = *v as f32;
            }
        };
        write(&mut self.obs, obs.as_slice(), self.obs_dim, self.cursor);
        write(&mut self.action, action, self.act_dim, self.cursor);
        write(&mut self.reward, &[reward], 1, self.cursor);
        write(&mut self.next_obs, next_obs.as_slice(), self.obs_dim, self.cursor);
        if self.terminal.len() <= self.cursor {
            self.terminal.resize(self.cursor + 1, false);
        }
        self.terminal[self.cursor] = terminal;
        self.cursor = (self.cursor + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
    }

    /// Uniform minibatch over the filled region.
    pub fn sample(&self, k: usize, rng: &mut ChaCha8Rng) -> Batch {
        let mut obs = DMatrix::zeros(self.obs_dim, k);
        let mut action = DMatrix::zeros(self.act_dim, k);
        let mut reward = DVector::zeros(k);
        let mut next_obs = DMatrix::zeros(self.obs_dim, k);
        let mut bootstrap = DVector::zeros(k);
        for c in 0..k {
            let i = rng.gen_range(0..self.len);
            for r in 0..self.obs_dim {
                obs[(r, c)] = self.obs[i * self.obs_dim + r] as f64;
                next_obs[(r, c)] = self.next_obs[i * self.obs_dim + r] as f64;
            }
            for r in 0..self.act_dim {
                action[(r, c)] = self.action[i * self.act_dim + r] as f64;
            }
            reward[c] = self.reward[i] as f64;
            bootstrap[c] = if self.terminal[i] { 0.0 } else { 1.0 };
        }
        Batch {
            obs,
            action,
            reward,
            next_obs,
            bootstrap,
        }
    }

    #[cfg(test)]
    fn stored_reward(&self, slot: usize) -> f64 {
        self.reward[slot] as f64
    }
}

/// Soft actor-critic hyperparameters resolved from the training config.
#[derive(Debug, Clone)]
pub struct SacParams {
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub warmup_episodes: usize,
    pub critic_lr_start: f64,
    pub critic_lr_end: f64,
    pub actor_lr: f64,
    pub alpha_lr: f64,
    pub entropy_target: f64,
    pub updates_per_step: usize,
}

impl SacParams {
    /// The config sentinel `entropy_target = 0` resolves to the SAC
    /// convention of minus the action dimension.
    pub fn from_config(train: &TrainConfig, action_dim: usize) -> Self {
        Self {
            hidden: train.hidden.clone(),
            gamma: train.gamma,
            tau: train.tau,
            batch_size: train.batch_size,
            buffer_capacity: train.buffer_capacity,
            warmup_episodes: train.warmup_episodes,
            critic_lr_start: train.critic_lr_start,
            critic_lr_end: train.critic_lr_end,
            actor_lr: train.actor_lr,
            alpha_lr: train.alpha_lr,
            entropy_target: if train.entropy_target == 0.0 {
                -(action_dim as f64)
            } else {
                train.entropy_target
            },
            updates_per_step: train.updates_per_step,
        }
    }
}

/// Critic learning rate at an episode index: linear decay across the
/// warm-up window, then held at the end value.
pub fn critic_lr(params: &SacParams, episode: usize) -> f64 {
    if params.warmup_episodes == 0 {
        return params.critic_lr_end;
    }
    let frac = (episode as f64 / params.warmup_episodes as f64).min(1.0);
    params.critic_lr_start + frac * (params.critic_lr_end - params.critic_lr_start)
}

/// Temporal-difference value target used by the critic update. With the
/// entropy temperature at zero and a deterministic next action this is the
/// plain TD target.
pub fn td_target(
    reward: f64,
    bootstrap: f64,
    gamma: f64,
    next_min_q: f64,
    alpha: f64,
    next_logp: f64,
) -> f64 {
    reward + gamma * bootstrap * (next_min_q - alpha * next_logp)
}

/// Training artifacts of one seed.
pub struct SacRun {
    pub episode_returns: Vec<f64>,
    pub q1: Mlp<f64>,
    pub q2: Mlp<f64>,
    pub log_alpha: f64,
}

struct VecAdam {
    lr: f64,
    m: DVector<f64>,
    v: DVector<f64>,
    step: u64,
}

impl VecAdam {
    fn new(dim: usize, lr: f64) -> Self {
        Self {
            lr,
            m: DVector::zeros(dim),
            v: DVector::zeros(dim),
            step: 0,
        }
    }

    fn step(&mut self, params: &mut DVector<f64>, grad: &DVector<f64>) {
        self.step += 1;
        let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
        let bc1 = 1.0 - b1.powi(self.step as i32);
        let bc2 = 1.0 - b2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * grad[i];
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / bc1) / ((self.v[i] / bc2).sqrt() + eps);
        }
    }
}

fn polyak(target: &mut Mlp<f64>, online: &Mlp<f64>, tau: f64) {
    for (tl, ol) in target.layers.iter_mut().zip(&online.layers) {
        tl.weight.zip_apply(&ol.weight, |t, o| *t = (1.0 - tau) * *t + tau * o);
        tl.bias.zip_apply(&ol.bias, |t, o| *t = (1.0 - tau) * *t + tau * o);
    }
}

/// Stacks observation and action columns into critic input.
fn critic_input(obs: &DMatrix<f64>, action: &DMatrix<f64>) -> DMatrix<f64> {
    let k = obs.ncols();
    let mut x = DMatrix::zeros(obs.nrows() + action.nrows(), k);
    x.rows_mut(0, obs.nrows()).copy_from(obs);
    x.rows_mut(obs.nrows(), action.nrows()).copy_from(action);
    x
}

/// Soft actor-critic on any [`Task`], warm-started from the given policy.
/// The actor and temperature are frozen for the first
/// `params.warmup_episodes` while the critics learn from transitions
/// collected by the frozen stochastic actor.
pub fn sac_train<T: Task>(
    task: &mut T,
    policy: &mut GaussianPolicy,
    params: &SacParams,
    episodes: usize,
    seed: u64,
) -> Result<SacRun, LearnError> {
    sac_train_init(task, policy, params, episodes, seed, None, |_| {})
}

/// Warm-start state for resuming an interrupted run. The replay buffer is
/// not persisted; a resumed run refills it from fresh rollouts.
pub struct SacInit {
    pub q1: Mlp<f64>,
    pub q2: Mlp<f64>,
    pub log_alpha: f64,
    /// Global episode index the run continues from (drives the critic
    /// learning-rate schedule and the warm-up freeze).
    pub start_episode: usize,
}

/// Read-only snapshot handed to the per-episode progress callback, enough
/// to report or checkpoint the run.
pub struct SacProgress<'a> {
    /// Global episode index just finished.
    pub episode: usize,
    pub episode_return: f64,
    pub policy: &'a GaussianPolicy,
    pub q1: &'a Mlp<f64>,
    pub q2: &'a Mlp<f64>,
    pub log_alpha: f64,
}

/// [`sac_train`] with optional warm-start state and a per-episode progress
/// callback.
pub fn sac_train_init<T: Task>(
    task: &mut T,
    policy: &mut GaussianPolicy,
    params: &SacParams,
    episodes: usize,
    seed: u64,
    init: Option<SacInit>,
    mut on_episode: impl FnMut(&SacProgress),
) -> Result<SacRun, LearnError> {
    let obs_dim = task.obs_dim();
    let act_dim = task.action_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xC0FFEE));

    let mut q_widths = vec![obs_dim + act_dim];
    q_widths.extend_from_slice(&params.hidden);
    q_widths.push(1);
    let (mut q1, mut q2, mut log_alpha, start_episode) = match init {
        Some(i) => (i.q1, i.q2, DVector::from_element(1, i.log_alpha), i.start_episode),
        None => (
            Mlp::new(&q_widths, &mut rng)?,
            Mlp::new(&q_widths, &mut rng)?,
            DVector::from_element(1, -1.0),
            0,
        ),
    };
    let mut tq1 = q1.clone();
    let mut tq2 = q2.clone();
    let mut opt_q1 = Adam::new(&q1, params.critic_lr_start);
    let mut opt_q2 = Adam::new(&q2, params.critic_lr_start);
    let mut opt_actor = Adam::new(&policy.net, params.actor_lr);
    let mut opt_log_std = VecAdam::new(act_dim, params.actor_lr);
    let mut opt_alpha = VecAdam::new(1, params.alpha_lr);

    let mut buffer = ReplayBuffer::new(obs_dim, act_dim, params.buffer_capacity);
    let mut episode_returns = Vec::with_capacity(episodes);

    for ep in start_episode..start_episode + episodes {
        let frozen = ep < params.warmup_episodes;
        let lr = critic_lr(params, ep);
        opt_q1.set_lr(lr);
        opt_q2.set_lr(lr);

        let mut obs = task.reset(mix_seed(seed, ep as u64))?;
        let mut ep_return = 0.0;
        loop {
            let (a, _) = policy.sample(&obs, &mut rng)?;
            let (next_obs, r, done, terminal) = task.step(a.as_slice())?;
            buffer.push(&obs, a.as_slice(), r, &next_obs, terminal);
            ep_return += r;
            obs = next_obs;

            if buffer.len() >= params.batch_size {
                for _ in 0..params.updates_per_step {
                    let loss = sac_update(
                        &buffer,
                        policy,
                        &mut q1,
                        &mut q2,
                        &mut tq1,
                        &mut tq2,
                        &mut opt_q1,
                        &mut opt_q2,
                        &mut opt_actor,
                        &mut opt_log_std,
                        &mut opt_alpha,
                        &mut log_alpha,
                        params,
                        frozen,
                        &mut rng,
                    )?;
                    if !loss.is_finite() {
                        return Err(LearnError::CriticDiverged(ep, loss));
                    }
                }
            }
            if done {
                break;
            }
        }
        episode_returns.push(ep_return);
        on_episode(&SacProgress {
            episode: ep,
            episode_return: ep_return,
            policy,
            q1: &q1,
            q2: &q2,
            log_alpha: log_alpha[0],
        });
    }
    Ok(SacRun {
        episode_returns,
        q1,
        q2,
        log_alpha: log_alpha[0],
    })
}

#[allow(clippy::too_many_arguments)]
fn sac_update(
    buffer: &ReplayBuffer,
    policy: &mut GaussianPolicy,
    q1: &mut Mlp<f64>,
    q2: &mut Mlp<f64>,
    tq1: &mut Mlp<f64>,
    tq2: &mut Mlp<f64>,
    opt_q1: &mut Adam<f64>,
    opt_q2: &mut Adam<f64>,
    opt_actor: &mut Adam<f64>,
    opt_log_std: &mut VecAdam,
    opt_alpha: &mut VecAdam,
    log_alpha: &mut DVector<f64>,
    params: &SacParams,
    actor_frozen: bool,
    rng: &mut ChaCha8Rng,
) -> Result<f64, LearnError> {
    let b = buffer.sample(params.batch_size, rng);
    let k = b.obs.ncols();
    let kf = k as f64;
    let alpha = log_alpha[0].exp();

    // critic target from the frozen computation graph
    let (next_a, next_logp, _, _) = policy.sample_batch(&b.next_obs, rng)?;
    let x_next = critic_input(&policy.whiten_batch(&b.next_obs), &next_a);
    let q1n = tq1.forward(&x_next)?;
    let q2n = tq2.forward(&x_next)?;
    let mut y: DVector<f64> = DVector::zeros(k);
    for c in 0..k {
        let min_q = q1n[(0, c)].min(q2n[(0, c)]);
        y[c] = td_target(b.reward[c], b.bootstrap[c], params.gamma, min_q, alpha, next_logp[c]);
    }

    // critic regression
    let obs_w = policy.whiten_batch(&b.obs);
    let x = critic_input(&obs_w, &b.action);
    let mut critic_loss = 0.0;
    for (q, opt) in [(&mut *q1, &mut *opt_q1), (&mut *q2, &mut *opt_q2)] {
        let (out, tape) = q.forward_cached(&x)?;
        let mut upstream = DMatrix::zeros(1, k);
        for c in 0..k {
            let e = out[(0, c)] - y[c];
            critic_loss += e * e / (2.0 * kf);
            upstream[(0, c)] = 2.0 * e / kf;
        }
        let (grads, _) = q.backward(&tape, &upstream)?;
        opt.step(q, &grads)?;
    }

    if !actor_frozen {
        // actor loss: mean(α·logπ − min Q) under reparameterization
        let (mean_out, tape) = policy.net.forward_cached(&obs_w)?;
        let dim = policy.action_dim();
        let mut u = DMatrix::zeros(dim, k);
        let mut a = DMatrix::zeros(dim, k);
        let mut eps = DMatrix::zeros(dim, k);
        let mut logp: DVector<f64> = DVector::zeros(k);
        for c in 0..k {
            for j in 0..dim {
                let sigma = policy.log_std[j].exp();
                let e: f64 = StandardNormal.sample(rng);
                let uu = mean_out[(j, c)] + sigma * e;
                let t = uu.tanh();
                eps[(j, c)] = e;
                u[(j, c)] = uu;
                a[(j, c)] = t;
                logp[c] += -policy.log_std[j]
                    - 0.5 * (2.0 * std::f64::consts::PI).ln()
                    - 0.5 * e * e
                    - (1.0 - t * t + SQUASH_EPS).ln();
            }
        }
        let xa = critic_input(&obs_w, &a);
        let (q1a, tape1) = q1.forward_cached(&xa)?;
        let (q2a, tape2) = q2.forward_cached(&xa)?;
        // route the value gradient through the smaller critic per column
        let mut up1 = DMatrix::zeros(1, k);
        let mut up2 = DMatrix::zeros(1, k);
        for c in 0..k {
            if q1a[(0, c)] <= q2a[(0, c)] {
                up1[(0, c)] = 1.0;
            } else {
                up2[(0, c)] = 1.0;
            }
        }
        let (_, in1) = q1.backward(&tape1, &up1)?;
        let (_, in2) = q2.backward(&tape2, &up2)?;
        let dq_da = in1.rows(b.obs.nrows(), dim) + in2.rows(b.obs.nrows(), dim);

        let mut g_u = DMatrix::zeros(dim, k);
        let mut g_log_std = DVector::zeros(dim);
        for c in 0..k {
            for j in 0..dim {
                let t = a[(j, c)];
                let dsquash = 1.0 - t * t;
                let dlogp_du = 2.0 * t * dsquash / (dsquash + SQUASH_EPS);
                let dl_du = (alpha * dlogp_du - dq_da[(j, c)] * dsquash) / kf;
                g_u[(j, c)] = dl_du;
                let sigma = policy.log_std[j].exp();
                g_log_std[j] += dl_du * sigma * eps[(j, c)] - alpha / kf;
            }
        }
        let (actor_grads, _) = policy.net.backward(&tape, &g_u)?;
        opt_actor.step(&mut policy.net, &actor_grads)?;
        opt_log_std.step(&mut policy.log_std, &g_log_std);
        for j in 0..dim {
            policy.log_std[j] = policy.log_std[j].clamp(-5.0, 1.0);
        }

        // temperature: push entropy toward the target
        let mean_logp: f64 = logp.sum() / kf;
        let g_alpha: DVector<f64> =
            DVector::from_element(1, -(mean_logp + params.entropy_target));
        opt_alpha.step(log_alpha, &g_alpha);
        log_alpha[0] = log_alpha[0].clamp(-10.0, 2.0);
    }

    polyak(tq1, q1, params.tau);
    polyak(tq2, q2, params.tau);
    Ok(critic_loss)
}

/// Observation-channel or actuation ablations for paired comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    None,
    /// Replace the IMU and force channels of every stacked frame with
    /// unit-Gaussian noise.
    ImuGrfNoise,
    /// Disable the suction actuation globally.
    SuctionOff,
}

/// Aggregate evaluation metrics.
#[derive(Debug, Clone)]
pub struct EvalMetrics {
    /// Mean forward speed over episodes (m/s).
    pub mean_speed: f64,
    /// Mean of per-step |roll| + |pitch| (rad).
    pub mean_tilt: f64,
    /// Fraction of episodes ending in a fall.
    pub fall_rate: f64,
    pub episodes: Vec<EpisodeMetric>,
}

#[derive(Debug, Clone, Copy)]
pub struct EpisodeMetric {
    pub seed: u64,
    pub displacement: f64,
    pub speed: f64,
    pub mean_tilt: f64,
    pub episode_return: f64,
    pub fell: bool,
    pub steps: usize,
}

/// Frame channels replaced by the IMU+GRF noise ablation: roll/pitch/yaw,
/// angular velocity, acceleration, and the four force estimates.
const IMU_GRF_CHANNELS: usize = 13;

/// Deterministic (mean-action) policy evaluation over fixed seeds.
pub fn evaluate_policy(
    env: &mut Env,
    policy: &GaussianPolicy,
    seeds: &[u64],
    ablation: Ablation,
) -> Result<EvalMetrics, LearnError> {
    let prior_suction = env.suction_enabled;
    env.suction_enabled = ablation != Ablation::SuctionOff;
    let result = (|| {
        let mut episodes = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let obs0 = Env::reset(env, seed)?;
            let mut noise_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xAB1A7E));
            let mut obs = DVector::from_column_slice(&obs0.stack);
            let x0 = env
                .sim
                .as_ref()
                .expect("reset above")
                .body_pose()
                .x_bar;
            let mut tilt_sum = 0.0;
            let mut ep_return = 0.0;
            let mut steps = 0usize;
            let fell;
            let displacement;
            let duration;
            loop {
                if ablation == Ablation::ImuGrfNoise {
                    apply_imu_grf_noise(&mut obs, &mut noise_rng);
                }
                let a = policy.mean_action(&obs)?;
                let out = Env::step(env, a.as_slice())?;
                obs = DVector::from_column_slice(&out.observation.stack);
                tilt_sum += out.info.pose[3].abs() + out.info.pose[4].abs();
                ep_return += out.reward;
                steps += 1;
                if out.terminated {
                    fell = out.info.fell;
                    displacement = out.info.pose[0] - x0;
                    duration = out.info.time;
                    break;
                }
            }
            episodes.push(EpisodeMetric {
                seed,
                displacement,
                speed: displacement / duration.max(1e-9),
                mean_tilt: tilt_sum / steps as f64,
                episode_return: ep_return,
                fell,
                steps,
            });
        }
        let n = episodes.len() as f64;
        Ok(EvalMetrics {
            mean_speed: episodes.iter().map(|e| e.speed).sum::<f64>() / n,
            mean_tilt: episodes.iter().map(|e| e.mean_tilt).sum::<f64>() / n,
            fall_rate: episodes.iter().filter(|e| e.fell).count() as f64 / n,
            episodes,
        })
    })();
    env.suction_enabled = prior_suction;
    result
}

fn apply_imu_grf_noise(obs: &mut DVector<f64>, rng: &mut ChaCha8Rng) {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let frame = crate::env::FRAME_DIM;
    for f in 0..4 {
        for i in 0..IMU_GRF_CHANNELS {
            obs[f * frame + i] = normal.sample(rng);
        }
    }
}

/// Runs the paired ablation: intact metrics next to the ablated rerun on
/// the same seeds.
pub fn ablate(
    env: &mut Env,
    policy: &GaussianPolicy,
    channel: Ablation,
    seeds: &[u64],
) -> Result<(EvalMetrics, EvalMetrics), LearnError> {
    let intact = evaluate_policy(env, policy, seeds, Ablation::None)?;
    let ablated = evaluate_policy(env, policy, seeds, channel)?;
    Ok((intact, ablated))
}

/// One-sided sign test: probability of at least `wins` successes in
/// `n` fair coin flips (ties excluded beforehand).
pub fn sign_test_p(wins: usize, n: usize) -> f64 {
    let mut p = 0.0;
    for k in wins..=n {
        p += binomial(n, k) * 0.5f64.powi(n as i32);
    }
    p.min(1.0)
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

/// Splittable deterministic seed stream.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z ^= z >> 30;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Saves the policy (network, spread, whitening) as a checkpoint.
pub fn save_policy(policy: &GaussianPolicy, path: &Path) -> Result<(), LearnError> {
    let mut ckpt = Checkpoint::default();
    ckpt.insert_mlp("actor", &policy.net);
    ckpt.insert_vector("log_std", policy.log_std.as_slice().to_vec());
    ckpt.insert_vector("obs_mean", policy.obs_mean.as_slice().to_vec());
    ckpt.insert_vector("obs_std", policy.obs_std.as_slice().to_vec());
    ckpt.save(path)?;
    Ok(())
}

pub fn load_policy(path: &Path) -> Result<GaussianPolicy, LearnError> {
    let ckpt = Checkpoint::load(path)?;
    Ok(GaussianPolicy {
        net: ckpt.mlp("actor")?.clone(),
        log_std: DVector::from_column_slice(ckpt.vector("log_std")?),
        obs_mean: DVector::from_column_slice(ckpt.vector("obs_mean")?),
        obs_std: DVector::from_column_slice(ckpt.vector("obs_std")?),
    })
}

/// Saves an interrupted (or finished) fine-tuning run: policy, critics,
/// temperature, next episode index, and the return history.
pub fn save_sac_checkpoint(
    policy: &GaussianPolicy,
    q1: &Mlp<f64>,
    q2: &Mlp<f64>,
    log_alpha: f64,
    next_episode: usize,
    returns: &[f64],
    path: &Path,
) -> Result<(), LearnError> {
    let mut ckpt = Checkpoint::default();
    ckpt.insert_mlp("actor", &policy.net);
    ckpt.insert_vector("log_std", policy.log_std.as_slice().to_vec());
    ckpt.insert_vector("obs_mean", policy.obs_mean.as_slice().to_vec());
    ckpt.insert_vector("obs_std", policy.obs_std.as_slice().to_vec());
    ckpt.insert_mlp("q1", q1);
    ckpt.insert_mlp("q2", q2);
    ckpt.insert_vector("meta", vec![log_alpha, next_episode as f64]);
    ckpt.insert_vector("returns", returns.to_vec());
    ckpt.save(path)?;
    Ok(())
}

pub fn load_sac_checkpoint(
    path: &Path,
) -> Result<(GaussianPolicy, SacInit, Vec<f64>), LearnError> {
    let ckpt = Checkpoint::load(path)?;
    let policy = GaussianPolicy {
        net: ckpt.mlp("actor")?.clone(),
        log_std: DVector::from_column_slice(ckpt.vector("log_std")?),
        obs_mean: DVector::from_column_slice(ckpt.vector("obs_mean")?),
        obs_std: DVector::from_column_slice(ckpt.vector("obs_std")?),
    };
    let meta = ckpt.vector("meta")?;
    if meta.len() != 2 {
        return Err(LearnError::Nn(NnError::Corrupt("bad meta entry".into())));
    }
    let init = SacInit {
        q1: ckpt.mlp("q1")?.clone(),
        q2: ckpt.mlp("q2")?.clone(),
        log_alpha: meta[0],
        start_episode: meta[1] as usize,
    };
    let returns = ckpt.vector("returns")?.to_vec();
    Ok((policy, init, returns))
}

/// Demonstration file header: one line per pair, whitespace-separated
/// `episode time obs[0..N] action[0..16]`.
const DEMO_HEADER: &str = "# episode time obs.. action[16]";

pub fn save_demos(dataset: &DemoDataset, path: &Path) -> Result<(), LearnError> {
    use std::io::Write;
    let file = std::fs::File::create(path).map_err(NnError::Io)?;
    let mut w = std::io::BufWriter::new(file);
    let emit = |w: &mut dyn Write| -> std::io::Result<()> {
        writeln!(w, "{DEMO_HEADER}")?;
        for p in &dataset.pairs {
            write!(w, "{} {:.3}", p.episode, p.time)?;
            for v in &p.obs {
                write!(w, " {v:.17e}")?;
            }
            for v in &p.action {
                write!(w, " {v:.17e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    };
    emit(&mut w).map_err(NnError::Io)?;
    Ok(())
}

pub fn load_demos(path: &Path) -> Result<DemoDataset, LearnError> {
    let corrupt = |m: &str| LearnError::Nn(NnError::Corrupt(m.into()));
    let text = std::fs::read_to_string(path).map_err(NnError::Io)?;
    let mut pairs = Vec::new();
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 2 + ACTION_DIM + 1 {
            return Err(corrupt("short demonstration line"));
        }
        let episode = fields[0].parse().map_err(|_| corrupt("bad episode tag"))?;
        let time = fields[1].parse().map_err(|_| corrupt("bad time"))?;
        let values: Result<Vec<f64>, _> = fields[2..].iter().map(|f| f.parse()).collect();
        let values = values.map_err(|_| corrupt("bad numeric field"))?;
        let obs_dim = values.len() - ACTION_DIM;
        let mut action = [0.0; ACTION_DIM];
        action.copy_from_slice(&values[obs_dim..]);
        pairs.push(DemoPair {
            episode,
            time,
            obs: values[..obs_dim].to_vec(),
            action,
        });
    }
    if pairs.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    Ok(DemoDataset {
        pairs,
        discarded: 0,
    })
}

fn shuffle(v: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..v.len()).rev() {
        let j = rng.gen_range(0..=i);
        v.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn replay_buffer_wraps_and_overwrites_oldest() {
        let mut buf = ReplayBuffer::new(2, 1, 4);
        for i in 0..6 {
            let o = DVector::from_element(2, i as f64);
            buf.push(&o, &[0.0], i as f64, &o, false);
        }
        assert_eq!(buf.len(), 4);
        // slots now hold rewards [4, 5, 2, 3]
        assert_eq!(buf.stored_reward(0), 4.0);
        assert_eq!(buf.stored_reward(1), 5.0);
        assert_eq!(buf.stored_reward(2), 2.0);
        assert_eq!(buf.stored_reward(3), 3.0);
    }

    #[test]
    fn replay_sampling_is_uniform() {
        let mut buf = ReplayBuffer::new(1, 1, 16);
        for i in 0..16 {
            let o = DVector::from_element(1, i as f64);
            buf.push(&o, &[0.0], i as f64, &o, false);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = [0usize; 16];
        let draws = 1_000_000;
        for _ in 0..draws / 100 {
            let b = buf.sample(100, &mut rng);
            for c in 0..100 {
                counts[b.reward[c] as usize] += 1;
            }
        }
        let p = 1.0 / 16.0;
        let expect = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for (i, &count) in counts.iter().enumerate() {
            assert!(
                (count as f64 - expect).abs() < 3.0 * sigma,
                "slot {i}: {count} vs {expect}"
            );
        }
    }

    #[test]
    fn td_target_matches_value_iteration_on_two_state_mdp() {
        // deterministic chain: state 0 → state 1 (reward 1),
        // state 1 → state 1 (reward 2); single action, γ = 0.9
        let gamma = 0.9;
        let reward = [1.0, 2.0];
        let next = [1usize, 1];
        let mut v = [0.0f64; 2];
        for _ in 0..2000 {
            let prev = v;
            for s in 0..2 {
                v[s] = reward[s] + gamma * prev[next[s]];
            }
        }
        // closed form: v1 = 2/(1−γ), v0 = 1 + γ·v1
        assert_relative_eq!(v[1], 2.0 / (1.0 - gamma), epsilon = 1e-9);
        for s in 0..2 {
            let target = td_target(reward[s], 1.0, gamma, v[next[s]], 0.0, 0.0);
            assert!(
                (target - v[s]).abs() < 1e-6,
                "state {s}: target {target} vs value {}",
                v[s]
            );
        }
        // terminal transition does not bootstrap
        assert_relative_eq!(td_target(1.0, 0.0, gamma, 99.0, 0.0, 0.0), 1.0);
    }

    #[test]
    fn critic_lr_decays_across_warmup_then_holds() {
        let params = SacParams::from_config(&TrainConfig::default(), 16);
        let lr0 = critic_lr(&params, 0);
        let lr_mid = critic_lr(&params, params.warmup_episodes / 2);
        let lr_end = critic_lr(&params, params.warmup_episodes);
        assert_relative_eq!(lr0, params.critic_lr_start);
        assert!(lr_mid < lr0 && lr_end < lr_mid);
        assert_relative_eq!(lr_end, params.critic_lr_end);
        assert_relative_eq!(critic_lr(&params, 10 * params.warmup_episodes), lr_end);
    }

    #[test]
    fn entropy_target_sentinel_resolves_to_action_dim() {
        let train = TrainConfig::default();
        assert_relative_eq!(SacParams::from_config(&train, 16).entropy_target, -16.0);
        let explicit = TrainConfig {
            entropy_target: -4.0,
            ..train
        };
        assert_relative_eq!(SacParams::from_config(&explicit, 16).entropy_target, -4.0);
    }

    #[test]
    fn policy_actions_bounded_and_deterministic_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let policy = GaussianPolicy::new(4, &[16], 2, -1.0, &mut rng).unwrap();
        let obs = DVector::from_vec(vec![0.3, -0.5, 1.2, 0.0]);
        let a = policy.mean_action(&obs).unwrap();
        let b = policy.mean_action(&obs).unwrap();
        assert_eq!(a, b);
        for _ in 0..100 {
            let (s, logp) = policy.sample(&obs, &mut rng).unwrap();
            assert!(s.iter().all(|v| v.abs() <= 1.0));
            assert!(logp.is_finite());
        }
    }

    #[test]
    fn behavior_cloning_recovers_a_constant_action() {
        let mut pairs = Vec::new();
        let mut action = [0.0; ACTION_DIM];
        action[0] = 0.5;
        action[5] = -0.25;
        for i in 0..200 {
            pairs.push(DemoPair {
                episode: 0,
                time: i as f64,
                obs: vec![(i % 7) as f64 * 0.1; 8],
                action,
            });
        }
        let dataset = DemoDataset {
            pairs,
            discarded: 0,
        };
        let train = TrainConfig {
            hidden: vec![16],
            bc_epochs: 200,
            bc_batch: 64,
            bc_lr: 3e-3,
            ..TrainConfig::default()
        };
        let (policy, report) = behavior_clone(&dataset, &train, 5).unwrap();
        assert!(report.holdout_mse < 1e-4, "mse {}", report.holdout_mse);
        let a = policy
            .mean_action(&DVector::from_element(8, 0.3))
            .unwrap();
        assert_relative_eq!(a[0], 0.5, epsilon = 0.02);
        assert_relative_eq!(a[5], -0.25, epsilon = 0.02);
    }

    #[test]
    fn policy_round_trips_bit_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut policy = GaussianPolicy::new(6, &[8, 8], 3, -0.7, &mut rng).unwrap();
        policy.obs_mean = DVector::from_fn(6, |i, _| 0.1 * i as f64);
        policy.obs_std = DVector::from_fn(6, |i, _| 1.0 + 0.05 * i as f64);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("actor.bin");
        save_policy(&policy, &path).unwrap();
        let back = load_policy(&path).unwrap();
        let x = DVector::from_fn(6, |i, _| (i as f64).sin());
        assert_eq!(
            policy.mean_action(&x).unwrap(),
            back.mean_action(&x).unwrap()
        );
        assert_eq!(policy.log_std, back.log_std);
        assert_eq!(policy.obs_mean, back.obs_mean);
        assert_eq!(policy.obs_std, back.obs_std);
    }

    #[test]
    fn sac_checkpoint_round_trips_state_and_returns() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let policy = GaussianPolicy::new(4, &[8], 2, -1.0, &mut rng).unwrap();
        let q = policy.net.clone();
        let returns = vec![-3.0, -1.5, 0.25];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sac.bin");
        save_sac_checkpoint(&policy, &q, &q, -0.8, 17, &returns, &path).unwrap();
        let (back, init, rets) = load_sac_checkpoint(&path).unwrap();
        assert_eq!(policy.log_std, back.log_std);
        assert_eq!(init.log_alpha, -0.8);
        assert_eq!(init.start_episode, 17);
        assert_eq!(rets, returns);
        let x = DVector::from_element(4, 0.2);
        assert_eq!(
            init.q1
                .forward(&DMatrix::from_column_slice(4, 1, x.as_slice()))
                .unwrap(),
            q.forward(&DMatrix::from_column_slice(4, 1, x.as_slice()))
                .unwrap()
        );
    }

    #[test]
    fn demo_file_round_trips_within_print_precision() {
        let mut pairs = Vec::new();
        for i in 0..5 {
            let mut action = [0.0; ACTION_DIM];
            action[i] = 0.3 * i as f64 - 0.6;
            pairs.push(DemoPair {
                episode: i / 2,
                time: 0.5 * (i + 1) as f64,
                obs: (0..STACK_DIM).map(|j| (i * j) as f64 * 1e-3 - 0.05).collect(),
                action,
            });
        }
        let dataset = DemoDataset {
            pairs,
            discarded: 1,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("demos.txt");
        save_demos(&dataset, &path).unwrap();
        let back = load_demos(&path).unwrap();
        assert_eq!(back.pairs.len(), dataset.pairs.len());
        for (a, b) in dataset.pairs.iter().zip(&back.pairs) {
            assert_eq!(a.episode, b.episode);
            assert!((a.time - b.time).abs() < 1e-3);
            for (x, y) in a.obs.iter().zip(&b.obs) {
                assert_eq!(x, y);
            }
            assert_eq!(a.action, b.action);
        }
    }

    #[test]
    fn actor_is_bitwise_frozen_during_warmup() {
        let mut task = ToyReach::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut policy = GaussianPolicy::new(1, &[8], 1, -1.0, &mut rng).unwrap();
        let before = policy.clone();
        let params = SacParams {
            hidden: vec![8],
            gamma: 0.99,
            tau: 0.01,
            batch_size: 32,
            buffer_capacity: 10_000,
            warmup_episodes: 5,
            critic_lr_start: 3e-4,
            critic_lr_end: 1e-4,
            actor_lr: 3e-4,
            alpha_lr: 3e-4,
            entropy_target: -1.0,
            updates_per_step: 1,
        };
        sac_train(&mut task, &mut policy, &params, 5, 7).unwrap();
        assert_eq!(policy, before, "actor must not change during warm-up");
    }

    #[test]
    fn sign_test_oracle_values() {
        // 6/6 wins: p = 2⁻⁶
        assert_relative_eq!(sign_test_p(6, 6), 1.0 / 64.0, epsilon = 1e-12);
        // 5/6 wins: p = 7/64
        assert_relative_eq!(sign_test_p(5, 6), 7.0 / 64.0, epsilon = 1e-12);
        assert_relative_eq!(sign_test_p(0, 6), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn toy_reach_optimal_return_closed_form() {
        let toy = ToyReach::new();
        // nine shrinking-error steps, then 41 at the target
        assert_relative_eq!(toy.optimal_return(), 4.5 + 41.0, epsilon = 1e-12);
    }

    #[test]
    fn mix_seed_streams_are_distinct() {
        let a = mix_seed(1, 0);
        let b = mix_seed(1, 1);
        let c = mix_seed(2, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, mix_seed(1, 0));
    }
}
