//! Twin delayed deterministic policy gradient learner.
//!
//! Two critics are regressed toward a shared target built from the smaller
//! of two target-critic estimates at a noise-smoothed target action. The
//! actor and all three target networks move only every `policy_delay`
//! critic updates. Observations are normalized with running statistics
//! before they reach any network; the replay buffer keeps raw values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neural::{polyak_update, Activation, Adam, Gradients, Matrix, Mlp, NeuralError};
use crate::normalize::RunningNorm;
use crate::replay::{ReplayBuffer, Transition};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] serde_json::Error),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("invalid agent config: {0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Td3Config {
    pub gamma: f64,
    pub tau: f64,
    pub policy_delay: u64,
    pub explore_sigma: f64,
    pub smooth_sigma: f64,
    pub noise_clip: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Transitions collected with uniform random actions before learning starts.
    pub warmup_steps: usize,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
}

impl Default for Td3Config {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            policy_delay: 2,
            explore_sigma: 0.1,
            smooth_sigma: 0.2,
            noise_clip: 0.5,
            batch_size: 100,
            buffer_capacity: 1_000_000,
            warmup_steps: 1000,
            seed: 0,
            hidden: vec![256, 256],
            actor_lr: 3e-4,
            critic_lr: 3e-4,
        }
    }
}

impl Td3Config {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad("tau must lie in [0, 1]");
        }
        if self.policy_delay == 0 {
            return bad("policy_delay must be at least 1");
        }
        if self.explore_sigma < 0.0 || self.smooth_sigma < 0.0 {
            return bad("noise scales must be non-negative");
        }
        if !(self.noise_clip > 0.0) {
            return bad("noise_clip must be positive");
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 {
            return bad("batch_size and buffer_capacity must be positive");
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive");
        }
        Ok(())
    }
}

/// `r + gamma * (1 - done) * min(q1, q2)`
pub fn critic_target(reward: f64, done: bool, gamma: f64, q1: f64, q2: f64) -> f64 {
    if done {
        reward
    } else {
        reward + gamma * q1.min(q2)
    }
}

/// Mean squared error of `critic(inputs)` against `targets` and its parameter gradient.
pub fn critic_loss_grad(critic: &Mlp, inputs: &Matrix, targets: &[f64]) -> Result<(f64, Gradients), NeuralError> {
    let cache = critic.forward_cached(inputs)?;
    let q = &cache.output().data;
    let n = q.len() as f64;
    let mut loss = 0.0;
    let mut dq = Matrix::zeros(q.len(), 1);
    for (i, (qi, yi)) in q.iter().zip(targets).enumerate() {
        let diff = qi - yi;
        loss += diff * diff;
        dq.data[i] = 2.0 * diff / n;
    }
    let (grads, _) = critic.backward(&cache, &dq)?;
    Ok((loss / n, grads))
}

/// `-mean Q(s, actor(s))` and its gradient with respect to the actor's parameters.
pub fn actor_loss_grad(actor: &Mlp, critic: &Mlp, states: &Matrix) -> Result<(f64, Gradients), NeuralError> {
    let actor_cache = actor.forward_cached(states)?;
    let sa = states.hcat(actor_cache.output());
    let critic_cache = critic.forward_cached(&sa)?;
    let q = &critic_cache.output().data;
    let n = q.len() as f64;
    let loss = -q.iter().sum::<f64>() / n;
    let dq = Matrix { rows: q.len(), cols: 1, data: vec![-1.0 / n; q.len()] };
    let (_, d_input) = critic.backward(&critic_cache, &dq)?;
    let d_action = d_input.columns(states.cols, sa.cols);
    let (grads, _) = actor.backward(&actor_cache, &d_action)?;
    Ok((loss, grads))
}

/// A sampled minibatch with states already normalized.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub states: Matrix,
    pub actions: Matrix,
    pub rewards: Vec<f64>,
    pub next_states: Matrix,
    pub dones: Vec<bool>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Bootstrapped targets and what each critic alone would have produced.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetValues {
    pub y: Vec<f64>,
    pub single: [Vec<f64>; 2],
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainDiagnostics {
    pub buffer_len: usize,
    pub critic_losses: Option<[f64; 2]>,
    pub actor_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Networks {
    actor: Mlp,
    actor_target: Mlp,
    critics: [Mlp; 2],
    critic_targets: [Mlp; 2],
    actor_opt: Adam,
    critic_opts: [Adam; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Td3Agent {
    config: Td3Config,
    obs_dim: usize,
    action_dim: usize,
    nets: Networks,
    norm: RunningNorm,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    /// Transitions seen by `train_step`.
    steps: u64,
    /// Critic updates performed.
    updates: u64,
}

#[derive(Serialize)]
struct CheckpointRef<'a> {
    version: u32,
    config: &'a Td3Config,
    obs_dim: usize,
    action_dim: usize,
    nets: &'a Networks,
    norm: &'a RunningNorm,
    rng: &'a ChaCha8Rng,
    steps: u64,
    updates: u64,
    buffer: Option<&'a ReplayBuffer>,
}

#[derive(Deserialize)]
struct CheckpointOwned {
    version: u32,
    config: Td3Config,
    obs_dim: usize,
    action_dim: usize,
    nets: Networks,
    norm: RunningNorm,
    rng: ChaCha8Rng,
    steps: u64,
    updates: u64,
    buffer: Option<ReplayBuffer>,
}

impl Td3Agent {
    pub fn new(obs_dim: usize, action_dim: usize, config: Td3Config) -> Result<Self, AgentError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let sizes = |input: usize, output: usize| {
            let mut s = vec![input];
            s.extend(&config.hidden);
            s.push(output);
            s
        };
        let actor = Mlp::new(&sizes(obs_dim, action_dim), Activation::Relu, Activation::Tanh, &mut rng);
        let critic_sizes = sizes(obs_dim + action_dim, 1);
        let critics = [
            Mlp::new(&critic_sizes, Activation::Relu, Activation::Identity, &mut rng),
            Mlp::new(&critic_sizes, Activation::Relu, Activation::Identity, &mut rng),
        ];
        let nets = Networks {
            actor_opt: Adam::new(&actor, config.actor_lr),
            critic_opts: [Adam::new(&critics[0], config.critic_lr), Adam::new(&critics[1], config.critic_lr)],
            actor_target: actor.clone(),
            critic_targets: critics.clone(),
            actor,
            critics,
        };
        Ok(Self {
            buffer: ReplayBuffer::new(config.buffer_capacity),
            config,
            obs_dim,
            action_dim,
            nets,
            norm: RunningNorm::new(obs_dim),
            rng,
            steps: 0,
            updates: 0,
        })
    }

    pub fn config(&self) -> &Td3Config {
        &self.config
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn actor(&self) -> &Mlp {
        &self.nets.actor
    }

    pub fn actor_mut(&mut self) -> &mut Mlp {
        &mut self.nets.actor
    }

    pub fn actor_target(&self) -> &Mlp {
        &self.nets.actor_target
    }

    pub fn critic(&self, i: usize) -> &Mlp {
        &self.nets.critics[i]
    }

    pub fn critic_mut(&mut self, i: usize) -> &mut Mlp {
        &mut self.nets.critics[i]
    }

    pub fn critic_target_net(&self, i: usize) -> &Mlp {
        &self.nets.critic_targets[i]
    }

    pub fn critic_target_net_mut(&mut self, i: usize) -> &mut Mlp {
        &mut self.nets.critic_targets[i]
    }

    pub fn actor_target_mut(&mut self) -> &mut Mlp {
        &mut self.nets.actor_target
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn normalizer(&self) -> &RunningNorm {
        &self.norm
    }

    /// Freezes or unfreezes the observation statistics.
    pub fn set_normalizer_frozen(&mut self, frozen: bool) {
        self.norm.frozen = frozen;
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn set_explore_sigma(&mut self, sigma: f64) {
        self.config.explore_sigma = sigma;
    }

    pub fn set_smooth_sigma(&mut self, sigma: f64) {
        self.config.smooth_sigma = sigma;
    }

    pub fn normalize(&self, state: &[f64]) -> Vec<f64> {
        self.norm.normalize(state)
    }

    fn gaussian(&mut self, sigma: f64) -> f64 {
        if sigma == 0.0 {
            return 0.0;
        }
        Normal::new(0.0, sigma).expect("sigma is finite and non-negative").sample(&mut self.rng)
    }

    /// Policy output, plus Gaussian exploration noise when `explore`; always within `[-1, 1]`.
    pub fn select_action(&mut self, state: &[f64], explore: bool) -> Vec<f64> {
        let x = self.norm.normalize(state);
        let mut a = self.nets.actor.forward_one(&x).expect("observation length matches actor input");
        if explore {
            let sigma = self.config.explore_sigma;
            for v in &mut a {
                *v += self.gaussian(sigma);
            }
        }
        a.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
        a
    }

    /// What the learner does in the environment: uniform random actions until
    /// the buffer holds `warmup_steps` transitions, then [`Self::select_action`].
    pub fn act(&mut self, state: &[f64], explore: bool) -> Vec<f64> {
        if explore && self.buffer.len() < self.config.warmup_steps {
            return (0..self.action_dim).map(|_| self.rng.random_range(-1.0..=1.0)).collect();
        }
        self.select_action(state, explore)
    }

    /// Target-actor actions at `next_states` with clipped smoothing noise.
    pub fn smoothed_target_actions(&mut self, next_states: &Matrix) -> Matrix {
        let mut a = self.nets.actor_target.forward(next_states).expect("state width matches actor");
        let (sigma, clip) = (self.config.smooth_sigma, self.config.noise_clip);
        for v in &mut a.data {
            let eps = self.gaussian(sigma).clamp(-clip, clip);
            *v = (*v + eps).clamp(-1.0, 1.0);
        }
        a
    }

    /// Single-state convenience over [`Self::smoothed_target_actions`].
    pub fn smoothed_target_action(&mut self, next_state: &[f64]) -> Vec<f64> {
        let x = self.norm.normalize(next_state);
        self.smoothed_target_actions(&Matrix::row_vector(&x)).data
    }

    /// Clipped double-Q targets for a batch (draws smoothing noise).
    pub fn target_values(&mut self, batch: &Batch) -> TargetValues {
        let next_actions = self.smoothed_target_actions(&batch.next_states);
        let input = batch.next_states.hcat(&next_actions);
        let q1 = self.nets.critic_targets[0].forward(&input).expect("critic input width").data;
        let q2 = self.nets.critic_targets[1].forward(&input).expect("critic input width").data;
        let gamma = self.config.gamma;
        let mut y = Vec::with_capacity(batch.len());
        let mut single = [Vec::with_capacity(batch.len()), Vec::with_capacity(batch.len())];
        for i in 0..batch.len() {
            let (r, d) = (batch.rewards[i], batch.dones[i]);
            y.push(critic_target(r, d, gamma, q1[i], q2[i]));
            single[0].push(critic_target(r, d, gamma, q1[i], q1[i]));
            single[1].push(critic_target(r, d, gamma, q2[i], q2[i]));
        }
        TargetValues { y, single }
    }

    /// One optimizer step on each critic toward the shared targets. Returns
    /// the two pre-update mean squared errors.
    pub fn update_critics(&mut self, batch: &Batch) -> Result<[f64; 2], AgentError> {
        let targets = self.target_values(batch);
        let input = batch.states.hcat(&batch.actions);
        let mut losses = [0.0; 2];
        for (i, loss) in losses.iter_mut().enumerate() {
            let (l, g) = critic_loss_grad(&self.nets.critics[i], &input, &targets.y)?;
            self.nets.critic_opts[i].step(&mut self.nets.critics[i], &g)?;
            *loss = l;
        }
        Ok(losses)
    }

    /// Actor ascent on `Q1(s, actor(s))` followed by target blending, on
    /// steps where `step_count % policy_delay == 0`.
    pub fn update_actor_and_targets(&mut self, batch: &Batch, step_count: u64) -> Result<Option<f64>, AgentError> {
        if step_count % self.config.policy_delay != 0 {
            return Ok(None);
        }
        let (loss, grads) = actor_loss_grad(&self.nets.actor, &self.nets.critics[0], &batch.states)?;
        self.nets.actor_opt.step(&mut self.nets.actor, &grads)?;
        let tau = self.config.tau;
        let n = &mut self.nets;
        polyak_update(&mut n.actor_target, &n.actor, tau)?;
        for i in 0..2 {
            polyak_update(&mut n.critic_targets[i], &n.critics[i], tau)?;
        }
        Ok(Some(loss))
    }

    /// Builds a normalized batch from buffer indices.
    pub fn batch_from_indices(&self, indices: &[usize]) -> Batch {
        let rows = |f: &dyn Fn(&Transition) -> Vec<f64>| {
            Matrix::from_rows(&indices.iter().map(|&i| f(self.buffer.get(i).expect("index in range"))).collect::<Vec<_>>())
        };
        Batch {
            states: rows(&|t| self.norm.normalize(&t.state)),
            actions: rows(&|t| t.action.clone()),
            rewards: indices.iter().map(|&i| self.buffer.get(i).expect("index").reward).collect(),
            next_states: rows(&|t| self.norm.normalize(&t.next_state)),
            dones: indices.iter().map(|&i| self.buffer.get(i).expect("index").done).collect(),
        }
    }

    pub fn sample_batch(&mut self) -> Batch {
        let idx = self.buffer.sample_indices(self.config.batch_size, &mut self.rng);
        self.batch_from_indices(&idx)
    }

    /// Stores a transition and, once past warm-up, runs one critic update and
    /// (on delayed steps) one actor/target update.
    pub fn train_step(&mut self, transition: Transition) -> Result<TrainDiagnostics, AgentError> {
        self.norm.update(&transition.state);
        self.buffer.push(transition);
        self.steps += 1;
        let mut diag = TrainDiagnostics { buffer_len: self.buffer.len(), ..Default::default() };
        if self.buffer.len() < self.config.warmup_steps.max(1) {
            return Ok(diag);
        }
        let batch = self.sample_batch();
        diag.critic_losses = Some(self.update_critics(&batch)?);
        self.updates += 1;
        diag.actor_loss = self.update_actor_and_targets(&batch, self.updates)?;
        Ok(diag)
    }

    /// Serializes networks, optimizers, normalizer statistics and rng state.
    pub fn to_checkpoint(&self, include_buffer: bool) -> Result<String, AgentError> {
        let ck = CheckpointRef {
            version: CHECKPOINT_VERSION,
            config: &self.config,
            obs_dim: self.obs_dim,
            action_dim: self.action_dim,
            nets: &self.nets,
            norm: &self.norm,
            rng: &self.rng,
            steps: self.steps,
            updates: self.updates,
            buffer: include_buffer.then_some(&self.buffer),
        };
        Ok(serde_json::to_string(&ck)?)
    }

    /// Inverse of [`Self::to_checkpoint`]. A checkpoint without a buffer
    /// resumes with an empty one.
    pub fn from_checkpoint(json: &str) -> Result<Self, AgentError> {
        let ck: CheckpointOwned = serde_json::from_str(json)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(AgentError::Version(ck.version));
        }
        ck.config.validate()?;
        let buffer = ck.buffer.unwrap_or_else(|| ReplayBuffer::new(ck.config.buffer_capacity));
        Ok(Self {
            config: ck.config,
            obs_dim: ck.obs_dim,
            action_dim: ck.action_dim,
            nets: ck.nets,
            norm: ck.norm,
            buffer,
            rng: ck.rng,
            steps: ck.steps,
            updates: ck.updates,
        })
    }
}
