//! Twin-delayed deterministic policy gradient (TD3).
//!
//! One actor and two critics, each with a slowly tracking target copy.
//! Critic targets bootstrap from the smaller of the two target critics at a
//! noise-smoothed target action; the actor and all targets are updated every
//! `policy_delay` critic updates.
//!
//! Random draws come from a single caller-supplied stream in this order:
//! network initialization, then for every env step the exploration noise,
//! and for every update the batch indices followed by one smoothing draw per
//! sampled transition.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::approximator::{Activation, Matrix, Network, OptimizerState};
use crate::environment::REWARD_MAX;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Td3Hyperparams<T> {
    pub gamma: T,
    pub tau: T,
    /// Standard deviation of the target-smoothing noise (absolute action units).
    pub policy_noise_sigma: T,
    /// Clip bound `c` of the target-smoothing noise (absolute action units).
    pub noise_clip: T,
    /// Exploration noise standard deviation as a fraction of `a_max`.
    pub exploration_sigma: T,
    pub policy_delay: usize,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub learn_start: usize,
    pub actor_lr: T,
    pub critic_lr: T,
    /// Whether `done` stops bootstrapping. Episode ends here are time limits,
    /// so the default keeps bootstrapping through them.
    pub truncate_on_done: bool,
}

impl<T: Scalar> Td3Hyperparams<T> {
    pub fn defaults(a_max: T) -> Self {
        Self {
            gamma: T::lit(0.99),
            tau: T::lit(0.005),
            policy_noise_sigma: T::lit(0.2) * a_max,
            noise_clip: T::lit(0.5) * a_max,
            exploration_sigma: T::lit(0.1),
            policy_delay: 2,
            batch_size: 256,
            buffer_capacity: 200_000,
            learn_start: 1_000,
            actor_lr: T::lit(3e-4),
            critic_lr: T::lit(3e-4),
            truncate_on_done: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.gamma >= T::zero() && self.gamma < T::one()) {
            return bad("td3.gamma must lie in [0, 1)");
        }
        if !(self.tau > T::zero() && self.tau <= T::one()) {
            return bad("td3.tau must lie in (0, 1]");
        }
        if !(self.policy_noise_sigma >= T::zero()) || !(self.noise_clip >= T::zero()) || !(self.exploration_sigma >= T::zero()) {
            return bad("td3 noise scales must be non-negative");
        }
        if self.policy_delay == 0 {
            return bad("td3.policy_delay must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("td3.batch_size must be at least 1");
        }
        if self.buffer_capacity < self.batch_size {
            return bad("td3.buffer_capacity must be at least td3.batch_size");
        }
        if !(self.actor_lr > T::zero()) || !(self.critic_lr > T::zero()) {
            return bad("td3 learning rates must be positive");
        }
        Ok(())
    }

    /// Fixed-point bound on critic targets given the reward range.
    pub fn target_bound(&self) -> T {
        T::lit(REWARD_MAX) / (T::one() - self.gamma)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition<T> {
    pub observation: Vec<T>,
    pub action: T,
    pub reward: T,
    pub next_observation: Vec<T>,
    pub done: bool,
}

/// Fixed-capacity ring of transitions; the oldest entry is overwritten first.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer<T> {
    storage: Vec<Transition<T>>,
    capacity: usize,
    cursor: usize,
}

impl<T: Scalar> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay buffer capacity must be positive");
        Self { storage: Vec::new(), capacity, cursor: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn push(&mut self, t: Transition<T>) {
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Contents from oldest to newest.
    pub fn iter_chronological(&self) -> impl Iterator<Item = &Transition<T>> {
        let split = if self.storage.len() < self.capacity { 0 } else { self.cursor };
        self.storage[split..].iter().chain(self.storage[..split].iter())
    }

    /// Uniform sample with replacement.
    pub fn sample(&self, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<&Transition<T>> {
        let n = self.storage.len();
        (0..batch_size).map(|_| &self.storage[rng.random_range(0..n)]).collect()
    }
}

/// Per-update summary returned by [`Agent::train_step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics<T> {
    pub critic1_loss: T,
    pub critic2_loss: T,
    pub actor_loss: Option<T>,
    pub mean_target: T,
    pub max_target: T,
}

/// Architecture of the actor and critic stacks.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec<T> {
    pub obs_dim: usize,
    pub hidden: Vec<usize>,
    pub a_max: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent<T> {
    pub spec: AgentSpec<T>,
    pub hyper: Td3Hyperparams<T>,
    pub actor: Network<T>,
    pub actor_target: Network<T>,
    pub critic1: Network<T>,
    pub critic2: Network<T>,
    pub critic1_target: Network<T>,
    pub critic2_target: Network<T>,
    pub actor_opt: OptimizerState<T>,
    pub critic1_opt: OptimizerState<T>,
    pub critic2_opt: OptimizerState<T>,
    /// Number of completed [`Agent::train_step`] calls.
    pub update_count: u64,
}

fn standard_normal<T: Scalar>(rng: &mut ChaCha8Rng) -> T {
    let z: f64 = rng.sample(StandardNormal);
    T::lit(z)
}

impl<T: Scalar> Agent<T> {
    /// Actor `obs -> hidden... -> 1` (rectifier hiddens, tanh output scaled by
    /// `a_max`); critics `obs + action -> hidden... -> 1` (identity output).
    /// Targets start as exact copies.
    pub fn new(spec: AgentSpec<T>, hyper: Td3Hyperparams<T>, rng: &mut ChaCha8Rng) -> Result<Self> {
        hyper.validate()?;
        if !(spec.a_max > T::zero()) {
            return Err(Error::InvalidConfig("a_max must be positive".into()));
        }
        let actor = Network::mlp(spec.obs_dim, &spec.hidden, 1, Activation::Relu, Activation::Tanh, rng)?;
        let critic1 = Network::mlp(spec.obs_dim + 1, &spec.hidden, 1, Activation::Relu, Activation::Identity, rng)?;
        let critic2 = Network::mlp(spec.obs_dim + 1, &spec.hidden, 1, Activation::Relu, Activation::Identity, rng)?;
        Ok(Self {
            actor_opt: OptimizerState::new(&actor, hyper.actor_lr),
            critic1_opt: OptimizerState::new(&critic1, hyper.critic_lr),
            critic2_opt: OptimizerState::new(&critic2, hyper.critic_lr),
            actor_target: actor.clone(),
            critic1_target: critic1.clone(),
            critic2_target: critic2.clone(),
            actor,
            critic1,
            critic2,
            spec,
            hyper,
            update_count: 0,
        })
    }

    pub fn a_max(&self) -> T {
        self.spec.a_max
    }

    /// Noise-free policy output.
    pub fn act(&self, obs: &[T]) -> Result<T> {
        Ok(self.spec.a_max * self.actor.forward(obs)?[0])
    }

    /// Policy action, optionally perturbed by Gaussian exploration noise and
    /// clamped to `[-a_max, a_max]`. One normal draw is consumed when exploring.
    pub fn select_action(&self, obs: &[T], explore: bool, rng: &mut ChaCha8Rng) -> Result<T> {
        let a_max = self.spec.a_max;
        let mut a = self.act(obs)?;
        if explore {
            let noise: T = standard_normal(rng);
            a = a + noise * self.hyper.exploration_sigma * a_max;
        }
        Ok(a.max(-a_max).min(a_max))
    }

    fn smoothing_noise(&self, rng: &mut ChaCha8Rng) -> T {
        let c = self.hyper.noise_clip;
        let z: T = standard_normal(rng);
        (z * self.hyper.policy_noise_sigma).max(-c).min(c)
    }

    /// Target-actor action plus clipped Gaussian noise, clamped to the action bounds.
    pub fn smoothed_target_action(&self, next_obs: &[T], rng: &mut ChaCha8Rng) -> Result<T> {
        let a_max = self.spec.a_max;
        let base = a_max * self.actor_target.forward(next_obs)?[0];
        let eps = self.smoothing_noise(rng);
        Ok((base + eps).max(-a_max).min(a_max))
    }

    fn smoothed_target_actions(&self, next_obs: &Matrix<T>, rng: &mut ChaCha8Rng) -> Result<Vec<T>> {
        let a_max = self.spec.a_max;
        let base = self.actor_target.forward_batch(next_obs)?;
        Ok(base
            .as_slice()
            .iter()
            .map(|&u| {
                let eps = self.smoothing_noise(rng);
                (a_max * u + eps).max(-a_max).min(a_max)
            })
            .collect())
    }

    /// Clipped double-Q targets `R + gamma * min(Q1'(S', a~), Q2'(S', a~))`.
    pub fn compute_target(&self, batch: &[&Transition<T>], rng: &mut ChaCha8Rng) -> Result<Vec<T>> {
        if batch.is_empty() {
            return Err(Error::InvalidConfig("empty batch".into()));
        }
        let next_obs = stack(batch.iter().map(|t| t.next_observation.as_slice()), self.spec.obs_dim)?;
        let actions = self.smoothed_target_actions(&next_obs, rng)?;
        let input = with_action_column(&next_obs, &actions);
        let q1 = self.critic1_target.forward_batch(&input)?.into_vec();
        let q2 = self.critic2_target.forward_batch(&input)?.into_vec();
        let rewards: Vec<T> = batch.iter().map(|t| t.reward).collect();
        let dones: Vec<bool> = batch.iter().map(|t| t.done).collect();
        Ok(clipped_double_q_targets(&rewards, &dones, &q1, &q2, self.hyper.gamma, self.hyper.truncate_on_done))
    }

    /// One Adam step on each critic towards `targets` under mean squared
    /// error. Returns both losses measured before the step.
    pub fn update_critics(&mut self, batch: &[&Transition<T>], targets: &[T]) -> Result<(T, T)> {
        if targets.len() != batch.len() {
            return Err(Error::DimensionMismatch { expected: batch.len(), actual: targets.len() });
        }
        let obs = stack(batch.iter().map(|t| t.observation.as_slice()), self.spec.obs_dim)?;
        let actions: Vec<T> = batch.iter().map(|t| t.action).collect();
        let input = with_action_column(&obs, &actions);
        let loss1 = regress(&mut self.critic1, &mut self.critic1_opt, input.clone(), targets)?;
        let loss2 = regress(&mut self.critic2, &mut self.critic2_opt, input, targets)?;
        Ok((loss1, loss2))
    }

    /// Gradient of `-mean Q1(S, pi(S))` with respect to the actor parameters,
    /// together with that loss. Critic parameters are not touched.
    pub fn actor_gradient(&self, batch: &[&Transition<T>]) -> Result<(crate::approximator::Gradients<T>, T)> {
        let obs = stack(batch.iter().map(|t| t.observation.as_slice()), self.spec.obs_dim)?;
        let n = obs.rows();
        let a_max = self.spec.a_max;
        let actor_tape = self.actor.forward_tape(obs)?;
        let actions: Vec<T> = actor_tape.output().as_slice().iter().map(|&u| a_max * u).collect();
        let critic_tape = self.critic1.forward_tape(with_action_column(actor_tape.input(), &actions))?;
        let count = T::from_usize(n).unwrap();
        let mean_q = critic_tape.output().as_slice().iter().fold(T::zero(), |a, &q| a + q) / count;
        let upstream = Matrix::from_vec(n, 1, vec![-T::one() / count; n])?;
        let d_action: Vec<T> = self
            .critic1
            .input_gradient_column(&critic_tape, &upstream, self.spec.obs_dim)?
            .into_iter()
            .map(|g| g * a_max)
            .collect();
        let grads = self.actor.parameter_gradients(&actor_tape, &Matrix::from_vec(n, 1, d_action)?)?;
        Ok((grads, -mean_q))
    }

    /// Ascent step on `mean Q1(S, pi(S))` followed by soft updates of all
    /// three target networks. Returns the actor loss `-mean Q1` before the step.
    pub fn update_actor_and_targets(&mut self, batch: &[&Transition<T>]) -> Result<T> {
        let (grads, loss) = self.actor_gradient(batch)?;
        self.actor_opt.apply(&mut self.actor, &grads)?;
        let tau = self.hyper.tau;
        self.actor_target.soft_update(&self.actor, tau)?;
        self.critic1_target.soft_update(&self.critic1, tau)?;
        self.critic2_target.soft_update(&self.critic2, tau)?;
        Ok(loss)
    }

    /// Samples a batch and runs one TD3 update. The actor and targets move
    /// when the incremented update counter is a multiple of `policy_delay`.
    pub fn train_step(&mut self, buffer: &ReplayBuffer<T>, rng: &mut ChaCha8Rng) -> Result<Diagnostics<T>> {
        let required = self.hyper.batch_size.max(self.hyper.learn_start);
        if buffer.len() < required {
            return Err(Error::BufferTooSmall { size: buffer.len(), required });
        }
        let batch = buffer.sample(self.hyper.batch_size, rng);
        let targets = self.compute_target(&batch, rng)?;
        let (critic1_loss, critic2_loss) = self.update_critics(&batch, &targets)?;
        self.update_count += 1;
        let actor_loss = if self.update_count % self.hyper.policy_delay as u64 == 0 {
            Some(self.update_actor_and_targets(&batch)?)
        } else {
            None
        };
        let count = T::from_usize(targets.len()).unwrap();
        let mean_target = targets.iter().fold(T::zero(), |a, &y| a + y) / count;
        let max_target = targets.iter().fold(T::neg_infinity(), |a, &y| a.max(y));
        Ok(Diagnostics { critic1_loss, critic2_loss, actor_loss, mean_target, max_target })
    }
}

/// `y_i = r_i + gamma * min(q1_i, q2_i)`, without the bootstrap term for
/// terminal transitions when `truncate_on_done` is set.
pub fn clipped_double_q_targets<T: Scalar>(
    rewards: &[T],
    dones: &[bool],
    q1: &[T],
    q2: &[T],
    gamma: T,
    truncate_on_done: bool,
) -> Vec<T> {
    rewards
        .iter()
        .zip(dones)
        .zip(q1.iter().zip(q2))
        .map(|((&r, &done), (&a, &b))| {
            if done && truncate_on_done {
                r
            } else {
                r + gamma * a.min(b)
            }
        })
        .collect()
}

fn stack<'a, T: Scalar>(rows: impl Iterator<Item = &'a [T]>, width: usize) -> Result<Matrix<T>> {
    let mut data = Vec::new();
    let mut n = 0;
    for row in rows {
        if row.len() != width {
            return Err(Error::DimensionMismatch { expected: width, actual: row.len() });
        }
        data.extend_from_slice(row);
        n += 1;
    }
    Matrix::from_vec(n, width, data)
}

fn with_action_column<T: Scalar>(obs: &Matrix<T>, actions: &[T]) -> Matrix<T> {
    let width = obs.cols() + 1;
    let mut data = Vec::with_capacity(obs.rows() * width);
    for (i, &a) in actions.iter().enumerate() {
        data.extend_from_slice(obs.row(i));
        data.push(a);
    }
    Matrix::from_vec(obs.rows(), width, data).expect("shape computed above")
}

fn regress<T: Scalar>(net: &mut Network<T>, opt: &mut OptimizerState<T>, input: Matrix<T>, targets: &[T]) -> Result<T> {
    let n = input.rows();
    let tape = net.forward_tape(input)?;
    let count = T::from_usize(n).unwrap();
    let residuals: Vec<T> = tape.output().as_slice().iter().zip(targets).map(|(&q, &y)| q - y).collect();
    let loss = residuals.iter().fold(T::zero(), |a, &r| a + r * r) / count;
    let two = T::lit(2.0);
    let upstream = Matrix::from_vec(n, 1, residuals.iter().map(|&r| two * r / count).collect())?;
    let grads = net.parameter_gradients(&tape, &upstream)?;
    opt.apply(net, &grads)?;
    Ok(loss)
}
