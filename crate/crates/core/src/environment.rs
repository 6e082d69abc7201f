//! Sequential-decision wrapper around an ensemble.
//!
//! The agent observes a sliding window of the mean field after it has been
//! passed through a delayed-copies filter, acts with one scalar stimulation
//! amplitude per step, and is rewarded for keeping the mean field at its
//! recent average with little stimulation.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{init_ensemble, EnsembleConfig, EnsembleState, Integrator, RegimeKind};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest value the per-step reward can take.
pub const REWARD_MAX: f64 = 10.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemporalRepConfig<T> {
    pub n_parts: usize,
    pub part_weight: T,
    pub onset_delay: usize,
}

impl<T: Scalar> Default for TemporalRepConfig<T> {
    fn default() -> Self {
        Self { n_parts: 3, part_weight: T::lit(0.33), onset_delay: 1 }
    }
}

impl<T: Scalar> TemporalRepConfig<T> {
    /// Number of raw samples the filter reaches back over, including the newest.
    pub fn span(&self) -> usize {
        (self.n_parts - 1) * self.onset_delay + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_parts == 0 {
            return Err(Error::InvalidConfig("temporal.n_parts must be at least 1".into()));
        }
        if !(self.part_weight > T::zero()) || !self.part_weight.is_finite() {
            return Err(Error::InvalidConfig("temporal.part_weight must be positive".into()));
        }
        if self.onset_delay == 0 {
            return Err(Error::InvalidConfig("temporal.onset_delay must be at least 1".into()));
        }
        Ok(())
    }
}

/// Sum of `n_parts` copies of the signal, each scaled by `part_weight` and
/// delayed by a multiple of `onset_delay`, evaluated at the newest sample.
///
/// Samples older than the start of `history` are taken equal to its first
/// element. An empty history yields zero.
pub fn temporal_representation<T: Scalar>(history: &[T], cfg: &TemporalRepConfig<T>) -> T {
    let Some(&first) = history.first() else {
        return T::zero();
    };
    let newest = history.len() - 1;
    (0..cfg.n_parts)
        .map(|n| {
            let back = n * cfg.onset_delay;
            if back <= newest {
                history[newest - back]
            } else {
                first
            }
        })
        .fold(T::zero(), |acc, z| acc + cfg.part_weight * z)
}

/// Per-step reward: `100 / ((x - m)^2 + 10) + 3 / (|a| + 10)`.
///
/// `mean_field_now` is the newest raw mean field, `window_mean` the average
/// of the raw samples in the current observation window and `action_mag`
/// the stimulation magnitude applied this step.
pub fn compute_reward<T: Scalar>(mean_field_now: T, window_mean: T, action_mag: T) -> T {
    let diff = mean_field_now - window_mean;
    let ten = T::lit(10.0);
    T::lit(100.0) / (diff * diff + ten) + T::lit(3.0) / (action_mag + ten)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig<T> {
    pub ensemble: EnsembleConfig<T>,
    pub temporal: TemporalRepConfig<T>,
    pub window_len: usize,
    pub a_max: T,
    pub episode_len: usize,
    pub warmup_steps: usize,
    /// Clamp out-of-range actions instead of rejecting them.
    pub clamp_actions: bool,
}

impl<T: Scalar> EnvConfig<T> {
    pub fn new(regime: RegimeKind, n_neurons: usize) -> Self {
        Self {
            ensemble: EnsembleConfig::new(regime, n_neurons),
            temporal: TemporalRepConfig::default(),
            window_len: 250,
            a_max: T::one(),
            episode_len: 1000,
            warmup_steps: 1000,
            clamp_actions: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ensemble.validate()?;
        self.temporal.validate()?;
        if self.window_len == 0 {
            return Err(Error::InvalidConfig("env.window_len must be at least 1".into()));
        }
        if self.window_len < self.temporal.n_parts * self.temporal.onset_delay {
            return Err(Error::InvalidConfig(
                "env.window_len must be at least temporal.n_parts * temporal.onset_delay".into(),
            ));
        }
        if !(self.a_max > T::zero()) || !self.a_max.is_finite() {
            return Err(Error::InvalidConfig("env.a_max must be positive".into()));
        }
        if self.episode_len == 0 {
            return Err(Error::InvalidConfig("env.episode_len must be at least 1".into()));
        }
        Ok(())
    }
}

/// Fixed-length window of filtered mean-field samples, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation<T> {
    window: Vec<T>,
}

impl<T: Scalar> Observation<T> {
    pub fn new(window: Vec<T>) -> Self {
        Self { window }
    }

    pub fn as_slice(&self) -> &[T] {
        &self.window
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    pub fn newest(&self) -> T {
        *self.window.last().expect("observation window is never empty")
    }

    pub fn into_vec(self) -> Vec<T> {
        self.window
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo<T> {
    pub mean_field: T,
    pub action: T,
    pub time: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult<T> {
    pub observation: Observation<T>,
    pub reward: T,
    pub done: bool,
    pub info: StepInfo<T>,
}

/// Ring of the most recent `capacity` samples, padded on the left with the
/// earliest sample seen until it fills up.
#[derive(Debug, Clone)]
struct Window<T> {
    buf: VecDeque<T>,
    capacity: usize,
}

impl<T: Scalar> Window<T> {
    fn new(capacity: usize) -> Self {
        Self { buf: VecDeque::with_capacity(capacity + 1), capacity }
    }

    fn push(&mut self, v: T) {
        if self.buf.is_empty() {
            self.buf.extend(std::iter::repeat(v).take(self.capacity));
            return;
        }
        self.buf.pop_front();
        self.buf.push_back(v);
    }

    fn mean(&self) -> T {
        let sum = self.buf.iter().fold(T::zero(), |a, &b| a + b);
        sum / T::from_usize(self.buf.len()).unwrap()
    }

    fn to_vec(&self) -> Vec<T> {
        self.buf.iter().copied().collect()
    }
}

/// One ensemble plus the bookkeeping needed to produce observations and rewards.
#[derive(Debug, Clone)]
pub struct Environment<T> {
    cfg: EnvConfig<T>,
    ensemble: EnsembleState<T>,
    integrator: Integrator<T>,
    /// Raw mean field, only as far back as the temporal filter needs.
    recent_raw: VecDeque<T>,
    raw_window: Window<T>,
    obs_window: Window<T>,
    steps_in_episode: usize,
    rng: ChaCha8Rng,
}

impl<T: Scalar> Environment<T> {
    /// Creates an environment and performs the first [`reset`](Self::reset).
    pub fn new(cfg: EnvConfig<T>, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ensemble = init_ensemble(&cfg.ensemble, &mut rng)?;
        let len = ensemble.as_flat().len();
        let mut env = Self {
            raw_window: Window::new(cfg.window_len),
            obs_window: Window::new(cfg.window_len),
            recent_raw: VecDeque::new(),
            integrator: Integrator::new(len),
            ensemble,
            steps_in_episode: 0,
            rng,
            cfg,
        };
        env.warm_up()?;
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig<T> {
        &self.cfg
    }

    pub fn ensemble(&self) -> &EnsembleState<T> {
        &self.ensemble
    }

    pub fn steps_in_episode(&self) -> usize {
        self.steps_in_episode
    }

    /// Re-initializes the ensemble from the environment's own random stream,
    /// runs the zero-action warm-up and returns the first observation.
    pub fn reset(&mut self) -> Result<Observation<T>> {
        self.ensemble = init_ensemble(&self.cfg.ensemble, &mut self.rng)?;
        self.warm_up()?;
        Ok(self.observation())
    }

    fn warm_up(&mut self) -> Result<()> {
        self.recent_raw.clear();
        self.raw_window = Window::new(self.cfg.window_len);
        self.obs_window = Window::new(self.cfg.window_len);
        self.steps_in_episode = 0;
        self.record(self.ensemble.mean_field());
        for _ in 0..self.cfg.warmup_steps {
            self.integrator.advance(&mut self.ensemble, T::zero(), &self.cfg.ensemble)?;
            self.record(self.ensemble.mean_field());
        }
        Ok(())
    }

    fn record(&mut self, raw: T) {
        let span = self.cfg.temporal.span();
        if self.recent_raw.is_empty() {
            self.recent_raw.extend(std::iter::repeat(raw).take(span));
        } else {
            self.recent_raw.pop_front();
            self.recent_raw.push_back(raw);
        }
        let filtered = temporal_representation(self.recent_raw.make_contiguous(), &self.cfg.temporal);
        self.raw_window.push(raw);
        self.obs_window.push(filtered);
    }

    pub fn observation(&self) -> Observation<T> {
        Observation::new(self.obs_window.to_vec())
    }

    /// Raw (unfiltered) mean-field samples in the current window, oldest first.
    pub fn raw_window(&self) -> Vec<T> {
        self.raw_window.to_vec()
    }

    pub fn step(&mut self, action: T) -> Result<StepResult<T>> {
        let a_max = self.cfg.a_max;
        if !action.is_finite() || action.abs() > a_max {
            if !self.cfg.clamp_actions || !action.is_finite() {
                return Err(Error::ActionOutOfBounds {
                    action: action.to_f64_exact(),
                    bound: a_max.to_f64_exact(),
                });
            }
        }
        let action = action.max(-a_max).min(a_max);
        self.integrator.advance(&mut self.ensemble, action, &self.cfg.ensemble)?;
        let field = self.ensemble.mean_field();
        self.record(field);
        self.steps_in_episode += 1;
        let reward = compute_reward(field, self.raw_window.mean(), action.abs());
        let done = self.steps_in_episode >= self.cfg.episode_len;
        if done {
            self.steps_in_episode = 0;
        }
        Ok(StepResult {
            observation: self.observation(),
            reward,
            done,
            info: StepInfo { mean_field: field, action, time: self.ensemble.time() },
        })
    }
}
