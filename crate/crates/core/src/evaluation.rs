//! Suppression metrics and the two-phase (uncontrolled, then controlled)
//! evaluation run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::RegimeKind;
use crate::environment::{EnvConfig, Environment, Observation};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::td3::Agent;

/// Population standard deviation.
pub fn population_std<T: Scalar>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::zero();
    }
    let n = T::from_usize(xs.len()).unwrap();
    let mean = xs.iter().fold(T::zero(), |a, &x| a + x) / n;
    let var = xs.iter().fold(T::zero(), |a, &x| a + (x - mean) * (x - mean)) / n;
    var.sqrt()
}

fn mean<T: Scalar>(xs: &[T]) -> T {
    xs.iter().fold(T::zero(), |a, &x| a + x) / T::from_usize(xs.len()).unwrap()
}

/// Ratio of mean-field standard deviations before and after control onset.
///
/// A perfectly still `after` slice yields `+inf` rather than an error; check
/// [`is_quenched`] to tell that case apart.
pub fn suppression_coefficient<T: Scalar>(before: &[T], after: &[T]) -> Result<T> {
    for s in [before, after] {
        if s.len() < 2 {
            return Err(Error::SliceTooShort { required: 1, actual: s.len() });
        }
    }
    let sigma_after = population_std(after);
    if sigma_after == T::zero() {
        return Ok(T::infinity());
    }
    Ok(population_std(before) / sigma_after)
}

/// True when the post-onset slice has exactly zero spread.
pub fn is_quenched<T: Scalar>(after: &[T]) -> bool {
    population_std(after) == T::zero()
}

/// Total stimulation supplied: `sum |a_t|`.
pub fn energy<T: Scalar>(actions: &[T]) -> T {
    actions.iter().fold(T::zero(), |acc, a| acc + a.abs())
}

/// Mean of `trace` after dropping its first `transient` samples.
pub fn mean_point_of_convergence<T: Scalar>(trace: &[T], transient: usize) -> Result<T> {
    if trace.len() <= transient {
        return Err(Error::SliceTooShort { required: transient, actual: trace.len() });
    }
    Ok(mean(&trace[transient..]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord<T> {
    pub step: usize,
    pub time: T,
    pub mean_field: T,
    pub action: T,
    pub reward: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalProtocol {
    pub pre_steps: usize,
    pub post_steps: usize,
    /// Controlled steps ignored before measuring the steady state.
    pub transient: usize,
    /// Samples used for `sigma_before` (tail of the uncontrolled phase) and
    /// for `sigma_after` (tail of the controlled phase).
    pub measure_window: usize,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        Self { pre_steps: 10_000, post_steps: 10_000, transient: 500, measure_window: 5_000 }
    }
}

impl EvalProtocol {
    pub fn validate(&self) -> Result<()> {
        if self.transient >= self.post_steps {
            return Err(Error::InvalidConfig("eval.transient must be smaller than eval.post_steps".into()));
        }
        if self.measure_window < 2 {
            return Err(Error::InvalidConfig("eval.measure_window must be at least 2".into()));
        }
        if self.measure_window > self.pre_steps.min(self.post_steps - self.transient) {
            return Err(Error::InvalidConfig(
                "eval.measure_window must fit in the uncontrolled phase and in the controlled phase after the transient"
                    .into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuppressionReport<T> {
    pub sigma_before: T,
    pub sigma_after: T,
    /// `sigma_before / sigma_after`; `+inf` when `quenched`.
    pub suppression: T,
    /// Mean field averaged over the controlled phase after the transient.
    pub mean_point: T,
    pub energy: T,
    pub mean_reward: T,
    pub quenched: bool,
}

/// Column order of [`SuppressionReport::csv_row`].
pub const REPORT_CSV_HEADER: &str = "seed,regime,sigma_before,sigma_after,S,M,energy,mean_reward";

impl<T: Scalar> SuppressionReport<T> {
    pub fn csv_row(&self, seed: u64, regime: RegimeKind) -> String {
        format!(
            "{seed},{regime},{},{},{},{},{},{}",
            self.sigma_before, self.sigma_after, self.suppression, self.mean_point, self.energy, self.mean_reward
        )
    }

    pub fn key_values(&self, seed: u64, regime: RegimeKind) -> String {
        format!(
            "seed = {seed}\nregime = {regime}\nsigma_before = {}\nsigma_after = {}\nS = {}\nM = {}\nenergy = {}\nmean_reward = {}\nquenched = {}\n",
            self.sigma_before,
            self.sigma_after,
            self.suppression,
            self.mean_point,
            self.energy,
            self.mean_reward,
            self.quenched
        )
    }
}

/// Anything that maps an observation to a stimulation amplitude.
pub trait Policy<T> {
    fn action(&mut self, obs: &Observation<T>) -> Result<T>;
}

/// Never stimulates.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPolicy;

impl<T: Scalar> Policy<T> for ZeroPolicy {
    fn action(&mut self, _obs: &Observation<T>) -> Result<T> {
        Ok(T::zero())
    }
}

/// Uniform pulses in `[-a_max, a_max]`.
#[derive(Debug, Clone)]
pub struct RandomPolicy<T> {
    a_max: T,
    rng: ChaCha8Rng,
}

impl<T: Scalar> RandomPolicy<T> {
    pub fn new(a_max: T, seed: u64) -> Self {
        Self { a_max, rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl<T: Scalar> Policy<T> for RandomPolicy<T> {
    fn action(&mut self, _obs: &Observation<T>) -> Result<T> {
        let u: f64 = self.rng.random_range(-1.0..=1.0);
        Ok(self.a_max * T::lit(u))
    }
}

/// Noise-free actions of a trained agent.
#[derive(Debug, Clone, Copy)]
pub struct GreedyPolicy<'a, T> {
    agent: &'a Agent<T>,
}

impl<'a, T: Scalar> GreedyPolicy<'a, T> {
    pub fn new(agent: &'a Agent<T>) -> Self {
        Self { agent }
    }
}

impl<T: Scalar> Policy<T> for GreedyPolicy<'_, T> {
    fn action(&mut self, obs: &Observation<T>) -> Result<T> {
        self.agent.act(obs.as_slice())
    }
}

/// Runs `pre_steps` uncontrolled steps, then `post_steps` steps driven by
/// `policy`, on a fresh environment seeded with `seed`. Episode boundaries
/// do not reset the ensemble here.
pub fn run_evaluation<T: Scalar, P: Policy<T>>(
    env_cfg: &EnvConfig<T>,
    policy: &mut P,
    protocol: &EvalProtocol,
    seed: u64,
) -> Result<(SuppressionReport<T>, Vec<TraceRecord<T>>)> {
    protocol.validate()?;
    let mut env = Environment::new(env_cfg.clone(), seed)?;
    let mut trace = Vec::with_capacity(protocol.pre_steps + protocol.post_steps);
    let mut obs = env.observation();
    for step in 0..protocol.pre_steps + protocol.post_steps {
        let action = if step < protocol.pre_steps { T::zero() } else { policy.action(&obs)? };
        let r = env.step(action)?;
        trace.push(TraceRecord {
            step,
            time: r.info.time,
            mean_field: r.info.mean_field,
            action: r.info.action,
            reward: r.reward,
        });
        obs = r.observation;
    }
    Ok((summarize(&trace, protocol)?, trace))
}

/// `steps` policy-driven steps from the post-warm-up state of a fresh
/// environment seeded with `seed`.
pub fn rollout<T: Scalar, P: Policy<T>>(
    env_cfg: &EnvConfig<T>,
    policy: &mut P,
    steps: usize,
    seed: u64,
) -> Result<Vec<TraceRecord<T>>> {
    let mut env = Environment::new(env_cfg.clone(), seed)?;
    let mut obs = env.observation();
    let mut trace = Vec::with_capacity(steps);
    for step in 0..steps {
        let r = env.step(policy.action(&obs)?)?;
        trace.push(TraceRecord {
            step,
            time: r.info.time,
            mean_field: r.info.mean_field,
            action: r.info.action,
            reward: r.reward,
        });
        obs = r.observation;
    }
    Ok(trace)
}

/// Metrics of a finished two-phase trace.
pub fn summarize<T: Scalar>(trace: &[TraceRecord<T>], protocol: &EvalProtocol) -> Result<SuppressionReport<T>> {
    protocol.validate()?;
    let expected = protocol.pre_steps + protocol.post_steps;
    if trace.len() != expected {
        return Err(Error::DimensionMismatch { expected, actual: trace.len() });
    }
    let field: Vec<T> = trace.iter().map(|r| r.mean_field).collect();
    let (pre, post) = field.split_at(protocol.pre_steps);
    let before = &pre[pre.len() - protocol.measure_window..];
    let after = &post[post.len() - protocol.measure_window..];
    let controlled = &trace[protocol.pre_steps..];
    let actions: Vec<T> = controlled.iter().map(|r| r.action).collect();
    let rewards: Vec<T> = controlled.iter().map(|r| r.reward).collect();
    Ok(SuppressionReport {
        sigma_before: population_std(before),
        sigma_after: population_std(after),
        suppression: suppression_coefficient(before, after)?,
        mean_point: mean_point_of_convergence(post, protocol.transient)?,
        energy: energy(&actions),
        mean_reward: mean(&rewards),
        quenched: is_quenched(after),
    })
}
