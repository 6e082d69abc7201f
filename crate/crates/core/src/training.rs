//! Interleaved environment/agent training with periodic greedy evaluation.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::environment::{EnvConfig, Environment};
use crate::error::Result;
use crate::evaluation::{population_std, rollout, GreedyPolicy};
use crate::scalar::Scalar;
use crate::td3::{Agent, ReplayBuffer, Transition};

/// Stream indices used to split one run seed into independent generators.
pub const AGENT_STREAM: u64 = 1;
pub const EVAL_ENV_STREAM: u64 = 2;
pub const RANDOM_POLICY_STREAM: u64 = 3;

/// Seed for an independent generator derived from the run seed.
/// Stream 0 is the run seed itself (the training environment).
pub fn derived_seed(seed: u64, stream: u64) -> u64 {
    if stream == 0 {
        return seed;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

/// Generator driving network initialization, exploration and updates.
pub fn agent_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(AGENT_STREAM);
    rng
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainLogRow<T> {
    /// Environment steps taken so far.
    pub step: usize,
    pub updates: u64,
    pub eval_mean_reward: T,
    pub eval_reward_std: T,
    pub eval_mean_abs_action: T,
}

pub const TRAIN_LOG_HEADER: &str = "step,updates,eval_mean_reward,eval_reward_std,eval_mean_abs_action";

impl<T: Scalar> TrainLogRow<T> {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.step, self.updates, self.eval_mean_reward, self.eval_reward_std, self.eval_mean_abs_action
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub checkpoint: Checkpoint<T>,
    pub log: Vec<TrainLogRow<T>>,
}

/// Greedy rollout of `agent` on a dedicated evaluation environment.
pub fn evaluate_greedy<T: Scalar>(
    agent: &Agent<T>,
    env_cfg: &EnvConfig<T>,
    steps: usize,
    seed: u64,
) -> Result<(T, T, T)> {
    let trace = rollout(env_cfg, &mut GreedyPolicy::new(agent), steps, seed)?;
    let n = T::from_usize(trace.len()).unwrap();
    let rewards: Vec<T> = trace.iter().map(|r| r.reward).collect();
    let mean = rewards.iter().fold(T::zero(), |a, &r| a + r) / n;
    let abs_action = trace.iter().fold(T::zero(), |a, r| a + r.action.abs()) / n;
    Ok((mean, population_std(&rewards), abs_action))
}

/// Trains for `steps` environment steps. Updates start once the buffer
/// holds `max(batch_size, learn_start)` transitions and then run once per
/// step. Every `train.eval_interval` steps the current actor is scored on a
/// greedy rollout of `train.eval_steps` steps from an environment seeded
/// independently of training, so evaluation never touches the training
/// streams. `on_log` sees each log row as it is produced.
pub fn train<T: Scalar>(
    cfg: &RunConfig<T>,
    steps: usize,
    mut on_log: impl FnMut(&TrainLogRow<T>),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let mut rng = agent_rng(cfg.seed);
    let mut agent = Agent::new(cfg.agent_spec(), cfg.td3.clone(), &mut rng)?;
    let mut env = Environment::new(cfg.env.clone(), cfg.seed)?;
    let mut buffer = ReplayBuffer::new(cfg.td3.buffer_capacity);
    let ready = cfg.td3.batch_size.max(cfg.td3.learn_start);
    let eval_seed = derived_seed(cfg.seed, EVAL_ENV_STREAM);
    let mut log = Vec::new();

    let mut obs = env.observation();
    for step in 1..=steps {
        let action = agent.select_action(obs.as_slice(), true, &mut rng)?;
        let r = env.step(action)?;
        let done = r.done;
        let next = r.observation;
        buffer.push(Transition {
            observation: obs.into_vec(),
            action: r.info.action,
            reward: r.reward,
            next_observation: next.as_slice().to_vec(),
            done,
        });
        obs = if done { env.reset()? } else { next };

        if buffer.len() >= ready {
            agent.train_step(&buffer, &mut rng)?;
        }

        if step % cfg.train.eval_interval == 0 {
            let (mean, std, abs_action) = evaluate_greedy(&agent, &cfg.env, cfg.train.eval_steps, eval_seed)?;
            let row = TrainLogRow {
                step,
                updates: agent.update_count,
                eval_mean_reward: mean,
                eval_reward_std: std,
                eval_mean_abs_action: abs_action,
            };
            on_log(&row);
            log.push(row);
        }
    }

    Ok(TrainOutcome { checkpoint: Checkpoint::new(cfg.clone(), steps as u64, agent), log })
}
