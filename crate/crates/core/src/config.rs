//! Flat `key = value` run configuration with dotted keys.
//!
//! Lines are `key = value`; everything after `#` is a comment. Keys not set
//! take their defaults, some of which depend on `ensemble.regime` (coupling,
//! current range) or on `env.a_max` (target-smoothing noise).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::dynamics::RegimeKind;
use crate::environment::EnvConfig;
use crate::error::{Error, Result};
use crate::evaluation::EvalProtocol;
use crate::scalar::Scalar;
use crate::td3::{AgentSpec, Td3Hyperparams};

/// Every recognized key, in echo order.
pub const KEYS: &[&str] = &[
    "seed",
    "ensemble.regime",
    "ensemble.n_neurons",
    "ensemble.coupling",
    "ensemble.dt",
    "ensemble.substeps",
    "ensemble.current_min",
    "ensemble.current_max",
    "temporal.n_parts",
    "temporal.part_weight",
    "temporal.onset_delay",
    "env.window_len",
    "env.a_max",
    "env.episode_len",
    "env.warmup_steps",
    "env.clamp_actions",
    "network.hidden",
    "td3.gamma",
    "td3.tau",
    "td3.policy_noise_sigma",
    "td3.noise_clip",
    "td3.exploration_sigma",
    "td3.policy_delay",
    "td3.batch_size",
    "td3.buffer_capacity",
    "td3.learn_start",
    "td3.actor_lr",
    "td3.critic_lr",
    "td3.truncate_on_done",
    "eval.pre_steps",
    "eval.post_steps",
    "eval.transient",
    "eval.measure_window",
    "train.steps",
    "train.eval_interval",
    "train.eval_steps",
    "simulate.steps",
    "output.dir",
];

pub const DEFAULT_N_NEURONS: usize = 100;
pub const DEFAULT_HIDDEN: [usize; 2] = [256, 256];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainSettings {
    pub steps: usize,
    /// Env steps between greedy evaluation rollouts.
    pub eval_interval: usize,
    /// Length of each greedy evaluation rollout.
    pub eval_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig<T> {
    pub seed: u64,
    pub env: EnvConfig<T>,
    pub hidden: Vec<usize>,
    pub td3: Td3Hyperparams<T>,
    pub eval: EvalProtocol,
    pub train: TrainSettings,
    pub simulate_steps: usize,
    pub output_dir: PathBuf,
}

fn parse_num<V: std::str::FromStr>(value: &str) -> std::result::Result<V, String> {
    value.parse().map_err(|_| format!("cannot parse `{value}` as a number"))
}

fn parse_real<T: Scalar>(value: &str) -> std::result::Result<T, String> {
    let v: f64 = value.parse().map_err(|_| format!("cannot parse `{value}` as a real number"))?;
    Ok(T::from_f64_lossy(v))
}

fn parse_bool(value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected `true` or `false`, got `{value}`")),
    }
}

fn parse_list(value: &str) -> std::result::Result<Vec<usize>, String> {
    value.split(',').map(|p| parse_num(p.trim())).collect()
}

impl<T: Scalar> RunConfig<T> {
    pub fn defaults(regime: RegimeKind) -> Self {
        let env = EnvConfig::new(regime, DEFAULT_N_NEURONS);
        let td3 = Td3Hyperparams::defaults(env.a_max);
        Self {
            seed: 0,
            env,
            hidden: DEFAULT_HIDDEN.to_vec(),
            td3,
            eval: EvalProtocol::default(),
            train: TrainSettings { steps: 50_000, eval_interval: 1_000, eval_steps: 1_000 },
            simulate_steps: 10_000,
            output_dir: PathBuf::from("run"),
        }
    }

    /// Parses and validates a configuration text.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<(usize, &str, &str)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap().trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::ConfigParse { line, message: format!("expected `key = value`, got `{content}`") })?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(Error::UnknownKey { key: key.to_string(), line });
            }
            if value.is_empty() {
                return Err(Error::ConfigParse { line, message: format!("missing value for `{key}`") });
            }
            if let Some((first, _, _)) = entries.iter().find(|(_, k, _)| *k == key) {
                return Err(Error::ConfigParse { line, message: format!("`{key}` already set on line {first}") });
            }
            entries.push((line, key, value));
        }

        let regime = match entries.iter().find(|(_, k, _)| *k == "ensemble.regime") {
            Some(&(line, _, v)) => v.parse().map_err(|e: Error| Error::ConfigParse { line, message: e.to_string() })?,
            None => RegimeKind::Regular,
        };
        let mut cfg = Self::defaults(regime);
        for &(line, key, value) in &entries {
            cfg.set(key, value).map_err(|message| Error::ConfigParse { line, message })?;
        }
        let given = |k: &str| entries.iter().any(|(_, key, _)| *key == k);
        let scaled = Td3Hyperparams::defaults(cfg.env.a_max);
        if !given("td3.policy_noise_sigma") {
            cfg.td3.policy_noise_sigma = scaled.policy_noise_sigma;
        }
        if !given("td3.noise_clip") {
            cfg.td3.noise_clip = scaled.noise_clip;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Assigns one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let e = &mut self.env;
        let t = &mut self.td3;
        match key {
            "seed" => self.seed = parse_num(value)?,
            "ensemble.regime" => {
                let regime: RegimeKind = value.parse().map_err(|err: Error| err.to_string())?;
                if regime != e.ensemble.regime {
                    return Err("ensemble.regime cannot change after defaults are resolved".into());
                }
            }
            "ensemble.n_neurons" => e.ensemble.n_neurons = parse_num(value)?,
            "ensemble.coupling" => e.ensemble.coupling = parse_real(value)?,
            "ensemble.dt" => e.ensemble.dt = parse_real(value)?,
            "ensemble.substeps" => e.ensemble.substeps_per_env_step = parse_num(value)?,
            "ensemble.current_min" => e.ensemble.heterogeneity.current_min = parse_real(value)?,
            "ensemble.current_max" => e.ensemble.heterogeneity.current_max = parse_real(value)?,
            "temporal.n_parts" => e.temporal.n_parts = parse_num(value)?,
            "temporal.part_weight" => e.temporal.part_weight = parse_real(value)?,
            "temporal.onset_delay" => e.temporal.onset_delay = parse_num(value)?,
            "env.window_len" => e.window_len = parse_num(value)?,
            "env.a_max" => e.a_max = parse_real(value)?,
            "env.episode_len" => e.episode_len = parse_num(value)?,
            "env.warmup_steps" => e.warmup_steps = parse_num(value)?,
            "env.clamp_actions" => e.clamp_actions = parse_bool(value)?,
            "network.hidden" => self.hidden = parse_list(value)?,
            "td3.gamma" => t.gamma = parse_real(value)?,
            "td3.tau" => t.tau = parse_real(value)?,
            "td3.policy_noise_sigma" => t.policy_noise_sigma = parse_real(value)?,
            "td3.noise_clip" => t.noise_clip = parse_real(value)?,
            "td3.exploration_sigma" => t.exploration_sigma = parse_real(value)?,
            "td3.policy_delay" => t.policy_delay = parse_num(value)?,
            "td3.batch_size" => t.batch_size = parse_num(value)?,
            "td3.buffer_capacity" => t.buffer_capacity = parse_num(value)?,
            "td3.learn_start" => t.learn_start = parse_num(value)?,
            "td3.actor_lr" => t.actor_lr = parse_real(value)?,
            "td3.critic_lr" => t.critic_lr = parse_real(value)?,
            "td3.truncate_on_done" => t.truncate_on_done = parse_bool(value)?,
            "eval.pre_steps" => self.eval.pre_steps = parse_num(value)?,
            "eval.post_steps" => self.eval.post_steps = parse_num(value)?,
            "eval.transient" => self.eval.transient = parse_num(value)?,
            "eval.measure_window" => self.eval.measure_window = parse_num(value)?,
            "train.steps" => self.train.steps = parse_num(value)?,
            "train.eval_interval" => self.train.eval_interval = parse_num(value)?,
            "train.eval_steps" => self.train.eval_steps = parse_num(value)?,
            "simulate.steps" => self.simulate_steps = parse_num(value)?,
            "output.dir" => self.output_dir = PathBuf::from(value),
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Textual value of one key, as written by [`to_text`](Self::to_text).
    pub fn get(&self, key: &str) -> Option<String> {
        let e = &self.env;
        let t = &self.td3;
        Some(match key {
            "seed" => self.seed.to_string(),
            "ensemble.regime" => e.ensemble.regime.to_string(),
            "ensemble.n_neurons" => e.ensemble.n_neurons.to_string(),
            "ensemble.coupling" => e.ensemble.coupling.to_string(),
            "ensemble.dt" => e.ensemble.dt.to_string(),
            "ensemble.substeps" => e.ensemble.substeps_per_env_step.to_string(),
            "ensemble.current_min" => e.ensemble.heterogeneity.current_min.to_string(),
            "ensemble.current_max" => e.ensemble.heterogeneity.current_max.to_string(),
            "temporal.n_parts" => e.temporal.n_parts.to_string(),
            "temporal.part_weight" => e.temporal.part_weight.to_string(),
            "temporal.onset_delay" => e.temporal.onset_delay.to_string(),
            "env.window_len" => e.window_len.to_string(),
            "env.a_max" => e.a_max.to_string(),
            "env.episode_len" => e.episode_len.to_string(),
            "env.warmup_steps" => e.warmup_steps.to_string(),
            "env.clamp_actions" => e.clamp_actions.to_string(),
            "network.hidden" => self.hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(","),
            "td3.gamma" => t.gamma.to_string(),
            "td3.tau" => t.tau.to_string(),
            "td3.policy_noise_sigma" => t.policy_noise_sigma.to_string(),
            "td3.noise_clip" => t.noise_clip.to_string(),
            "td3.exploration_sigma" => t.exploration_sigma.to_string(),
            "td3.policy_delay" => t.policy_delay.to_string(),
            "td3.batch_size" => t.batch_size.to_string(),
            "td3.buffer_capacity" => t.buffer_capacity.to_string(),
            "td3.learn_start" => t.learn_start.to_string(),
            "td3.actor_lr" => t.actor_lr.to_string(),
            "td3.critic_lr" => t.critic_lr.to_string(),
            "td3.truncate_on_done" => t.truncate_on_done.to_string(),
            "eval.pre_steps" => self.eval.pre_steps.to_string(),
            "eval.post_steps" => self.eval.post_steps.to_string(),
            "eval.transient" => self.eval.transient.to_string(),
            "eval.measure_window" => self.eval.measure_window.to_string(),
            "train.steps" => self.train.steps.to_string(),
            "train.eval_interval" => self.train.eval_interval.to_string(),
            "train.eval_steps" => self.train.eval_steps.to_string(),
            "simulate.steps" => self.simulate_steps.to_string(),
            "output.dir" => self.output_dir.display().to_string(),
            _ => return None,
        })
    }

    /// The fully resolved configuration, one `key = value` line per key.
    /// Parsing the result gives back an identical configuration.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            writeln!(out, "{key} = {}", self.get(key).unwrap()).unwrap();
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.td3.validate()?;
        self.eval.validate()?;
        if self.hidden.contains(&0) {
            return Err(Error::InvalidConfig("network.hidden sizes must be positive".into()));
        }
        if self.train.eval_interval == 0 || self.train.eval_steps == 0 {
            return Err(Error::InvalidConfig("train.eval_interval and train.eval_steps must be positive".into()));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::InvalidConfig("output.dir must not be empty".into()));
        }
        Ok(())
    }

    pub fn agent_spec(&self) -> AgentSpec<T> {
        AgentSpec { obs_dim: self.env.window_len, hidden: self.hidden.clone(), a_max: self.env.a_max }
    }
}
