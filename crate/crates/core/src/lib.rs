//! Simulation of globally coupled neuron ensembles and a twin-critic
//! deterministic policy-gradient controller that learns to suppress their
//! collective oscillation.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the type
//! aliases below pin the `f64` instantiation used by the command-line tools.

pub mod approximator;
pub mod checkpoint;
pub mod config;
pub mod dynamics;
pub mod environment;
pub mod error;
pub mod evaluation;
pub mod scalar;
pub mod td3;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Network64 = approximator::Network<f64>;
pub type EnsembleConfig64 = dynamics::EnsembleConfig<f64>;
pub type EnsembleState64 = dynamics::EnsembleState<f64>;
pub type EnvConfig64 = environment::EnvConfig<f64>;
pub type Environment64 = environment::Environment<f64>;
pub type Agent64 = td3::Agent<f64>;
pub type Td3Hyperparams64 = td3::Td3Hyperparams<f64>;
pub type ReplayBuffer64 = td3::ReplayBuffer<f64>;
pub type SuppressionReport64 = evaluation::SuppressionReport<f64>;
pub type TraceRecord64 = evaluation::TraceRecord<f64>;
pub type RunConfig64 = config::RunConfig<f64>;
pub type Checkpoint64 = checkpoint::Checkpoint<f64>;
