//! Binary agent checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! "SYNQ"  u32 version
//! str regime  u64 seed  u64 env_steps  u64 update_count
//! str resolved-config text
//! 3 x (u64 step, f64 learning_rate, f64 beta1, f64 beta2, f64 epsilon)   actor, critic1, critic2 optimizers
//! u32 array count, then per array: str name, u64 length
//! array payloads as f64, in directory order
//! ```
//!
//! `str` is a u32 byte length followed by UTF-8 bytes.

use std::path::Path;

use crate::approximator::OptimizerState;
use crate::config::RunConfig;
use crate::dynamics::RegimeKind;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::td3::Agent;

pub const MAGIC: &[u8; 4] = b"SYNQ";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    /// Resolved configuration the agent was trained under.
    pub config: RunConfig<T>,
    /// Environment steps taken during training.
    pub env_steps: u64,
    pub agent: Agent<T>,
}

const NETWORKS: [&str; 6] = ["actor", "actor_target", "critic1", "critic2", "critic1_target", "critic2_target"];
const OPTIMIZERS: [&str; 3] = ["actor_opt", "critic1_opt", "critic2_opt"];

fn optimizers<T>(agent: &Agent<T>) -> [&OptimizerState<T>; 3] {
    [&agent.actor_opt, &agent.critic1_opt, &agent.critic2_opt]
}

fn named_arrays<T: Scalar>(agent: &Agent<T>) -> Vec<(String, &[T])> {
    let nets = [
        &agent.actor,
        &agent.actor_target,
        &agent.critic1,
        &agent.critic2,
        &agent.critic1_target,
        &agent.critic2_target,
    ];
    let mut out = Vec::new();
    for (prefix, net) in NETWORKS.iter().zip(nets) {
        out.extend(net.named_arrays().into_iter().map(|(n, a)| (format!("{prefix}.{n}"), a)));
    }
    for (prefix, opt) in OPTIMIZERS.iter().zip(optimizers(agent)) {
        out.extend(opt.named_arrays().into_iter().map(|(n, a)| (format!("{prefix}.{n}"), a)));
    }
    out
}

fn named_arrays_mut<T: Scalar>(agent: &mut Agent<T>) -> Vec<(String, &mut [T])> {
    let nets = [
        &mut agent.actor,
        &mut agent.actor_target,
        &mut agent.critic1,
        &mut agent.critic2,
        &mut agent.critic1_target,
        &mut agent.critic2_target,
    ];
    let mut out = Vec::new();
    for (prefix, net) in NETWORKS.iter().zip(nets) {
        out.extend(net.named_arrays_mut().into_iter().map(|(n, a)| (format!("{prefix}.{n}"), a)));
    }
    let opts = [&mut agent.actor_opt, &mut agent.critic1_opt, &mut agent.critic2_opt];
    for (prefix, opt) in OPTIMIZERS.iter().zip(opts) {
        out.extend(opt.named_arrays_mut().into_iter().map(|(n, a)| (format!("{prefix}.{n}"), a)));
    }
    out
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::CheckpointFormat(format!("truncated at byte {}", self.pos)));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn str(&mut self) -> Result<&'a str> {
        let n = self.u32()? as usize;
        std::str::from_utf8(self.take(n)?).map_err(|_| Error::CheckpointFormat("invalid UTF-8 string".into()))
    }
}

impl<T: Scalar> Checkpoint<T> {
    /// The output directory is not part of a trained agent and is reset to
    /// its default, so identical runs written to different places produce
    /// identical checkpoints.
    pub fn new(mut config: RunConfig<T>, env_steps: u64, agent: Agent<T>) -> Self {
        config.output_dir = RunConfig::<T>::defaults(config.env.ensemble.regime).output_dir;
        Self { config, env_steps, agent }
    }

    pub fn regime(&self) -> RegimeKind {
        self.config.env.ensemble.regime
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(FORMAT_VERSION);
        w.str(self.regime().as_str());
        w.u64(self.config.seed);
        w.u64(self.env_steps);
        w.u64(self.agent.update_count);
        w.str(&self.config.to_text());
        for opt in optimizers(&self.agent) {
            w.u64(opt.step);
            for v in [opt.learning_rate, opt.beta1, opt.beta2, opt.epsilon] {
                w.f64(v.to_f64_exact());
            }
        }
        let arrays = named_arrays(&self.agent);
        w.u32(arrays.len() as u32);
        for (name, arr) in &arrays {
            w.str(name);
            w.u64(arr.len() as u64);
        }
        for (_, arr) in &arrays {
            for v in arr.iter() {
                w.f64(v.to_f64_exact());
            }
        }
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::CheckpointFormat("missing SYNQ magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::CheckpointVersion { found: version, expected: FORMAT_VERSION });
        }
        let regime: RegimeKind = r.str()?.parse().map_err(|e: Error| Error::CheckpointFormat(e.to_string()))?;
        let seed = r.u64()?;
        let env_steps = r.u64()?;
        let update_count = r.u64()?;
        let config = RunConfig::<T>::parse(r.str()?).map_err(|e| Error::CheckpointFormat(format!("embedded config: {e}")))?;
        if config.env.ensemble.regime != regime || config.seed != seed {
            return Err(Error::CheckpointFormat("header disagrees with embedded config".into()));
        }

        // Parameters are overwritten below; the generator only fixes shapes.
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut agent = Agent::new(config.agent_spec(), config.td3.clone(), &mut rng)?;
        agent.update_count = update_count;
        for opt in [&mut agent.actor_opt, &mut agent.critic1_opt, &mut agent.critic2_opt] {
            opt.step = r.u64()?;
            opt.learning_rate = T::from_f64_lossy(r.f64()?);
            opt.beta1 = T::from_f64_lossy(r.f64()?);
            opt.beta2 = T::from_f64_lossy(r.f64()?);
            opt.epsilon = T::from_f64_lossy(r.f64()?);
        }

        let count = r.u32()? as usize;
        let mut directory = Vec::with_capacity(count);
        for _ in 0..count {
            let name = r.str()?.to_string();
            directory.push((name, r.u64()? as usize));
        }
        let mut slots = named_arrays_mut(&mut agent);
        if slots.len() != directory.len() {
            return Err(Error::CheckpointFormat(format!(
                "expected {} arrays for the configured architecture, found {}",
                slots.len(),
                directory.len()
            )));
        }
        for ((name, len), (slot_name, slot)) in directory.iter().zip(slots.iter_mut()) {
            if name != slot_name || *len != slot.len() {
                return Err(Error::CheckpointFormat(format!(
                    "array `{name}` (length {len}) does not fit `{slot_name}` (length {})",
                    slot.len()
                )));
            }
            for v in slot.iter_mut() {
                *v = T::from_f64_lossy(r.f64()?);
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::CheckpointFormat(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { config, env_steps, agent })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Fails unless the checkpoint can drive an environment built from `config`.
    pub fn check_compatible(&self, config: &RunConfig<T>) -> Result<()> {
        if self.regime() != config.env.ensemble.regime {
            return Err(Error::CheckpointMismatch(format!(
                "trained on {} regime, configured for {}",
                self.regime(),
                config.env.ensemble.regime
            )));
        }
        if self.agent.spec != config.agent_spec() {
            return Err(Error::CheckpointMismatch(format!(
                "architecture {:?} differs from configured {:?}",
                self.agent.spec,
                config.agent_spec()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_config() -> RunConfig<f64> {
        RunConfig::parse("env.window_len = 6\nnetwork.hidden = 5,4\nseed = 11\n").unwrap()
    }

    fn sample() -> Checkpoint<f64> {
        let cfg = small_config();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut agent = Agent::new(cfg.agent_spec(), cfg.td3.clone(), &mut rng).unwrap();
        agent.update_count = 17;
        agent.critic1_opt.step = 17;
        for (i, v) in agent.critic2_opt.first_moment.iter_mut().enumerate() {
            *v = i as f64 * 1e-3 - 0.01;
        }
        agent.actor_target.layers_mut()[0].bias_mut()[0] = f64::MIN_POSITIVE;
        Checkpoint::new(cfg, 1234, agent)
    }

    #[test]
    fn round_trip_is_exact() {
        let ck = sample();
        let bytes = ck.to_bytes();
        let back = Checkpoint::<f64>::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn f32_round_trip_is_exact() {
        let cfg = RunConfig::<f32>::parse("env.window_len = 4\nnetwork.hidden = 3\n").unwrap();
        let agent = Agent::new(cfg.agent_spec(), cfg.td3.clone(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let ck = Checkpoint::new(cfg, 0, agent);
        assert_eq!(Checkpoint::<f32>::from_bytes(&ck.to_bytes()).unwrap(), ck);
    }

    #[test]
    fn file_round_trip() {
        let dir = std::env::temp_dir().join(format!("synq-ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("a.ckpt");
        let ck = sample();
        ck.save(&path).unwrap();
        let loaded = Checkpoint::<f64>::load(&path).unwrap();
        loaded.save(dir.join("b.ckpt")).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(dir.join("b.ckpt")).unwrap());
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn header_layout() {
        let bytes = sample().to_bytes();
        assert_eq!(&bytes[..4], b"SYNQ");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 7);
        assert_eq!(&bytes[12..19], b"regular");
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let mut bytes = sample().to_bytes();
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert_eq!(
            Checkpoint::<f64>::from_bytes(&bytes).unwrap_err(),
            Error::CheckpointVersion { found: 2, expected: 1 }
        );
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = sample().to_bytes();
        assert!(matches!(Checkpoint::<f64>::from_bytes(b"NOPE"), Err(Error::CheckpointFormat(_))));
        assert!(matches!(Checkpoint::<f64>::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::CheckpointFormat(_))));
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(matches!(Checkpoint::<f64>::from_bytes(&longer), Err(Error::CheckpointFormat(_))));
    }

    #[test]
    fn compatibility_checks() {
        let ck = sample();
        assert!(ck.check_compatible(&small_config()).is_ok());
        let other_regime = RunConfig::parse("ensemble.regime = chaotic\nenv.window_len = 6\nnetwork.hidden = 5,4\n").unwrap();
        assert!(matches!(ck.check_compatible(&other_regime), Err(Error::CheckpointMismatch(_))));
        let other_net = RunConfig::parse("env.window_len = 6\nnetwork.hidden = 5\n").unwrap();
        assert!(matches!(ck.check_compatible(&other_net), Err(Error::CheckpointMismatch(_))));
    }
}
