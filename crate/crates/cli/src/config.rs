//! TOML experiment configuration: optional per-field overrides applied on
//! top of the library defaults, then validated as a whole.

use crate::error::{CliError, CliResult};
use dipg_core::batch::{BatchTrainConfig, LikelihoodMode};
use dipg_core::diversity::{KernelConfig, SelectorMode};
use dipg_core::env::{make_env, EnvKind, EnvSpec};
use dipg_core::pg::{Algo, TrainConfig};
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvTable {
    kind: EnvKind,
    horizon: Option<usize>,
    gamma: Option<f64>,
    start_noise_std: Option<f64>,
    transition_noise_std: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyTable {
    hidden_sizes: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainTable {
    algo: Option<Algo>,
    learning_rate: Option<f64>,
    gamma: Option<f64>,
    steps_per_policy: Option<usize>,
    rollouts_per_update: Option<usize>,
    stored_trajectories: Option<usize>,
    clip_eps: Option<f64>,
    ppo_epochs: Option<usize>,
    minibatch_size: Option<usize>,
    adam_beta1: Option<f64>,
    adam_beta2: Option<f64>,
    adam_eps: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelTable {
    bandwidth: Option<f64>,
    selector: Option<SelectorMode>,
    max_steps: Option<usize>,
    normalize: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct BatchTable {
    episodes: Option<usize>,
    exploration: Option<f64>,
    learning_rate: Option<f64>,
    iterations: Option<usize>,
    mode: Option<LikelihoodMode>,
    alpha: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    env: EnvTable,
    #[serde(default)]
    policy: PolicyTable,
    #[serde(default)]
    train: TrainTable,
    #[serde(default)]
    kernel: KernelTable,
    #[serde(default)]
    batch: BatchTable,
    n_policies: Option<usize>,
    eval_episodes: Option<usize>,
    alphas: Option<Vec<f64>>,
    seed: Option<u64>,
    out: Option<PathBuf>,
}

/// Settings for the batch (offline) pipeline.
#[derive(Debug, Clone)]
pub struct BatchSettings {
    /// Episodes generated by `batch generate`.
    pub episodes: usize,
    /// Uniform-exploration mixing weight of the behavior policy.
    pub exploration: f64,
    pub train: BatchTrainConfig,
    /// Weight of the batch diversity term during `batch train`.
    pub alpha: f64,
}

/// A fully resolved experiment: environment, architecture, training and
/// kernel settings, and run-level counts.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub hidden_sizes: Vec<usize>,
    pub train: TrainConfig,
    pub kernel: KernelConfig,
    pub batch: BatchSettings,
    pub n_policies: usize,
    pub eval_episodes: usize,
    pub alphas: Vec<f64>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;

        let env = EnvSpec {
            kind: raw.env.kind,
            horizon: raw.env.horizon,
            gamma: raw.env.gamma,
            start_noise_std: raw.env.start_noise_std,
            transition_noise_std: raw.env.transition_noise_std,
        };

        let mut train = TrainConfig::default();
        let t = &raw.train;
        if let Some(v) = t.algo {
            train.algo = v;
        }
        if let Some(v) = t.learning_rate {
            train.learning_rate = v;
        }
        if let Some(v) = t.gamma {
            train.gamma = v;
        }
        if let Some(v) = t.steps_per_policy {
            train.steps_per_policy = v;
        }
        if let Some(v) = t.rollouts_per_update {
            train.rollouts_per_update = v;
        }
        if let Some(v) = t.stored_trajectories {
            train.stored_trajectories = v;
        }
        if let Some(v) = t.clip_eps {
            train.clip_eps = v;
        }
        if let Some(v) = t.ppo_epochs {
            train.ppo_epochs = v;
        }
        if let Some(v) = t.minibatch_size {
            train.minibatch_size = v;
        }
        if let Some(v) = t.adam_beta1 {
            train.adam_beta1 = v;
        }
        if let Some(v) = t.adam_beta2 {
            train.adam_beta2 = v;
        }
        if let Some(v) = t.adam_eps {
            train.adam_eps = v;
        }
        train.seed = raw.seed.unwrap_or(0);

        let mut kernel = KernelConfig::default();
        if let Some(v) = raw.kernel.bandwidth {
            kernel.bandwidth = v;
        }
        if let Some(v) = raw.kernel.selector {
            kernel.selector = v;
        }
        if raw.kernel.max_steps.is_some() {
            kernel.max_steps = raw.kernel.max_steps;
        }
        if let Some(v) = raw.kernel.normalize {
            kernel.normalize = v;
        }

        let mut btrain = BatchTrainConfig::default();
        if let Some(v) = raw.batch.learning_rate {
            btrain.learning_rate = v;
        }
        if let Some(v) = raw.batch.iterations {
            btrain.iterations = v;
        }
        if let Some(v) = raw.batch.mode {
            btrain.mode = v;
        }
        btrain.seed = raw.seed.unwrap_or(0);
        let batch = BatchSettings {
            episodes: raw.batch.episodes.unwrap_or(270),
            exploration: raw.batch.exploration.unwrap_or(0.1),
            train: btrain,
            alpha: raw.batch.alpha.unwrap_or(0.0),
        };

        let cfg = ExperimentConfig {
            env,
            hidden_sizes: raw.policy.hidden_sizes.unwrap_or_else(|| vec![32]),
            train,
            kernel,
            batch,
            n_policies: raw.n_policies.unwrap_or(4),
            eval_episodes: raw.eval_episodes.unwrap_or(32),
            alphas: raw.alphas.unwrap_or_else(|| vec![1.0]),
            out: raw.out,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> CliResult<()> {
        let cfg_err = |e: dipg_core::Error| CliError::Config(e.to_string());
        make_env(&self.env).map_err(cfg_err)?;
        self.train.validate().map_err(cfg_err)?;
        self.kernel.validate().map_err(cfg_err)?;
        if self.hidden_sizes.iter().any(|&h| h == 0) {
            return Err(CliError::config("policy.hidden_sizes entries must be >= 1"));
        }
        if self.n_policies == 0 {
            return Err(CliError::config("n_policies must be >= 1"));
        }
        if self.eval_episodes == 0 {
            return Err(CliError::config("eval_episodes must be >= 1"));
        }
        if self.alphas.iter().any(|a| !a.is_finite()) {
            return Err(CliError::config("alphas must be finite"));
        }
        if self.batch.episodes == 0 {
            return Err(CliError::config("batch.episodes must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.batch.exploration) {
            return Err(CliError::config("batch.exploration must be in [0, 1)"));
        }
        if !(self.batch.train.learning_rate > 0.0) {
            return Err(CliError::config("batch.learning_rate must be > 0"));
        }
        if self.batch.train.iterations == 0 {
            return Err(CliError::config("batch.iterations must be >= 1"));
        }
        if !self.batch.alpha.is_finite() {
            return Err(CliError::config("batch.alpha must be finite"));
        }
        Ok(())
    }

    /// Apply the `--seed` override to every seeded sub-config.
    pub fn override_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        self.batch.train.seed = seed;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = ExperimentConfig::from_toml("[env]\nkind = \"multi_goal\"\n").unwrap();
        assert_eq!(cfg.hidden_sizes, vec![32]);
        assert_eq!(cfg.eval_episodes, 32);
        assert_eq!(cfg.n_policies, 4);
        assert_eq!(cfg.batch.episodes, 270);
        assert!(matches!(cfg.train.algo, Algo::Reinforce));
        assert_eq!(cfg.train.learning_rate, 3e-4);
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let err = ExperimentConfig::from_toml("[env]\nkind = \"cartpole\"\nbogus = 1\n")
            .unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn nested_invariant_violations_exit_2() {
        for text in [
            "[env]\nkind = \"cartpole\"\ngamma = 0.0\n",
            "[env]\nkind = \"cartpole\"\nhorizon = 0\n",
            "[env]\nkind = \"cartpole\"\n[train]\nlearning_rate = -1.0\n",
            "[env]\nkind = \"cartpole\"\n[train]\nclip_eps = 1.5\n",
            "[env]\nkind = \"cartpole\"\n[kernel]\nbandwidth = 0.0\n",
            "[env]\nkind = \"cartpole\"\n[policy]\nhidden_sizes = [0]\n",
            "[env]\nkind = \"cartpole\"\neval_episodes = 0\n",
            "[env]\nkind = \"cartpole\"\n[batch]\nexploration = 1.0\n",
        ] {
            let err = ExperimentConfig::from_toml(text).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}");
        }
    }

    #[test]
    fn seed_flows_into_subconfigs() {
        let mut cfg = ExperimentConfig::from_toml("seed = 9\n[env]\nkind = \"cartpole\"\n").unwrap();
        assert_eq!(cfg.train.seed, 9);
        assert_eq!(cfg.batch.train.seed, 9);
        cfg.override_seed(42);
        assert_eq!(cfg.train.seed, 42);
        assert_eq!(cfg.batch.train.seed, 42);
    }
}
