//! Experiment configuration files.
//!
//! Configs are TOML: top-level run settings, an `[env]` table, a `[fed]`
//! table and one `[[agents]]` table per agent. See `configs/` for examples.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentConfig, ModelConfig};
use crate::env::{EnvConfig, EnvKind};
use crate::federation::FedConfig;
use crate::neural::Activation;

fn default_eval_episodes() -> usize {
    10
}
fn default_timeout_secs() -> f64 {
    30.0
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Environment interactions each agent may consume.
    pub budget_per_agent: u64,
    /// Default length of a self-learning phase.
    pub self_learn_steps: u64,
    /// Agent interactions between evaluation checkpoints (0 disables).
    pub eval_every: u64,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Per-exchange reply deadline in seconds.
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    pub env: EnvConfig,
    #[serde(default)]
    pub fed: FedConfig,
    pub agents: Vec<AgentConfig>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("serialize error: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("invalid config:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    /// Every violated constraint, in a stable order.
    pub fn violations(&self) -> Vec<String> {
        let mut out = self.env.violations();
        out.extend(self.fed.violations());
        if self.agents.is_empty() {
            out.push("at least one [[agents]] entry is required".into());
        }
        if self.agents.len() > u16::MAX as usize {
            out.push("too many agents for 16-bit agent ids".into());
        }
        for agent in &self.agents {
            out.extend(agent.violations());
            if matches!(agent.model, ModelConfig::Tabular { .. }) && self.env.kind != EnvKind::ChainMdp {
                out.push(format!(
                    "agent '{}': tabular agents need a one-hot (chain_mdp) environment",
                    agent.name
                ));
            }
        }
        if self.seeds.is_empty() {
            out.push("seeds must not be empty".into());
        }
        if self.budget_per_agent == 0 {
            out.push("budget_per_agent must be >= 1".into());
        }
        if self.self_learn_steps == 0 {
            out.push("self_learn_steps must be >= 1".into());
        }
        if !(self.timeout_secs > 0.0) {
            out.push("timeout_secs must be > 0".into());
        }
        if self.eval_every > 0 && self.eval_episodes == 0 {
            out.push("eval_episodes must be >= 1 when eval_every > 0".into());
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(v))
        }
    }

    /// Value bound used by the theoretical score: `fed.b` or the
    /// environment's discounted-return bound.
    pub fn value_bound(&self) -> f64 {
        self.fed.b.unwrap_or_else(|| self.env.value_bound())
    }

    /// The five heterogeneous CartPole agents (network, learning rate,
    /// exploration) used for the welfare experiments.
    pub fn table1_agents() -> Vec<AgentConfig> {
        use Activation::{Relu, Tanh};
        vec![
            AgentConfig::network("agent1", &[64, 64], Tanh, 0.005, 0.01),
            AgentConfig::network("agent2", &[128, 128], Relu, 0.01, 0.1),
            AgentConfig::network("agent3", &[32, 32], Tanh, 0.01, 0.05),
            AgentConfig::network("agent4", &[16, 16], Relu, 0.02, 0.01),
            AgentConfig::network("agent5", &[8, 8, 8], Relu, 0.001, 0.01),
        ]
    }

    /// The ten-agent variant.
    pub fn table2_agents() -> Vec<AgentConfig> {
        use Activation::{Relu, Tanh};
        vec![
            AgentConfig::network("agent1", &[64, 64], Relu, 0.01, 0.01),
            AgentConfig::network("agent2", &[128, 128], Relu, 0.1, 0.1),
            AgentConfig::network("agent3", &[32, 32], Tanh, 0.01, 0.05),
            AgentConfig::network("agent4", &[16, 16], Relu, 0.01, 0.01),
            AgentConfig::network("agent5", &[8, 8, 8], Relu, 0.01, 0.01),
            AgentConfig::network("agent6", &[64, 64], Tanh, 0.02, 0.01),
            AgentConfig::network("agent7", &[128, 128], Relu, 0.02, 0.1),
            AgentConfig::network("agent8", &[32, 32], Relu, 0.02, 0.05),
            AgentConfig::network("agent9", &[16, 16], Tanh, 0.05, 0.01),
            AgentConfig::network("agent10", &[8, 8, 8], Tanh, 0.05, 0.01),
        ]
    }
}
