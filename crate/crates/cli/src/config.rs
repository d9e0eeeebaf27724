//! Experiment configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use genban::agents::AgentConfig;
use genban::env::{EnvConfig, Environment};
use genban::error::{Error, Result};
use genban::generation::ContextMode;
use genban::policy::{FitCriterion, PolicyClass, PolicyFitter};
use genban::training::TrainConfig;
use genban::RewardFn;

/// Which sequence model the model-based agents query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// A trained MLP file.
    Mlp { path: PathBuf },
    /// The true predictive of a discrete environment.
    Exact {},
    BetaBernoulli {
        #[serde(default = "one")]
        alpha0: f64,
        #[serde(default = "one")]
        beta0: f64,
    },
    Constant { p: f64 },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "one")]
    pub eps: f64,
    /// Divides the history count fed to the network; defaults to the horizon.
    pub count_norm: Option<f64>,
    /// Logged actions in the training pool.
    pub train_entries: usize,
    pub val_entries: usize,
    /// `(x, y)` pairs logged per action.
    pub entry_len: usize,
    #[serde(default)]
    pub optim: TrainConfig,
}

fn default_hidden() -> Vec<usize> {
    vec![100, 100, 100]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvConfig,
    #[serde(default)]
    pub agents: Vec<AgentConfig>,
    /// Overrides the environment's horizon.
    pub horizon: Option<usize>,
    #[serde(default = "default_n_tasks")]
    pub n_tasks: usize,
    #[serde(default)]
    pub seed: u64,
    /// Overrides the context mode of every TS-Gen agent.
    pub context_mode: Option<ContextMode>,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    pub model: Option<ModelSpec>,
    /// Fits the oracle policy on true tables. Defaults to the first TS-Gen
    /// agent's fitter, else tabular on discrete environments and logistic
    /// otherwise.
    pub oracle_fitter: Option<PolicyFitter>,
    #[serde(default)]
    pub reward: RewardFn,
    pub train: Option<TrainSection>,
}

fn default_n_tasks() -> usize {
    100
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path)?;
        let cfg = Self::from_json(&text)?;
        let hash = cfg.hash()?;
        Ok((cfg, hash))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_tasks == 0 {
            return Err(Error::Config("n_tasks must be at least 1".into()));
        }
        if self.horizon == Some(0) {
            return Err(Error::Config("horizon must be positive".into()));
        }
        for a in &self.agents {
            a.validate()?;
        }
        if let Some(f) = &self.oracle_fitter {
            f.validate()?;
        }
        if let Some(t) = &self.train {
            t.optim.validate()?;
            if t.train_entries == 0 || t.val_entries == 0 {
                return Err(Error::Config("training and validation pools must be non-empty".into()));
            }
            if t.entry_len < t.optim.seq_len {
                return Err(Error::Config(format!(
                    "entry_len {} is shorter than seq_len {}",
                    t.entry_len, t.optim.seq_len
                )));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, so formatting does not matter.
    pub fn hash(&self) -> Result<String> {
        let canon = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&canon)))
    }

    pub fn environment(&self) -> Result<Environment> {
        let env = Environment::from_config(self.environment.clone())?;
        match self.horizon {
            Some(h) => env.with_horizon(h),
            None => Ok(env),
        }
    }

    /// Agents with the global context mode applied.
    pub fn agents(&self) -> Vec<AgentConfig> {
        self.agents
            .iter()
            .map(|a| match (a, self.context_mode) {
                (AgentConfig::TsGen { policy, .. }, Some(mode)) => AgentConfig::TsGen {
                    policy: policy.clone(),
                    contexts: mode,
                },
                _ => a.clone(),
            })
            .collect()
    }

    pub fn oracle_fitter(&self, env: &Environment) -> PolicyFitter {
        if let Some(f) = &self.oracle_fitter {
            return f.clone();
        }
        for a in &self.agents {
            if let AgentConfig::TsGen { policy, .. } = a {
                return policy.clone();
            }
        }
        match env.as_discrete() {
            Some(d) => PolicyFitter::new(
                PolicyClass::Tabular {
                    n_contexts: d.n_contexts(),
                },
                FitCriterion::default(),
            ),
            None => PolicyFitter::new(PolicyClass::logistic(), FitCriterion::default()),
        }
    }
}

/// Written into every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

impl Provenance {
    pub fn new(config_hash: impl Into<String>, seed: u64) -> Self {
        Self {
            config_hash: config_hash.into(),
            seed,
            version: env!("CARGO_PKG_VERSION").to_owned(),
        }
    }

    /// `# config_hash=…,seed=…,version=…`, the first line of every CSV.
    pub fn csv_comment(&self) -> String {
        format!("# config_hash={},seed={},version={}", self.config_hash, self.seed, self.version)
    }
}
