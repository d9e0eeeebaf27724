//! Task generators: draws of `τ ~ p*`.

mod discrete;
mod logistic;

use serde::{Deserialize, Serialize};

pub use discrete::{normalize_log_weights, DiscreteMixtureConfig, DiscreteMixtureEnv, THETA_MAX, THETA_MIN};
pub use logistic::{
    surrogate_x_features, surrogate_z_features, FeatureMap, GaussianPrior, LogisticArm, LogisticDgp,
    SurrogateDgpConfig, SyntheticDgpConfig,
};

use crate::domain::{Context, TaskInstance};
use crate::error::Result;
use crate::rng::RngStream;

/// `σ(w) = 1 / (1 + e^{-w})`, evaluated without overflow for large |w|.
pub fn logistic_fn(w: f64) -> f64 {
    if w >= 0.0 {
        1.0 / (1.0 + (-w).exp())
    } else {
        let e = w.exp();
        e / (1.0 + e)
    }
}

/// The context law `X_t ~ p(X)`, assumed known to the agent.
pub trait ContextLaw: Send + Sync {
    fn sample_context(&self, rng: &mut RngStream) -> Context;
}

impl ContextLaw for DiscreteMixtureEnv {
    fn sample_context(&self, rng: &mut RngStream) -> Context {
        DiscreteMixtureEnv::sample_context(self, rng)
    }
}

impl ContextLaw for LogisticDgp {
    fn sample_context(&self, rng: &mut RngStream) -> Context {
        LogisticDgp::sample_context(self, rng)
    }
}

/// One action's prior info with a logged sequence of its `(x, y)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmDraw {
    pub z: Vec<f64>,
    pub contexts: Vec<Context>,
    pub outcomes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EnvConfig {
    Synthetic(SyntheticDgpConfig),
    Surrogate(SurrogateDgpConfig),
    Discrete(DiscreteMixtureConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Environment {
    Logistic(LogisticDgp),
    Discrete(DiscreteMixtureEnv),
}

impl Environment {
    pub fn from_config(cfg: EnvConfig) -> Result<Self> {
        Ok(match cfg {
            EnvConfig::Synthetic(c) => Environment::Logistic(LogisticDgp::synthetic(c)?),
            EnvConfig::Surrogate(c) => Environment::Logistic(LogisticDgp::surrogate(c)?),
            EnvConfig::Discrete(c) => Environment::Discrete(c.try_into()?),
        })
    }

    pub fn sample_task(&self, rng: &mut RngStream) -> Result<TaskInstance> {
        match self {
            Environment::Logistic(d) => d.sample_task(rng),
            Environment::Discrete(d) => d.sample_task(rng),
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            Environment::Logistic(d) => d.config().horizon,
            Environment::Discrete(d) => d.horizon(),
        }
    }

    pub fn n_actions(&self) -> usize {
        match self {
            Environment::Logistic(d) => d.config().n_actions,
            Environment::Discrete(d) => d.n_actions(),
        }
    }

    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        Ok(match self {
            Environment::Logistic(d) => Environment::Logistic(d.with_horizon(horizon)?),
            Environment::Discrete(d) => Environment::Discrete(d.with_horizon(horizon)?),
        })
    }

    pub fn z_dim(&self) -> usize {
        match self {
            Environment::Logistic(d) => d.z_dim(),
            Environment::Discrete(_) => 1,
        }
    }

    pub fn x_dim(&self) -> usize {
        match self {
            Environment::Logistic(d) => d.x_dim(),
            Environment::Discrete(_) => 1,
        }
    }

    /// Draws the prior info of action `a` and `len` logged pairs for it.
    pub fn sample_arm_sequence(&self, a: usize, len: usize, rng: &mut RngStream) -> Result<ArmDraw> {
        match self {
            Environment::Logistic(d) => Ok(d.sample_arm_sequence(len, rng)),
            Environment::Discrete(d) => d.sample_arm_sequence(a, len, rng),
        }
    }

    pub fn as_discrete(&self) -> Option<&DiscreteMixtureEnv> {
        match self {
            Environment::Discrete(d) => Some(d),
            _ => None,
        }
    }
}

impl ContextLaw for Environment {
    fn sample_context(&self, rng: &mut RngStream) -> Context {
        match self {
            Environment::Logistic(d) => d.sample_context(rng),
            Environment::Discrete(d) => d.sample_context(rng),
        }
    }
}
