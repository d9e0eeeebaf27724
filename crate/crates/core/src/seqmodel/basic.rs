use serde::{Deserialize, Serialize};

use super::SequenceModel;
use crate::env::{normalize_log_weights, DiscreteMixtureEnv};
use crate::error::{Error, Result};

/// The true predictive `p*` of a [`DiscreteMixtureEnv`].
#[derive(Debug, Clone)]
pub struct ExactMixtureModel {
    env: DiscreteMixtureEnv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureState {
    action: usize,
    log_w: Vec<f64>,
}

impl MixtureState {
    pub fn posterior(&self) -> Vec<f64> {
        normalize_log_weights(&self.log_w)
    }
}

impl ExactMixtureModel {
    pub fn new(env: DiscreteMixtureEnv) -> Self {
        Self { env }
    }

    pub fn env(&self) -> &DiscreteMixtureEnv {
        &self.env
    }
}

impl SequenceModel for ExactMixtureModel {
    type State = MixtureState;

    fn init_state(&self, action: usize, z: &[f64]) -> Result<MixtureState> {
        if action >= self.env.n_actions() {
            return Err(Error::Contract(format!("action {action} out of range")));
        }
        let k = self.env.category_index(z)?;
        Ok(MixtureState {
            action,
            log_w: self.env.prior_weights(k).iter().map(|w| w.ln()).collect(),
        })
    }

    fn predict(&self, state: &MixtureState, x: &[f64]) -> Result<f64> {
        let xi = self.env.context_index(x)?;
        Ok(state
            .posterior()
            .iter()
            .enumerate()
            .map(|(m, w)| w * self.env.theta(m, xi, state.action))
            .sum())
    }

    fn update_state(&self, state: &mut MixtureState, x: &[f64], y: f64) -> Result<()> {
        let xi = self.env.context_index(x)?;
        for (m, lw) in state.log_w.iter_mut().enumerate() {
            *lw += self.env.log_lik(m, xi, state.action, y);
        }
        Ok(())
    }
}

/// Context-blind exchangeable model with a Beta prior on the success rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaBernoulliModel {
    pub alpha0: f64,
    pub beta0: f64,
}

impl Default for BetaBernoulliModel {
    fn default() -> Self {
        Self {
            alpha0: 1.0,
            beta0: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaState {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaBernoulliModel {
    pub fn new(alpha0: f64, beta0: f64) -> Result<Self> {
        if !(alpha0 > 0.0 && beta0 > 0.0) {
            return Err(Error::Config("Beta pseudo-counts must be positive".into()));
        }
        Ok(Self { alpha0, beta0 })
    }
}

impl SequenceModel for BetaBernoulliModel {
    type State = BetaState;

    fn init_state(&self, _action: usize, _z: &[f64]) -> Result<BetaState> {
        Ok(BetaState {
            alpha: self.alpha0,
            beta: self.beta0,
        })
    }

    fn predict(&self, s: &BetaState, _x: &[f64]) -> Result<f64> {
        Ok(s.alpha / (s.alpha + s.beta))
    }

    fn update_state(&self, s: &mut BetaState, _x: &[f64], y: f64) -> Result<()> {
        s.alpha += y;
        s.beta += 1.0 - y;
        Ok(())
    }
}

/// Ignores everything and predicts a fixed probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantModel {
    pub p: f64,
}

impl SequenceModel for ConstantModel {
    type State = ();

    fn init_state(&self, _action: usize, _z: &[f64]) -> Result<()> {
        Ok(())
    }

    fn predict(&self, _s: &(), _x: &[f64]) -> Result<f64> {
        Ok(self.p)
    }

    fn update_state(&self, _s: &mut (), _x: &[f64], _y: f64) -> Result<()> {
        Ok(())
    }
}
