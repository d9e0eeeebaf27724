//! Exactly solvable latent-mixture environment.
//!
//! Each action draws a latent index `m_a` (independently across actions);
//! given `m_a`, the pairs `(X_t, Y_t^{(a)})` are i.i.d. with a uniform
//! context over a finite set and `Y ~ Bernoulli(theta[m_a][x][a])`. The
//! prior information `Z^{(a)}` is a category index that selects the mixture
//! weights `m_a` is drawn from, so it can be made informative.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ArmDraw;
use crate::domain::{Context, PriorInfo, TaskInstance};
use crate::error::{Error, Result};
use crate::rng::RngStream;

pub const THETA_MIN: f64 = 0.01;
pub const THETA_MAX: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteMixtureConfig {
    pub n_contexts: usize,
    pub horizon: usize,
    /// `theta[m][x][a]`
    pub theta: Vec<Vec<Vec<f64>>>,
    /// Mixture weights over `m`, one row per prior-info category.
    pub weights: Vec<Vec<f64>>,
    /// Distribution of the prior-info category of each action.
    #[serde(default = "single_category")]
    pub category_probs: Vec<f64>,
}

fn single_category() -> Vec<f64> {
    vec![1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DiscreteMixtureConfig", into = "DiscreteMixtureConfig")]
pub struct DiscreteMixtureEnv {
    n_contexts: usize,
    n_actions: usize,
    horizon: usize,
    theta: Vec<Vec<Vec<f64>>>,
    weights: Vec<Vec<f64>>,
    category_probs: Vec<f64>,
}

fn normalized(w: &[f64], what: &str) -> Result<Vec<f64>> {
    if w.is_empty() || w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::Config(format!("{what} must be non-negative and finite")));
    }
    let s: f64 = w.iter().sum();
    if !(s > 0.0) {
        return Err(Error::Config(format!("{what} must have positive mass")));
    }
    Ok(w.iter().map(|v| v / s).collect())
}

impl TryFrom<DiscreteMixtureConfig> for DiscreteMixtureEnv {
    type Error = Error;

    fn try_from(c: DiscreteMixtureConfig) -> Result<Self> {
        if c.horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if c.n_contexts == 0 {
            return Err(Error::Config("need at least one context".into()));
        }
        let n_mix = c.theta.len();
        if n_mix == 0 {
            return Err(Error::Config("need at least one mixture component".into()));
        }
        let n_actions = c.theta[0].first().map_or(0, Vec::len);
        if n_actions == 0 {
            return Err(Error::Config("need at least one action".into()));
        }
        let mut theta = c.theta;
        for comp in &mut theta {
            if comp.len() != c.n_contexts {
                return Err(Error::Config(format!(
                    "theta component has {} context rows, expected {}",
                    comp.len(),
                    c.n_contexts
                )));
            }
            for row in comp.iter_mut() {
                if row.len() != n_actions {
                    return Err(Error::Config("theta rows must share the action count".into()));
                }
                for p in row.iter_mut() {
                    if !p.is_finite() {
                        return Err(Error::Config("theta must be finite".into()));
                    }
                    *p = p.clamp(THETA_MIN, THETA_MAX);
                }
            }
        }
        let category_probs = normalized(&c.category_probs, "category_probs")?;
        if c.weights.len() != category_probs.len() {
            return Err(Error::Config(format!(
                "{} weight rows for {} categories",
                c.weights.len(),
                category_probs.len()
            )));
        }
        let weights = c
            .weights
            .iter()
            .map(|w| {
                if w.len() != n_mix {
                    return Err(Error::Config(format!(
                        "weight row has {} entries for {} components",
                        w.len(),
                        n_mix
                    )));
                }
                normalized(w, "mixture weights")
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n_contexts: c.n_contexts,
            n_actions,
            horizon: c.horizon,
            theta,
            weights,
            category_probs,
        })
    }
}

impl From<DiscreteMixtureEnv> for DiscreteMixtureConfig {
    fn from(e: DiscreteMixtureEnv) -> Self {
        Self {
            n_contexts: e.n_contexts,
            horizon: e.horizon,
            theta: e.theta,
            weights: e.weights,
            category_probs: e.category_probs,
        }
    }
}

impl DiscreteMixtureEnv {
    /// Environment whose prior information carries no signal.
    pub fn new(n_contexts: usize, horizon: usize, weights: Vec<f64>, theta: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        DiscreteMixtureConfig {
            n_contexts,
            horizon,
            theta,
            weights: vec![weights],
            category_probs: single_category(),
        }
        .try_into()
    }

    /// Environment whose prior-info category selects the mixture weights.
    pub fn with_categories(
        n_contexts: usize,
        horizon: usize,
        category_probs: Vec<f64>,
        weights: Vec<Vec<f64>>,
        theta: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        DiscreteMixtureConfig {
            n_contexts,
            horizon,
            theta,
            weights,
            category_probs,
        }
        .try_into()
    }

    /// The reference small environment: two contexts, two actions and two
    /// latent components with equal weight, where the better action flips
    /// with both the context and the component.
    pub fn oracle(horizon: usize) -> Result<Self> {
        Self::new(
            2,
            horizon,
            vec![0.5, 0.5],
            vec![vec![vec![0.8, 0.3], vec![0.2, 0.6]], vec![vec![0.3, 0.7], vec![0.7, 0.25]]],
        )
    }

    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        Ok(Self {
            horizon,
            ..self.clone()
        })
    }

    pub fn n_contexts(&self) -> usize {
        self.n_contexts
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_components(&self) -> usize {
        self.theta.len()
    }

    pub fn n_categories(&self) -> usize {
        self.category_probs.len()
    }

    pub fn category_probs(&self) -> &[f64] {
        &self.category_probs
    }

    pub fn theta(&self, m: usize, x: usize, a: usize) -> f64 {
        self.theta[m][x][a]
    }

    /// Mixture weights for a prior-info category.
    pub fn prior_weights(&self, category: usize) -> &[f64] {
        &self.weights[category]
    }

    /// Mixture weights with the category marginalized out.
    pub fn marginal_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.n_components()];
        for (pc, row) in self.category_probs.iter().zip(&self.weights) {
            for (wm, r) in w.iter_mut().zip(row) {
                *wm += pc * r;
            }
        }
        w
    }

    /// The context encoding: a single coordinate holding the index.
    pub fn encode_context(x: usize) -> Context {
        vec![x as f64]
    }

    pub fn context_index(&self, x: &[f64]) -> Result<usize> {
        match x {
            [v] if v.fract() == 0.0 && *v >= 0.0 && (*v as usize) < self.n_contexts => Ok(*v as usize),
            _ => Err(Error::Domain(format!(
                "context {x:?} is not one of the {} discrete contexts",
                self.n_contexts
            ))),
        }
    }

    pub fn category_index(&self, z: &[f64]) -> Result<usize> {
        match z {
            [v] if v.fract() == 0.0 && *v >= 0.0 && (*v as usize) < self.n_categories() => Ok(*v as usize),
            _ => Err(Error::Domain(format!(
                "prior info {z:?} is not one of the {} categories",
                self.n_categories()
            ))),
        }
    }

    pub fn sample_context(&self, rng: &mut RngStream) -> Context {
        Self::encode_context(rng.gen_range(0..self.n_contexts))
    }

    pub fn sample_task(&self, rng: &mut RngStream) -> Result<TaskInstance> {
        let cat_dist = WeightedIndex::new(&self.category_probs).map_err(|e| Error::Config(e.to_string()))?;
        let categories: Vec<usize> = (0..self.n_actions).map(|_| cat_dist.sample(rng)).collect();
        let latents: Vec<usize> = categories
            .iter()
            .map(|&k| {
                WeightedIndex::new(&self.weights[k])
                    .map(|d| d.sample(rng))
                    .map_err(|e| Error::Config(e.to_string()))
            })
            .collect::<Result<_>>()?;
        let mut contexts = Vec::with_capacity(self.horizon);
        let mut outcomes = Vec::with_capacity(self.horizon);
        for _ in 0..self.horizon {
            let x = rng.gen_range(0..self.n_contexts);
            let row = (0..self.n_actions)
                .map(|a| {
                    if rng.gen_bool(self.theta[latents[a]][x][a]) {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect();
            contexts.push(Self::encode_context(x));
            outcomes.push(row);
        }
        let prior = PriorInfo::new(categories.iter().map(|&k| vec![k as f64]).collect())?;
        TaskInstance::new(prior, contexts, outcomes)
    }

    /// One action's prior info and `len` i.i.d. `(x, y)` pairs, as logged
    /// by a uniformly random historical policy.
    pub fn sample_arm_sequence(&self, a: usize, len: usize, rng: &mut RngStream) -> Result<ArmDraw> {
        if a >= self.n_actions {
            return Err(Error::Domain(format!("action {a} out of range")));
        }
        let cat = WeightedIndex::new(&self.category_probs)
            .map_err(|e| Error::Config(e.to_string()))?
            .sample(rng);
        let m = WeightedIndex::new(&self.weights[cat])
            .map_err(|e| Error::Config(e.to_string()))?
            .sample(rng);
        let mut xs = Vec::with_capacity(len);
        let mut ys = Vec::with_capacity(len);
        for _ in 0..len {
            let x = rng.gen_range(0..self.n_contexts);
            ys.push(if rng.gen_bool(self.theta[m][x][a]) { 1.0 } else { 0.0 });
            xs.push(Self::encode_context(x));
        }
        Ok(ArmDraw {
            z: vec![cat as f64],
            contexts: xs,
            outcomes: ys,
        })
    }

    /// Log-likelihood of a single observation under component `m`.
    pub fn log_lik(&self, m: usize, x: usize, a: usize, y: f64) -> f64 {
        let p = self.theta[m][x][a];
        y * p.ln() + (1.0 - y) * (1.0 - p).ln()
    }

    /// Normalized posterior over the latent index given one arm's history.
    pub fn posterior_weights(&self, a: usize, z: &[f64], arm_history: &[(Context, f64)]) -> Result<Vec<f64>> {
        let k = self.category_index(z)?;
        let mut logw: Vec<f64> = self.weights[k].iter().map(|w| w.ln()).collect();
        for (x, y) in arm_history {
            let xi = self.context_index(x)?;
            for (m, lw) in logw.iter_mut().enumerate() {
                *lw += self.log_lik(m, xi, a, *y);
            }
        }
        Ok(normalize_log_weights(&logw))
    }

    /// `p*(Y = 1 | Z, arm history, x_now)`, exact up to round-off.
    pub fn exact_predictive(&self, a: usize, z: &[f64], arm_history: &[(Context, f64)], x_now: &[f64]) -> Result<f64> {
        let x = self.context_index(x_now)?;
        let w = self.posterior_weights(a, z, arm_history)?;
        Ok(w.iter().enumerate().map(|(m, wm)| wm * self.theta[m][x][a]).sum())
    }
}

/// Softmax of log weights; components at `-inf` get zero mass.
pub fn normalize_log_weights(logw: &[f64]) -> Vec<f64> {
    let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}
