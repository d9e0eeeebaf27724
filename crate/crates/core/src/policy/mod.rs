//! Policy classes and the procedures that fit them to a complete task table.
//!
//! Every fit is deterministic and breaks ties toward the lowest action index.

mod logistic;
mod tree;

pub use logistic::LogisticFit;
pub use tree::{BoostedTreeParams, BoostedTrees, Node};

use serde::{Deserialize, Serialize};

use crate::domain::{RewardFn, TaskInstance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyClass {
    /// One action per context index; contexts are `[index as f64]`.
    Tabular { n_contexts: usize },
    Logistic {
        #[serde(default = "default_l2")]
        l2: f64,
    },
    Tree {
        #[serde(default)]
        params: BoostedTreeParams,
    },
}

fn default_l2() -> f64 {
    1.0
}

impl PolicyClass {
    pub fn logistic() -> Self {
        PolicyClass::Logistic { l2: default_l2() }
    }

    pub fn tree() -> Self {
        PolicyClass::Tree {
            params: BoostedTreeParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PolicyClass::Tabular { n_contexts } if *n_contexts == 0 => {
                Err(Error::Config("tabular policy needs at least one context".into()))
            }
            PolicyClass::Logistic { l2 } if !(*l2 >= 0.0) => Err(Error::Config("l2 penalty must be ≥ 0".into())),
            PolicyClass::Tree { params } => params.validate(),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitCriterion {
    /// Regress each arm's reward on the context, then take the argmax.
    #[default]
    PerArmRewardRegression,
    /// Minimize `Σ_t (max_a R(Y_t^{(a)}) − R(Y_t^{(π(X_t))}))²`. Tabular only.
    LeastSquaresVsMax,
}

/// A deterministic, time-invariant map from contexts to actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum Policy {
    Constant { action: usize },
    Tabular { actions: Vec<usize> },
    Logistic { arms: Vec<LogisticFit> },
    Tree { arms: Vec<BoostedTrees> },
}

/// Lowest index among the maxima.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Reads a tabular context `[index]`.
pub fn tabular_index(x: &[f64], n_contexts: usize) -> Result<usize> {
    match x {
        [v] if *v >= 0.0 && v.fract() == 0.0 && (*v as usize) < n_contexts => Ok(*v as usize),
        _ => Err(Error::Domain(format!("context {x:?} is not an index below {n_contexts}"))),
    }
}

impl Policy {
    pub fn act(&self, x: &[f64]) -> Result<usize> {
        Ok(match self {
            Policy::Constant { action } => *action,
            Policy::Tabular { actions } => actions[tabular_index(x, actions.len())?],
            Policy::Logistic { arms } => argmax(arms.iter().map(|f| f.score(x))),
            Policy::Tree { arms } => argmax(arms.iter().map(|f| f.predict(x))),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyFitter {
    pub class: PolicyClass,
    #[serde(default)]
    pub criterion: FitCriterion,
    #[serde(default)]
    pub reward: RewardFn,
}

impl PolicyFitter {
    pub fn new(class: PolicyClass, criterion: FitCriterion) -> Self {
        Self {
            class,
            criterion,
            reward: RewardFn::Identity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.class.validate()?;
        if self.criterion == FitCriterion::LeastSquaresVsMax && !matches!(self.class, PolicyClass::Tabular { .. }) {
            return Err(Error::Config(
                "the least-squares-vs-max criterion is only available for the tabular class".into(),
            ));
        }
        Ok(())
    }

    pub fn fit(&self, tau: &TaskInstance) -> Result<Policy> {
        fit_policy(tau, &self.class, self.criterion, &self.reward)
    }
}

/// Fits `π*(·; τ)` on the whole table.
pub fn fit_policy(tau: &TaskInstance, class: &PolicyClass, crit: FitCriterion, reward: &RewardFn) -> Result<Policy> {
    let n_actions = tau.n_actions();
    let rewards: Vec<Vec<f64>> = tau
        .outcomes()
        .iter()
        .map(|row| row.iter().map(|&y| reward.reward(y)).collect())
        .collect();
    let first = rewards[0][0];
    if rewards.iter().flatten().all(|&r| r == first) {
        return Ok(Policy::Constant { action: 0 });
    }
    match (class, crit) {
        (PolicyClass::Tabular { n_contexts }, crit) => {
            let n = *n_contexts;
            let idx = tau
                .contexts()
                .iter()
                .map(|x| tabular_index(x, n))
                .collect::<Result<Vec<_>>>()?;
            let mut actions = vec![0; n];
            for (c, slot) in actions.iter_mut().enumerate() {
                let rows: Vec<&Vec<f64>> = idx.iter().zip(&rewards).filter(|(i, _)| **i == c).map(|(_, r)| r).collect();
                if rows.is_empty() {
                    continue;
                }
                *slot = match crit {
                    FitCriterion::PerArmRewardRegression => {
                        argmax((0..n_actions).map(|a| rows.iter().map(|r| r[a]).sum::<f64>()))
                    }
                    FitCriterion::LeastSquaresVsMax => argmax((0..n_actions).map(|a| {
                        -rows
                            .iter()
                            .map(|r| {
                                let m = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                                (m - r[a]).powi(2)
                            })
                            .sum::<f64>()
                    })),
                };
            }
            Ok(Policy::Tabular { actions })
        }
        (_, FitCriterion::LeastSquaresVsMax) => Err(Error::Config(
            "the least-squares-vs-max criterion is only available for the tabular class".into(),
        )),
        (PolicyClass::Logistic { l2 }, _) => {
            let xs: Vec<&[f64]> = tau.contexts().iter().map(Vec::as_slice).collect();
            let arms = (0..n_actions)
                .map(|a| {
                    let ys: Vec<f64> = rewards.iter().map(|r| r[a]).collect();
                    LogisticFit::fit(&xs, &ys, *l2)
                })
                .collect();
            Ok(Policy::Logistic { arms })
        }
        (PolicyClass::Tree { params }, _) => {
            let xs: Vec<&[f64]> = tau.contexts().iter().map(Vec::as_slice).collect();
            let arms = (0..n_actions)
                .map(|a| {
                    let ys: Vec<f64> = rewards.iter().map(|r| r[a]).collect();
                    BoostedTrees::fit(&xs, &ys, params)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Policy::Tree { arms })
        }
    }
}

/// `(1/T) Σ_t R(Y_t^{(π(X_t))})`.
pub fn evaluate_policy(p: &Policy, tau: &TaskInstance, r: &RewardFn) -> Result<f64> {
    let mut total = 0.0;
    for t in 0..tau.horizon() {
        total += r.reward(tau.outcome(t, p.act(tau.context(t))?));
    }
    Ok(total / tau.horizon() as f64)
}
