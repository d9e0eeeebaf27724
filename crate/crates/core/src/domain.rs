//! Shared domain types: tasks, histories and rewards.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Context vector `X_t`.
pub type Context = Vec<f64>;

/// Task-level prior information: one feature vector per action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorInfo {
    per_action: Vec<Vec<f64>>,
}

impl PriorInfo {
    pub fn new(per_action: Vec<Vec<f64>>) -> Result<Self> {
        if per_action.is_empty() {
            return Err(Error::Config("prior info needs at least one action".into()));
        }
        let dim = per_action[0].len();
        for z in &per_action {
            if z.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: z.len(),
                });
            }
        }
        Ok(Self { per_action })
    }

    pub fn n_actions(&self) -> usize {
        self.per_action.len()
    }

    pub fn dim(&self) -> usize {
        self.per_action[0].len()
    }

    pub fn action(&self, a: usize) -> &[f64] {
        &self.per_action[a]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.per_action.iter().map(Vec::as_slice)
    }
}

/// One bandit task: prior info, the context sequence and the complete
/// potential-outcome table (`outcomes[t][a]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    prior_info: PriorInfo,
    contexts: Vec<Context>,
    outcomes: Vec<Vec<f64>>,
}

impl TaskInstance {
    pub fn new(prior_info: PriorInfo, contexts: Vec<Context>, outcomes: Vec<Vec<f64>>) -> Result<Self> {
        if contexts.is_empty() {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if contexts.len() != outcomes.len() {
            return Err(Error::DimensionMismatch {
                expected: contexts.len(),
                actual: outcomes.len(),
            });
        }
        let d_x = contexts[0].len();
        let n_actions = prior_info.n_actions();
        for (x, row) in contexts.iter().zip(&outcomes) {
            if x.len() != d_x {
                return Err(Error::DimensionMismatch {
                    expected: d_x,
                    actual: x.len(),
                });
            }
            if row.len() != n_actions {
                return Err(Error::Contract(format!(
                    "outcome row has {} entries for {} actions",
                    row.len(),
                    n_actions
                )));
            }
        }
        Ok(Self {
            prior_info,
            contexts,
            outcomes,
        })
    }

    pub fn prior_info(&self) -> &PriorInfo {
        &self.prior_info
    }

    pub fn horizon(&self) -> usize {
        self.contexts.len()
    }

    pub fn n_actions(&self) -> usize {
        self.prior_info.n_actions()
    }

    pub fn context_dim(&self) -> usize {
        self.contexts[0].len()
    }

    pub fn contexts(&self) -> &[Context] {
        &self.contexts
    }

    pub fn context(&self, t: usize) -> &[f64] {
        &self.contexts[t]
    }

    pub fn outcome(&self, t: usize, a: usize) -> f64 {
        self.outcomes[t][a]
    }

    pub fn outcomes(&self) -> &[Vec<f64>] {
        &self.outcomes
    }

    /// Outcome column `Y_{1:T}^{(a)}`.
    pub fn arm_outcomes(&self, a: usize) -> Vec<f64> {
        self.outcomes.iter().map(|row| row[a]).collect()
    }
}

/// Maps outcomes to rewards in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RewardFn {
    /// `R(y) = y`, clamped into `[0, 1]` for outcomes outside that range.
    #[default]
    Identity,
    /// `R(y) = clamp(scale * y + offset, 0, 1)`.
    Affine { scale: f64, offset: f64 },
}

impl RewardFn {
    pub fn reward(&self, y: f64) -> f64 {
        let r = match *self {
            RewardFn::Identity => y,
            RewardFn::Affine { scale, offset } => scale * y + offset,
        };
        r.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub context: Context,
    pub action: usize,
    pub outcome: f64,
}

/// The agent's observation record `H_t`. Only the outcome of the action
/// actually taken is ever stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    prior_info: PriorInfo,
    steps: Vec<Step>,
    current_context: Option<Context>,
}

impl History {
    pub fn new(prior_info: PriorInfo) -> Self {
        Self {
            prior_info,
            steps: Vec::new(),
            current_context: None,
        }
    }

    pub fn prior_info(&self) -> &PriorInfo {
        &self.prior_info
    }

    pub fn n_actions(&self) -> usize {
        self.prior_info.n_actions()
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    /// Number of completed steps, i.e. the 0-based index of the current timestep.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn current_context(&self) -> Option<&[f64]> {
        self.current_context.as_deref()
    }

    pub fn observe_context(&mut self, x: Context) -> Result<()> {
        if self.current_context.is_some() {
            return Err(Error::Contract(
                "a context is already pending; append a step first".into(),
            ));
        }
        if let Some(prev) = self.steps.first() {
            if prev.context.len() != x.len() {
                return Err(Error::DimensionMismatch {
                    expected: prev.context.len(),
                    actual: x.len(),
                });
            }
        }
        self.current_context = Some(x);
        Ok(())
    }

    /// Records `(x, a, y)` for the pending context and clears it.
    pub fn append_step(&mut self, x: &[f64], a: usize, y: f64) -> Result<()> {
        match &self.current_context {
            Some(cur) if cur.as_slice() == x => {}
            Some(_) => {
                return Err(Error::Contract(
                    "appended context differs from the observed context".into(),
                ))
            }
            None => return Err(Error::Contract("no context has been observed".into())),
        }
        if a >= self.n_actions() {
            return Err(Error::Contract(format!(
                "action {a} out of range for {} actions",
                self.n_actions()
            )));
        }
        self.steps.push(Step {
            context: self.current_context.take().unwrap(),
            action: a,
            outcome: y,
        });
        Ok(())
    }

    /// `(timestep, context, outcome)` for every step where `a` was taken.
    pub fn arm_observations(&self, a: usize) -> impl Iterator<Item = (usize, &[f64], f64)> {
        self.steps
            .iter()
            .enumerate()
            .filter(move |(_, s)| s.action == a)
            .map(|(t, s)| (t, s.context.as_slice(), s.outcome))
    }

    /// Canonical byte layout: every field written as a little-endian f64 in
    /// field order. Counts and action indices are written as f64 too.
    ///
    /// `n_actions, d_z, Z^(0).., Z^(A-1).., n_steps, (x.., a, y) per step,
    /// has_current, current x..`
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let mut put = |v: f64| out.extend_from_slice(&v.to_le_bytes());
        put(self.n_actions() as f64);
        put(self.prior_info.dim() as f64);
        for z in self.prior_info.iter() {
            z.iter().for_each(|&v| put(v));
        }
        put(self.steps.len() as f64);
        for s in &self.steps {
            s.context.iter().for_each(|&v| put(v));
            put(s.action as f64);
            put(s.outcome);
        }
        match &self.current_context {
            Some(x) => {
                put(1.0);
                x.iter().for_each(|&v| put(v));
            }
            None => put(0.0),
        }
        out
    }

    /// Hex SHA-256 of [`History::to_bytes`].
    pub fn hash_hex(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    use crate::rng::RngStream;

    fn prior(n: usize) -> PriorInfo {
        PriorInfo::new((0..n).map(|a| vec![a as f64, 1.0]).collect()).unwrap()
    }

    #[test]
    fn identity_reward() {
        let r = RewardFn::Identity;
        assert_eq!(r.reward(1.0), 1.0);
        assert_eq!(r.reward(0.0), 0.0);
        assert_eq!(r.reward(0.25), 0.25);
        assert_eq!(r.reward(3.0), 1.0);
        assert_eq!(RewardFn::Affine { scale: 2.0, offset: -0.5 }.reward(0.5), 0.5);
    }

    #[test]
    fn identity_reward_mean_over_fair_coin() {
        let mut rng = RngStream::new(0, 0, "reward");
        let n = 100_000;
        let mean = (0..n)
            .map(|_| RewardFn::Identity.reward(if rng.gen_bool(0.5) { 1.0 } else { 0.0 }))
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn append_grows_history_and_keeps_prefix() {
        let mut h = History::new(prior(3));
        h.observe_context(vec![0.5]).unwrap();
        h.append_step(&[0.5], 2, 1.0).unwrap();
        assert_eq!(h.len(), 1);
        assert!(h.current_context().is_none());
        let prefix = h.steps().to_vec();
        h.observe_context(vec![0.1]).unwrap();
        h.append_step(&[0.1], 0, 0.0).unwrap();
        assert_eq!(h.len(), 2);
        assert_eq!(&h.steps()[..1], prefix.as_slice());
    }

    #[test]
    fn append_rejects_context_mismatch() {
        let mut h = History::new(prior(2));
        assert!(matches!(h.append_step(&[1.0], 0, 1.0), Err(Error::Contract(_))));
        h.observe_context(vec![1.0]).unwrap();
        assert!(matches!(h.append_step(&[2.0], 0, 1.0), Err(Error::Contract(_))));
        assert!(matches!(h.append_step(&[1.0], 5, 1.0), Err(Error::Contract(_))));
        assert!(h.observe_context(vec![1.0]).is_err());
    }

    #[test]
    fn arm_observations_only_show_taken_actions() {
        let mut h = History::new(prior(2));
        for (t, a) in [0usize, 1, 1, 0].iter().enumerate() {
            h.observe_context(vec![t as f64]).unwrap();
            h.append_step(&[t as f64], *a, 1.0).unwrap();
        }
        let ts: Vec<usize> = h.arm_observations(1).map(|(t, _, _)| t).collect();
        assert_eq!(ts, vec![1, 2]);
    }

    #[test]
    fn replay_reconstructs_history_hash() {
        let mut rng = RngStream::new(5, 0, "episode");
        let mut h = History::new(prior(4));
        for _ in 0..500 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen::<f64>()).collect();
            h.observe_context(x.clone()).unwrap();
            let a = rng.gen_range(0..4);
            h.append_step(&x, a, if rng.gen_bool(0.3) { 1.0 } else { 0.0 }).unwrap();
        }
        let recorded = serde_json::to_string(h.steps()).unwrap();
        let steps: Vec<Step> = serde_json::from_str(&recorded).unwrap();
        let mut replay = History::new(prior(4));
        for s in steps {
            replay.observe_context(s.context.clone()).unwrap();
            replay.append_step(&s.context, s.action, s.outcome).unwrap();
        }
        assert_eq!(replay.hash_hex(), h.hash_hex());
        assert_eq!(replay.to_bytes().len(), (2 + 8 + 1 + 500 * 5 + 1) * 8);
    }

    #[test]
    fn task_rejects_incomplete_tables() {
        let z = prior(2);
        assert!(TaskInstance::new(z.clone(), vec![vec![0.0]; 2], vec![vec![0.0, 1.0]]).is_err());
        assert!(TaskInstance::new(z.clone(), vec![vec![0.0]; 2], vec![vec![0.0, 1.0], vec![1.0]]).is_err());
        assert!(TaskInstance::new(z, vec![], vec![]).is_err());
    }
}
