//! Posterior sampling by autoregressive generation.
//!
//! For every action the observed timesteps are replayed first (in time
//! order) to build the model's in-context state, then the missing outcomes
//! are drawn one at a time in time order, each draw conditioning on
//! everything before it in that order.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::domain::{Context, History, TaskInstance};
use crate::env::ContextLaw;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::seqmodel::SequenceModel;

/// How the contexts of the imputed table are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextMode {
    /// The whole context sequence is known up front and reused.
    #[default]
    Fixed,
    /// Future contexts are drawn afresh from the known context law.
    Resampled,
}

pub enum ContextPlan<'a> {
    Fixed(&'a [Context]),
    Resampled { law: &'a dyn ContextLaw, horizon: usize },
}

impl ContextPlan<'_> {
    pub fn horizon(&self) -> usize {
        match self {
            ContextPlan::Fixed(xs) => xs.len(),
            ContextPlan::Resampled { horizon, .. } => *horizon,
        }
    }
}

/// Which `(t, a)` outcomes are present in a history.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissingnessMask {
    observed: Vec<Vec<bool>>,
}

impl MissingnessMask {
    pub fn from_history(h: &History, horizon: usize) -> Result<Self> {
        if h.len() > horizon {
            return Err(Error::Contract(format!(
                "history of length {} exceeds horizon {horizon}",
                h.len()
            )));
        }
        let mut observed = vec![vec![false; horizon]; h.n_actions()];
        for (t, s) in h.steps().iter().enumerate() {
            observed[s.action][t] = true;
        }
        Ok(Self { observed })
    }

    pub fn is_missing(&self, a: usize, t: usize) -> bool {
        !self.observed[a][t]
    }

    /// `M^{(a)}` in increasing time order.
    pub fn missing(&self, a: usize) -> Vec<usize> {
        (0..self.observed[a].len()).filter(|&t| !self.observed[a][t]).collect()
    }

    pub fn ordering(&self, a: usize) -> ArmOrdering {
        let obs = self.observed[a].iter().enumerate().filter(|(_, o)| **o).map(|(t, _)| t);
        let miss = self.observed[a].iter().enumerate().filter(|(_, o)| !**o).map(|(t, _)| t);
        ArmOrdering {
            order: obs.chain(miss).collect(),
            n_observed: self.observed[a].iter().filter(|o| **o).count(),
        }
    }
}

/// Total order over timesteps: observed ones first, each block ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArmOrdering {
    order: Vec<usize>,
    n_observed: usize,
}

impl ArmOrdering {
    pub fn as_slice(&self) -> &[usize] {
        &self.order
    }

    pub fn n_observed(&self) -> usize {
        self.n_observed
    }

    /// True iff `i` comes before `j`.
    pub fn precedes(&self, i: usize, j: usize) -> bool {
        let pos = |t| self.order.iter().position(|&v| v == t);
        pos(i) < pos(j)
    }
}

/// Completes the potential-outcome table given `h`.
///
/// Requires the current context to be observed. In `Fixed` mode the plan's
/// contexts fill timesteps after the current one; in `Resampled` mode they
/// are drawn from the context law.
pub fn impute_task<M: SequenceModel>(
    model: &M,
    h: &History,
    plan: &ContextPlan<'_>,
    rng: &mut RngStream,
) -> Result<TaskInstance> {
    let horizon = plan.horizon();
    let t_now = h.len();
    let current = h
        .current_context()
        .ok_or_else(|| Error::Contract("imputation needs the current context".into()))?;
    if t_now >= horizon {
        return Err(Error::Contract(format!("timestep {t_now} is past the horizon {horizon}")));
    }
    let nonce = rng.next_u64();
    let mut contexts: Vec<Context> = h.steps().iter().map(|s| s.context.clone()).collect();
    contexts.push(current.to_vec());
    match plan {
        ContextPlan::Fixed(xs) => {
            let d = current.len();
            for x in &xs[t_now + 1..] {
                if x.len() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        actual: x.len(),
                    });
                }
                contexts.push(x.clone());
            }
        }
        ContextPlan::Resampled { law, .. } => {
            let mut ctx_rng = rng.substream(&format!("impute-{nonce:016x}/contexts"));
            for _ in t_now + 1..horizon {
                contexts.push(law.sample_context(&mut ctx_rng));
            }
        }
    }

    let n_actions = h.n_actions();
    let mask = MissingnessMask::from_history(h, horizon)?;
    let orderings: Vec<ArmOrdering> = (0..n_actions).map(|a| mask.ordering(a)).collect();
    let mut arm_rngs: Vec<RngStream> = (0..n_actions)
        .map(|a| rng.indexed(&format!("impute-{nonce:016x}/arm"), a as u64))
        .collect();
    let mut states = (0..n_actions)
        .map(|a| model.init_state(a, h.prior_info().action(a)))
        .collect::<Result<Vec<_>>>()?;
    let mut outcomes = vec![vec![f64::NAN; n_actions]; horizon];
    for (t, s) in h.steps().iter().enumerate() {
        outcomes[t][s.action] = s.outcome;
    }

    // All arms advance in lockstep through their own orderings so the model
    // can evaluate the pending draws of several arms in one batch.
    let mut pending: Vec<usize> = Vec::with_capacity(n_actions);
    for k in 0..horizon {
        pending.clear();
        for a in 0..n_actions {
            let i = orderings[a].order[k];
            if mask.is_missing(a, i) {
                pending.push(a);
            } else {
                model.update_state(&mut states[a], &contexts[i], outcomes[i][a])?;
            }
        }
        if pending.is_empty() {
            continue;
        }
        let probs = {
            let items: Vec<(&M::State, &[f64])> = pending
                .iter()
                .map(|&a| (&states[a], contexts[orderings[a].order[k]].as_slice()))
                .collect();
            model.predict_many(&items)?
        };
        for (&a, p) in pending.iter().zip(probs) {
            let i = orderings[a].order[k];
            let y = if arm_rngs[a].gen_bool(p.clamp(0.0, 1.0)) { 1.0 } else { 0.0 };
            outcomes[i][a] = y;
            model.update_state(&mut states[a], &contexts[i], y)?;
        }
    }
    let task = TaskInstance::new(h.prior_info().clone(), contexts, outcomes)?;
    if log::log_enabled!(target: "genban::imputed", log::Level::Trace) {
        if let Ok(json) = serde_json::to_string(&task) {
            log::trace!(target: "genban::imputed", "{json}");
        }
    }
    Ok(task)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::PriorInfo;
    use crate::seqmodel::{BetaBernoulliModel, ConstantModel};

    fn history_with(actions: &[(usize, f64)], n_actions: usize) -> History {
        let mut h = History::new(PriorInfo::new(vec![vec![0.0]; n_actions]).unwrap());
        for (t, (a, y)) in actions.iter().enumerate() {
            h.observe_context(vec![t as f64]).unwrap();
            h.append_step(&[t as f64], *a, *y).unwrap();
        }
        h
    }

    #[test]
    fn ordering_puts_observed_first() {
        let h = history_with(&[(1, 1.0), (0, 0.0), (1, 0.0)], 2);
        let mask = MissingnessMask::from_history(&h, 6).unwrap();
        assert_eq!(mask.missing(0), vec![0, 2, 3, 4, 5]);
        assert_eq!(mask.ordering(0).as_slice(), &[1, 0, 2, 3, 4, 5]);
        assert_eq!(mask.ordering(1).as_slice(), &[0, 2, 1, 3, 4, 5]);
        let o = mask.ordering(1);
        assert!(o.precedes(2, 1));
        assert!(o.precedes(1, 3));
        assert!(!o.precedes(3, 0));
        assert_eq!(o.n_observed(), 2);
    }

    #[test]
    fn observed_entries_are_copied() {
        let mut h = history_with(&[(1, 1.0), (0, 0.0), (1, 0.0)], 2);
        h.observe_context(vec![3.0]).unwrap();
        let xs: Vec<Context> = (0..8).map(|t| vec![t as f64]).collect();
        let mut rng = RngStream::new(0, 0, "impute");
        for _ in 0..20 {
            let tau = impute_task(&ConstantModel { p: 0.5 }, &h, &ContextPlan::Fixed(&xs), &mut rng).unwrap();
            for (t, s) in h.steps().iter().enumerate() {
                assert_eq!(tau.outcome(t, s.action), s.outcome);
            }
            assert_eq!(tau.contexts(), xs.as_slice());
            assert!(tau.outcomes().iter().flatten().all(|y| *y == 0.0 || *y == 1.0));
        }
    }

    #[test]
    fn fully_observed_task_is_reproduced() {
        // One action: every step observes it, so nothing is missing at the last step.
        let mut h = history_with(&[(0, 1.0), (0, 0.0), (0, 1.0)], 1);
        h.observe_context(vec![3.0]).unwrap();
        let xs: Vec<Context> = (0..4).map(|t| vec![t as f64]).collect();
        // Only the current step is missing; with p = 1 its value is forced.
        let tau = impute_task(&ConstantModel { p: 1.0 }, &h, &ContextPlan::Fixed(&xs), &mut RngStream::new(0, 0, "x")).unwrap();
        assert_eq!(tau.arm_outcomes(0), vec![1.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn needs_current_context() {
        let h = history_with(&[(0, 1.0)], 1);
        let xs: Vec<Context> = (0..4).map(|t| vec![t as f64]).collect();
        let err = impute_task(&BetaBernoulliModel::default(), &h, &ContextPlan::Fixed(&xs), &mut RngStream::new(0, 0, "x"));
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn successive_calls_draw_fresh_tables() {
        let mut h = History::new(PriorInfo::new(vec![vec![0.0]]).unwrap());
        h.observe_context(vec![0.0]).unwrap();
        let xs = vec![vec![0.0]; 30];
        let mut rng = RngStream::new(0, 0, "fresh");
        let a = impute_task(&ConstantModel { p: 0.5 }, &h, &ContextPlan::Fixed(&xs), &mut rng).unwrap();
        let b = impute_task(&ConstantModel { p: 0.5 }, &h, &ContextPlan::Fixed(&xs), &mut rng).unwrap();
        assert_ne!(a, b);
    }
}
