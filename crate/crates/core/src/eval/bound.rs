//! The regret bound `√(|A|·H/(2T)) + √(2·gap)` next to the measured regret.

use serde::{Deserialize, Serialize};

use super::entropy::EntropyEstimate;
use super::experiment::RegretTrace;
use crate::training::Estimate;

/// `√(|A|·H/(2T))`, the bound with a perfect imputation model.
pub fn entropy_regret_bound(n_actions: usize, entropy: f64, horizon: usize) -> f64 {
    (n_actions as f64 * entropy.max(0.0) / (2.0 * horizon as f64)).sqrt()
}

/// `√(|A|·H/(2T)) + √(2·gap)`.
pub fn misspecified_regret_bound(n_actions: usize, entropy: f64, horizon: usize, gap: f64) -> f64 {
    entropy_regret_bound(n_actions, entropy, horizon) + (2.0 * gap.max(0.0)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub agent: String,
    pub n_actions: usize,
    pub horizon: usize,
    pub entropy: f64,
    pub entropy_exact: bool,
    /// `ℓ̂(p_θ) − ℓ̂(p*)` as estimated, before clamping.
    pub gap_estimate: f64,
    pub gap: f64,
    pub entropy_term: f64,
    pub gap_term: f64,
    pub bound: f64,
    /// `Δ̂` with its standard error.
    pub regret: Estimate,
    /// `Δ̂ ≤ bound + 3·s.e.`
    pub holds: bool,
    pub notes: Vec<String>,
}

/// Puts both bound terms next to the empirical per-period regret of `trace`.
/// A negative gap estimate is clamped to zero and noted.
pub fn regret_bound_report(entropy: &EntropyEstimate, gap_estimate: f64, n_actions: usize, trace: &RegretTrace) -> BoundReport {
    let mut notes = Vec::new();
    if let Some(n) = &entropy.note {
        notes.push(n.clone());
    }
    let gap = if gap_estimate < 0.0 {
        notes.push(format!("estimated loss gap {gap_estimate:.3e} is negative; clamped to 0"));
        0.0
    } else {
        gap_estimate
    };
    let horizon = trace.horizon;
    let entropy_term = entropy_regret_bound(n_actions, entropy.value, horizon);
    let gap_term = (2.0 * gap).sqrt();
    let bound = entropy_term + gap_term;
    let regret = trace.per_period_regret();
    BoundReport {
        agent: trace.agent.clone(),
        n_actions,
        horizon,
        entropy: entropy.value,
        entropy_exact: entropy.exact,
        gap_estimate,
        gap,
        entropy_term,
        gap_term,
        bound,
        regret,
        holds: regret.mean <= bound + 3.0 * regret.se,
        notes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::experiment::TaskTrace;

    fn trace(regrets: &[f64]) -> RegretTrace {
        RegretTrace {
            agent: "x".into(),
            horizon: 1,
            tasks: regrets
                .iter()
                .enumerate()
                .map(|(i, r)| TaskTrace {
                    task_id: i,
                    actions: vec![0],
                    oracle: vec![*r],
                    realized: vec![0.0],
                })
                .collect(),
        }
    }

    #[test]
    fn arithmetic() {
        let h = EntropyEstimate {
            value: 0.8,
            exact: true,
            note: None,
        };
        let r = regret_bound_report(&h, 0.02, 3, &trace(&[0.0, 1.0]));
        let want = (3.0f64 * 0.8 / 2.0).sqrt() + 0.04f64.sqrt();
        assert!((r.bound - want).abs() < 1e-15);
        assert!((r.entropy_term + r.gap_term - r.bound).abs() < 1e-15);
        assert_eq!(r.regret.mean, 0.5);
        assert!(r.holds);
    }

    #[test]
    fn zero_gap_reduces_to_entropy_bound() {
        let h = EntropyEstimate {
            value: 1.3,
            exact: true,
            note: None,
        };
        let r = regret_bound_report(&h, 0.0, 2, &trace(&[0.1, 0.2]));
        assert_eq!(r.bound, entropy_regret_bound(2, 1.3, 1));
        assert_eq!(r.gap_term, 0.0);
    }

    #[test]
    fn negative_gap_is_clamped_and_noted() {
        let h = EntropyEstimate {
            value: 0.1,
            exact: false,
            note: Some("plug-in".into()),
        };
        let r = regret_bound_report(&h, -1e-3, 2, &trace(&[0.0, 0.0]));
        assert_eq!(r.gap, 0.0);
        assert_eq!(r.notes.len(), 2);
        assert_eq!(misspecified_regret_bound(2, 0.1, 1, -1.0), entropy_regret_bound(2, 0.1, 1));
    }
}
