//! Exact posterior over completed outcome tables on the discrete
//! environment, for checking generated tables against.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::domain::{Context, History, TaskInstance};
use crate::env::DiscreteMixtureEnv;
use crate::error::{Error, Result};
use crate::generation::{impute_task, ContextPlan};
use crate::policy::PolicyFitter;
use crate::rng::RngStream;
use crate::seqmodel::SequenceModel;

use super::entropy::ENUMERATION_CAP;

/// A full outcome table flattened row-major (`t·|A| + a`).
pub type TableKey = Vec<u8>;

pub fn table_key(tau: &TaskInstance) -> TableKey {
    tau.outcomes().iter().flatten().map(|&y| (y == 1.0) as u8).collect()
}

/// Distribution over table keys.
pub type TableDist = HashMap<TableKey, f64>;

pub fn total_variation(p: &TableDist, q: &TableDist) -> f64 {
    let mut tv: f64 = p.iter().map(|(k, v)| (v - q.get(k).copied().unwrap_or(0.0)).abs()).sum();
    tv += q.iter().filter(|(k, _)| !p.contains_key(*k)).map(|(_, v)| v.abs()).sum::<f64>();
    0.5 * tv
}

/// The full context sequence for fixed-context imputation.
fn full_contexts(h: &History, future: &[Context]) -> Result<Vec<Context>> {
    let current = h
        .current_context()
        .ok_or_else(|| Error::Contract("posterior needs the current context".into()))?;
    let mut xs: Vec<Context> = h.steps().iter().map(|s| s.context.clone()).collect();
    xs.push(current.to_vec());
    xs.extend(future[h.len() + 1..].iter().cloned());
    Ok(xs)
}

/// `P(τ | H_t)` with contexts fixed to `contexts`, by enumerating the
/// missing outcomes of each arm. Arms are independent given the history, so
/// the joint is the product of per-arm posteriors.
pub fn enumerate_posterior(env: &DiscreteMixtureEnv, h: &History, contexts: &[Context]) -> Result<TableDist> {
    let xs = full_contexts(h, contexts)?;
    let horizon = xs.len();
    let n_a = h.n_actions();
    let missing_total = horizon * n_a - h.len();
    let terms = 2f64.powi(missing_total as i32);
    if terms > ENUMERATION_CAP {
        return Err(Error::EnumerationTooLarge {
            terms,
            cap: ENUMERATION_CAP,
        });
    }
    let xi: Vec<usize> = xs.iter().map(|x| env.context_index(x)).collect::<Result<_>>()?;

    let mut joint: Vec<(Vec<Option<u8>>, f64)> = vec![(vec![None; horizon * n_a], 1.0)];
    for a in 0..n_a {
        let obs: Vec<(Context, f64)> = h.arm_observations(a).map(|(_, x, y)| (x.to_vec(), y)).collect();
        let post = env.posterior_weights(a, h.prior_info().action(a), &obs)?;
        let mut observed = vec![None; horizon];
        for (t, _, y) in h.arm_observations(a) {
            observed[t] = Some((y == 1.0) as u8);
        }
        let missing: Vec<usize> = (0..horizon).filter(|&t| observed[t].is_none()).collect();
        let mut arm_dist = Vec::with_capacity(1 << missing.len());
        for bits in 0..1usize << missing.len() {
            let p: f64 = post
                .iter()
                .enumerate()
                .map(|(m, w)| {
                    w * missing
                        .iter()
                        .enumerate()
                        .map(|(j, &t)| {
                            let th = env.theta(m, xi[t], a);
                            if bits >> j & 1 == 1 {
                                th
                            } else {
                                1.0 - th
                            }
                        })
                        .product::<f64>()
                })
                .sum();
            let mut col = observed.clone();
            for (j, &t) in missing.iter().enumerate() {
                col[t] = Some((bits >> j & 1) as u8);
            }
            arm_dist.push((col, p));
        }
        joint = joint
            .into_iter()
            .flat_map(|(table, pt)| {
                arm_dist.iter().map(move |(col, pc)| {
                    let mut next = table.clone();
                    for (t, c) in col.iter().enumerate() {
                        next[t * n_a + a] = *c;
                    }
                    (next, pt * pc)
                })
            })
            .collect();
    }
    Ok(joint
        .into_iter()
        .map(|(table, p)| (table.into_iter().map(|c| c.expect("every entry filled")).collect(), p))
        .collect())
}

/// Empirical distribution of `n` imputed tables. Draw `i` uses its own
/// substream, so the result does not depend on the thread count.
pub fn imputed_distribution<M: SequenceModel>(
    model: &M,
    h: &History,
    contexts: &[Context],
    n: usize,
    rng: &RngStream,
) -> Result<TableDist> {
    let plan = ContextPlan::Fixed(contexts);
    let keys = (0..n)
        .into_par_iter()
        .map(|i| impute_task(model, h, &plan, &mut rng.indexed("posterior-draw", i as u64)).map(|t| table_key(&t)))
        .collect::<Result<Vec<_>>>()?;
    let mut dist = TableDist::new();
    for k in keys {
        *dist.entry(k).or_insert(0.0) += 1.0 / n as f64;
    }
    Ok(dist)
}

/// `P(π*(x_t; τ) = a | H_t)` under the exact posterior: the action
/// probabilities Thompson sampling must match.
pub fn exact_action_probabilities(
    env: &DiscreteMixtureEnv,
    h: &History,
    contexts: &[Context],
    fitter: &PolicyFitter,
) -> Result<Vec<f64>> {
    let xs = full_contexts(h, contexts)?;
    let x_now = h.current_context().expect("checked by full_contexts").to_vec();
    let n_a = h.n_actions();
    let mut probs = vec![0.0; n_a];
    for (key, p) in enumerate_posterior(env, h, contexts)? {
        let outcomes = key.chunks(n_a).map(|row| row.iter().map(|&b| b as f64).collect()).collect();
        let tau = TaskInstance::new(h.prior_info().clone(), xs.clone(), outcomes)?;
        probs[fitter.fit(&tau)?.act(&x_now)?] += p;
    }
    Ok(probs)
}
