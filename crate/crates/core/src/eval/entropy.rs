//! Entropy of the oracle policy's action sequence, `H(π*(X_{1:T}) | Z, X_{1:T})`.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{PriorInfo, TaskInstance};
use crate::env::{DiscreteMixtureEnv, Environment, LogisticDgp};
use crate::error::{Error, Result};
use crate::policy::{FitCriterion, PolicyClass, PolicyFitter};
use crate::rng::RngStream;

/// Enumerations larger than this are refused.
pub const ENUMERATION_CAP: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    /// Nats.
    pub value: f64,
    pub exact: bool,
    pub note: Option<String>,
}

fn entropy_of<'a>(probs: impl IntoIterator<Item = &'a f64>) -> f64 {
    probs.into_iter().filter(|p| **p > 0.0).map(|p| -p * p.ln()).sum()
}

fn check_cap(terms: f64) -> Result<()> {
    if terms > ENUMERATION_CAP {
        return Err(Error::EnumerationTooLarge {
            terms,
            cap: ENUMERATION_CAP,
        });
    }
    Ok(())
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Every vector of `parts` non-negative integers summing to `total`.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn binomial_pmf(n: usize, theta: f64) -> Vec<f64> {
    let lf: Vec<f64> = (0..=n).map(ln_factorial).collect();
    (0..=n)
        .map(|s| (lf[n] - lf[s] - lf[n - s] + s as f64 * theta.ln() + (n - s) as f64 * (1.0 - theta).ln()).exp())
        .collect()
}

/// `P(argmax_a S_a = b)` for independent `S_a ~ Bin(n, θ_a)`, ties to the
/// lowest index.
fn argmax_distribution(n: usize, thetas: &[f64]) -> Vec<f64> {
    let pmfs: Vec<Vec<f64>> = thetas.iter().map(|&t| binomial_pmf(n, t)).collect();
    let cdfs: Vec<Vec<f64>> = pmfs
        .iter()
        .map(|p| {
            let mut acc = 0.0;
            p.iter()
                .map(|v| {
                    acc += v;
                    acc
                })
                .collect()
        })
        .collect();
    let below = |c: usize, s: usize| if s == 0 { 0.0 } else { cdfs[c][s - 1] };
    (0..thetas.len())
        .map(|b| {
            (0..=n)
                .map(|s| {
                    let mut p = pmfs[b][s];
                    for c in 0..thetas.len() {
                        if c < b {
                            p *= below(c, s);
                        } else if c > b {
                            p *= cdfs[c][s];
                        }
                    }
                    p
                })
                .sum()
        })
        .collect()
}

fn all_configs(base: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|v| {
                (0..base).map(move |k| {
                    let mut w = v.clone();
                    w.push(k);
                    w
                })
            })
            .collect();
    }
    out
}

/// Entropy of the tabular argmax policy given context counts, with the
/// latent of arm `a` drawn from `arm_weights[a]`.
fn entropy_given_counts(env: &DiscreteMixtureEnv, counts: &[usize], arm_weights: &[Vec<f64>]) -> f64 {
    let n_actions = env.n_actions();
    let present: Vec<usize> = (0..counts.len()).filter(|&x| counts[x] > 0).collect();
    let labels = all_configs(n_actions, present.len());
    let mut probs = vec![0.0; labels.len()];
    for m in all_configs(env.n_components(), n_actions) {
        let w: f64 = m.iter().enumerate().map(|(a, &ma)| arm_weights[a][ma]).product();
        if w == 0.0 {
            continue;
        }
        let per_x: Vec<Vec<f64>> = present
            .iter()
            .map(|&x| {
                let thetas: Vec<f64> = (0..n_actions).map(|a| env.theta(m[a], x, a)).collect();
                argmax_distribution(counts[x], &thetas)
            })
            .collect();
        for (p, label) in probs.iter_mut().zip(&labels) {
            *p += w * label.iter().zip(&per_x).map(|(&b, q)| q[b]).product::<f64>();
        }
    }
    entropy_of(&probs)
}

/// Exact `H(π*(X_{1:T}) | Z, X_{1:T})` for the tabular per-arm-regression
/// policy on the discrete environment. Only the per-context counts of
/// successes matter, so the computation sums over binomial counts rather
/// than outcome tables. With `condition_on_z = false` the prior features are
/// marginalized, giving `H(π*(X_{1:T}) | X_{1:T})`.
pub fn conditional_entropy_exact(env: &DiscreteMixtureEnv, condition_on_z: bool) -> Result<f64> {
    let (t, n_x, n_a) = (env.horizon(), env.n_contexts(), env.n_actions());
    let comps = compositions_count(t, n_x);
    let z_configs = if condition_on_z {
        (env.n_categories() as f64).powi(n_a as i32)
    } else {
        1.0
    };
    let terms = comps * z_configs * (env.n_components() as f64).powi(n_a as i32) * (n_a as f64).powi(n_x as i32);
    check_cap(terms)?;
    let lf_t = ln_factorial(t);
    let count_vectors = compositions(t, n_x);
    let count_probs: Vec<f64> = count_vectors
        .iter()
        .map(|n| (lf_t - n.iter().map(|&k| ln_factorial(k)).sum::<f64>() - t as f64 * (n_x as f64).ln()).exp())
        .collect();
    let z_list: Vec<(f64, Vec<Vec<f64>>)> = if condition_on_z {
        all_configs(env.n_categories(), n_a)
            .into_iter()
            .map(|z| {
                let p: f64 = z.iter().map(|&k| env.category_probs()[k]).product();
                (p, z.iter().map(|&k| env.prior_weights(k).to_vec()).collect())
            })
            .collect()
    } else {
        vec![(1.0, vec![env.marginal_weights(); n_a])]
    };
    let total: f64 = z_list
        .par_iter()
        .filter(|(pz, _)| *pz > 0.0)
        .map(|(pz, weights)| {
            pz * count_vectors
                .iter()
                .zip(&count_probs)
                .map(|(n, pn)| pn * entropy_given_counts(env, n, weights))
                .sum::<f64>()
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    Ok(total)
}

fn compositions_count(total: usize, parts: usize) -> f64 {
    // C(total + parts − 1, parts − 1)
    let k = parts - 1;
    (0..k).fold(1.0, |acc, i| acc * (total + k - i) as f64 / (i + 1) as f64)
}

/// Brute-force version of the same quantity for any fitter: enumerates
/// prior features, context sequences and full outcome tables.
pub fn conditional_entropy_bruteforce(env: &DiscreteMixtureEnv, fitter: &PolicyFitter, condition_on_z: bool) -> Result<f64> {
    let (t, n_x, n_a) = (env.horizon(), env.n_contexts(), env.n_actions());
    let z_count = if condition_on_z { env.n_categories() } else { 1 };
    let terms = (z_count as f64).powi(n_a as i32) * (n_x as f64).powi(t as i32) * 2f64.powi((t * n_a) as i32);
    check_cap(terms)?;
    let z_list: Vec<(f64, Vec<usize>, Vec<Vec<f64>>)> = if condition_on_z {
        all_configs(env.n_categories(), n_a)
            .into_iter()
            .map(|z| {
                let p = z.iter().map(|&k| env.category_probs()[k]).product();
                let w = z.iter().map(|&k| env.prior_weights(k).to_vec()).collect();
                (p, z, w)
            })
            .collect()
    } else {
        vec![(1.0, vec![0; n_a], vec![env.marginal_weights(); n_a])]
    };
    let px = (n_x as f64).powi(-(t as i32));
    let mut total = 0.0;
    for (pz, z, weights) in &z_list {
        if *pz == 0.0 {
            continue;
        }
        let prior = PriorInfo::new(z.iter().map(|&k| vec![k as f64]).collect())?;
        for xs in all_configs(n_x, t) {
            let contexts: Vec<Vec<f64>> = xs.iter().map(|&x| DiscreteMixtureEnv::encode_context(x)).collect();
            // P(column | arm weights, contexts) for every arm and bit pattern
            let col_probs: Vec<Vec<f64>> = (0..n_a)
                .map(|a| {
                    (0..1usize << t)
                        .map(|bits| {
                            weights[a]
                                .iter()
                                .enumerate()
                                .map(|(m, w)| {
                                    w * (0..t)
                                        .map(|s| {
                                            let th = env.theta(m, xs[s], a);
                                            if bits >> s & 1 == 1 {
                                                th
                                            } else {
                                                1.0 - th
                                            }
                                        })
                                        .product::<f64>()
                                })
                                .sum()
                        })
                        .collect()
                })
                .collect();
            let mut dist: HashMap<Vec<usize>, f64> = HashMap::new();
            for table in 0..1usize << (t * n_a) {
                let mut p = 1.0;
                for a in 0..n_a {
                    p *= col_probs[a][(table >> (a * t)) & ((1 << t) - 1)];
                }
                if p == 0.0 {
                    continue;
                }
                let outcomes = (0..t)
                    .map(|s| (0..n_a).map(|a| ((table >> (a * t + s)) & 1) as f64).collect())
                    .collect();
                let tau = TaskInstance::new(prior.clone(), contexts.clone(), outcomes)?;
                let policy = fitter.fit(&tau)?;
                let label = contexts.iter().map(|x| policy.act(x)).collect::<Result<Vec<_>>>()?;
                *dist.entry(label).or_insert(0.0) += p;
            }
            total += pz * px * entropy_of(dist.values());
        }
    }
    Ok(total)
}

/// Plug-in Monte Carlo estimate for a logistic environment: for each of
/// `n_outer` draws of `(Z, X_{1:T})`, the empirical entropy of the fitted
/// policy's action sequence over `n_inner` tables drawn given `(Z, X)`.
/// Biased downward when the label space is large relative to `n_inner`.
pub fn conditional_entropy_plugin(
    dgp: &LogisticDgp,
    fitter: &PolicyFitter,
    n_outer: usize,
    n_inner: usize,
    rng: &RngStream,
) -> Result<f64> {
    let n_a = dgp.config().n_actions;
    let per_outer = (0..n_outer)
        .into_par_iter()
        .map(|o| {
            let mut r = rng.indexed("entropy-outer", o as u64);
            let zs: Vec<Vec<f64>> = (0..n_a).map(|_| dgp.sample_arm(&mut r).z).collect();
            let contexts: Vec<Vec<f64>> = (0..dgp.config().horizon).map(|_| dgp.sample_context(&mut r)).collect();
            let prior = PriorInfo::new(zs.clone())?;
            let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
            for i in 0..n_inner {
                let mut ri = r.indexed("inner", i as u64);
                let arms: Vec<_> = zs.iter().map(|z| dgp.sample_arm_given(z.clone(), &mut ri)).collect();
                let outcomes = contexts
                    .iter()
                    .map(|x| arms.iter().map(|arm| arm.sample_outcome(x, &mut ri)).collect())
                    .collect();
                let tau = TaskInstance::new(prior.clone(), contexts.clone(), outcomes)?;
                let policy = fitter.fit(&tau)?;
                let label = contexts.iter().map(|x| policy.act(x)).collect::<Result<Vec<_>>>()?;
                *counts.entry(label).or_insert(0) += 1;
            }
            let probs: Vec<f64> = counts.values().map(|&c| c as f64 / n_inner as f64).collect();
            Ok(entropy_of(&probs))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(per_outer.iter().sum::<f64>() / n_outer as f64)
}

/// `H(π*(X_{1:T}) | Z, X_{1:T})` by the best available method.
pub fn conditional_entropy(
    env: &Environment,
    fitter: &PolicyFitter,
    n_outer: usize,
    n_inner: usize,
    rng: &RngStream,
) -> Result<EntropyEstimate> {
    match env {
        Environment::Discrete(d) => {
            let tabular_argmax = matches!(fitter.class, PolicyClass::Tabular { n_contexts } if n_contexts == d.n_contexts())
                && fitter.criterion == FitCriterion::PerArmRewardRegression
                && fitter.reward == crate::domain::RewardFn::Identity;
            let value = if tabular_argmax {
                conditional_entropy_exact(d, true)?
            } else {
                conditional_entropy_bruteforce(d, fitter, true)?
            };
            Ok(EntropyEstimate {
                value,
                exact: true,
                note: None,
            })
        }
        Environment::Logistic(dgp) => {
            let note = format!(
                "plug-in estimate from {n_outer}×{n_inner} draws; biased downward when action sequences rarely repeat"
            );
            log::warn!("{note}");
            Ok(EntropyEstimate {
                value: conditional_entropy_plugin(dgp, fitter, n_outer, n_inner, rng)?,
                exact: false,
                note: Some(note),
            })
        }
    }
}
