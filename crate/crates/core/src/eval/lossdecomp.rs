//! Exact expected sequence loss and KL gap on the discrete environment.

use serde::{Deserialize, Serialize};

use crate::env::DiscreteMixtureEnv;
use crate::error::{Error, Result};
use crate::seqmodel::{ExactMixtureModel, SequenceModel};

use super::entropy::ENUMERATION_CAP;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossDecomposition {
    /// `ℓ(p_θ)`, summed over arms.
    pub loss_model: f64,
    /// `ℓ(p*)`, from the exact model's sequential predictives.
    pub loss_star: f64,
    /// `E[KL(p*(Y^a_{1:T}|Z,X) ‖ p_θ(·))]` per arm, from the mixture joint.
    pub kl_per_arm: Vec<f64>,
}

impl LossDecomposition {
    pub fn gap(&self) -> f64 {
        self.loss_model - self.loss_star
    }

    /// `|A|·E[KL]` with the expectation also over a uniformly chosen arm.
    pub fn kl_total(&self) -> f64 {
        self.kl_per_arm.iter().sum()
    }

    pub fn residual(&self) -> f64 {
        (self.gap() - self.kl_total()).abs()
    }
}

fn sequences(base: usize, len: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..base.pow(len as u32)).map(move |mut code| {
        (0..len)
            .map(|_| {
                let d = code % base;
                code /= base;
                d
            })
            .collect()
    })
}

/// `ln p(y_{1:T} | z, x_{1:T})` under a model's one-step predictives.
fn model_log_joint<M: SequenceModel>(m: &M, a: usize, z: &[f64], xs: &[Vec<f64>], ys: &[usize]) -> Result<f64> {
    let mut state = m.init_state(a, z)?;
    let mut lp = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let p = m.predict(&state, x)?;
        lp += if y == 1 { p.ln() } else { (1.0 - p).ln() };
        m.update_state(&mut state, x, y as f64)?;
    }
    Ok(lp)
}

/// Exact `ℓ(p_θ)`, `ℓ(p*)` and the per-arm expected KL by enumerating
/// categories, context sequences and outcome sequences for each arm.
pub fn loss_decomposition<M: SequenceModel>(model: &M, env: &DiscreteMixtureEnv) -> Result<LossDecomposition> {
    let (t, n_x, n_a) = (env.horizon(), env.n_contexts(), env.n_actions());
    let terms = (env.n_categories() * n_a) as f64 * (n_x as f64).powi(t as i32) * 2f64.powi(t as i32);
    if terms > ENUMERATION_CAP {
        return Err(Error::EnumerationTooLarge {
            terms,
            cap: ENUMERATION_CAP,
        });
    }
    let exact = ExactMixtureModel::new(env.clone());
    let px = (n_x as f64).powi(-(t as i32));
    let mut out = LossDecomposition {
        loss_model: 0.0,
        loss_star: 0.0,
        kl_per_arm: vec![0.0; n_a],
    };
    for a in 0..n_a {
        for (k, &pk) in env.category_probs().iter().enumerate() {
            if pk == 0.0 {
                continue;
            }
            let z = [k as f64];
            for xi in sequences(n_x, t) {
                let xs: Vec<Vec<f64>> = xi.iter().map(|&x| DiscreteMixtureEnv::encode_context(x)).collect();
                for ys in sequences(2, t) {
                    let p_star: f64 = env
                        .prior_weights(k)
                        .iter()
                        .enumerate()
                        .map(|(m, w)| {
                            w * xi
                                .iter()
                                .zip(&ys)
                                .map(|(&x, &y)| {
                                    let th = env.theta(m, x, a);
                                    if y == 1 {
                                        th
                                    } else {
                                        1.0 - th
                                    }
                                })
                                .product::<f64>()
                        })
                        .sum();
                    if p_star == 0.0 {
                        continue;
                    }
                    let weight = pk * px * p_star;
                    let lq = model_log_joint(model, a, &z, &xs, &ys)?;
                    let ls = model_log_joint(&exact, a, &z, &xs, &ys)?;
                    out.loss_model -= weight * lq;
                    out.loss_star -= weight * ls;
                    out.kl_per_arm[a] += weight * (p_star.ln() - lq);
                }
            }
        }
    }
    Ok(out)
}
