//! Online decision rules: Thompson sampling via generation and baselines.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::History;
use crate::error::{Error, Result};
use crate::generation::{impute_task, ContextMode, ContextPlan};
use crate::linalg::{dot, Mat};
use crate::policy::{argmax, Policy, PolicyClass, PolicyFitter};
use crate::rng::RngStream;
use crate::seqmodel::SequenceModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum AgentConfig {
    TsGen {
        #[serde(default = "default_fitter")]
        policy: PolicyFitter,
        #[serde(default)]
        contexts: ContextMode,
    },
    Greedy {},
    EpsilonGreedy {
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
    Softmax {
        #[serde(default = "default_temperature")]
        temperature: f64,
    },
    LinearTs {
        #[serde(default = "default_noise_var")]
        noise_var: f64,
    },
    LinUcb {
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    Uniform {},
    /// Plays the oracle policy fitted on the true table.
    Oracle {},
}

fn default_fitter() -> PolicyFitter {
    PolicyFitter::new(PolicyClass::logistic(), Default::default())
}
fn default_epsilon() -> f64 {
    0.1
}
fn default_temperature() -> f64 {
    0.05
}
fn default_noise_var() -> f64 {
    0.25
}
fn default_alpha() -> f64 {
    0.1
}

impl AgentConfig {
    pub fn ts_gen(policy: PolicyFitter) -> Self {
        AgentConfig::TsGen {
            policy,
            contexts: ContextMode::Fixed,
        }
    }

    pub fn epsilon_greedy() -> Self {
        AgentConfig::EpsilonGreedy {
            epsilon: default_epsilon(),
        }
    }

    pub fn softmax() -> Self {
        AgentConfig::Softmax {
            temperature: default_temperature(),
        }
    }

    pub fn linear_ts() -> Self {
        AgentConfig::LinearTs {
            noise_var: default_noise_var(),
        }
    }

    pub fn lin_ucb() -> Self {
        AgentConfig::LinUcb { alpha: default_alpha() }
    }

    pub fn label(&self) -> &'static str {
        match self {
            AgentConfig::TsGen { .. } => "ts_gen",
            AgentConfig::Greedy {} => "greedy",
            AgentConfig::EpsilonGreedy { .. } => "epsilon_greedy",
            AgentConfig::Softmax { .. } => "softmax",
            AgentConfig::LinearTs { .. } => "linear_ts",
            AgentConfig::LinUcb { .. } => "lin_ucb",
            AgentConfig::Uniform {} => "uniform",
            AgentConfig::Oracle {} => "oracle",
        }
    }

    /// Whether the agent queries the sequence model.
    pub fn uses_model(&self) -> bool {
        matches!(
            self,
            AgentConfig::TsGen { .. } | AgentConfig::Greedy {} | AgentConfig::EpsilonGreedy { .. } | AgentConfig::Softmax { .. }
        )
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            AgentConfig::TsGen { policy, .. } => policy.validate(),
            AgentConfig::EpsilonGreedy { epsilon } if !(0.0..=1.0).contains(epsilon) => {
                Err(Error::Config(format!("epsilon {epsilon} is outside [0, 1]")))
            }
            AgentConfig::Softmax { temperature } if !(*temperature > 0.0) => {
                Err(Error::Config(format!("softmax temperature {temperature} must be positive")))
            }
            AgentConfig::LinearTs { noise_var } if !(*noise_var > 0.0) => {
                Err(Error::Config("noise variance must be positive".into()))
            }
            AgentConfig::LinUcb { alpha } if !(*alpha >= 0.0) => Err(Error::Config(format!("alpha {alpha} must be ≥ 0"))),
            _ => Ok(()),
        }
    }
}

/// Per-step inputs that come from the experiment rather than the history.
pub struct StepInputs<'a> {
    pub plan: ContextPlan<'a>,
    /// The oracle policy of the running task, for the `Oracle` agent.
    pub oracle: Option<&'a Policy>,
}

fn current(h: &History) -> Result<&[f64]> {
    h.current_context()
        .ok_or_else(|| Error::Contract("the current context has not been observed".into()))
}

/// `p(Y = 1)` for every arm at the current context.
pub fn arm_predictions<M: SequenceModel>(m: &M, h: &History) -> Result<Vec<f64>> {
    let x = current(h)?;
    let states = (0..h.n_actions())
        .map(|a| {
            let mut s = m.init_state(a, h.prior_info().action(a))?;
            for (_, xi, y) in h.arm_observations(a) {
                m.update_state(&mut s, xi, y)?;
            }
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    let items: Vec<(&M::State, &[f64])> = states.iter().map(|s| (s, x)).collect();
    m.predict_many(&items)
}

/// One decision of Thompson sampling via generation: impute a complete
/// table, fit the policy to it and play the policy at the current context.
pub fn ts_gen_step<M: SequenceModel>(
    m: &M,
    h: &History,
    plan: &ContextPlan<'_>,
    fitter: &PolicyFitter,
    rng: &mut RngStream,
) -> Result<usize> {
    let x = current(h)?.to_vec();
    let tau = impute_task(m, h, plan, rng)?;
    fitter.fit(&tau)?.act(&x)
}

pub fn greedy_step<M: SequenceModel>(m: &M, h: &History) -> Result<usize> {
    Ok(argmax(arm_predictions(m, h)?))
}

pub fn epsilon_greedy_step<M: SequenceModel>(m: &M, h: &History, epsilon: f64, rng: &mut RngStream) -> Result<usize> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Config(format!("epsilon {epsilon} is outside [0, 1]")));
    }
    // both draws are always made so the stream advances identically
    let explore = rng.gen_bool(epsilon);
    let pick = rng.gen_range(0..h.n_actions());
    if explore {
        Ok(pick)
    } else {
        greedy_step(m, h)
    }
}

/// `softmax(r̂ / τ)`, computed with the maximum subtracted.
pub fn softmax_probs(r: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0) {
        return Err(Error::Config(format!("softmax temperature {temperature} must be positive")));
    }
    let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = r.iter().map(|v| ((v - max) / temperature).exp()).collect();
    let s: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / s).collect())
}

/// Inverse-CDF draw from a probability vector.
pub fn sample_categorical(probs: &[f64], rng: &mut RngStream) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

pub fn softmax_step<M: SequenceModel>(m: &M, h: &History, temperature: f64, rng: &mut RngStream) -> Result<usize> {
    let probs = softmax_probs(&arm_predictions(m, h)?, temperature)?;
    Ok(sample_categorical(&probs, rng))
}

pub fn uniform_step(h: &History, rng: &mut RngStream) -> usize {
    rng.gen_range(0..h.n_actions())
}

/// Gaussian posterior over one arm's coefficients under a `N(0, I)` prior
/// and Gaussian noise of variance `noise_var`.
#[derive(Debug, Clone)]
pub struct LinearPosterior {
    /// `I + XᵀX / σ²`
    pub precision: Mat,
    pub mean: Vec<f64>,
}

impl LinearPosterior {
    pub fn fit<'a>(d: usize, data: impl IntoIterator<Item = (&'a [f64], f64)>, noise_var: f64) -> Result<Self> {
        let mut precision = Mat::identity(d);
        let mut b = vec![0.0; d];
        for (x, y) in data {
            crate::error::check_dim(d, x.len())?;
            precision.add_outer(x, 1.0 / noise_var);
            for (bi, xi) in b.iter_mut().zip(x) {
                *bi += xi * y / noise_var;
            }
        }
        let mean = precision.cholesky()?.solve(&b);
        Ok(Self { precision, mean })
    }

    pub fn covariance(&self) -> Result<Mat> {
        Ok(self.precision.cholesky()?.inverse())
    }

    /// `β̃ = μ + L^{-ᵀ} ξ` where `LLᵀ` is the precision.
    pub fn sample(&self, rng: &mut RngStream) -> Result<Vec<f64>> {
        let ch = self.precision.cholesky()?;
        let xi: Vec<f64> = (0..self.mean.len()).map(|_| rng.sample(StandardNormal)).collect();
        let dev = ch.backward(&xi);
        Ok(self.mean.iter().zip(dev).map(|(m, d)| m + d).collect())
    }
}

fn arm_data(h: &History, a: usize) -> impl Iterator<Item = (&[f64], f64)> {
    h.arm_observations(a).map(|(_, x, y)| (x, y))
}

pub fn linear_ts_step(h: &History, noise_var: f64, rng: &mut RngStream) -> Result<usize> {
    let x = current(h)?;
    let mut scores = Vec::with_capacity(h.n_actions());
    for a in 0..h.n_actions() {
        let post = LinearPosterior::fit(x.len(), arm_data(h, a), noise_var)?;
        scores.push(dot(x, &post.sample(rng)?));
    }
    Ok(argmax(scores))
}

/// LinUCB-disjoint scores `xᵀA⁻¹b + α √(xᵀA⁻¹x)` with `A = I + Σ x xᵀ`.
pub fn linucb_scores(h: &History, alpha: f64) -> Result<Vec<f64>> {
    let x = current(h)?;
    (0..h.n_actions())
        .map(|a| {
            let mut big_a = Mat::identity(x.len());
            let mut b = vec![0.0; x.len()];
            for (xi, y) in arm_data(h, a) {
                crate::error::check_dim(x.len(), xi.len())?;
                big_a.add_outer(xi, 1.0);
                for (bj, v) in b.iter_mut().zip(xi) {
                    *bj += v * y;
                }
            }
            let ch = big_a.cholesky()?;
            let theta = ch.solve(&b);
            let ainv_x = ch.solve(x);
            Ok(dot(x, &theta) + alpha * dot(x, &ainv_x).max(0.0).sqrt())
        })
        .collect()
}

pub fn linucb_step(h: &History, alpha: f64) -> Result<usize> {
    Ok(argmax(linucb_scores(h, alpha)?))
}

/// Dispatches one decision for any agent variant.
pub fn select_action<M: SequenceModel>(
    cfg: &AgentConfig,
    m: &M,
    h: &History,
    inputs: &StepInputs<'_>,
    rng: &mut RngStream,
) -> Result<usize> {
    match cfg {
        AgentConfig::TsGen { policy, .. } => ts_gen_step(m, h, &inputs.plan, policy, rng),
        AgentConfig::Greedy {} => greedy_step(m, h),
        AgentConfig::EpsilonGreedy { epsilon } => epsilon_greedy_step(m, h, *epsilon, rng),
        AgentConfig::Softmax { temperature } => softmax_step(m, h, *temperature, rng),
        AgentConfig::LinearTs { noise_var } => linear_ts_step(h, *noise_var, rng),
        AgentConfig::LinUcb { alpha } => linucb_step(h, *alpha),
        AgentConfig::Uniform {} => Ok(uniform_step(h, rng)),
        AgentConfig::Oracle {} => inputs
            .oracle
            .ok_or_else(|| Error::Contract("the oracle agent needs the task's oracle policy".into()))?
            .act(current(h)?),
    }
}
