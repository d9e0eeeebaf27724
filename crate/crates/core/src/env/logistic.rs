//! Bayesian logistic-regression task generators.
//!
//! Per action, `W_t = U_const + U_Zᵀ f(Z) + U_Xᵀ g(X_t) + g(X_t)ᵀ diag(U_cross) f(Z)`
//! and `Y_t ~ Bernoulli(σ(W_t))`. The synthetic generator uses identity
//! feature maps; the surrogate generator replaces them with fixed nonlinear
//! maps so the sequence model has to learn features.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{logistic_fn, ArmDraw};
use crate::domain::{Context, PriorInfo, TaskInstance};
use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianPrior {
    pub mean: f64,
    pub sd: f64,
}

impl GaussianPrior {
    fn sample(&self, rng: &mut RngStream) -> f64 {
        if self.sd == 0.0 {
            self.mean
        } else {
            let z: f64 = rng.sample(StandardNormal);
            self.mean + self.sd * z
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticDgpConfig {
    #[serde(default = "default_d_z")]
    pub d_z: usize,
    #[serde(default = "default_d_x")]
    pub d_x: usize,
    pub n_actions: usize,
    pub horizon: usize,
    #[serde(default = "default_const")]
    pub u_const: GaussianPrior,
    #[serde(default = "default_coef")]
    pub u_z: GaussianPrior,
    #[serde(default = "default_coef")]
    pub u_x: GaussianPrior,
    #[serde(default = "default_coef")]
    pub u_cross: GaussianPrior,
}

fn default_d_z() -> usize {
    2
}
fn default_d_x() -> usize {
    5
}
fn default_const() -> GaussianPrior {
    GaussianPrior { mean: 0.0, sd: 1.0 }
}
fn default_coef() -> GaussianPrior {
    GaussianPrior { mean: 1.0, sd: 0.25 }
}

impl SyntheticDgpConfig {
    pub fn new(n_actions: usize, horizon: usize) -> Self {
        Self {
            d_z: default_d_z(),
            d_x: default_d_x(),
            n_actions,
            horizon,
            u_const: default_const(),
            u_z: default_coef(),
            u_x: default_coef(),
            u_cross: default_coef(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_actions == 0 || self.horizon == 0 {
            return Err(Error::Config("horizon and action count must be positive".into()));
        }
        if self.d_z == 0 || self.d_x == 0 {
            return Err(Error::Config("feature dimensions must be positive".into()));
        }
        for p in [self.u_const, self.u_z, self.u_x, self.u_cross] {
            if !(p.sd >= 0.0) || !p.mean.is_finite() || !p.sd.is_finite() {
                return Err(Error::Config("prior scales must be finite and non-negative".into()));
            }
        }
        Ok(())
    }
}

/// Surrogate for the text-feature setting: raw action features of dimension
/// `raw_z_dim` pass through two fixed standardized nonlinear functionals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateDgpConfig {
    pub base: SyntheticDgpConfig,
    #[serde(default = "default_raw_z_dim")]
    pub raw_z_dim: usize,
}

fn default_raw_z_dim() -> usize {
    8
}

/// `φ_Z`: maps a standard-normal raw vector to two features, each with mean
/// 0 and variance 1. The first is a quadratic form `(v² − 1)/√2` of the
/// normalized sum of the first half of the coordinates; the second is the odd
/// Hermite polynomial `(u³ − 3u)/√6` of the normalized sum of the second half.
pub fn surrogate_z_features(raw: &[f64]) -> [f64; 2] {
    let half = raw.len() / 2;
    let norm_sum = |s: &[f64]| {
        if s.is_empty() {
            0.0
        } else {
            s.iter().sum::<f64>() / (s.len() as f64).sqrt()
        }
    };
    let v = norm_sum(&raw[..half]);
    let u = norm_sum(&raw[half..]);
    [(v * v - 1.0) / 2f64.sqrt(), (u * u * u - 3.0 * u) / 6f64.sqrt()]
}

/// `φ_X`: multiplies the first four coordinates by the sign of the fifth,
/// with `sign(0) = +1`. Remaining coordinates pass through.
pub fn surrogate_x_features(x: &[f64]) -> Vec<f64> {
    let mut out = x.to_vec();
    if x.len() >= 5 {
        let s = if x[4] < 0.0 { -1.0 } else { 1.0 };
        out[..4].iter_mut().for_each(|v| *v *= s);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMap {
    Identity,
    Surrogate,
}

/// One action's latent coefficients and visible features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticArm {
    /// Features the agent sees (`Z^{(a)}`).
    pub z: Vec<f64>,
    /// Features that enter the logit (`f(Z^{(a)})`).
    pub z_features: Vec<f64>,
    pub u_const: f64,
    pub u_z: Vec<f64>,
    pub u_x: Vec<f64>,
    pub u_cross: Vec<f64>,
    pub feature_map: FeatureMap,
}

impl LogisticArm {
    pub fn logit(&self, x: &[f64]) -> f64 {
        let gx = match self.feature_map {
            FeatureMap::Identity => x.to_vec(),
            FeatureMap::Surrogate => surrogate_x_features(x),
        };
        let mut w = self.u_const;
        w += self.u_z.iter().zip(&self.z_features).map(|(u, z)| u * z).sum::<f64>();
        w += self.u_x.iter().zip(&gx).map(|(u, x)| u * x).sum::<f64>();
        w += self
            .u_cross
            .iter()
            .zip(gx.iter().zip(&self.z_features))
            .map(|(u, (x, z))| u * x * z)
            .sum::<f64>();
        w
    }

    pub fn prob(&self, x: &[f64]) -> f64 {
        logistic_fn(self.logit(x))
    }

    pub fn sample_outcome(&self, x: &[f64], rng: &mut RngStream) -> f64 {
        if rng.gen_bool(self.prob(x)) {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticDgp {
    cfg: SyntheticDgpConfig,
    feature_map: FeatureMap,
    raw_z_dim: usize,
}

impl LogisticDgp {
    pub fn synthetic(cfg: SyntheticDgpConfig) -> Result<Self> {
        cfg.validate()?;
        let raw_z_dim = cfg.d_z;
        Ok(Self {
            cfg,
            feature_map: FeatureMap::Identity,
            raw_z_dim,
        })
    }

    pub fn surrogate(cfg: SurrogateDgpConfig) -> Result<Self> {
        cfg.base.validate()?;
        if cfg.base.d_z != 2 || cfg.base.d_x != 5 {
            return Err(Error::Config("surrogate features need d_z = 2 and d_x = 5".into()));
        }
        if cfg.raw_z_dim < 2 {
            return Err(Error::Config("raw_z_dim must be at least 2".into()));
        }
        Ok(Self {
            cfg: cfg.base,
            feature_map: FeatureMap::Surrogate,
            raw_z_dim: cfg.raw_z_dim,
        })
    }

    pub fn config(&self) -> &SyntheticDgpConfig {
        &self.cfg
    }

    pub fn feature_map(&self) -> FeatureMap {
        self.feature_map
    }

    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        let mut out = self.clone();
        out.cfg.horizon = horizon;
        out.cfg.validate()?;
        Ok(out)
    }

    pub fn with_actions(&self, n_actions: usize) -> Result<Self> {
        let mut out = self.clone();
        out.cfg.n_actions = n_actions;
        out.cfg.validate()?;
        Ok(out)
    }

    /// Dimension of the prior info the agent sees.
    pub fn z_dim(&self) -> usize {
        self.raw_z_dim
    }

    pub fn x_dim(&self) -> usize {
        self.cfg.d_x
    }

    pub fn sample_context(&self, rng: &mut RngStream) -> Context {
        (0..self.cfg.d_x).map(|_| rng.sample(StandardNormal)).collect()
    }

    pub fn sample_arm(&self, rng: &mut RngStream) -> LogisticArm {
        let z: Vec<f64> = (0..self.raw_z_dim).map(|_| rng.sample(StandardNormal)).collect();
        self.sample_arm_given(z, rng)
    }

    /// Draws an arm's coefficients for fixed prior features `z`.
    pub fn sample_arm_given(&self, z: Vec<f64>, rng: &mut RngStream) -> LogisticArm {
        let z_features = match self.feature_map {
            FeatureMap::Identity => z.clone(),
            FeatureMap::Surrogate => surrogate_z_features(&z).to_vec(),
        };
        let c = &self.cfg;
        LogisticArm {
            z,
            z_features,
            u_const: c.u_const.sample(rng),
            u_z: (0..c.d_z).map(|_| c.u_z.sample(rng)).collect(),
            u_x: (0..c.d_x).map(|_| c.u_x.sample(rng)).collect(),
            u_cross: (0..c.d_z.min(c.d_x)).map(|_| c.u_cross.sample(rng)).collect(),
            feature_map: self.feature_map,
        }
    }

    /// A fresh action with `len` i.i.d. `(x, y)` pairs.
    pub fn sample_arm_sequence(&self, len: usize, rng: &mut RngStream) -> ArmDraw {
        let arm = self.sample_arm(rng);
        let contexts: Vec<Context> = (0..len).map(|_| self.sample_context(rng)).collect();
        let outcomes = contexts.iter().map(|x| arm.sample_outcome(x, rng)).collect();
        ArmDraw {
            z: arm.z,
            contexts,
            outcomes,
        }
    }

    pub fn sample_task(&self, rng: &mut RngStream) -> Result<TaskInstance> {
        let arms: Vec<LogisticArm> = (0..self.cfg.n_actions).map(|_| self.sample_arm(rng)).collect();
        let contexts: Vec<Context> = (0..self.cfg.horizon).map(|_| self.sample_context(rng)).collect();
        let outcomes = contexts
            .iter()
            .map(|x| arms.iter().map(|arm| arm.sample_outcome(x, rng)).collect())
            .collect();
        let prior = PriorInfo::new(arms.into_iter().map(|a| a.z).collect())?;
        TaskInstance::new(prior, contexts, outcomes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_synthetic_task_shapes() {
        let dgp = LogisticDgp::synthetic(SyntheticDgpConfig::new(4, 30)).unwrap();
        let task = dgp.sample_task(&mut RngStream::new(0, 0, "task")).unwrap();
        assert_eq!(task.prior_info().dim(), 2);
        assert_eq!(task.context_dim(), 5);
        assert_eq!(task.n_actions(), 4);
        assert_eq!(task.horizon(), 30);
        assert!(task.outcomes().iter().flatten().all(|y| *y == 0.0 || *y == 1.0));
    }

    #[test]
    fn zero_coefficients_give_fair_coins() {
        let zero = GaussianPrior { mean: 0.0, sd: 0.0 };
        let cfg = SyntheticDgpConfig {
            u_const: zero,
            u_z: zero,
            u_x: zero,
            u_cross: zero,
            ..SyntheticDgpConfig::new(3, 10)
        };
        let dgp = LogisticDgp::synthetic(cfg).unwrap();
        let mut rng = RngStream::new(0, 0, "arm");
        for _ in 0..20 {
            let arm = dgp.sample_arm(&mut rng);
            let x = dgp.sample_context(&mut rng);
            assert_eq!(arm.prob(&x), 0.5);
        }
    }

    #[test]
    fn empirical_rate_matches_sigmoid_of_logit() {
        let dgp = LogisticDgp::synthetic(SyntheticDgpConfig::new(1, 1)).unwrap();
        let mut rng = RngStream::new(9, 0, "arm");
        let arm = dgp.sample_arm(&mut rng);
        let x = vec![0.3, -0.2, 0.1, 0.0, -0.4];
        let p = logistic_fn(arm.logit(&x));
        let n = 100_000;
        let hits: f64 = (0..n).map(|_| arm.sample_outcome(&x, &mut rng)).sum();
        let phat = hits / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((phat - p).abs() < 3.0 * se, "phat {phat} p {p}");
    }

    #[test]
    fn logit_matches_hand_expansion() {
        let arm = LogisticArm {
            z: vec![1.0, 2.0],
            z_features: vec![1.0, 2.0],
            u_const: 0.5,
            u_z: vec![1.0, -1.0],
            u_x: vec![0.5, 0.5, 0.0, 0.0, 1.0],
            u_cross: vec![2.0, 1.0],
            feature_map: FeatureMap::Identity,
        };
        let x = [1.0, -1.0, 3.0, 3.0, 2.0];
        // 0.5 + (1 - 2) + (0.5 - 0.5 + 2) + (2*1*1 + 1*(-1)*2)
        assert!((arm.logit(&x) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn phi_x_flips_by_sign_of_fifth() {
        assert_eq!(
            surrogate_x_features(&[1.0, 2.0, 3.0, 4.0, -0.5]),
            vec![-1.0, -2.0, -3.0, -4.0, -0.5]
        );
        assert_eq!(surrogate_x_features(&[1.0, 2.0, 3.0, 4.0, 0.0]), vec![1.0, 2.0, 3.0, 4.0, 0.0]);
    }

    #[test]
    fn phi_z_is_standardized() {
        let mut rng = RngStream::new(4, 0, "phi");
        let n = 200_000;
        let mut s = [0.0; 2];
        let mut s2 = [0.0; 2];
        for _ in 0..n {
            let raw: Vec<f64> = (0..8).map(|_| rng.sample(StandardNormal)).collect();
            let f = surrogate_z_features(&raw);
            for k in 0..2 {
                s[k] += f[k];
                s2[k] += f[k] * f[k];
            }
        }
        for k in 0..2 {
            let m = s[k] / n as f64;
            let v = s2[k] / n as f64 - m * m;
            assert!(m.abs() < 0.02, "mean {m}");
            assert!((v - 1.0).abs() < 0.06, "var {v}");
        }
    }

    #[test]
    fn surrogate_requires_default_dims() {
        let mut cfg = SurrogateDgpConfig {
            base: SyntheticDgpConfig::new(2, 5),
            raw_z_dim: 8,
        };
        let dgp = LogisticDgp::surrogate(cfg.clone()).unwrap();
        let task = dgp.sample_task(&mut RngStream::new(0, 0, "t")).unwrap();
        assert_eq!(task.prior_info().dim(), 8);
        cfg.base.d_x = 4;
        assert!(LogisticDgp::surrogate(cfg).is_err());
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(LogisticDgp::synthetic(SyntheticDgpConfig::new(0, 5)).is_err());
        assert!(LogisticDgp::synthetic(SyntheticDgpConfig::new(2, 0)).is_err());
        let mut c = SyntheticDgpConfig::new(2, 5);
        c.u_x.sd = -1.0;
        assert!(LogisticDgp::synthetic(c).is_err());
    }
}
