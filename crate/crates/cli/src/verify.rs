//! Fixed-seed oracle checks behind `genban verify`.

use clap::ValueEnum;
use rand::Rng;
use serde::Serialize;

use genban::agents::{ts_gen_step, AgentConfig};
use genban::env::{DiscreteMixtureEnv, Environment};
use genban::error::Result;
use genban::eval::{
    conditional_entropy_exact, enumerate_posterior, exact_action_probabilities, imputed_distribution, loss_decomposition,
    run_experiment, regret_bound_report, total_variation, verify_entropy_vc, BoundReport, EntropyEstimate, ExperimentSpec,
};
use genban::generation::ContextPlan;
use genban::policy::{FitCriterion, PolicyClass, PolicyFitter};
use genban::rng::RngStream;
use genban::seqmodel::{BetaBernoulliModel, ConstantModel, ExactMixtureModel};
use genban::{Context, History, PriorInfo, RewardFn};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Lossdecomp,
    Posterior,
    Vc,
    Bound,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    fn below(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            passed: value < threshold,
        }
    }

    fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            passed: value <= threshold,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub seed: u64,
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound_report: Option<BoundReport>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{:?}/{}: {} vs threshold {}", self.suite, c.name, c.value, c.threshold))
            .collect()
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<SuiteReport> {
    let (checks, bound_report) = match suite {
        Suite::Lossdecomp => (lossdecomp()?, None),
        Suite::Posterior => (posterior(seed)?, None),
        Suite::Vc => (vc(seed)?, None),
        Suite::Bound => {
            let (c, r) = bound(seed)?;
            (c, Some(r))
        }
    };
    Ok(SuiteReport {
        suite,
        seed,
        checks,
        bound_report,
    })
}

fn lossdecomp() -> Result<Vec<Check>> {
    let env = DiscreteMixtureEnv::with_categories(
        2,
        4,
        vec![0.3, 0.7],
        vec![vec![0.6, 0.4], vec![0.1, 0.9]],
        vec![vec![vec![0.2, 0.7], vec![0.6, 0.3]], vec![vec![0.9, 0.4], vec![0.15, 0.8]]],
    )?;
    let perturbed = DiscreteMixtureEnv::with_categories(
        2,
        4,
        vec![0.5, 0.5],
        vec![vec![0.5, 0.5], vec![0.3, 0.7]],
        vec![vec![vec![0.25, 0.6], vec![0.5, 0.35]], vec![vec![0.8, 0.5], vec![0.2, 0.7]]],
    )?;
    let ds = [
        ("constant_half", loss_decomposition(&ConstantModel { p: 0.5 }, &env)?),
        ("beta_bernoulli", loss_decomposition(&BetaBernoulliModel::default(), &env)?),
        ("perturbed_mixture", loss_decomposition(&ExactMixtureModel::new(perturbed), &env)?),
    ];
    Ok(ds.iter().map(|(name, d)| Check::below(format!("{name}: |gap − |A|·E[KL]|"), d.residual(), 1e-6)).collect())
}

fn ctx(xs: &[usize]) -> Vec<Context> {
    xs.iter().map(|&x| DiscreteMixtureEnv::encode_context(x)).collect()
}

/// Five histories on the reference environment with `T = 3`:
/// `(contexts, past (action, outcome) pairs)`.
pub fn reference_histories() -> Vec<(Vec<Context>, History)> {
    let cases: [(&[usize], &[(usize, f64)]); 5] = [
        (&[0, 1, 0], &[]),
        (&[1, 1, 0], &[(0, 1.0)]),
        (&[0, 1, 1], &[(1, 0.0)]),
        (&[0, 0, 1], &[(0, 1.0), (1, 1.0)]),
        (&[1, 0, 1], &[(1, 0.0), (1, 1.0)]),
    ];
    cases
        .iter()
        .map(|(xs, steps)| {
            let contexts = ctx(xs);
            let mut h = History::new(PriorInfo::new(vec![vec![0.0], vec![0.0]]).expect("valid prior"));
            for (t, &(a, y)) in steps.iter().enumerate() {
                h.observe_context(contexts[t].clone()).expect("fresh step");
                h.append_step(&contexts[t], a, y).expect("matching context");
            }
            h.observe_context(contexts[steps.len()].clone()).expect("fresh step");
            (contexts, h)
        })
        .collect()
}

fn posterior(seed: u64) -> Result<Vec<Check>> {
    let env = DiscreteMixtureEnv::oracle(3)?;
    let model = ExactMixtureModel::new(env.clone());
    let fitter = PolicyFitter::new(PolicyClass::Tabular { n_contexts: 2 }, FitCriterion::default());
    let n = 100_000;
    let mut checks = Vec::new();
    for (i, (contexts, h)) in reference_histories().into_iter().enumerate() {
        let exact = enumerate_posterior(&env, &h, &contexts)?;
        let gen = imputed_distribution(&model, &h, &contexts, n, &RngStream::new(seed, i as u64, "verify-posterior"))?;
        checks.push(Check::below(format!("history {i}: TV(imputed, posterior)"), total_variation(&exact, &gen), 0.02));

        let want = exact_action_probabilities(&env, &h, &contexts, &fitter)?;
        let mut rng = RngStream::new(seed, i as u64, "verify-matching");
        let plan = ContextPlan::Fixed(&contexts);
        let mut freq = vec![0.0; want.len()];
        for _ in 0..n {
            freq[ts_gen_step(&model, &h, &plan, &fitter, &mut rng)?] += 1.0 / n as f64;
        }
        let tv = 0.5 * want.iter().zip(&freq).map(|(a, b)| (a - b).abs()).sum::<f64>();
        checks.push(Check::below(format!("history {i}: TV(action frequencies, P(π* = a | H))"), tv, 0.02));
    }
    Ok(checks)
}

fn vc(seed: u64) -> Result<Vec<Check>> {
    (0..20)
        .map(|i| {
            let mut rng = RngStream::new(seed, i, "verify-vc");
            let pts: Vec<[f64; 2]> = (0..10).map(|_| [rng.gen::<f64>(), rng.gen::<f64>()]).collect();
            let r = verify_entropy_vc(&pts)?;
            let mut c = Check::at_most(format!("point set {i}: labelings"), r.n_labelings as f64, r.bound.round());
            c.passed &= r.witnesses_ok;
            Ok(c)
        })
        .collect()
}

fn bound(seed: u64) -> Result<(Vec<Check>, BoundReport)> {
    let env = DiscreteMixtureEnv::oracle(200)?;
    let fitter = PolicyFitter::new(PolicyClass::Tabular { n_contexts: 2 }, FitCriterion::default());
    let spec = ExperimentSpec {
        env: Environment::Discrete(env.clone()),
        n_tasks: 500,
        oracle_fitter: fitter.clone(),
        reward: RewardFn::Identity,
        seed,
    };
    let trace = run_experiment(&spec, &AgentConfig::ts_gen(fitter), &ExactMixtureModel::new(env.clone()))?;
    let h = EntropyEstimate {
        value: conditional_entropy_exact(&env, true)?,
        exact: true,
        note: None,
    };
    // the imputation model is p* itself, so the gap is zero by construction
    let report = regret_bound_report(&h, 0.0, env.n_actions(), &trace);
    let check = Check::at_most(
        "Δ̂ − 3·s.e. against √(|A|·H/(2T))",
        report.regret.mean - 3.0 * report.regret.se,
        report.bound,
    );
    Ok((vec![check], report))
}
