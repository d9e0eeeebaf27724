//! Bandit runs over many tasks and the regret bookkeeping.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{select_action, AgentConfig, StepInputs};
use crate::domain::{History, RewardFn};
use crate::env::Environment;
use crate::error::Result;
use crate::generation::{ContextMode, ContextPlan};
use crate::policy::{PolicyFitter, Policy};
use crate::rng::RngStream;
use crate::seqmodel::SequenceModel;
use crate::training::Estimate;

/// Per-step rewards of one task run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskTrace {
    pub task_id: usize,
    pub actions: Vec<usize>,
    /// `R(Y_t^{(π*(X_t; τ))})`
    pub oracle: Vec<f64>,
    /// `R(Y_t^{(A_t)})`
    pub realized: Vec<f64>,
}

impl TaskTrace {
    pub fn cum_regret(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.oracle
            .iter()
            .zip(&self.realized)
            .map(|(o, r)| {
                acc += o - r;
                acc
            })
            .collect()
    }

    /// `(1/T) Σ_t (oracle_t − realized_t)`
    pub fn per_period_regret(&self) -> f64 {
        self.cum_regret().last().copied().unwrap_or(0.0) / self.oracle.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub agent: String,
    pub horizon: usize,
    pub tasks: Vec<TaskTrace>,
}

impl RegretTrace {
    /// Mean cumulative regret across tasks at every timestep.
    pub fn mean_cum_regret(&self) -> Vec<Estimate> {
        let per_task: Vec<Vec<f64>> = self.tasks.iter().map(TaskTrace::cum_regret).collect();
        (0..self.horizon)
            .map(|t| Estimate::from_samples(&per_task.iter().map(|c| c[t]).collect::<Vec<_>>()))
            .collect()
    }

    pub fn final_cum_regret(&self) -> Estimate {
        Estimate::from_samples(&self.tasks.iter().map(|t| t.cum_regret()[self.horizon - 1]).collect::<Vec<_>>())
    }

    /// `Δ̂`: the per-period regret averaged over tasks.
    pub fn per_period_regret(&self) -> Estimate {
        Estimate::from_samples(&self.tasks.iter().map(TaskTrace::per_period_regret).collect::<Vec<_>>())
    }

    /// Mean per-step regret inside consecutive windows of `width` steps.
    pub fn window_regret(&self, width: usize) -> Vec<Estimate> {
        (0..self.horizon / width)
            .map(|w| {
                let per_task: Vec<f64> = self
                    .tasks
                    .iter()
                    .map(|tr| {
                        (w * width..(w + 1) * width)
                            .map(|t| tr.oracle[t] - tr.realized[t])
                            .sum::<f64>()
                            / width as f64
                    })
                    .collect();
                Estimate::from_samples(&per_task)
            })
            .collect()
    }

    /// Writes `task_id,timestep,agent,oracle_reward,realized_reward,cum_regret`
    /// rows (no header).
    pub fn write_csv_rows<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        for tr in &self.tasks {
            let cum = tr.cum_regret();
            for t in 0..self.horizon {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    tr.task_id, t, self.agent, tr.oracle[t], tr.realized[t], cum[t]
                )?;
            }
        }
        Ok(())
    }
}

pub const TRACE_CSV_HEADER: &str = "task_id,timestep,agent,oracle_reward,realized_reward,cum_regret";

/// Per-task differences of final cumulative regret, `a − b`. Both traces
/// must come from the same tasks.
pub fn paired_difference(a: &RegretTrace, b: &RegretTrace) -> Estimate {
    let d: Vec<f64> = a
        .tasks
        .iter()
        .zip(&b.tasks)
        .map(|(x, y)| {
            debug_assert_eq!(x.task_id, y.task_id);
            x.cum_regret()[a.horizon - 1] - y.cum_regret()[b.horizon - 1]
        })
        .collect();
    Estimate::from_samples(&d)
}

/// Static description of a run.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub env: Environment,
    pub n_tasks: usize,
    /// Fits the oracle policy on each task's true table.
    pub oracle_fitter: PolicyFitter,
    pub reward: RewardFn,
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn task(&self, i: usize) -> Result<crate::domain::TaskInstance> {
        self.env.sample_task(&mut RngStream::new(self.seed, i as u64, "task"))
    }
}

fn run_task<M: SequenceModel>(spec: &ExperimentSpec, agent: &AgentConfig, model: &M, i: usize) -> Result<TaskTrace> {
    let tau = spec.task(i)?;
    let oracle_policy: Policy = spec.oracle_fitter.fit(&tau)?;
    let mut rng = RngStream::new(spec.seed, i as u64, format!("agent/{}", agent.label()));
    let horizon = tau.horizon();
    let plan = match agent {
        AgentConfig::TsGen {
            contexts: ContextMode::Resampled,
            ..
        } => ContextPlan::Resampled {
            law: &spec.env,
            horizon,
        },
        _ => ContextPlan::Fixed(tau.contexts()),
    };
    let inputs = StepInputs {
        plan,
        oracle: Some(&oracle_policy),
    };
    let mut h = History::new(tau.prior_info().clone());
    let mut trace = TaskTrace {
        task_id: i,
        actions: Vec::with_capacity(horizon),
        oracle: Vec::with_capacity(horizon),
        realized: Vec::with_capacity(horizon),
    };
    for t in 0..horizon {
        let x = tau.context(t);
        h.observe_context(x.to_vec())?;
        let a = select_action(agent, model, &h, &inputs, &mut rng)?;
        let y = tau.outcome(t, a);
        h.append_step(x, a, y)?;
        trace.actions.push(a);
        trace.realized.push(spec.reward.reward(y));
        trace.oracle.push(spec.reward.reward(tau.outcome(t, oracle_policy.act(x)?)));
    }
    Ok(trace)
}

/// Runs `agent` on `n_tasks` tasks. Task `i` and the agent's randomness on
/// it depend only on `(seed, i)`, so all agents face the same tasks and the
/// result does not depend on the thread count.
pub fn run_experiment<M: SequenceModel>(spec: &ExperimentSpec, agent: &AgentConfig, model: &M) -> Result<RegretTrace> {
    agent.validate()?;
    spec.oracle_fitter.validate()?;
    let tasks = (0..spec.n_tasks)
        .into_par_iter()
        .map(|i| run_task(spec, agent, model, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(RegretTrace {
        agent: agent.label().to_owned(),
        horizon: spec.env.horizon(),
        tasks,
    })
}
