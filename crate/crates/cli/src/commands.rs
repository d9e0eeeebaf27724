//! The subcommands. Each returns a summary and writes its files under `out`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use genban::env::Environment;
use genban::eval::{paired_difference, run_experiment, ExperimentSpec, RegretTrace, TRACE_CSV_HEADER};
use genban::rng::RngStream;
use genban::seqmodel::{BetaBernoulliModel, ConstantModel, ExactMixtureModel, MlpSeqModel, ModelProvenance, SequenceModel};
use genban::training::{train, write_loss_csv, Estimate, HistoricalPool};

use crate::config::{ExperimentConfig, ModelSpec, Provenance};
use crate::verify::{run_suite, Suite, SuiteReport};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Verification(Vec<String>),
    Io(String),
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Run(_) => 1,
            CliError::Verification(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Verification(fails) => {
                writeln!(f, "verification failed:")?;
                for x in fails {
                    writeln!(f, "  {x}")?;
                }
                Ok(())
            }
            CliError::Io(m) => write!(f, "I/O error: {m}"),
            CliError::Run(m) => write!(f, "{m}"),
        }
    }
}

impl From<genban::Error> for CliError {
    fn from(e: genban::Error) -> Self {
        match e {
            genban::Error::Io(e) => CliError::Io(e.to_string()),
            genban::Error::Config(_) | genban::Error::Serde(_) => CliError::Config(e.to_string()),
            other => CliError::Run(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).map_err(io_at(path))
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub provenance: Provenance,
    pub selected_lr: f64,
    pub selected_epoch: usize,
    pub selected_val_nll: Estimate,
    pub diverged_lrs: Vec<f64>,
    pub model_path: PathBuf,
    pub loss_csv: PathBuf,
}

/// Draws the historical pools, trains the MLP over the learning-rate grid
/// and writes `model.json`, `loss.csv` and `train_summary.json`.
pub fn cmd_train(cfg: &ExperimentConfig, hash: &str, seed: u64, out: &Path) -> CliResult<TrainSummary> {
    let t = cfg
        .train
        .as_ref()
        .ok_or_else(|| CliError::Config("the config has no `train` section".into()))?;
    let env = cfg.environment()?;
    let root = RngStream::new(seed, 0, "train");
    let train_pool = HistoricalPool::from_env(&env, t.train_entries, t.entry_len, &root.substream("train-pool"))?;
    let val_pool = HistoricalPool::from_env(&env, t.val_entries, t.entry_len, &root.substream("val-pool"))?;
    let count_norm = t.count_norm.unwrap_or(env.horizon() as f64);
    let init = MlpSeqModel::new(env.z_dim(), env.x_dim(), &t.hidden, t.eps, count_norm, &mut root.substream("init"))?;
    let outcome = train(&init, &train_pool, &val_pool, &t.optim, &root.substream("optimizer"))?;

    fs::create_dir_all(out).map_err(io_at(out))?;
    let prov = Provenance::new(hash, seed);
    let model_path = out.join("model.json");
    let model_prov = ModelProvenance {
        config_hash: prov.config_hash.clone(),
        seed,
        version: prov.version.clone(),
    };
    fs::write(&model_path, outcome.model.to_json(Some(&model_prov))?).map_err(io_at(&model_path))?;
    let loss_csv = out.join("loss.csv");
    let mut w = BufWriter::new(File::create(&loss_csv).map_err(io_at(&loss_csv))?);
    writeln!(w, "{}", prov.csv_comment())?;
    write_loss_csv(&mut w, &outcome.curves)?;
    w.flush()?;
    let summary = TrainSummary {
        provenance: prov,
        selected_lr: outcome.selected_lr,
        selected_epoch: outcome.selected_epoch,
        selected_val_nll: outcome.selected_val,
        diverged_lrs: outcome.diverged.clone(),
        model_path,
        loss_csv,
    };
    write_json(&out.join("train_summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct AgentSummary {
    pub agent: String,
    pub final_cum_regret: Estimate,
    pub per_period_regret: Estimate,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairedSummary {
    pub agent: String,
    pub baseline: String,
    /// Per-task `regret(agent) − regret(baseline)` at the horizon.
    pub difference: Estimate,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateSummary {
    pub provenance: Provenance,
    pub horizon: usize,
    pub n_tasks: usize,
    pub agents: Vec<AgentSummary>,
    /// Every agent against the first one listed.
    pub paired: Vec<PairedSummary>,
}

enum LoadedModel {
    Mlp(MlpSeqModel),
    Exact(ExactMixtureModel),
    Beta(BetaBernoulliModel),
    Constant(ConstantModel),
}

fn load_model(spec: Option<&ModelSpec>, env: &Environment, needed: bool) -> CliResult<LoadedModel> {
    let spec = match spec {
        Some(s) => s,
        None if needed => return Err(CliError::Config("an agent needs a sequence model but `model` is not set".into())),
        None => return Ok(LoadedModel::Constant(ConstantModel { p: 0.5 })),
    };
    Ok(match spec {
        ModelSpec::Mlp { path } => {
            let text = fs::read_to_string(path).map_err(io_at(path))?;
            let (m, prov) = MlpSeqModel::from_json(&text)?;
            if m.d_z() != env.z_dim() || m.d_x() != env.x_dim() {
                return Err(CliError::Config(format!(
                    "model expects d_z={}, d_x={} but the environment has d_z={}, d_x={}",
                    m.d_z(),
                    m.d_x(),
                    env.z_dim(),
                    env.x_dim()
                )));
            }
            if let Some(p) = prov {
                log::info!("loaded model trained under config {} (seed {})", p.config_hash, p.seed);
            }
            LoadedModel::Mlp(m)
        }
        ModelSpec::Exact {} => match env.as_discrete() {
            Some(d) => LoadedModel::Exact(ExactMixtureModel::new(d.clone())),
            None => return Err(CliError::Config("the exact model needs a discrete environment".into())),
        },
        ModelSpec::BetaBernoulli { alpha0, beta0 } => LoadedModel::Beta(BetaBernoulliModel::new(*alpha0, *beta0)?),
        ModelSpec::Constant { p } => {
            if !(0.0..=1.0).contains(p) {
                return Err(CliError::Config(format!("constant model probability {p} is outside [0, 1]")));
            }
            LoadedModel::Constant(ConstantModel { p: *p })
        }
    })
}

fn run_agents<M: SequenceModel>(
    spec: &ExperimentSpec,
    agents: &[genban::agents::AgentConfig],
    model: &M,
) -> CliResult<Vec<RegretTrace>> {
    agents
        .iter()
        .map(|a| {
            log::info!("simulating {} on {} tasks", a.label(), spec.n_tasks);
            run_experiment(spec, a, model).map_err(CliError::from)
        })
        .collect()
}

/// Runs every configured agent on the same tasks and writes `trace.csv` and
/// `summary.json`.
pub fn cmd_simulate(cfg: &ExperimentConfig, hash: &str, seed: u64, out: &Path) -> CliResult<SimulateSummary> {
    let agents = cfg.agents();
    if agents.is_empty() {
        return Err(CliError::Config("no agents configured".into()));
    }
    let env = cfg.environment()?;
    let model = load_model(cfg.model.as_ref(), &env, agents.iter().any(|a| a.uses_model()))?;
    let spec = ExperimentSpec {
        oracle_fitter: cfg.oracle_fitter(&env),
        env,
        n_tasks: cfg.n_tasks,
        reward: cfg.reward,
        seed,
    };
    let traces = match &model {
        LoadedModel::Mlp(m) => run_agents(&spec, &agents, m)?,
        LoadedModel::Exact(m) => run_agents(&spec, &agents, m)?,
        LoadedModel::Beta(m) => run_agents(&spec, &agents, m)?,
        LoadedModel::Constant(m) => run_agents(&spec, &agents, m)?,
    };

    fs::create_dir_all(out).map_err(io_at(out))?;
    let prov = Provenance::new(hash, seed);
    let csv_path = out.join("trace.csv");
    let mut w = BufWriter::new(File::create(&csv_path).map_err(io_at(&csv_path))?);
    writeln!(w, "{}", prov.csv_comment())?;
    writeln!(w, "{TRACE_CSV_HEADER}")?;
    for tr in &traces {
        tr.write_csv_rows(&mut w)?;
    }
    w.flush()?;

    let summary = SimulateSummary {
        provenance: prov,
        horizon: spec.env.horizon(),
        n_tasks: spec.n_tasks,
        agents: traces
            .iter()
            .map(|t| AgentSummary {
                agent: t.agent.clone(),
                final_cum_regret: t.final_cum_regret(),
                per_period_regret: t.per_period_regret(),
            })
            .collect(),
        paired: traces
            .iter()
            .skip(1)
            .map(|t| PairedSummary {
                agent: t.agent.clone(),
                baseline: traces[0].agent.clone(),
                difference: paired_difference(t, &traces[0]),
            })
            .collect(),
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifySummary {
    pub provenance: Provenance,
    pub passed: bool,
    pub suites: Vec<SuiteReport>,
}

/// Runs the suites; any failed check is a [`CliError::Verification`].
pub fn cmd_verify(suites: &[Suite], seed: u64, out: Option<&Path>) -> CliResult<VerifySummary> {
    let suites: Vec<Suite> = if suites.is_empty() {
        vec![Suite::Lossdecomp, Suite::Posterior, Suite::Vc, Suite::Bound]
    } else {
        suites.to_vec()
    };
    let mut reports = Vec::new();
    for s in &suites {
        let r = run_suite(*s, seed)?;
        for c in &r.checks {
            println!("{} {:?}: {} = {:.3e} (threshold {:.3e})", if c.passed { "PASS" } else { "FAIL" }, s, c.name, c.value, c.threshold);
        }
        reports.push(r);
    }
    let hash = hex::encode(Sha256::digest(serde_json::to_vec(&suites)?));
    let summary = VerifySummary {
        provenance: Provenance::new(hash, seed),
        passed: reports.iter().all(SuiteReport::passed),
        suites: reports,
    };
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(io_at(dir))?;
        write_json(&dir.join("verify.json"), &summary)?;
    }
    if !summary.passed {
        return Err(CliError::Verification(summary.suites.iter().flat_map(SuiteReport::failures).collect()));
    }
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportSummary {
    pub provenance: Provenance,
    /// Provenance lines of the inputs, in order.
    pub inputs: Vec<String>,
    pub agents: Vec<AgentSummary>,
}

/// Aggregates trace CSVs (possibly from several runs) into per-agent final
/// and per-period regret. Rows are keyed by `(agent, file, task_id)`.
pub fn cmd_report(inputs: &[PathBuf], seed: u64, out: Option<&Path>) -> CliResult<ReportSummary> {
    if inputs.is_empty() {
        return Err(CliError::Config("report needs at least one trace CSV".into()));
    }
    // agent -> (file, task) -> (last timestep, cum regret at it)
    let mut finals: BTreeMap<String, BTreeMap<(usize, u64), (u64, f64)>> = BTreeMap::new();
    let mut provs = Vec::new();
    let mut hasher = Sha256::new();
    for (fi, path) in inputs.iter().enumerate() {
        let f = File::open(path).map_err(io_at(path))?;
        let mut header_seen = false;
        for (ln, line) in BufReader::new(f).lines().enumerate() {
            let line = line?;
            hasher.update(line.as_bytes());
            if let Some(c) = line.strip_prefix('#') {
                provs.push(format!("{}: {}", path.display(), c.trim()));
                continue;
            }
            if !header_seen {
                if line.trim() != TRACE_CSV_HEADER {
                    return Err(CliError::Config(format!("{}: unexpected header {line:?}", path.display())));
                }
                header_seen = true;
                continue;
            }
            let bad = || CliError::Config(format!("{}:{}: malformed row", path.display(), ln + 1));
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 6 {
                return Err(bad());
            }
            let task: u64 = cols[0].parse().map_err(|_| bad())?;
            let t: u64 = cols[1].parse().map_err(|_| bad())?;
            let cum: f64 = cols[5].parse().map_err(|_| bad())?;
            let slot = finals.entry(cols[2].to_owned()).or_default().entry((fi, task)).or_insert((t, cum));
            if t >= slot.0 {
                *slot = (t, cum);
            }
        }
    }
    let agents = finals
        .into_iter()
        .map(|(agent, per_task)| {
            let cum: Vec<f64> = per_task.values().map(|v| v.1).collect();
            let per_period: Vec<f64> = per_task.values().map(|(t, c)| c / (*t + 1) as f64).collect();
            AgentSummary {
                agent,
                final_cum_regret: Estimate::from_samples(&cum),
                per_period_regret: Estimate::from_samples(&per_period),
            }
        })
        .collect();
    let summary = ReportSummary {
        provenance: Provenance::new(hex::encode(hasher.finalize()), seed),
        inputs: provs,
        agents,
    };
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(io_at(dir))?;
        write_json(&dir.join("report.json"), &summary)?;
    }
    Ok(summary)
}
