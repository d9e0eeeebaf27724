//! Offline training of sequence models on logged per-action data, and the
//! sequence log-loss evaluators.

mod pool;

pub use pool::{resample_indices, resample_sequence, HistoricalPool, PoolEntry};

use std::io::Write;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::seqmodel::{MlpGrad, MlpSeqModel, SequenceModel, SummaryStats};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` inside logs.
pub const PROB_CLAMP: f64 = 1e-12;

/// Sequences per gradient chunk; chunks are reduced in index order.
const CHUNK_SEQS: usize = 8;

fn bernoulli_nll(p: f64, y: f64) -> (f64, bool) {
    let clamped = !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p);
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    (-(y * p.ln() + (1.0 - y) * (1.0 - p).ln()), clamped)
}

/// Per-step terms `−log p(y_t | z, x_{1:t}, y_{1:t-1})` continuing from
/// `state`, which ends up holding the whole sequence.
pub fn sequence_nll_terms_from<M: SequenceModel>(
    m: &M,
    state: &mut M::State,
    seq: &[(Vec<f64>, f64)],
) -> Result<Vec<f64>> {
    let mut terms = Vec::with_capacity(seq.len());
    let mut n_clamped = 0usize;
    for (x, y) in seq {
        let p = m.predict(state, x)?;
        let (l, c) = bernoulli_nll(p, *y);
        terms.push(l);
        n_clamped += c as usize;
        m.update_state(state, x, *y)?;
    }
    if n_clamped > 0 {
        log::warn!("sequence NLL clamped {n_clamped} predicted probabilities at {PROB_CLAMP:e}");
    }
    Ok(terms)
}

pub fn sequence_nll_from<M: SequenceModel>(m: &M, state: &mut M::State, seq: &[(Vec<f64>, f64)]) -> Result<f64> {
    Ok(sequence_nll_terms_from(m, state, seq)?.iter().sum())
}

/// Sequence NLL of one action's `(x, y)` sequence from an empty history.
pub fn sequence_nll<M: SequenceModel>(m: &M, action: usize, z: &[f64], seq: &[(Vec<f64>, f64)]) -> Result<f64> {
    let mut state = m.init_state(action, z)?;
    sequence_nll_from(m, &mut state, seq)
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        if xs.len() < 2 {
            return Self { mean, se: f64::NAN };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self {
            mean,
            se: (var / n).sqrt(),
        }
    }
}

/// Estimates `ℓ(p) = E[Σ_a Σ_t −log p(Y_t^{(a)} | …)]` over `n_tasks` draws.
pub fn population_loss<M: SequenceModel>(m: &M, env: &Environment, n_tasks: usize, rng: &RngStream) -> Result<Estimate> {
    if n_tasks < 2 {
        return Err(Error::Config("population loss needs at least two tasks".into()));
    }
    let per_task = (0..n_tasks)
        .into_par_iter()
        .map(|i| {
            let mut task_rng = rng.indexed("population-task", i as u64);
            let tau = env.sample_task(&mut task_rng)?;
            let mut total = 0.0;
            for a in 0..tau.n_actions() {
                let seq: Vec<(Vec<f64>, f64)> = tau
                    .contexts()
                    .iter()
                    .zip(tau.arm_outcomes(a))
                    .map(|(x, y)| (x.clone(), y))
                    .collect();
                total += sequence_nll(m, a, tau.prior_info().action(a), &seq)?;
            }
            Ok(total)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Estimate::from_samples(&per_task))
}

/// MLP input rows for one sequence: row `t` sees the statistics of rows `< t`.
pub fn sequence_features(model: &MlpSeqModel, z: &[f64], seq: &[(&[f64], f64)]) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((seq.len(), model.input_dim()));
    let mut stats = SummaryStats::new(model.d_x());
    for (row, (x, y)) in out.outer_iter_mut().zip(seq) {
        model.write_features(z, &stats, x, row.into_slice().expect("row-major"))?;
        stats.push(x, *y)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Optimizer {
    #[default]
    Sgd,
    #[serde(rename = "adamw")]
    AdamW {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_adam_eps")]
        eps: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}

impl Optimizer {
    pub fn adamw() -> Self {
        Optimizer::AdamW {
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_adam_eps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Sequences per mini-batch.
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr_grid")]
    pub lr_grid: Vec<f64>,
    #[serde(default = "default_wd")]
    pub weight_decay: f64,
    /// Length `L` of each resampled training sequence.
    #[serde(default = "default_seq_len")]
    pub seq_len: usize,
    #[serde(default = "default_true")]
    pub permute_tuples: bool,
    #[serde(default)]
    pub optimizer: Optimizer,
}

fn default_epochs() -> usize {
    20
}
fn default_batch() -> usize {
    500
}
fn default_lr_grid() -> Vec<f64> {
    vec![0.1, 0.01, 0.001]
}
fn default_wd() -> f64 {
    0.01
}
fn default_seq_len() -> usize {
    500
}
fn default_true() -> bool {
    true
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            batch_size: default_batch(),
            lr_grid: default_lr_grid(),
            weight_decay: default_wd(),
            seq_len: default_seq_len(),
            permute_tuples: true,
            optimizer: Optimizer::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.seq_len == 0 {
            return Err(Error::Config("sequence length must be at least 1".into()));
        }
        if self.lr_grid.is_empty() || self.lr_grid.iter().any(|lr| !(*lr > 0.0) || !lr.is_finite()) {
            return Err(Error::Config("learning-rate grid must be non-empty and positive".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight decay must be ≥ 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
        }
    }
}

/// One point of a loss curve: mean per-sequence NLL and its s.e.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub lr: f64,
    pub epoch: usize,
    pub split: Split,
    pub nll: f64,
    pub se: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpSeqModel,
    pub curves: Vec<LossPoint>,
    pub selected_lr: f64,
    pub selected_epoch: usize,
    pub selected_val: Estimate,
    /// Learning rates whose run hit a non-finite loss.
    pub diverged: Vec<f64>,
}

pub fn write_loss_csv<W: Write>(mut w: W, curves: &[LossPoint]) -> std::io::Result<()> {
    writeln!(w, "lr,epoch,split,nll,se")?;
    for p in curves {
        writeln!(w, "{},{},{},{},{}", p.lr, p.epoch, p.split.as_str(), p.nll, p.se)?;
    }
    Ok(())
}

/// Per-sequence NLLs and the summed gradient of a group of sequences.
fn chunk_loss_grad(model: &MlpSeqModel, seqs: &[(&[f64], Vec<(&[f64], f64)>)]) -> Result<(Vec<f64>, MlpGrad)> {
    let rows: usize = seqs.iter().map(|(_, s)| s.len()).sum();
    let mut inputs = Array2::zeros((rows, model.input_dim()));
    let mut targets = Vec::with_capacity(rows);
    let mut r = 0;
    for (z, s) in seqs {
        let f = sequence_features(model, z, s)?;
        inputs.slice_mut(ndarray::s![r..r + s.len(), ..]).assign(&f);
        targets.extend(s.iter().map(|(_, y)| *y));
        r += s.len();
    }
    let (row_losses, grad) = model.row_losses_and_grad(inputs.view(), &targets);
    let mut per_seq = Vec::with_capacity(seqs.len());
    let mut k = 0;
    for (_, s) in seqs {
        per_seq.push(row_losses[k..k + s.len()].iter().sum());
        k += s.len();
    }
    Ok((per_seq, grad))
}

fn seq_view<'a>(pool: &'a HistoricalPool, i: usize, idx: &[usize]) -> (&'a [f64], Vec<(&'a [f64], f64)>) {
    let e = pool.entry(i);
    (&e.z, idx.iter().map(|&j| (e.context(j), e.outcomes[j])).collect())
}

/// Mean per-sequence NLL on fixed sequences.
fn evaluate(model: &MlpSeqModel, pool: &HistoricalPool, seqs: &[(usize, Vec<usize>)]) -> Result<Estimate> {
    let losses = seqs
        .par_chunks(CHUNK_SEQS)
        .map(|chunk| {
            let mut out = Vec::with_capacity(chunk.len());
            for (i, idx) in chunk {
                let (z, s) = seq_view(pool, *i, idx);
                let f = sequence_features(model, z, &s)?;
                let logits = model.logits_batch(f.view());
                out.push(
                    logits
                        .iter()
                        .zip(&s)
                        .map(|(&w, (_, y))| bernoulli_nll(crate::env::logistic_fn(w), *y).0)
                        .sum::<f64>(),
                );
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Estimate::from_samples(&losses.concat()))
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

fn apply_update(model: &mut MlpSeqModel, grad: &[f64], lr: f64, cfg: &TrainConfig, adam: &mut Option<AdamState>) -> Result<()> {
    let mut params = model.params();
    let decay = 1.0 - lr * cfg.weight_decay;
    match (cfg.optimizer, adam) {
        (Optimizer::Sgd, _) => {
            for (w, g) in params.iter_mut().zip(grad) {
                *w = *w * decay - lr * g;
            }
        }
        (Optimizer::AdamW { beta1, beta2, eps }, state) => {
            let st = state.get_or_insert_with(|| AdamState {
                m: vec![0.0; grad.len()],
                v: vec![0.0; grad.len()],
                t: 0,
            });
            st.t += 1;
            let c1 = 1.0 - beta1.powi(st.t);
            let c2 = 1.0 - beta2.powi(st.t);
            for (((w, g), m), v) in params.iter_mut().zip(grad).zip(&mut st.m).zip(&mut st.v) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *w = *w * decay - lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
    }
    model.set_params(&params)
}

/// Trains `init` on `train_pool` for every learning rate in the grid and
/// returns the checkpoint (learning rate, epoch) with the lowest validation
/// NLL. Epoch 0 is the untrained model. A learning rate whose loss becomes
/// non-finite is abandoned; if all of them do, training fails.
pub fn train(
    init: &MlpSeqModel,
    train_pool: &HistoricalPool,
    val_pool: &HistoricalPool,
    cfg: &TrainConfig,
    rng: &RngStream,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_pool.is_empty() || val_pool.is_empty() {
        return Err(Error::Config("training and validation pools must be non-empty".into()));
    }
    for pool in [train_pool, val_pool] {
        if pool.min_len() < cfg.seq_len {
            return Err(Error::Config(format!(
                "sequence length {} exceeds the shortest logged sequence ({})",
                cfg.seq_len,
                pool.min_len()
            )));
        }
    }
    let mut val_rng = rng.substream("validation");
    let val_seqs: Vec<(usize, Vec<usize>)> = (0..val_pool.len())
        .map(|i| Ok((i, resample_indices(val_pool.entry(i).len(), cfg.seq_len, cfg.permute_tuples, &mut val_rng)?)))
        .collect::<Result<_>>()?;

    let init_val = evaluate(init, val_pool, &val_seqs)?;
    let mut curves = Vec::new();
    let mut best: Option<(f64, usize, Estimate, Vec<f64>)> = None;
    let mut diverged = Vec::new();
    for (lr_idx, &lr) in cfg.lr_grid.iter().enumerate() {
        curves.push(LossPoint {
            lr,
            epoch: 0,
            split: Split::Validation,
            nll: init_val.mean,
            se: init_val.se,
        });
        if best.as_ref().map_or(true, |b| init_val.mean < b.2.mean) {
            best = Some((lr, 0, init_val, init.params()));
        }
        let mut model = init.clone();
        let mut adam = None;
        let run_rng = rng.indexed("lr", lr_idx as u64);
        'epochs: for epoch in 1..=cfg.epochs {
            let mut ep_rng = run_rng.indexed("epoch", epoch as u64);
            let mut order: Vec<usize> = (0..train_pool.len()).collect();
            rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut ep_rng);
            let mut train_losses = Vec::with_capacity(order.len());
            for batch in order.chunks(cfg.batch_size) {
                let idx: Vec<Vec<usize>> = batch
                    .iter()
                    .map(|&i| resample_indices(train_pool.entry(i).len(), cfg.seq_len, cfg.permute_tuples, &mut ep_rng))
                    .collect::<Result<_>>()?;
                let views: Vec<_> = batch.iter().zip(&idx).map(|(&i, ix)| seq_view(train_pool, i, ix)).collect();
                let parts = views
                    .par_chunks(CHUNK_SEQS)
                    .map(|c| chunk_loss_grad(&model, c))
                    .collect::<Result<Vec<_>>>()?;
                let mut grad = model.zero_grad();
                for (losses, g) in &parts {
                    train_losses.extend_from_slice(losses);
                    grad.add_assign(g);
                }
                let rows = (batch.len() * cfg.seq_len) as f64;
                grad.scale(1.0 / rows);
                let flat = grad.flat();
                if parts.iter().any(|(l, _)| l.iter().any(|v| !v.is_finite())) || flat.iter().any(|g| !g.is_finite()) {
                    log::warn!("learning rate {lr} diverged in epoch {epoch}; skipping it");
                    diverged.push(lr);
                    break 'epochs;
                }
                apply_update(&mut model, &flat, lr, cfg, &mut adam)?;
            }
            let tr = Estimate::from_samples(&train_losses);
            curves.push(LossPoint {
                lr,
                epoch,
                split: Split::Train,
                nll: tr.mean,
                se: tr.se,
            });
            let val = evaluate(&model, val_pool, &val_seqs)?;
            if !val.mean.is_finite() {
                log::warn!("learning rate {lr} gave a non-finite validation loss in epoch {epoch}; skipping it");
                diverged.push(lr);
                break;
            }
            curves.push(LossPoint {
                lr,
                epoch,
                split: Split::Validation,
                nll: val.mean,
                se: val.se,
            });
            log::info!("lr {lr} epoch {epoch}: train {:.4} validation {:.4} ± {:.4}", tr.mean, val.mean, val.se);
            if best.as_ref().map_or(true, |b| val.mean < b.2.mean) {
                best = Some((lr, epoch, val, model.params()));
            }
        }
    }
    if !cfg.lr_grid.is_empty() && diverged.len() == cfg.lr_grid.len() && cfg.epochs > 0 {
        return Err(Error::Diverged {
            epoch: cfg.epochs,
            lr: *cfg.lr_grid.last().unwrap(),
            detail: "every learning rate in the grid produced a non-finite loss".into(),
        });
    }
    let (selected_lr, selected_epoch, selected_val, params) = best.expect("grid is non-empty");
    let mut model = init.clone();
    model.set_params(&params)?;
    Ok(TrainOutcome {
        model,
        curves,
        selected_lr,
        selected_epoch,
        selected_val,
        diverged,
    })
}
