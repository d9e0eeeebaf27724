//! Logged per-action data used for offline training.

use rand::seq::index;
use rayon::prelude::*;

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// One logged action: its prior features and `(x, y)` pairs, contexts
/// stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    pub action: usize,
    pub z: Vec<f64>,
    d_x: usize,
    xs: Vec<f64>,
    pub outcomes: Vec<f64>,
}

impl PoolEntry {
    pub fn new(action: usize, z: Vec<f64>, contexts: &[Vec<f64>], outcomes: Vec<f64>) -> Result<Self> {
        if contexts.len() != outcomes.len() {
            return Err(Error::DimensionMismatch {
                expected: contexts.len(),
                actual: outcomes.len(),
            });
        }
        let d_x = contexts.first().map_or(0, Vec::len);
        let mut xs = Vec::with_capacity(d_x * contexts.len());
        for x in contexts {
            crate::error::check_dim(d_x, x.len())?;
            xs.extend_from_slice(x);
        }
        Ok(Self {
            action,
            z,
            d_x,
            xs,
            outcomes,
        })
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn context(&self, j: usize) -> &[f64] {
        &self.xs[j * self.d_x..(j + 1) * self.d_x]
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct HistoricalPool {
    entries: Vec<PoolEntry>,
}

impl HistoricalPool {
    pub fn new(entries: Vec<PoolEntry>) -> Self {
        Self { entries }
    }

    /// `n_entries` logged actions with `len` pairs each. Entry `i` logs
    /// action `i mod |A|` of a freshly drawn task.
    pub fn from_env(env: &Environment, n_entries: usize, len: usize, rng: &RngStream) -> Result<Self> {
        let n_actions = env.n_actions();
        let entries = (0..n_entries)
            .into_par_iter()
            .map(|i| {
                let a = i % n_actions;
                let d = env.sample_arm_sequence(a, len, &mut rng.indexed("pool-entry", i as u64))?;
                PoolEntry::new(a, d.z, &d.contexts, d.outcomes)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, i: usize) -> &PoolEntry {
        &self.entries[i]
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn min_len(&self) -> usize {
        self.entries.iter().map(PoolEntry::len).min().unwrap_or(0)
    }

    /// Rewrites every outcome; for building degenerate test pools.
    pub fn map_outcomes(&mut self, f: impl Fn(f64) -> f64) {
        for e in &mut self.entries {
            e.outcomes.iter_mut().for_each(|y| *y = f(*y));
        }
    }
}

/// `len` distinct indices below `n`. With `permute` the order is random,
/// otherwise ascending.
pub fn resample_indices(n: usize, len: usize, permute: bool, rng: &mut RngStream) -> Result<Vec<usize>> {
    if len > n {
        return Err(Error::Config(format!("cannot draw {len} distinct pairs from {n}")));
    }
    let mut idx = index::sample(rng, n, len).into_vec();
    if !permute {
        idx.sort_unstable();
    }
    Ok(idx)
}

/// A length-`len` sequence drawn without replacement from entry `i`.
pub fn resample_sequence(pool: &HistoricalPool, i: usize, len: usize, rng: &mut RngStream) -> Result<Vec<(Vec<f64>, f64)>> {
    let e = pool.entry(i);
    Ok(resample_indices(e.len(), len, true, rng)?
        .into_iter()
        .map(|j| (e.context(j).to_vec(), e.outcomes[j]))
        .collect())
}
