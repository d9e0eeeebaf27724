//! Deterministic, splittable random streams.
//!
//! A stream is keyed by `(experiment_seed, task_index, label)`. The key is
//! hashed into a ChaCha8 seed, so the draws a task sees never depend on how
//! many other tasks ran before it or on which thread ran it.

use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

const DOMAIN_TAG: &[u8] = b"genban/rng-stream/v1";

#[derive(Debug, Clone)]
pub struct RngStream {
    experiment_seed: u64,
    task_index: u64,
    label: String,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(experiment_seed: u64, task_index: u64, label: impl Into<String>) -> Self {
        let label = label.into();
        let mut hasher = Sha256::new();
        hasher.update(DOMAIN_TAG);
        hasher.update(experiment_seed.to_le_bytes());
        hasher.update(task_index.to_le_bytes());
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
        let seed: [u8; 32] = hasher.finalize().into();
        Self {
            experiment_seed,
            task_index,
            label,
            inner: ChaCha8Rng::from_seed(seed),
        }
    }

    /// Child stream for the same task. Labels compose with `/`.
    pub fn substream(&self, label: &str) -> Self {
        Self::new(
            self.experiment_seed,
            self.task_index,
            format!("{}/{}", self.label, label),
        )
    }

    /// Child stream keyed by an index, e.g. one per action or per epoch.
    pub fn indexed(&self, label: &str, index: u64) -> Self {
        self.substream(&format!("{label}#{index}"))
    }

    pub fn experiment_seed(&self) -> u64 {
        self.experiment_seed
    }

    pub fn task_index(&self) -> u64 {
        self.task_index
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Number of 32-bit words consumed so far.
    pub fn word_position(&self) -> u128 {
        self.inner.get_word_pos()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

impl CryptoRng for RngStream {}
