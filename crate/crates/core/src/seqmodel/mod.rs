//! One-step predictive models `p(Y_t^{(a)} = 1 | Z^{(a)}, history of a, X_t)`.
//!
//! A model is immutable; the per-action in-context state is a separate value
//! that callers fold observations into.

mod basic;
mod mlp;
mod stats;

pub use basic::{BetaBernoulliModel, BetaState, ConstantModel, ExactMixtureModel, MixtureState};
pub use mlp::{Dense, MlpGrad, MlpSeqModel, MlpState, ModelProvenance, MODEL_FORMAT, MODEL_FORMAT_VERSION};
pub use stats::SummaryStats;

use crate::error::Result;

pub trait SequenceModel: Send + Sync {
    type State: Clone + Send + Sync + std::fmt::Debug;

    /// Empty history state for action `action` with prior features `z`.
    fn init_state(&self, action: usize, z: &[f64]) -> Result<Self::State>;

    /// Probability that the next outcome is 1 at context `x`.
    fn predict(&self, state: &Self::State, x: &[f64]) -> Result<f64>;

    fn update_state(&self, state: &mut Self::State, x: &[f64], y: f64) -> Result<()>;

    /// Predictions for several independent `(state, context)` pairs.
    fn predict_many(&self, items: &[(&Self::State, &[f64])]) -> Result<Vec<f64>> {
        items.iter().map(|(s, x)| self.predict(s, x)).collect()
    }

    /// State after folding a sequence of observations.
    fn state_for(&self, action: usize, z: &[f64], seq: &[(Vec<f64>, f64)]) -> Result<Self::State> {
        let mut s = self.init_state(action, z)?;
        for (x, y) in seq {
            self.update_state(&mut s, x, *y)?;
        }
        Ok(s)
    }
}

impl<M: SequenceModel + ?Sized> SequenceModel for &M {
    type State = M::State;

    fn init_state(&self, action: usize, z: &[f64]) -> Result<Self::State> {
        (**self).init_state(action, z)
    }

    fn predict(&self, state: &Self::State, x: &[f64]) -> Result<f64> {
        (**self).predict(state, x)
    }

    fn update_state(&self, state: &mut Self::State, x: &[f64], y: f64) -> Result<()> {
        (**self).update_state(state, x, y)
    }

    fn predict_many(&self, items: &[(&Self::State, &[f64])]) -> Result<Vec<f64>> {
        (**self).predict_many(items)
    }
}
