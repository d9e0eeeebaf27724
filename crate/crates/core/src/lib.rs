//! Generative Thompson sampling for meta contextual bandits.
//!
//! A sequence model trained offline on past tasks imputes the missing entries
//! of a task's potential-outcome table; a policy fitted to the imputed table
//! picks the next action. The crate also ships the baselines, a simulation
//! harness and numerical checks of the regret analysis.

pub mod domain;
pub mod env;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod rng;
pub mod seqmodel;
pub mod training;
pub mod generation;
pub mod policy;
pub mod agents;

pub use domain::{Context, History, PriorInfo, RewardFn, Step, TaskInstance};
pub use error::{Error, Result};
pub use rng::RngStream;
