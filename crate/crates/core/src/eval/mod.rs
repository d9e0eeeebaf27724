//! Measurement: regret runs, entropy, the regret bound, and enumeration
//! oracles on the discrete environment.

pub mod bound;
pub mod entropy;
pub mod experiment;
pub mod lossdecomp;
pub mod posterior;
pub mod vc;

pub use bound::{entropy_regret_bound, misspecified_regret_bound, regret_bound_report, BoundReport};
pub use entropy::{
    conditional_entropy, conditional_entropy_bruteforce, conditional_entropy_exact, conditional_entropy_plugin,
    EntropyEstimate, ENUMERATION_CAP,
};
pub use experiment::{paired_difference, run_experiment, ExperimentSpec, RegretTrace, TaskTrace, TRACE_CSV_HEADER};
pub use lossdecomp::{loss_decomposition, LossDecomposition};
pub use posterior::{
    enumerate_posterior, exact_action_probabilities, imputed_distribution, table_key, total_variation, TableDist,
    TableKey,
};
pub use vc::{
    entropy_within_vc_bound, halfspace_labelings, sauer_shelah_bound, sauer_shelah_count, verify_entropy_vc,
    verify_witnesses, VcReport, Witness, PLANAR_AFFINE_VC_DIM,
};
