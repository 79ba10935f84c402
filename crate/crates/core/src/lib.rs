//! Covariate-assisted seeded graph matching.
//!
//! Given a reference graph `A` with edge and node covariates, an observed
//! graph `B̃` whose non-seed vertices are shuffled, and a set of seed vertices
//! aligned across both, the library
//!
//! 1. fits a generalized linear model of `B̃` on `A` and the covariates over
//!    the seed block ([`glm`]),
//! 2. predicts the edge probability matrix `P̂` on all pairs, and
//! 3. recovers the vertex correspondence either by a seeded quadratic
//!    assignment relaxation ([`qap`]) or by a linear assignment over seed
//!    neighborhoods ([`assign`]).
//!
//! Baselines without covariates, the simulation harness and brute-force
//! oracles live alongside.

pub mod assign;
pub mod covariates;
pub mod error;
pub mod glm;
pub mod graph;
pub mod matchers;
pub mod qap;
pub mod simulate;

pub use nalgebra;

pub use assign::{brute_force_lap, solve_lap, CostMatrix, Sense};
pub use covariates::{
    build_design_row, seed_block_rows, seed_pairs, transform_node_pair, CovariateBundle, DesignRow,
    TransformKind,
};
pub use error::{Error, Result};
pub use glm::{
    fit_glm, glm_gradient_hessian, glm_loss, predict_prob_matrix, FitOptions, GlmFit, LinkKind,
    ProbMatrix,
};
pub use graph::{
    apply_permutation, edge_disagreement, invert_permutation, matching_error, Graph, Permutation,
    SeedSet,
};
pub use matchers::{
    avg_sim, cov_neigh, cov_qap, no_cov_neigh, no_cov_qap, run_method, MatchConfig, MatchResult,
    Method,
};
pub use qap::{brute_force_qap, qap_objective, seeded_faq, DoublyStochastic, FaqInit, FaqOptions};
pub use simulate::{
    run_experiment, run_experiment_sequential, write_tidy_csv, ExperimentSummary, Setup, SimConfig,
};
