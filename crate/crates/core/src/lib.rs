//! Content-blind copying dynamics on homophilous two-type networks.
//!
//! The crate builds planted-partition graphs, runs voter-model (and biased)
//! copying of a binary cultural trait over them, and measures how strongly
//! the trait becomes associated with the fixed social type. Community
//! detection by edge-betweenness removal provides the strata for a
//! conditional independence test that separates neutral from biased
//! transmission.

pub mod community;
pub mod dynamics;
pub mod error;
pub mod graph;
pub mod harness;
pub mod io;
pub mod rng;
pub mod stats;

pub use community::{edge_betweenness, girvan_newman, modularity, Dendrogram, Partition};
pub use dynamics::{
    exact_absorption_oracle, init_uniform_traits, is_absorbed, run, BiasMatrix, CulturalState,
    RunConfig, Stepper, TrajectoryRecord,
};
pub use error::{Error, Result};
pub use graph::{
    connected_components, generate_planted_partition, mixing_summary, ConnectivityPolicy,
    GeneratorParams, Graph, MixingSummary, SocialTypes, TypeAssignment,
};
pub use stats::{
    chi_squared, chi_squared_survival, conditional_chi_squared, contingency_from_state,
    permutation_test_conditional, ChiSquaredResult, ContingencyTable, PermutationTestResult,
};

/// Version string echoed into every emitted metadata block.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
