//! Online priced-query laboratory.
//!
//! A query strategy must compute a Boolean function `f` on a hidden input
//! `x` while each bit `x_i` only becomes visible once the strategy's
//! cumulative investment in it reaches a hidden cost `c_i`. This crate
//! provides the pieces needed to study that model at desk scale:
//!
//! - [`boolfn`]: Boolean functions, restrictions, influence and bias.
//! - [`dtree`]: decision trees, average depth, query probabilities and pruning.
//! - [`costsim`]: the investment/reveal environment and run transcripts.
//! - [`strategies`]: influence-proportional round robin and its relatives.
//! - [`oracle`]: exact offline benchmarks computed by dynamic programming.
//! - [`instances`]: generators for the AND, Tribes, address and hard instances.
//! - [`experiments`]: the reproducible experiment catalog used by the CLI.

pub mod boolfn;
pub mod costsim;
pub mod dtree;
mod error;
pub mod experiments;
pub mod format;
pub mod instances;
pub mod oracle;
pub mod seed;
pub mod strategies;

pub use boolfn::{Analysis, BooleanFunction, Family, InfluenceProfile, Point, Restriction, TruthTable};
pub use costsim::{CostVector, InvestmentState, QueryEnv, RunConfig, RunRecord, Strategy};
pub use dtree::DecisionTree;
pub use error::{Error, Result};
pub use instances::Instance;
