//! Discrete Bayesian-network engine.
//!
//! Factors are dense tables over named discrete variables with row-major
//! storage in which the **last** scope variable varies fastest. Conditional
//! probability tables follow the convention `[parents..., child]`, so each
//! parent combination owns one contiguous row of child probabilities.

mod factor;
mod infer;
mod json;
mod network;

pub use factor::{Evidence, Factor, FactorError, VarId};
pub use infer::{
    enumerate_joint, min_fill_order, query, query_with_order, InferError, QueryResult,
};
pub use json::{DocIssue, FactorDoc, NetworkDoc, ScopeEntry, VariableDoc};
pub use network::{DiscreteNetwork, NetworkError, Violation};
