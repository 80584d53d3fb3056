//! Joint tropical-cyclone hazard assessment on discrete Bayesian networks.
//!
//! The crate is organized as a pipeline:
//!
//! * [`bn`] — a general discrete-factor engine: factors over named
//!   variables, products, marginalization, evidence reduction, and
//!   variable-elimination queries.
//! * [`climatology`] — continuous storm-parameter models at landfall:
//!   per-class marginal distributions, a directional heading model, and a
//!   rank-dependence model tying them together through a Gaussian copula.
//! * [`discretize`] — hyper-rectangle discretization of the continuous
//!   climatology into a joint probability table and its factorization into
//!   conditional probability tables, plus landfall-track geometry.
//! * [`surrogate`] — storm-response surrogate models and Monte-Carlo
//!   construction of response CPTs, including the model-error channel.
//! * [`hazard`] — network assembly and forward hazard products: marginal
//!   hazard curves, annualized rates, and joint exceedance surfaces.
//! * [`deagg`] — backward inference: evidence-conditioned deaggregation of
//!   storm parameters and conditional hazard curves.
//! * [`config`] / [`study`] — serializable study configuration and the
//!   end-to-end orchestration used by the command-line front end.

pub mod bn;
pub mod climatology;
pub mod config;
pub mod deagg;
pub mod discretize;
pub mod hazard;
pub mod nodes;
pub mod stats;
pub mod study;
pub mod surrogate;
