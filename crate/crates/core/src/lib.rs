//! Simulation laboratory for the B-ary tree push-pull (BTPP) method and
//! baseline decentralized SGD variants.
//!
//! The crate is split along the data flow of an experiment:
//!
//! * [`numerics`] — dense matrices, sparse 0/1 mixing application, norms,
//!   and deterministic keyed random streams,
//! * [`topology`] — B-ary spanning trees, their pull/push mixing matrices,
//!   and closed-form matrix powers,
//! * [`problems`] — synthetic logistic regression and quadratic test
//!   problems with exact and stochastic first-order oracles,
//! * [`algorithms`] — one-step update rules (BTPP, centralized SGD,
//!   ring DSGD) and step-size schedules,
//! * [`simulator`] — experiment driver with interchangeable matrix/message
//!   engines, metrics collection, and communication audits.
//!
//! Everything is deterministic given a root seed: random draws come from
//! per-(seed, agent, purpose, iteration) ChaCha streams and all reductions
//! run in a fixed order, so a run reproduces bit-for-bit across engines and
//! thread counts.

pub mod algorithms;
pub mod error;
pub mod numerics;
pub mod problems;
pub mod simulator;
pub mod topology;

pub use error::{Error, Result};
pub use numerics::{DenseMatrix, RngStream};
pub use problems::{Problem, ProblemSpec};
pub use simulator::{run_experiment, Engine, MetricsRecord, RunConfig};
pub use topology::{BAryTree, MixingMatrix};
