//! `iterml` is a runtime for iterative-convergent machine learning programs,
//! i.e. programs that repeat `A(t) = F(A(t-1), Δ(A(t-1), x))` until they stop
//! making progress.
//!
//! The crate is organised around the pieces such a runtime needs:
//!
//! - [`engine`]: the program abstraction and the sequential, data-parallel and
//!   model-parallel reference loops.
//! - [`store`]: a bounded-staleness (SSP) parameter table with per-worker views,
//!   plus an independent trace checker for the four staleness conditions.
//! - [`sched`]: structure-aware scheduling: dependency checks, independent
//!   subsets, prioritized sampling, LPT load balancing, slow-worker extra passes
//!   and the LDA block rotation.
//! - [`fabric`]: managed communication: topologies and routing, rate-limited
//!   priority queues, and the full/sparse/sufficient-factor wire codecs.
//! - [`algorithms`]: Lasso coordinate descent, collapsed Gibbs LDA and
//!   multiclass logistic regression with sufficient factors.
//! - [`sim`]: a deterministic discrete-event cluster on which all of the above
//!   run together, with a replayable event trace.
//! - [`harness`]: INI experiment configs, dataset files, synthetic
//!   generators and reports, as used by the `iterml` binary.

pub mod algorithms;
pub mod engine;
pub mod fabric;
pub mod harness;
pub mod matrix;
pub mod rng;
pub mod sched;
pub mod sim;
pub mod store;
pub mod trace;

pub use engine::{
    IcProgram, ModelState, Payload, RunOutput, Shardable, StoppingCriterion, UpdateDelta,
};
