//! Deterministic discrete-event cluster.
//!
//! All distributed runs go through [`run_simulation`]: logical workers share
//! one [`SspTable`](crate::store::SspTable), links carry real encoded message
//! sizes, and every state change is appended to a [`SimTrace`] that
//! [`replay`] can re-check offline.

mod cluster;
mod config;
mod metrics;
mod replay;
mod threaded;

use thiserror::Error;

pub use cluster::run_simulation;
pub use config::{inject_straggler, random_stragglers, rotating_straggler, SimConfig, Straggler};
pub use metrics::{Metrics, MetricsError, MetricsRow, METRICS_HEADER};
pub use replay::{replay, replay_all, Invariant, InvariantResult, ReplayReport};
pub use threaded::{run_threaded, ThreadedOutput};

use crate::engine::{EngineError, ModelState};
use crate::fabric::{CodecError, FabricError, TrafficReport};
use crate::sched::SchedError;
use crate::store::StoreError;
use crate::trace::SimTrace;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Sched(#[from] SchedError),
    #[error(transparent)]
    Fabric(#[from] FabricError),
    #[error("event queue deadlocked at tick {tick}:\n{dump}")]
    Deadlock { tick: u64, dump: String },
    #[error("simulation exceeded {0} ticks")]
    TickLimit(u64),
}

impl From<CodecError> for SimError {
    fn from(e: CodecError) -> Self {
        SimError::Fabric(FabricError::Codec(e))
    }
}

/// Ticks each worker spent in each state, up to the halt.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WorkerTime {
    pub computing: u64,
    pub blocked: u64,
    pub idle: u64,
}

impl WorkerTime {
    pub fn total(&self) -> u64 {
        self.computing + self.blocked + self.idle
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSummary {
    /// Tick at which the run halted.
    pub ticks: u64,
    pub iterations: u64,
    pub final_objective: f64,
    pub blocked_ticks: u64,
    pub extra_passes: u64,
    /// Δ evaluations as counted by the program.
    pub evaluations: u64,
    pub bytes_sent: u64,
    pub messages: u64,
    pub mean_staleness: f64,
    pub max_staleness: u64,
    pub worker_time: Vec<WorkerTime>,
}

impl SimSummary {
    pub fn blocked_fraction(&self) -> f64 {
        let total: u64 = self.worker_time.iter().map(|w| w.total()).sum();
        if total == 0 {
            0.0
        } else {
            self.blocked_ticks as f64 / total as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    /// Snapshot of the last globally complete iteration.
    pub state: ModelState,
    pub trace: SimTrace,
    pub metrics: Metrics,
    pub traffic: TrafficReport,
    pub summary: SimSummary,
    /// Snapshot after every iteration, starting with `A(0)`; empty unless
    /// `record_trajectory` is set.
    pub trajectory: Vec<Vec<f64>>,
}
