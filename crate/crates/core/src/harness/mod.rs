//! Experiment plumbing behind the `iterml` binary: INI configs, dataset
//! files, synthetic generation, config-driven runs and metric reports.

mod config;
mod gen;
mod ini;
pub mod io;
mod report;
mod run;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{AlgorithmSpec, DataSpec, ExperimentConfig, RuntimeSpec, SchedulerKind};
pub use gen::{generate, GenKind, Generated};
pub use ini::{Ini, Section};
pub use report::{report, Report, RunSeries};
pub use run::{run_experiment, write_outputs, RunArtifacts, OUTPUT_FILES};

use crate::sched::SchedError;
use crate::sim::SimError;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Bad config or input data; exit code 2.
    #[error("config error: {0}")]
    Config(String),
    /// A run broke a checked invariant; exit code 3.
    #[error("invariant violation: {0}")]
    Invariant(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Invariant(_) => 3,
            HarnessError::Io { .. } => 1,
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<SimError> for HarnessError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(m) => HarnessError::Config(m),
            other => HarnessError::Invariant(other.to_string()),
        }
    }
}

impl From<SchedError> for HarnessError {
    fn from(e: SchedError) -> Self {
        HarnessError::Config(e.to_string())
    }
}

pub(crate) fn read_file(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}
