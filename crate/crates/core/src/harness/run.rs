use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::config::{AlgorithmSpec, DataSpec, ExperimentConfig, SchedulerKind};
use super::{io, write_file, HarnessError};
use crate::algorithms::synthetic::{block_correlated_lasso, planted_lasso, separable_mlr, zipf_corpus};
use crate::algorithms::{AlgoError, Corpus, LassoData, LassoProgram, LdaProgram, MlrData, MlrProgram};
use crate::engine::StoppingCriterion;
use crate::fabric::{Shape, Topology};
use crate::matrix::DenseMatrix;
use crate::sched::{
    build_rotation_plan, RandomParallel, RotationSchedule, RoundRobin, SapConfig, SapScheduler,
    ScheduleSource, ShardSchedule,
};
use crate::sim::{replay_all, run_simulation, ReplayReport, SimConfig, SimOutput};
use crate::store::StalenessConfig;

/// Files written by [`write_outputs`], in order.
pub const OUTPUT_FILES: [&str; 4] = ["metrics.csv", "trace.csv", "traffic.csv", "summary.txt"];

/// A dataset plus whatever ground truth its generator knows.
pub(crate) enum Dataset {
    Lasso {
        x: DenseMatrix,
        y: Vec<f64>,
        coef: Option<Vec<f64>>,
        support: Option<Vec<usize>>,
    },
    Lda {
        corpus: Corpus,
        topics: Option<Vec<Vec<f64>>>,
    },
    Mlr {
        data: MlrData,
        weights: Option<Vec<f64>>,
    },
}

fn algo(e: AlgoError) -> HarnessError {
    HarnessError::Config(e.to_string())
}

pub(crate) fn materialize(spec: &DataSpec, base: &Path, seed: u64) -> Result<Dataset, HarnessError> {
    let at = |p: &PathBuf| base.join(p);
    Ok(match spec {
        DataSpec::Lasso { n, m, k_true, noise, blocks } => {
            let p = match blocks {
                Some((b, rho)) => block_correlated_lasso(*n, *m, *b, *rho, *k_true, *noise, seed),
                None => planted_lasso(*n, *m, *k_true, *noise, seed),
            };
            Dataset::Lasso {
                x: p.x,
                y: p.y,
                coef: Some(p.coef),
                support: Some(p.support),
            }
        }
        DataSpec::Lda { docs, vocab, topics, doc_len, zipf } => {
            let z = zipf_corpus(*docs, *vocab, *topics, *doc_len, *zipf, seed);
            Dataset::Lda {
                corpus: z.corpus,
                topics: Some(z.topics),
            }
        }
        DataSpec::Mlr { n, classes, features, margin } => {
            let s = separable_mlr(*n, *classes, *features, *margin, seed);
            Dataset::Mlr {
                data: s.data,
                weights: Some(s.weights),
            }
        }
        DataSpec::LassoFiles { x, y } => {
            let xm = io::read_matrix_market(&at(x))?;
            let yv = io::read_vector(&at(y))?;
            if yv.len() != xm.rows() {
                return Err(HarnessError::Config(format!(
                    "[data] y: {} values for a {}-row X",
                    yv.len(),
                    xm.rows()
                )));
            }
            Dataset::Lasso {
                x: xm,
                y: yv,
                coef: None,
                support: None,
            }
        }
        DataSpec::LdaFiles { corpus } => Dataset::Lda {
            corpus: io::read_bag_of_words(&at(corpus))?,
            topics: None,
        },
        DataSpec::MlrFiles { x, labels, classes } => {
            let xm = io::read_matrix_market(&at(x))?;
            let l = io::read_labels(&at(labels))?;
            Dataset::Mlr {
                data: MlrData::new(xm, l, *classes).map_err(algo)?,
                weights: None,
            }
        }
    })
}

/// Everything one run produces, before it is written anywhere.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub metrics_csv: String,
    pub trace: Vec<u8>,
    pub traffic_csv: String,
    pub summary: String,
    pub replay: ReplayReport,
    /// Algorithm-specific post-run check that failed, if any.
    pub state_error: Option<String>,
}

impl RunArtifacts {
    pub fn passed(&self) -> bool {
        self.replay.all_passed() && self.state_error.is_none()
    }

    /// Human-readable account of what failed, empty when nothing did.
    pub fn failures(&self) -> String {
        let mut out = String::new();
        for r in self.replay.results.iter().filter(|r| !r.passed()) {
            let _ = writeln!(out, "{}: {} violations, first: {}", r.invariant.name(), r.violations, r.detail);
        }
        if let Some(e) = &self.state_error {
            let _ = writeln!(out, "model state: {e}");
        }
        out
    }
}

fn sim_config(cfg: &ExperimentConfig, shape: Option<Shape>) -> Result<SimConfig, HarnessError> {
    let r = &cfg.runtime;
    let mut sc = SimConfig::new(r.workers, r.seed);
    sc.bandwidth = r.bandwidth;
    sc.latency = r.latency;
    sc.stragglers = r.stragglers.clone();
    sc.ticks_per_unit = r.ticks_per_unit;
    sc.codec = r.codec;
    sc.priority = r.priority;
    sc.managed = r.managed;
    sc.window = r.window;
    sc.shape = shape;
    sc.slow_worker_passes = r.slow_worker_passes;
    sc.stop = match r.tolerance {
        Some(t) => StoppingCriterion::new(r.iterations, t, r.stop_window),
        None => StoppingCriterion::iterations(r.iterations),
    }
    .map_err(|e| HarnessError::Config(format!("[runtime] {e}")))?;
    Ok(sc)
}

/// Runs `cfg` on the simulated cluster. Invariant failures found by the
/// post-run checks are reported in the artifacts, not as an error, so the
/// caller can still write the trace that shows them.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunArtifacts, HarnessError> {
    let r = &cfg.runtime;
    let topo = Topology::build(r.topology, r.workers, r.servers)
        .map_err(|e| HarnessError::Config(format!("[runtime] topology: {e}")))?;
    let staleness = StalenessConfig { s: r.staleness };
    let dataset = materialize(&cfg.data, &cfg.base_dir, r.seed)?;
    let mut notes = Vec::new();
    let (out, state_error) = match (&cfg.algorithm, dataset) {
        (AlgorithmSpec::Lasso { lambda, scheduler, kappa, pool }, Dataset::Lasso { x, y, support, .. }) => {
            let data = Arc::new(LassoData::new(x, y).map_err(algo)?);
            let m = data.m();
            let prog = match lambda {
                Some(l) => LassoProgram::new(m, *l),
                None => LassoProgram::for_data(&data),
            }
            .map_err(algo)?;
            let mut sap = SapConfig::new(r.workers, r.seed);
            sap.kappa = *kappa;
            sap.pool_size = *pool;
            let count = sap.pool(m);
            let mut sched: Box<dyn ScheduleSource<Vec<usize>>> = match scheduler {
                SchedulerKind::Sap => Box::new(SapScheduler::new(data.clone(), data.coordinate_costs(), sap)?),
                SchedulerKind::Random => Box::new(RandomParallel::new(m, r.workers, count, r.seed)?),
                SchedulerKind::RoundRobin => Box::new(RoundRobin::new(m, r.workers, count)?),
            };
            let out = run_simulation(&prog, &*data, &mut sched, &topo, staleness, &sim_config(cfg, None)?)?;
            notes.push(format!("scheduler: {}", scheduler.name()));
            notes.push(format!("lambda: {}", prog.lambda()));
            let nnz = out.state.values.iter().filter(|v| **v != 0.0).count();
            notes.push(format!("nonzero coefficients: {nnz} of {m}"));
            if let Some(s) = support {
                let hit = s.iter().filter(|&&j| out.state.values[j] != 0.0).count();
                notes.push(format!("true support recovered: {hit} of {}", s.len()));
            }
            (out, None)
        }
        (AlgorithmSpec::Lda { topics, alpha, beta }, Dataset::Lda { corpus, .. }) => {
            let prog = LdaProgram::with_priors(
                &corpus,
                *topics,
                alpha.unwrap_or(50.0 / *topics as f64),
                beta.unwrap_or(0.01),
            )
            .map_err(algo)?;
            let plan = build_rotation_plan(&corpus.doc_lengths(), corpus.vocab(), r.workers)?;
            let mut sched = RotationSchedule::new(plan);
            let out = run_simulation(&prog, &corpus, &mut sched, &topo, staleness, &sim_config(cfg, None)?)?;
            notes.push(format!("tokens: {}", corpus.n_tokens()));
            let err = prog.check_counts(&out.state.values, &corpus).err().map(|e| e.to_string());
            (out, err)
        }
        (AlgorithmSpec::Mlr { batch, eta0 }, Dataset::Mlr { data, .. }) => {
            let prog = MlrProgram::new(data.classes(), data.features(), *eta0, *batch).map_err(algo)?;
            let mut sched = ShardSchedule::new(data.len(), r.workers)?;
            let shape = Shape::new(data.classes(), data.features());
            let out = run_simulation(&prog, &data, &mut sched, &topo, staleness, &sim_config(cfg, Some(shape))?)?;
            notes.push(format!("training accuracy: {:.4}", prog.accuracy(&out.state.values, &data)));
            (out, None)
        }
        _ => unreachable!("config parsing pairs data with its algorithm"),
    };
    let replay = replay_all(&out.trace);
    let summary = summary(cfg, &out, &notes, &replay, state_error.as_deref());
    Ok(RunArtifacts {
        metrics_csv: out.metrics.to_csv(),
        trace: out.trace.to_bytes(),
        traffic_csv: out.traffic.to_csv(),
        summary,
        replay,
        state_error,
    })
}

fn summary(
    cfg: &ExperimentConfig,
    out: &SimOutput,
    notes: &[String],
    replay: &ReplayReport,
    state_error: Option<&str>,
) -> String {
    let r = &cfg.runtime;
    let s = &out.summary;
    let mut t = String::new();
    let _ = writeln!(t, "algorithm: {}", cfg.algorithm.name());
    let _ = writeln!(t, "workers: {}", r.workers);
    let _ = writeln!(t, "staleness: {}", r.staleness);
    let _ = writeln!(t, "topology: {}", r.topology.name());
    let _ = writeln!(t, "codec: {}", r.codec.name());
    let _ = writeln!(t, "seed: {}", r.seed);
    for n in notes {
        let _ = writeln!(t, "{n}");
    }
    let _ = writeln!(t, "iterations: {}", s.iterations);
    let _ = writeln!(t, "ticks: {}", s.ticks);
    let _ = writeln!(t, "final objective: {:e}", s.final_objective);
    let _ = writeln!(t, "blocked-tick fraction: {:.6}", s.blocked_fraction());
    let _ = writeln!(t, "blocked ticks: {}", s.blocked_ticks);
    let _ = writeln!(t, "extra passes: {}", s.extra_passes);
    let _ = writeln!(t, "update evaluations: {}", s.evaluations);
    let _ = writeln!(t, "bytes sent: {}", s.bytes_sent);
    let _ = writeln!(t, "messages: {}", s.messages);
    let _ = writeln!(t, "max queueing delay: {}", out.traffic.max_delay());
    let _ = writeln!(t, "read staleness: mean {:.4}, max {}", s.mean_staleness, s.max_staleness);
    let _ = writeln!(t, "checks:");
    for line in replay.to_string().lines() {
        let _ = writeln!(t, "  {line}");
    }
    match state_error {
        None => {
            if cfg.algorithm.name() == "lda" {
                let _ = writeln!(t, "  PASS topic counts");
            }
        }
        Some(e) => {
            let _ = writeln!(t, "  FAIL topic counts ({e})");
        }
    }
    t
}

/// Writes the four output files into `dir` and returns their paths.
pub fn write_outputs(a: &RunArtifacts, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let paths: Vec<PathBuf> = OUTPUT_FILES.iter().map(|f| dir.join(f)).collect();
    write_file(&paths[0], &a.metrics_csv)?;
    write_file(&paths[1], &a.trace)?;
    write_file(&paths[2], &a.traffic_csv)?;
    write_file(&paths[3], &a.summary)?;
    Ok(paths)
}
