use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::ini::{Ini, Section};
use super::{read_file, HarnessError};
use crate::fabric::{Codec, PriorityMode, TopologyKind};
use crate::sim::Straggler;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchedulerKind {
    Sap,
    Random,
    RoundRobin,
}

impl SchedulerKind {
    pub fn name(self) -> &'static str {
        match self {
            SchedulerKind::Sap => "sap",
            SchedulerKind::Random => "random",
            SchedulerKind::RoundRobin => "round_robin",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sap" => Some(SchedulerKind::Sap),
            "random" => Some(SchedulerKind::Random),
            "round_robin" => Some(SchedulerKind::RoundRobin),
            _ => None,
        }
    }
}

/// Where the dataset comes from. Paths are relative to the config file.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSpec {
    Lasso {
        n: usize,
        m: usize,
        k_true: usize,
        noise: f64,
        /// Correlated column blocks `(size, rho)`; `None` is an i.i.d. design.
        blocks: Option<(usize, f64)>,
    },
    Lda {
        docs: usize,
        vocab: usize,
        topics: usize,
        doc_len: usize,
        zipf: f64,
    },
    Mlr {
        n: usize,
        classes: usize,
        features: usize,
        margin: f64,
    },
    LassoFiles {
        x: PathBuf,
        y: PathBuf,
    },
    LdaFiles {
        corpus: PathBuf,
    },
    MlrFiles {
        x: PathBuf,
        labels: PathBuf,
        classes: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum AlgorithmSpec {
    Lasso {
        /// `None` picks a data-dependent default.
        lambda: Option<f64>,
        scheduler: SchedulerKind,
        kappa: f64,
        /// Coordinates per round; `None` uses the scheduler default.
        pool: Option<usize>,
    },
    Lda {
        topics: usize,
        alpha: Option<f64>,
        beta: Option<f64>,
    },
    Mlr {
        batch: usize,
        eta0: f64,
    },
}

impl AlgorithmSpec {
    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmSpec::Lasso { .. } => "lasso",
            AlgorithmSpec::Lda { .. } => "lda",
            AlgorithmSpec::Mlr { .. } => "mlr",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeSpec {
    pub workers: usize,
    pub staleness: u64,
    pub topology: TopologyKind,
    pub servers: usize,
    pub codec: Codec,
    pub priority: PriorityMode,
    pub managed: bool,
    pub bandwidth: u64,
    pub latency: u64,
    pub ticks_per_unit: f64,
    pub window: Option<u64>,
    pub stragglers: Vec<Straggler>,
    pub slow_worker_passes: bool,
    pub iterations: u64,
    /// Relative objective change below which the run stops early.
    pub tolerance: Option<f64>,
    pub stop_window: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSpec,
    pub algorithm: AlgorithmSpec,
    pub runtime: RuntimeSpec,
    /// Directory that relative data paths are resolved against.
    pub base_dir: PathBuf,
}

const DATA_KEYS: &[&str] = &[
    "source", "n", "m", "k_true", "noise", "block", "rho", "docs", "vocab", "topics", "doc_len",
    "zipf", "classes", "features", "margin", "x", "y", "corpus", "labels",
];
const ALGO_KEYS: &[&str] = &[
    "name", "lambda", "scheduler", "kappa", "pool", "topics", "alpha", "beta", "batch", "eta0",
];
const RUNTIME_KEYS: &[&str] = &[
    "workers", "staleness", "topology", "servers", "codec", "priority", "managed", "bandwidth",
    "latency", "ticks_per_unit", "window", "stragglers", "slow_worker_passes", "iterations",
    "tolerance", "stop_window", "seed",
];

/// Typed access to one section with field-level error messages.
struct Fields<'a> {
    name: &'static str,
    sec: Option<&'a Section>,
}

impl<'a> Fields<'a> {
    fn new(ini: &'a Ini, name: &'static str, allowed: &[&str]) -> Result<Self, HarnessError> {
        Self::of(ini.section(name), name, allowed)
    }

    fn of(sec: Option<&'a Section>, name: &'static str, allowed: &[&str]) -> Result<Self, HarnessError> {
        if let Some(s) = sec {
            for (k, _) in &s.entries {
                if !allowed.contains(&k.as_str()) {
                    return Err(HarnessError::Config(format!(
                        "[{name}] unknown key `{k}` (allowed: {})",
                        allowed.join(", ")
                    )));
                }
            }
        }
        Ok(Self { name, sec })
    }

    fn err(&self, key: &str, msg: impl std::fmt::Display) -> HarnessError {
        HarnessError::Config(format!("[{}] {key}: {msg}", self.name))
    }

    fn raw(&self, key: &str) -> Option<&'a str> {
        self.sec.and_then(|s| s.get(key))
    }

    fn opt<T: FromStr>(&self, key: &str, what: &str) -> Result<Option<T>, HarnessError> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| self.err(key, format!("expected {what}, got `{v}`"))),
        }
    }

    fn or<T: FromStr>(&self, key: &str, what: &str, default: T) -> Result<T, HarnessError> {
        Ok(self.opt(key, what)?.unwrap_or(default))
    }

    fn req<T: FromStr>(&self, key: &str, what: &str) -> Result<T, HarnessError> {
        self.opt(key, what)?
            .ok_or_else(|| self.err(key, format!("required ({what})")))
    }

    fn positive(&self, key: &str, default: Option<usize>) -> Result<usize, HarnessError> {
        let v: usize = match default {
            Some(d) => self.or(key, "a positive integer", d)?,
            None => self.req(key, "a positive integer")?,
        };
        if v == 0 {
            return Err(self.err(key, "must be at least 1"));
        }
        Ok(v)
    }

    fn real(&self, key: &str, default: Option<f64>, ok: impl Fn(f64) -> bool, rule: &str) -> Result<f64, HarnessError> {
        let v: f64 = match default {
            Some(d) => self.or(key, "a number", d)?,
            None => self.req(key, "a number")?,
        };
        if !v.is_finite() || !ok(v) {
            return Err(self.err(key, format!("must be {rule}, got {v}")));
        }
        Ok(v)
    }

    fn choice<T>(&self, key: &str, default: Option<T>, parse: impl Fn(&str) -> Option<T>, names: &[&str]) -> Result<T, HarnessError> {
        match self.raw(key) {
            None => default.ok_or_else(|| self.err(key, format!("required (one of {})", names.join(", ")))),
            Some(v) => parse(v).ok_or_else(|| {
                self.err(key, format!("unknown value `{v}` (expected one of {})", names.join(", ")))
            }),
        }
    }

    fn path(&self, key: &str, base: &Path) -> Result<PathBuf, HarnessError> {
        let p: String = self.req(key, "a file path")?;
        let full = base.join(&p);
        if !full.is_file() {
            return Err(self.err(key, format!("file `{}` does not exist", full.display())));
        }
        Ok(PathBuf::from(p))
    }
}

fn parse_stragglers(f: &Fields, workers: usize) -> Result<Vec<Straggler>, HarnessError> {
    let Some(raw) = f.raw("stragglers") else {
        return Ok(Vec::new());
    };
    let key = "stragglers";
    let mut out = Vec::new();
    for item in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let parts: Vec<&str> = item.split(':').map(str::trim).collect();
        let bad = || f.err(key, format!("`{item}` is not worker:factor or worker:factor:start:duration"));
        if parts.len() != 2 && parts.len() != 4 {
            return Err(bad());
        }
        let worker: usize = parts[0].parse().map_err(|_| bad())?;
        let factor: f64 = parts[1].parse().map_err(|_| bad())?;
        if worker >= workers {
            return Err(f.err(key, format!("worker {worker} does not exist (workers = {workers})")));
        }
        if !(factor >= 1.0) || !factor.is_finite() {
            return Err(f.err(key, format!("slowdown factor must be >= 1, got {factor}")));
        }
        let mut s = Straggler::always(worker, factor);
        if parts.len() == 4 {
            s.start = parts[2].parse().map_err(|_| bad())?;
            s.duration = parts[3].parse().map_err(|_| bad())?;
        }
        out.push(s);
    }
    Ok(out)
}

fn format_stragglers(list: &[Straggler]) -> String {
    list.iter()
        .map(|s| {
            if s.start == 0 && s.duration == u64::MAX {
                format!("{}:{}", s.worker, s.factor)
            } else {
                format!("{}:{}:{}:{}", s.worker, s.factor, s.start, s.duration)
            }
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn synthetic(d: &Fields, kind: &str) -> Result<DataSpec, HarnessError> {
    Ok(match kind {
        "lasso" => DataSpec::Lasso {
            n: d.positive("n", None)?,
            m: d.positive("m", None)?,
            k_true: d.or("k_true", "a non-negative integer", 10)?,
            noise: d.real("noise", Some(0.1), |x| x >= 0.0, ">= 0")?,
            blocks: match (d.raw("block"), d.raw("rho")) {
                (None, None) => None,
                _ => Some((d.positive("block", None)?, d.real("rho", None, |x| (0.0..=1.0).contains(&x), "in [0, 1]")?)),
            },
        },
        "lda" => DataSpec::Lda {
            docs: d.positive("docs", None)?,
            vocab: d.positive("vocab", None)?,
            topics: d.positive("topics", None)?,
            doc_len: d.positive("doc_len", None)?,
            zipf: d.real("zipf", Some(1.0), |x| x >= 0.0, ">= 0")?,
        },
        _ => DataSpec::Mlr {
            n: d.positive("n", None)?,
            classes: d.positive("classes", None)?,
            features: d.positive("features", None)?,
            margin: d.real("margin", Some(0.5), |x| x >= 0.0, ">= 0")?,
        },
    })
}

impl DataSpec {
    /// Generator parameters for `kind` (`lasso`, `lda` or `mlr`), with the
    /// same keys and defaults as a config's `[data]` section.
    pub fn synthetic(kind: &str, params: &Section) -> Result<Self, HarnessError> {
        let allowed: &[&str] = match kind {
            "lasso" => &["n", "m", "k_true", "noise", "block", "rho"],
            "lda" => &["docs", "vocab", "topics", "doc_len", "zipf"],
            "mlr" => &["n", "classes", "features", "margin"],
            _ => {
                return Err(HarnessError::Config(format!(
                    "unknown dataset kind `{kind}` (expected one of lasso, lda, mlr)"
                )))
            }
        };
        synthetic(&Fields::of(Some(params), "data", allowed)?, kind)
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = read_file(path)?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        Self::parse(&text, &base)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, HarnessError> {
        Self::from_ini(&Ini::parse(text)?, base_dir)
    }

    pub fn from_ini(ini: &Ini, base_dir: &Path) -> Result<Self, HarnessError> {
        for s in &ini.sections {
            if !["data", "algorithm", "runtime"].contains(&s.name.as_str()) {
                return Err(HarnessError::Config(format!(
                    "unknown section [{}] (allowed: data, algorithm, runtime)",
                    s.name
                )));
            }
        }
        let d = Fields::new(ini, "data", DATA_KEYS)?;
        let a = Fields::new(ini, "algorithm", ALGO_KEYS)?;
        let r = Fields::new(ini, "runtime", RUNTIME_KEYS)?;

        let name = a.choice("name", None, |s| ["lasso", "lda", "mlr"].contains(&s).then(|| s.to_string()), &["lasso", "lda", "mlr"])?;
        let algorithm = match name.as_str() {
            "lasso" => AlgorithmSpec::Lasso {
                lambda: match a.opt::<f64>("lambda", "a number")? {
                    Some(l) if !(l > 0.0) || !l.is_finite() => {
                        return Err(a.err("lambda", format!("must be > 0, got {l}")))
                    }
                    l => l,
                },
                scheduler: a.choice("scheduler", Some(SchedulerKind::Sap), SchedulerKind::parse, &["sap", "random", "round_robin"])?,
                kappa: a.real("kappa", Some(0.1), |k| (0.0..=1.0).contains(&k), "in [0, 1]")?,
                pool: match a.raw("pool") {
                    None => None,
                    Some(_) => Some(a.positive("pool", None)?),
                },
            },
            "lda" => AlgorithmSpec::Lda {
                topics: a.positive("topics", None)?,
                alpha: match a.raw("alpha") {
                    None => None,
                    Some(_) => Some(a.real("alpha", None, |x| x > 0.0, "> 0")?),
                },
                beta: match a.raw("beta") {
                    None => None,
                    Some(_) => Some(a.real("beta", None, |x| x > 0.0, "> 0")?),
                },
            },
            _ => AlgorithmSpec::Mlr {
                batch: a.positive("batch", Some(10))?,
                eta0: a.real("eta0", Some(0.1), |x| x > 0.0, "> 0")?,
            },
        };
        let misplaced: &[&str] = match algorithm {
            AlgorithmSpec::Lasso { .. } => &["topics", "alpha", "beta", "batch", "eta0"],
            AlgorithmSpec::Lda { .. } => &["lambda", "scheduler", "kappa", "pool", "batch", "eta0"],
            AlgorithmSpec::Mlr { .. } => &["lambda", "scheduler", "kappa", "pool", "topics", "alpha", "beta"],
        };
        if let Some(k) = misplaced.iter().find(|k| a.raw(k).is_some()) {
            return Err(a.err(k, format!("not used by algorithm `{name}`")));
        }

        let source = d.choice("source", Some("synthetic".to_string()), |s| ["synthetic", "files"].contains(&s).then(|| s.to_string()), &["synthetic", "files"])?;
        let data = match (source.as_str(), &algorithm) {
            ("synthetic", _) => synthetic(&d, &name)?,
            (_, AlgorithmSpec::Lasso { .. }) => DataSpec::LassoFiles {
                x: d.path("x", base_dir)?,
                y: d.path("y", base_dir)?,
            },
            (_, AlgorithmSpec::Lda { .. }) => DataSpec::LdaFiles {
                corpus: d.path("corpus", base_dir)?,
            },
            (_, AlgorithmSpec::Mlr { .. }) => DataSpec::MlrFiles {
                x: d.path("x", base_dir)?,
                labels: d.path("labels", base_dir)?,
                classes: d.positive("classes", None)?,
            },
        };
        let used: &[&str] = match data {
            DataSpec::Lasso { .. } => &["source", "n", "m", "k_true", "noise", "block", "rho"],
            DataSpec::Lda { .. } => &["source", "docs", "vocab", "topics", "doc_len", "zipf"],
            DataSpec::Mlr { .. } => &["source", "n", "classes", "features", "margin"],
            DataSpec::LassoFiles { .. } => &["source", "x", "y"],
            DataSpec::LdaFiles { .. } => &["source", "corpus"],
            DataSpec::MlrFiles { .. } => &["source", "x", "labels", "classes"],
        };
        if let Some(s) = d.sec {
            if let Some((k, _)) = s.entries.iter().find(|(k, _)| !used.contains(&k.as_str())) {
                return Err(d.err(k, format!("not used by {source} {name} data")));
            }
        }

        let workers = r.positive("workers", Some(4))?;
        let topology = r.choice("topology", Some(TopologyKind::FullP2P), TopologyKind::parse, &["p2p", "halton", "master_slave"])?;
        let codec_default = match algorithm {
            AlgorithmSpec::Mlr { .. } => Codec::SufficientFactor,
            _ => Codec::Sparse,
        };
        let runtime = RuntimeSpec {
            workers,
            staleness: r.or("staleness", "a non-negative integer", 0)?,
            topology,
            servers: r.positive("servers", Some(1))?,
            codec: r.choice("codec", Some(codec_default), Codec::parse, &["full", "sparse", "sf"])?,
            priority: r.choice("priority", Some(PriorityMode::AbsoluteMagnitude), PriorityMode::parse, &["fifo", "absolute", "relative"])?,
            managed: r.or("managed", "true or false", true)?,
            bandwidth: {
                let b: u64 = r.or("bandwidth", "a positive integer", 4096)?;
                if b == 0 {
                    return Err(r.err("bandwidth", "must be at least 1"));
                }
                b
            },
            latency: r.or("latency", "a non-negative integer", 2)?,
            ticks_per_unit: r.real("ticks_per_unit", Some(0.01), |x| x > 0.0, "> 0")?,
            window: r.opt("window", "a positive integer")?,
            stragglers: parse_stragglers(&r, workers)?,
            slow_worker_passes: r.or("slow_worker_passes", "true or false", false)?,
            iterations: r.positive("iterations", Some(50))? as u64,
            tolerance: match r.raw("tolerance") {
                None => None,
                Some(_) => Some(r.real("tolerance", None, |x| x > 0.0, "> 0")?),
            },
            stop_window: r.positive("stop_window", Some(1))? as u64,
            seed: r.or("seed", "a non-negative integer", 0)?,
        };
        if runtime.window == Some(0) {
            return Err(r.err("window", "must be at least 1"));
        }
        if r.raw("servers").is_some() && topology != TopologyKind::MasterSlave {
            return Err(r.err("servers", "only meaningful with topology = master_slave"));
        }
        Ok(Self {
            data,
            algorithm,
            runtime,
            base_dir: base_dir.to_path_buf(),
        })
    }

    pub fn to_ini(&self) -> Ini {
        let mut ini = Ini::default();
        let path = |p: &PathBuf| p.display().to_string();
        match &self.data {
            DataSpec::Lasso { n, m, k_true, noise, blocks } => {
                ini.set("data", "source", "synthetic");
                ini.set("data", "n", n);
                ini.set("data", "m", m);
                ini.set("data", "k_true", k_true);
                ini.set("data", "noise", noise);
                if let Some((b, rho)) = blocks {
                    ini.set("data", "block", b);
                    ini.set("data", "rho", rho);
                }
            }
            DataSpec::Lda { docs, vocab, topics, doc_len, zipf } => {
                ini.set("data", "source", "synthetic");
                ini.set("data", "docs", docs);
                ini.set("data", "vocab", vocab);
                ini.set("data", "topics", topics);
                ini.set("data", "doc_len", doc_len);
                ini.set("data", "zipf", zipf);
            }
            DataSpec::Mlr { n, classes, features, margin } => {
                ini.set("data", "source", "synthetic");
                ini.set("data", "n", n);
                ini.set("data", "classes", classes);
                ini.set("data", "features", features);
                ini.set("data", "margin", margin);
            }
            DataSpec::LassoFiles { x, y } => {
                ini.set("data", "source", "files");
                ini.set("data", "x", path(x));
                ini.set("data", "y", path(y));
            }
            DataSpec::LdaFiles { corpus } => {
                ini.set("data", "source", "files");
                ini.set("data", "corpus", path(corpus));
            }
            DataSpec::MlrFiles { x, labels, classes } => {
                ini.set("data", "source", "files");
                ini.set("data", "x", path(x));
                ini.set("data", "labels", path(labels));
                ini.set("data", "classes", classes);
            }
        }
        ini.set("algorithm", "name", self.algorithm.name());
        match &self.algorithm {
            AlgorithmSpec::Lasso { lambda, scheduler, kappa, pool } => {
                if let Some(l) = lambda {
                    ini.set("algorithm", "lambda", l);
                }
                ini.set("algorithm", "scheduler", scheduler.name());
                ini.set("algorithm", "kappa", kappa);
                if let Some(p) = pool {
                    ini.set("algorithm", "pool", p);
                }
            }
            AlgorithmSpec::Lda { topics, alpha, beta } => {
                ini.set("algorithm", "topics", topics);
                if let Some(x) = alpha {
                    ini.set("algorithm", "alpha", x);
                }
                if let Some(x) = beta {
                    ini.set("algorithm", "beta", x);
                }
            }
            AlgorithmSpec::Mlr { batch, eta0 } => {
                ini.set("algorithm", "batch", batch);
                ini.set("algorithm", "eta0", eta0);
            }
        }
        let r = &self.runtime;
        ini.set("runtime", "workers", r.workers);
        ini.set("runtime", "staleness", r.staleness);
        ini.set("runtime", "topology", r.topology.name());
        if r.topology == TopologyKind::MasterSlave {
            ini.set("runtime", "servers", r.servers);
        }
        ini.set("runtime", "codec", r.codec.name());
        ini.set("runtime", "priority", r.priority.name());
        ini.set("runtime", "managed", r.managed);
        ini.set("runtime", "bandwidth", r.bandwidth);
        ini.set("runtime", "latency", r.latency);
        ini.set("runtime", "ticks_per_unit", r.ticks_per_unit);
        if let Some(w) = r.window {
            ini.set("runtime", "window", w);
        }
        if !r.stragglers.is_empty() {
            ini.set("runtime", "stragglers", format_stragglers(&r.stragglers));
        }
        ini.set("runtime", "slow_worker_passes", r.slow_worker_passes);
        ini.set("runtime", "iterations", r.iterations);
        if let Some(t) = r.tolerance {
            ini.set("runtime", "tolerance", t);
        }
        ini.set("runtime", "stop_window", r.stop_window);
        ini.set("runtime", "seed", r.seed);
        ini
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LASSO: &str = "[data]\nn = 40\nm = 12\nk_true = 3\n\n[algorithm]\nname = lasso\n\n[runtime]\nworkers = 2\nstaleness = 1\n";

    fn parse(text: &str) -> Result<ExperimentConfig, HarnessError> {
        ExperimentConfig::parse(text, Path::new("."))
    }

    #[test]
    fn defaults_fill_in() {
        let c = parse(LASSO).unwrap();
        assert_eq!(c.runtime.workers, 2);
        assert_eq!(c.runtime.topology, TopologyKind::FullP2P);
        assert_eq!(c.runtime.codec, Codec::Sparse);
        assert!(matches!(c.algorithm, AlgorithmSpec::Lasso { scheduler: SchedulerKind::Sap, .. }));
    }

    #[test]
    fn field_level_errors() {
        for (patch, needle) in [
            ("staleness = 1", "staleness = -1"),
            ("workers = 2", "workers = 0"),
            ("workers = 2", "workers = 2\ntopology = ring"),
            ("workers = 2", "workers = 2\nstragglers = 5:2.0"),
            ("workers = 2", "workers = 2\nstragglers = 1:0.5"),
            ("workers = 2", "workers = 2\nfoo = 1"),
            ("name = lasso", "name = lasso\ntopics = 3"),
            ("name = lasso", "name = svm"),
        ] {
            let text = LASSO.replace(patch, needle);
            let e = parse(&text).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{needle}");
            let msg = e.to_string();
            assert!(msg.contains('[') && msg.contains(']'), "{needle}: {msg}");
        }
        let msg = parse(&LASSO.replace("staleness = 1", "staleness = -1")).unwrap_err().to_string();
        assert!(msg.contains("[runtime] staleness"), "{msg}");
    }

    #[test]
    fn missing_data_file_is_reported() {
        let text = "[data]\nsource = files\nx = nope.mtx\ny = nope.txt\n[algorithm]\nname = lasso\n";
        let msg = parse(text).unwrap_err().to_string();
        assert!(msg.contains("[data] x") && msg.contains("does not exist"), "{msg}");
    }

    fn runtime() -> impl Strategy<Value = RuntimeSpec> {
        (
            (1usize..9, 0u64..5, 0usize..3, 1usize..4, 0usize..3, 0usize..3, any::<bool>()),
            (1u64..100_000, 0u64..10, 1e-4f64..1.0, prop::option::of(1u64..10_000), any::<bool>()),
            (1u64..500, prop::option::of(1e-9f64..1e-2), 1u64..5, any::<u64>()),
            prop::collection::vec((1.0f64..10.0, prop::option::of((0u64..1000, 1u64..1000))), 0..3),
        )
            .prop_map(|((w, s, t, sv, c, p, mg), (bw, lat, tpu, win, swp), (it, tol, sw, seed), st)| {
                let topology = [TopologyKind::FullP2P, TopologyKind::Halton, TopologyKind::MasterSlave][t];
                RuntimeSpec {
                    workers: w,
                    staleness: s,
                    topology,
                    servers: if topology == TopologyKind::MasterSlave { sv } else { 1 },
                    codec: [Codec::Full, Codec::Sparse, Codec::SufficientFactor][c],
                    priority: [PriorityMode::Fifo, PriorityMode::AbsoluteMagnitude, PriorityMode::RelativeMagnitude][p],
                    managed: mg,
                    bandwidth: bw,
                    latency: lat,
                    ticks_per_unit: tpu,
                    window: win,
                    stragglers: st
                        .into_iter()
                        .enumerate()
                        .map(|(i, (f, span))| {
                            let mut x = Straggler::always(i % w, f);
                            if let Some((a, b)) = span {
                                x.start = a;
                                x.duration = b;
                            }
                            x
                        })
                        .collect(),
                    slow_worker_passes: swp,
                    iterations: it,
                    tolerance: tol,
                    stop_window: sw,
                    seed,
                }
            })
    }

    fn experiment() -> impl Strategy<Value = ExperimentConfig> {
        let lasso = (
            (1usize..500, 1usize..500, 0usize..50, 0.0f64..2.0, prop::option::of((1usize..20, 0.0f64..1.0))),
            (prop::option::of(1e-3f64..10.0), 0usize..3, 0.0f64..1.0, prop::option::of(1usize..64)),
        )
            .prop_map(|((n, m, k, noise, blocks), (lambda, s, kappa, pool))| {
                (
                    DataSpec::Lasso { n, m, k_true: k, noise, blocks },
                    AlgorithmSpec::Lasso {
                        lambda,
                        scheduler: [SchedulerKind::Sap, SchedulerKind::Random, SchedulerKind::RoundRobin][s],
                        kappa,
                        pool,
                    },
                )
            });
        let lda = (1usize..100, 1usize..100, 1usize..10, 1usize..50, 0.0f64..2.0, prop::option::of(0.01f64..5.0), prop::option::of(0.001f64..1.0))
            .prop_map(|(docs, vocab, topics, doc_len, zipf, alpha, beta)| {
                (
                    DataSpec::Lda { docs, vocab, topics, doc_len, zipf },
                    AlgorithmSpec::Lda { topics, alpha, beta },
                )
            });
        let mlr = (1usize..300, 1usize..10, 1usize..30, 0.0f64..2.0, 1usize..20, 1e-3f64..1.0).prop_map(
            |(n, classes, features, margin, batch, eta0)| {
                (DataSpec::Mlr { n, classes, features, margin }, AlgorithmSpec::Mlr { batch, eta0 })
            },
        );
        (prop_oneof![lasso, lda, mlr], runtime()).prop_map(|((data, algorithm), runtime)| ExperimentConfig {
            data,
            algorithm,
            runtime,
            base_dir: PathBuf::from("."),
        })
    }

    proptest! {
        #[test]
        fn config_round_trips(c in experiment()) {
            let text = c.to_ini().to_string();
            let back = parse(&text).unwrap();
            prop_assert_eq!(&back, &c);
            prop_assert_eq!(back.to_ini().to_string(), text);
        }
    }
}
