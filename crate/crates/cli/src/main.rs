use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use iterml::harness::{
    self, generate, report, run_experiment, write_outputs, ExperimentConfig, GenKind, HarnessError,
    Ini, RunSeries,
};
use iterml::sim::{replay_all, Metrics};
use iterml::trace::SimTrace;

/// Simulated-cluster runner for iterative-convergent ML programs.
#[derive(Debug, Parser)]
#[command(name = "iterml", version)]
struct Cli {
    /// Overrides the seed of a config or generator.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Where outputs go (default depends on the subcommand).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Only print errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset plus its ground truth.
    Gen {
        /// lasso, lda or mlr
        kind: String,
        /// Generator parameters as key=value (same keys as a config's [data]).
        params: Vec<String>,
    },
    /// Run an experiment config on the simulated cluster.
    Run { config: PathBuf },
    /// Re-check every invariant on a recorded trace.
    Replay { trace: PathBuf },
    /// Compare metrics files and emit aligned objective series.
    Report {
        #[arg(required = true)]
        metrics: Vec<PathBuf>,
        /// Fraction of the gap between start and best objective that counts
        /// as converged.
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
    },
}

struct Out {
    quiet: bool,
}

impl Out {
    fn say(&self, s: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", s.as_ref());
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = Out { quiet: cli.quiet };
    match dispatch(&cli, &out) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: &Cli, out: &Out) -> Result<u8, HarnessError> {
    match &cli.command {
        Command::Gen { kind, params } => gen_cmd(cli, out, kind, params),
        Command::Run { config } => run_cmd(cli, out, config),
        Command::Replay { trace } => replay_cmd(out, trace),
        Command::Report { metrics, tol } => report_cmd(cli, out, metrics, *tol),
    }
}

fn gen_cmd(cli: &Cli, out: &Out, kind: &str, params: &[String]) -> Result<u8, HarnessError> {
    let k = GenKind::parse(kind).ok_or_else(|| {
        HarnessError::Config(format!("unknown dataset kind `{kind}` (expected one of lasso, lda, mlr)"))
    })?;
    let mut ini = Ini::default();
    for p in params {
        let (key, value) = p
            .split_once('=')
            .ok_or_else(|| HarnessError::Config(format!("parameter `{p}` is not key=value")))?;
        ini.set("data", key.trim(), value.trim());
    }
    let section = ini.sections.pop().unwrap_or_default();
    let dir = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("data").join(kind));
    let g = generate(k, &section, cli.seed.unwrap_or(0), &dir)?;
    for p in &g.data {
        out.say(format!("data  {}", p.display()));
    }
    for p in &g.truth {
        out.say(format!("truth {}", p.display()));
    }
    Ok(0)
}

fn run_cmd(cli: &Cli, out: &Out, config: &Path) -> Result<u8, HarnessError> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(s) = cli.seed {
        cfg.runtime.seed = s;
    }
    let dir = cli.out_dir.clone().unwrap_or_else(|| {
        let stem = config.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
        PathBuf::from("out").join(stem)
    });
    let a = run_experiment(&cfg)?;
    write_outputs(&a, &dir)?;
    out.say(a.summary.trim_end());
    out.say(format!("outputs in {}", dir.display()));
    if a.passed() {
        Ok(0)
    } else {
        eprint!("invariant violation:\n{}", a.failures());
        Ok(3)
    }
}

fn replay_cmd(out: &Out, trace: &Path) -> Result<u8, HarnessError> {
    let text = std::fs::read_to_string(trace).map_err(|e| HarnessError::Io {
        path: trace.to_path_buf(),
        source: e,
    })?;
    let t = SimTrace::parse(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", trace.display())))?;
    let r = replay_all(&t);
    out.say(format!("{} events", t.events.len()));
    out.say(r.to_string().trim_end());
    if r.all_passed() {
        Ok(0)
    } else {
        if out.quiet {
            eprint!("{r}");
        }
        Ok(3)
    }
}

/// `s=<staleness>` from a `summary.txt` next to the metrics file, if there
/// is one; otherwise the path itself.
fn label_for(path: &Path) -> String {
    let summary = path.with_file_name("summary.txt");
    std::fs::read_to_string(summary)
        .ok()
        .and_then(|t| {
            t.lines()
                .find_map(|l| l.strip_prefix("staleness: ").map(|s| format!("s={}", s.trim())))
        })
        .unwrap_or_else(|| path.display().to_string())
}

fn report_cmd(cli: &Cli, out: &Out, files: &[PathBuf], tol: f64) -> Result<u8, HarnessError> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(HarnessError::Config(format!("--tol must be in (0, 1), got {tol}")));
    }
    let mut runs = Vec::new();
    for f in files {
        let text = std::fs::read_to_string(f).map_err(|e| HarnessError::Io {
            path: f.clone(),
            source: e,
        })?;
        let metrics = Metrics::parse(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", f.display())))?;
        runs.push(RunSeries {
            label: label_for(f),
            metrics,
        });
    }
    // Fall back to paths when the summaries do not tell the runs apart.
    let mut labels: Vec<&String> = runs.iter().map(|r| &r.label).collect();
    labels.sort();
    labels.dedup();
    if labels.len() < runs.len() {
        for (r, f) in runs.iter_mut().zip(files) {
            r.label = f.display().to_string();
        }
    }
    let rep = report(&runs, tol);
    out.say(rep.text.trim_end());
    if let Some(dir) = &cli.out_dir {
        for (name, body) in [("series_iteration.csv", &rep.by_iteration), ("series_tick.csv", &rep.by_tick)] {
            let p = dir.join(name);
            std::fs::create_dir_all(dir)
                .and_then(|_| std::fs::write(&p, body))
                .map_err(|e| harness::HarnessError::Io { path: p.clone(), source: e })?;
            out.say(format!("series  {}", p.display()));
        }
    }
    Ok(0)
}
