use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn iterml(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iterml")).args(args).output().expect("spawn iterml")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn small_lasso(dir: &Path, staleness: &str) -> PathBuf {
    let p = dir.join(format!("lasso_s{staleness}.cfg"));
    std::fs::write(
        &p,
        format!(
            "[data]\nn = 60\nm = 40\nk_true = 5\n\n[algorithm]\nname = lasso\n\n\
             [runtime]\nworkers = 2\nstaleness = {staleness}\niterations = 15\nseed = 4\n"
        ),
    )
    .unwrap();
    p
}

fn run_to(cfg: &Path, out: &Path) -> Output {
    iterml(&["--quiet", "--out-dir", out.to_str().unwrap(), "run", cfg.to_str().unwrap()])
}

#[test]
fn run_writes_metrics_with_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_lasso(dir.path(), "2");
    let out = dir.path().join("out");
    let o = run_to(&cfg, &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty(), "--quiet printed output");
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("iteration,tick,objective,"));
    for f in ["trace.csv", "traffic.csv", "summary.txt"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
}

#[test]
fn negative_staleness_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_lasso(dir.path(), "-1");
    let o = run_to(&cfg, &dir.path().join("out"));
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("[runtime] staleness"));
}

#[test]
fn missing_config_and_bad_flags_fail() {
    assert_eq!(code(&iterml(&["run", "/nonexistent/x.cfg"])), 1);
    assert_eq!(code(&iterml(&["frobnicate"])), 2);
    assert_eq!(code(&iterml(&["gen", "svm"])), 2);
}

#[test]
fn same_config_and_seed_give_same_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_lasso(dir.path(), "1");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&run_to(&cfg, &a)), 0);
    assert_eq!(code(&run_to(&cfg, &b)), 0);
    let read = |d: &Path| std::fs::read(d.join("metrics.csv")).unwrap();
    assert_eq!(read(&a), read(&b));

    // --seed overrides the config's seed
    let c = dir.path().join("c");
    let o = iterml(&["-q", "--seed", "99", "--out-dir", c.to_str().unwrap(), "run", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(std::fs::read_to_string(c.join("summary.txt")).unwrap().contains("seed: 99"));
}

#[test]
fn report_compares_staleness_settings() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for s in ["0", "2"] {
        let out = dir.path().join(format!("s{s}"));
        assert_eq!(code(&run_to(&small_lasso(dir.path(), s), &out)), 0);
        files.push(out.join("metrics.csv").to_str().unwrap().to_string());
    }
    let series = dir.path().join("series");
    let o = iterml(&["--out-dir", series.to_str().unwrap(), "report", &files[0], &files[1], "--tol", "0.5"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    let line = text.lines().find(|l| l.starts_with("ticks_to_tol(s=2)/ticks_to_tol(s=0) = ")).expect(&text);
    let ratio: f64 = line.rsplit(' ').next().unwrap().parse().expect(line);
    assert!(ratio > 0.0);
    let by_tick = std::fs::read_to_string(series.join("series_tick.csv")).unwrap();
    assert!(by_tick.starts_with("tick,s=0,s=2\n"));

    // a single file gets the table but no ratio
    let o = iterml(&["report", &files[0]]);
    assert_eq!(code(&o), 0);
    assert!(!String::from_utf8_lossy(&o.stdout).contains("ticks_to_tol(s="));
}

#[test]
fn report_flags_unreached_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let header = "iteration,tick,objective,mean_staleness,max_staleness,blocked_ticks,bytes_sent\n";
    let fast = dir.path().join("fast.csv");
    let stuck = dir.path().join("stuck.csv");
    std::fs::write(&fast, format!("{header}0,0,10,0,0,0,0\n1,5,0,0,0,0,0\n")).unwrap();
    std::fs::write(&stuck, format!("{header}0,0,10,0,0,0,0\n1,5,9,0,0,0,0\n")).unwrap();
    let o = iterml(&["report", fast.to_str().unwrap(), stuck.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("= not reached"));
}

#[test]
fn report_rejects_header_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "iteration,objective\n0,1\n").unwrap();
    let o = iterml(&["report", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn replay_checks_a_recorded_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(code(&run_to(&small_lasso(dir.path(), "3"), &out)), 0);
    let trace = out.join("trace.csv");
    let o = iterml(&["replay", trace.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("PASS staleness") && !text.contains("FAIL"), "{text}");

    std::fs::write(&trace, "not a trace\n").unwrap();
    assert_eq!(code(&iterml(&["replay", trace.to_str().unwrap()])), 2);
}

#[test]
fn replay_catches_a_tampered_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(code(&run_to(&small_lasso(dir.path(), "0"), &out)), 0);
    let trace = out.join("trace.csv");
    let text = std::fs::read_to_string(&trace).unwrap();
    // drop the last delivery so a sent message never arrives
    let mut lines: Vec<&str> = text.lines().collect();
    let last_deliver = lines.iter().rposition(|l| l.contains("deliver")).expect("trace has deliveries");
    lines.remove(last_deliver);
    std::fs::write(&trace, lines.join("\n") + "\n").unwrap();
    let o = iterml(&["replay", trace.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn gen_writes_data_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lda");
    let o = iterml(&[
        "--seed", "5", "--out-dir", out.to_str().unwrap(),
        "gen", "lda", "docs=20", "vocab=50", "topics=3", "doc_len=10",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("corpus.txt").is_file() && out.join("topics.txt").is_file());
    assert_eq!(code(&iterml(&["gen", "lasso", "n"])), 2);
}
