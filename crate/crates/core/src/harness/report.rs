use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::sim::Metrics;

/// One metrics file and the name it goes by in the report.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSeries {
    pub label: String,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub text: String,
    /// `iteration,<label>...` objective series.
    pub by_iteration: String,
    /// `tick,<label>...` objective series, each run holding its last value
    /// between its own rows.
    pub by_tick: String,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn fmt_ticks(t: Option<u64>) -> String {
    t.map_or_else(|| "not reached".to_string(), |t| t.to_string())
}

/// Compares runs against the first one. The tolerance target is
/// `best + tol·(start − best)`, with `start` the first run's initial
/// objective and `best` the lowest objective any run reached.
pub fn report(runs: &[RunSeries], tol: f64) -> Report {
    let mut text = String::new();
    let best = runs
        .iter()
        .flat_map(|r| r.metrics.rows.iter().map(|x| x.objective))
        .fold(f64::INFINITY, f64::min);
    let start = runs
        .first()
        .and_then(|r| r.metrics.rows.first())
        .map_or(f64::NAN, |x| x.objective);
    let target = best + tol * (start - best);
    let width = runs.iter().map(|r| r.label.len()).max().unwrap_or(3).max(3);
    let _ = writeln!(
        text,
        "{:<width$}  {:>10}  {:>10}  {:>14}  {:>14}  {:>12}",
        "run", "iterations", "ticks", "final_obj", "ticks_to_tol", "bytes_sent"
    );
    let mut reach = Vec::new();
    for r in runs {
        let last = r.metrics.last();
        let t = r.metrics.ticks_to(target);
        reach.push(t);
        let _ = writeln!(
            text,
            "{:<width$}  {:>10}  {:>10}  {:>14.6e}  {:>14}  {:>12}",
            r.label,
            last.map_or(0, |x| x.iteration),
            last.map_or(0, |x| x.tick),
            last.map_or(f64::NAN, |x| x.objective),
            fmt_ticks(t),
            last.map_or(0, |x| x.bytes_sent),
        );
    }
    let _ = writeln!(text, "target objective: {target:.6e} (tol {tol:e} of the gap from {start:.6e} to {best:.6e})");
    if let Some(base) = runs.first() {
        for (r, t) in runs.iter().zip(&reach).skip(1) {
            let ratio = match (t, reach[0]) {
                (Some(a), Some(b)) if b > 0 => format!("{:.4}", *a as f64 / b as f64),
                _ => "not reached".to_string(),
            };
            let _ = writeln!(text, "ticks_to_tol({})/ticks_to_tol({}) = {ratio}", r.label, base.label);
        }
    }

    let header: String = runs.iter().map(|r| format!(",{}", csv_field(&r.label))).collect();
    let mut by_iteration = format!("iteration{header}\n");
    let iters: BTreeSet<u64> = runs.iter().flat_map(|r| r.metrics.rows.iter().map(|x| x.iteration)).collect();
    for i in iters {
        by_iteration.push_str(&i.to_string());
        for r in runs {
            by_iteration.push(',');
            if let Some(x) = r.metrics.rows.iter().find(|x| x.iteration == i) {
                let _ = write!(by_iteration, "{:e}", x.objective);
            }
        }
        by_iteration.push('\n');
    }
    let mut by_tick = format!("tick{header}\n");
    let ticks: BTreeSet<u64> = runs.iter().flat_map(|r| r.metrics.rows.iter().map(|x| x.tick)).collect();
    for t in ticks {
        by_tick.push_str(&t.to_string());
        for r in runs {
            by_tick.push(',');
            if let Some(x) = r.metrics.rows.iter().rev().find(|x| x.tick <= t) {
                let _ = write!(by_tick, "{:e}", x.objective);
            }
        }
        by_tick.push('\n');
    }
    Report {
        text,
        by_iteration,
        by_tick,
    }
}
