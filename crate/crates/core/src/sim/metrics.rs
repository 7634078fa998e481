use std::fmt::Write as _;

use thiserror::Error;

pub const METRICS_HEADER: &str =
    "iteration,tick,objective,mean_staleness,max_staleness,blocked_ticks,bytes_sent";

/// State after one globally complete iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub iteration: u64,
    pub tick: u64,
    pub objective: f64,
    /// Over the reads that fed this iteration.
    pub mean_staleness: f64,
    pub max_staleness: u64,
    /// Cumulative, all workers.
    pub blocked_ticks: u64,
    /// Cumulative bytes put on the wire.
    pub bytes_sent: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("metrics header mismatch: expected `{METRICS_HEADER}`, found `{0}`")]
    Header(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metrics {
    pub rows: Vec<MetricsRow>,
}

impl Metrics {
    pub fn objectives(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.objective).collect()
    }

    pub fn last(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }

    /// Tick of the first row whose objective is at or below `target`.
    pub fn ticks_to(&self, target: f64) -> Option<u64> {
        self.rows.iter().find(|r| r.objective <= target).map(|r| r.tick)
    }

    /// Iteration of the first row whose objective is at or below `target`.
    pub fn iterations_to(&self, target: f64) -> Option<u64> {
        self.rows
            .iter()
            .find(|r| r.objective <= target)
            .map(|r| r.iteration)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(METRICS_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:e},{:.6},{},{},{}",
                r.iteration,
                r.tick,
                r.objective,
                r.mean_staleness,
                r.max_staleness,
                r.blocked_ticks,
                r.bytes_sent
            );
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, MetricsError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == METRICS_HEADER => {}
            Some((_, h)) => return Err(MetricsError::Header(h.trim().to_string())),
            None => return Err(MetricsError::Header(String::new())),
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            let line_no = i + 1;
            let bad = |message: String| MetricsError::Parse {
                line: line_no,
                message,
            };
            let f: Vec<&str> = line.trim().split(',').collect();
            if f.len() != 7 {
                return Err(bad(format!("expected 7 fields, found {}", f.len())));
            }
            fn num<T: std::str::FromStr>(s: &str, name: &str) -> Result<T, String> {
                s.parse().map_err(|_| format!("bad {name} `{s}`"))
            }
            rows.push(MetricsRow {
                iteration: num(f[0], "iteration").map_err(bad)?,
                tick: num(f[1], "tick").map_err(bad)?,
                objective: num(f[2], "objective").map_err(bad)?,
                mean_staleness: num(f[3], "mean_staleness").map_err(bad)?,
                max_staleness: num(f[4], "max_staleness").map_err(bad)?,
                blocked_ticks: num(f[5], "blocked_ticks").map_err(bad)?,
                bytes_sent: num(f[6], "bytes_sent").map_err(bad)?,
            });
        }
        Ok(Self { rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(i: u64, obj: f64) -> MetricsRow {
        MetricsRow {
            iteration: i,
            tick: 10 * i,
            objective: obj,
            mean_staleness: 0.5,
            max_staleness: 1,
            blocked_ticks: i,
            bytes_sent: 100 * i,
        }
    }

    #[test]
    fn csv_round_trip() {
        let m = Metrics {
            rows: vec![row(0, 3.25), row(1, 1.0 / 3.0), row(2, 1e-9)],
        };
        let text = m.to_csv();
        assert!(text.starts_with("iteration,tick,objective,"));
        assert_eq!(Metrics::parse(&text).unwrap(), m);
    }

    #[test]
    fn header_mismatch_rejected() {
        assert!(matches!(
            Metrics::parse("a,b\n1,2\n"),
            Err(MetricsError::Header(_))
        ));
        let bad = format!("{METRICS_HEADER}\n1,2,x,0,0,0,0\n");
        assert!(matches!(
            Metrics::parse(&bad),
            Err(MetricsError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn time_to_target() {
        let m = Metrics {
            rows: vec![row(0, 5.0), row(1, 2.0), row(2, 1.0)],
        };
        assert_eq!(m.ticks_to(2.5), Some(10));
        assert_eq!(m.iterations_to(1.0), Some(2));
        assert_eq!(m.ticks_to(0.5), None);
    }
}
