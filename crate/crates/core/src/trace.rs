//! Line-delimited event trace of a simulated run.
//!
//! The file starts with `# key=value` metadata lines, then a CSV header and
//! one row per event. Absent fields are written as `-1`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use thiserror::Error;

pub const HEADER: &str = "event_type,worker,clock,key_count,timestamp,bytes,tick,peer,id";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventKind {
    ComputeStart,
    ComputeEnd,
    ExtraPass,
    Commit,
    Clock,
    Block,
    Unblock,
    MsgSend,
    MsgDeliver,
    Read,
    Apply,
    Fetch,
}

impl EventKind {
    pub const ALL: [EventKind; 12] = [
        EventKind::ComputeStart,
        EventKind::ComputeEnd,
        EventKind::ExtraPass,
        EventKind::Commit,
        EventKind::Clock,
        EventKind::Block,
        EventKind::Unblock,
        EventKind::MsgSend,
        EventKind::MsgDeliver,
        EventKind::Read,
        EventKind::Apply,
        EventKind::Fetch,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::ComputeStart => "compute_start",
            EventKind::ComputeEnd => "compute_end",
            EventKind::ExtraPass => "extra_pass",
            EventKind::Commit => "commit",
            EventKind::Clock => "clock",
            EventKind::Block => "block",
            EventKind::Unblock => "unblock",
            EventKind::MsgSend => "msg_send",
            EventKind::MsgDeliver => "msg_deliver",
            EventKind::Read => "read",
            EventKind::Apply => "apply",
            EventKind::Fetch => "fetch",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventKind::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown event type `{s}`"))
    }
}

/// One trace row.
///
/// Field meaning by kind:
/// - `commit`: `clock` is the committer's clock, `timestamp` the update's.
/// - `apply`/`fetch`: `worker` is the view owner, `peer` the update's origin,
///   `timestamp` the update's timestamp, `clock` the owner's clock.
/// - `msg_send`/`msg_deliver`: `worker` is the sending (resp. receiving) node,
///   `peer` the other end of the link, `id` the message id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub kind: EventKind,
    pub worker: Option<usize>,
    pub clock: Option<u64>,
    pub key_count: Option<u64>,
    pub timestamp: Option<u64>,
    pub bytes: Option<u64>,
    pub tick: u64,
    pub peer: Option<usize>,
    pub id: Option<u64>,
}

impl TraceEvent {
    pub fn new(kind: EventKind, tick: u64) -> Self {
        Self {
            kind,
            worker: None,
            clock: None,
            key_count: None,
            timestamp: None,
            bytes: None,
            tick,
            peer: None,
            id: None,
        }
    }

    pub fn worker(mut self, w: usize) -> Self {
        self.worker = Some(w);
        self
    }

    pub fn clock(mut self, c: u64) -> Self {
        self.clock = Some(c);
        self
    }

    pub fn keys(mut self, k: u64) -> Self {
        self.key_count = Some(k);
        self
    }

    pub fn timestamp(mut self, t: u64) -> Self {
        self.timestamp = Some(t);
        self
    }

    pub fn bytes(mut self, b: u64) -> Self {
        self.bytes = Some(b);
        self
    }

    pub fn peer(mut self, p: usize) -> Self {
        self.peer = Some(p);
        self
    }

    pub fn id(mut self, id: u64) -> Self {
        self.id = Some(id);
        self
    }
}

fn opt<T: fmt::Display>(v: &Option<T>) -> String {
    match v {
        Some(x) => x.to_string(),
        None => "-1".to_string(),
    }
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{},{},{},{},{}",
            self.kind,
            opt(&self.worker),
            opt(&self.clock),
            opt(&self.key_count),
            opt(&self.timestamp),
            opt(&self.bytes),
            self.tick,
            opt(&self.peer),
            opt(&self.id)
        )
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Run metadata plus the ordered event list.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimTrace {
    pub meta: BTreeMap<String, String>,
    pub events: Vec<TraceEvent>,
}

impl SimTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, e: TraceEvent) {
        self.events.push(e);
    }

    pub fn set_meta(&mut self, key: &str, value: impl fmt::Display) {
        self.meta.insert(key.to_string(), value.to_string());
    }

    pub fn meta_u64(&self, key: &str) -> Option<u64> {
        self.meta.get(key).and_then(|v| v.parse().ok())
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (k, v) in &self.meta {
            writeln!(out, "# {k}={v}")?;
        }
        writeln!(out, "{HEADER}")?;
        for e in &self.events {
            writeln!(out, "{e}")?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn parse(text: &str) -> Result<Self, TraceError> {
        Self::read_from(text.as_bytes())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self, TraceError> {
        let mut trace = SimTrace::new();
        let mut seen_header = false;
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let n = i + 1;
            let err = |message: String| TraceError::Parse { line: n, message };
            let l = line.trim_end_matches('\r');
            if l.trim().is_empty() {
                continue;
            }
            if let Some(rest) = l.strip_prefix('#') {
                let (k, v) = rest
                    .trim()
                    .split_once('=')
                    .ok_or_else(|| err(format!("metadata line without `=`: {l}")))?;
                trace.meta.insert(k.trim().to_string(), v.trim().to_string());
                continue;
            }
            if !seen_header {
                if l != HEADER {
                    return Err(err(format!("expected header `{HEADER}`")));
                }
                seen_header = true;
                continue;
            }
            trace.events.push(parse_row(l).map_err(err)?);
        }
        if !seen_header {
            return Err(TraceError::Parse {
                line: 0,
                message: "missing header".into(),
            });
        }
        Ok(trace)
    }
}

fn parse_row(l: &str) -> Result<TraceEvent, String> {
    let cols: Vec<&str> = l.split(',').collect();
    if cols.len() != 9 {
        return Err(format!("expected 9 columns, found {}", cols.len()));
    }
    fn field<T: FromStr>(name: &str, s: &str) -> Result<Option<T>, String> {
        let s = s.trim();
        if s == "-1" {
            return Ok(None);
        }
        s.parse()
            .map(Some)
            .map_err(|_| format!("bad {name} value `{s}`"))
    }
    Ok(TraceEvent {
        kind: cols[0].trim().parse()?,
        worker: field("worker", cols[1])?,
        clock: field("clock", cols[2])?,
        key_count: field("key_count", cols[3])?,
        timestamp: field("timestamp", cols[4])?,
        bytes: field("bytes", cols[5])?,
        tick: field("tick", cols[6])?.ok_or("tick is required")?,
        peer: field("peer", cols[7])?,
        id: field("id", cols[8])?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut t = SimTrace::new();
        t.set_meta("workers", 4);
        t.push(TraceEvent::new(EventKind::Commit, 3).worker(1).clock(2).timestamp(2).keys(5).bytes(85));
        t.push(TraceEvent::new(EventKind::MsgSend, 3).worker(1).peer(2).bytes(85).id(0));
        let bytes = t.to_bytes();
        let back = SimTrace::parse(std::str::from_utf8(&bytes).unwrap()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn parse_error_names_line() {
        let text = format!("# workers=2\n{HEADER}\ncommit,0,0,1,0,30,1,-1,-1\nbogus,0\n");
        match SimTrace::parse(&text) {
            Err(TraceError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert!(SimTrace::parse("commit,0\n").is_err());
    }
}
