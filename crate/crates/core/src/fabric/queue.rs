use std::sync::Arc;

use crate::engine::{Payload, UpdateDelta};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorityMode {
    Fifo,
    AbsoluteMagnitude,
    RelativeMagnitude,
}

impl PriorityMode {
    pub fn name(self) -> &'static str {
        match self {
            PriorityMode::Fifo => "fifo",
            PriorityMode::AbsoluteMagnitude => "absolute",
            PriorityMode::RelativeMagnitude => "relative",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fifo" => Some(PriorityMode::Fifo),
            "absolute" | "abs" => Some(PriorityMode::AbsoluteMagnitude),
            "relative" | "rel" => Some(PriorityMode::RelativeMagnitude),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageKind {
    /// Worker-to-worker (or worker-to-server) update traffic.
    Update,
    /// Server-to-worker parameter refresh from server `k`.
    Reply { server: usize },
}

/// One message on one link hop.
#[derive(Debug, Clone)]
pub struct Message {
    pub id: u64,
    pub kind: MessageKind,
    pub source: usize,
    pub destination: usize,
    /// Full path from `source` to `destination`; `hop` indexes the sender.
    pub route: Vec<usize>,
    pub hop: usize,
    pub send_clock: u64,
    pub enqueue_tick: u64,
    pub bytes: u64,
    /// Wire payload (after any combining); drives priority.
    pub payload: Payload,
    /// Updates the message makes available at the receiver.
    pub updates: Vec<Arc<UpdateDelta>>,
}

impl Message {
    pub fn from_node(&self) -> usize {
        self.route[self.hop]
    }

    pub fn to_node(&self) -> usize {
        self.route[self.hop + 1]
    }

    pub fn is_final_hop(&self) -> bool {
        self.hop + 2 == self.route.len()
    }

    /// Smallest parameter key touched, used to break priority ties.
    pub fn lowest_key(&self) -> usize {
        match &self.payload {
            Payload::Sparse(s) => s.keys().next().unwrap_or(usize::MAX),
            Payload::Dense(v) => v.iter().position(|x| *x != 0.0).unwrap_or(usize::MAX),
            Payload::Factors(f) => {
                if f.is_empty() {
                    usize::MAX
                } else {
                    0
                }
            }
        }
    }
}

pub fn message_priority(payload: &Payload, mode: PriorityMode, model: &[f64]) -> f64 {
    match mode {
        PriorityMode::Fifo => 0.0,
        PriorityMode::AbsoluteMagnitude => payload.abs_magnitude(),
        PriorityMode::RelativeMagnitude => payload.relative_magnitude(model),
    }
}

#[derive(Debug, Clone)]
struct Pending {
    msg: Message,
    priority: f64,
    key: usize,
    seq: u64,
    remaining: u64,
    start: u64,
}

/// Rate-limited outgoing queue: at most `bandwidth` bytes leave per tick, a
/// message may span ticks, and messages leave in priority order.
#[derive(Debug, Clone)]
pub struct OutgoingQueue {
    mode: PriorityMode,
    bandwidth: u64,
    pending: Vec<Pending>,
    /// Message currently being transmitted (never preempted).
    current: Option<Pending>,
    seq: u64,
    tick: u64,
}

/// A message whose last byte left the queue at `tick`.
#[derive(Debug, Clone)]
pub struct Transmitted {
    pub msg: Message,
    pub start_tick: u64,
    pub tick: u64,
}

impl OutgoingQueue {
    pub fn new(bandwidth: u64, mode: PriorityMode) -> Self {
        assert!(bandwidth > 0, "bandwidth must be positive");
        Self {
            mode,
            bandwidth,
            pending: Vec::new(),
            current: None,
            seq: 0,
            tick: 0,
        }
    }

    pub fn mode(&self) -> PriorityMode {
        self.mode
    }

    pub fn bandwidth(&self) -> u64 {
        self.bandwidth
    }

    pub fn len(&self) -> usize {
        self.pending.len() + usize::from(self.current.is_some())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn queued_bytes(&self) -> u64 {
        self.pending.iter().map(|p| p.remaining).sum::<u64>()
            + self.current.as_ref().map_or(0, |c| c.remaining)
    }

    /// Adds a message; `model` is the sender's view for relative priorities.
    pub fn enqueue_update(&mut self, msg: Message, model: &[f64]) {
        let priority = message_priority(&msg.payload, self.mode, model);
        let key = msg.lowest_key();
        let remaining = msg.bytes;
        self.pending.push(Pending {
            msg,
            priority,
            key,
            seq: self.seq,
            remaining,
            start: 0,
        });
        self.seq += 1;
        self.sort();
    }

    fn sort(&mut self) {
        if self.mode == PriorityMode::Fifo {
            return;
        }
        self.pending.sort_by(|a, b| {
            b.priority
                .total_cmp(&a.priority)
                .then(a.key.cmp(&b.key))
                .then(a.seq.cmp(&b.seq))
        });
    }

    /// Recomputes priorities against a new model snapshot and reorders.
    pub fn prioritize(&mut self, model: &[f64]) {
        for p in &mut self.pending {
            p.priority = message_priority(&p.msg.payload, self.mode, model);
        }
        self.sort();
    }

    /// Ids of waiting messages in transmission order (current one first).
    pub fn order(&self) -> Vec<u64> {
        self.current
            .iter()
            .chain(&self.pending)
            .map(|p| p.msg.id)
            .collect()
    }

    /// Transmits during `tick` with `capacity` bytes. `admit` is asked before
    /// a new message starts; returning false ends the tick. Returns the
    /// finished messages and the ids of messages that started.
    pub fn step(
        &mut self,
        tick: u64,
        capacity: u64,
        mut admit: impl FnMut(&Message) -> bool,
    ) -> (Vec<Transmitted>, Vec<u64>) {
        self.tick = tick;
        let mut cap = capacity;
        let mut done = Vec::new();
        let mut started = Vec::new();
        loop {
            if self.current.is_none() {
                if self.pending.is_empty() || !admit(&self.pending[0].msg) {
                    break;
                }
                let mut p = self.pending.remove(0);
                p.start = tick;
                started.push(p.msg.id);
                self.current = Some(p);
            }
            let cur = self.current.as_mut().unwrap();
            let send = cur.remaining.min(cap);
            cur.remaining -= send;
            cap -= send;
            if cur.remaining == 0 {
                let p = self.current.take().unwrap();
                done.push(Transmitted {
                    start_tick: p.start,
                    msg: p.msg,
                    tick,
                });
            }
            if cap == 0 {
                break;
            }
        }
        (done, started)
    }

    /// Advances `elapsed` ticks at the configured bandwidth and returns every
    /// message that finished, with its finishing tick.
    pub fn drain(&mut self, elapsed: u64) -> Vec<Transmitted> {
        let mut out = Vec::new();
        for _ in 0..elapsed {
            let (bw, tick) = (self.bandwidth, self.tick + 1);
            out.extend(self.step(tick, bw, |_| true).0);
        }
        out
    }

    pub fn now(&self) -> u64 {
        self.tick
    }
}

/// Reorders `queue` against `model`; a no-op for FIFO queues.
pub fn prioritize_queue(queue: &mut OutgoingQueue, model: &[f64]) {
    queue.prioritize(model);
}
