use std::collections::VecDeque;

use super::queue::{Message, OutgoingQueue, PriorityMode};

/// One directed link's parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkConfig {
    /// Bytes per tick.
    pub bandwidth: u64,
    /// Ticks between the last byte leaving and the message arriving.
    pub latency: u64,
    /// In-flight byte budget for managed links.
    pub window: u64,
    /// Managed links queue, prioritize and respect `window`; unmanaged links
    /// put every message on the wire at once and share bandwidth evenly.
    pub managed: bool,
    pub mode: PriorityMode,
}

/// Budget that lets a link stay busy: one bandwidth-delay product plus room
/// for two of the largest messages.
pub fn default_window(bandwidth: u64, latency: u64, max_message: u64) -> u64 {
    bandwidth * (latency + 1) + 2 * max_message
}

#[derive(Debug, Clone)]
pub struct Arrival {
    pub msg: Message,
    pub start_tick: u64,
    pub done_tick: u64,
    pub arrive_tick: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinkStats {
    pub messages: u64,
    pub bytes: u64,
    pub max_inflight: u64,
    /// Largest enqueue-to-arrival delay seen.
    pub max_delay: u64,
    pub staleness_sum: f64,
    pub staleness_count: u64,
}

impl LinkStats {
    pub fn mean_staleness(&self) -> f64 {
        if self.staleness_count == 0 {
            0.0
        } else {
            self.staleness_sum / self.staleness_count as f64
        }
    }
}

/// What one tick of a link did.
#[derive(Debug, Default)]
pub struct LinkStep {
    /// `(id, bytes)` of messages that went on the wire this tick.
    pub started: Vec<(u64, u64)>,
    pub arrivals: Vec<Arrival>,
}

#[derive(Debug)]
struct Active {
    msg: Message,
    remaining: u64,
    start: u64,
}

#[derive(Debug)]
pub struct Link {
    from: usize,
    to: usize,
    cfg: LinkConfig,
    queue: OutgoingQueue,
    /// Unmanaged: messages on the wire, in enqueue order.
    active: Vec<Active>,
    fresh: Vec<(u64, u64)>,
    transit: VecDeque<Arrival>,
    in_flight: u64,
    stats: LinkStats,
}

impl Link {
    pub fn new(from: usize, to: usize, cfg: LinkConfig) -> Self {
        assert!(cfg.bandwidth > 0, "link bandwidth must be positive");
        Self {
            from,
            to,
            cfg,
            queue: OutgoingQueue::new(cfg.bandwidth, cfg.mode),
            active: Vec::new(),
            fresh: Vec::new(),
            transit: VecDeque::new(),
            in_flight: 0,
            stats: LinkStats::default(),
        }
    }

    pub fn endpoints(&self) -> (usize, usize) {
        (self.from, self.to)
    }

    pub fn config(&self) -> &LinkConfig {
        &self.cfg
    }

    pub fn stats(&self) -> &LinkStats {
        &self.stats
    }

    pub fn in_flight(&self) -> u64 {
        self.in_flight
    }

    /// Messages not yet arrived (queued, transmitting or propagating).
    pub fn is_idle(&self) -> bool {
        self.queue.is_empty() && self.active.is_empty() && self.transit.is_empty()
    }

    pub fn enqueue(&mut self, mut msg: Message, tick: u64, model: &[f64]) {
        msg.enqueue_tick = tick;
        if self.cfg.managed {
            self.queue.enqueue_update(msg, model);
        } else {
            self.in_flight += msg.bytes;
            self.fresh.push((msg.id, msg.bytes));
            let remaining = msg.bytes;
            self.active.push(Active {
                msg,
                remaining,
                start: tick,
            });
            self.stats.max_inflight = self.stats.max_inflight.max(self.in_flight);
        }
    }

    /// Reorders the managed queue against a new model view.
    pub fn reprioritize(&mut self, model: &[f64]) {
        self.queue.prioritize(model);
    }

    pub fn record_staleness(&mut self, staleness: f64) {
        self.stats.staleness_sum += staleness;
        self.stats.staleness_count += 1;
    }

    pub fn step(&mut self, tick: u64) -> LinkStep {
        let mut out = LinkStep::default();
        let done = if self.cfg.managed {
            self.step_managed(tick, &mut out.started)
        } else {
            out.started = std::mem::take(&mut self.fresh);
            self.step_shared(tick)
        };
        for (msg, start) in done {
            self.transit.push_back(Arrival {
                msg,
                start_tick: start,
                done_tick: tick,
                arrive_tick: tick + self.cfg.latency,
            });
        }
        while self.transit.front().is_some_and(|a| a.arrive_tick <= tick) {
            let a = self.transit.pop_front().unwrap();
            self.in_flight -= a.msg.bytes;
            self.stats.messages += 1;
            self.stats.bytes += a.msg.bytes;
            self.stats.max_delay = self.stats.max_delay.max(a.arrive_tick - a.msg.enqueue_tick);
            out.arrivals.push(a);
        }
        out
    }

    fn step_managed(&mut self, tick: u64, started: &mut Vec<(u64, u64)>) -> Vec<(Message, u64)> {
        let window = self.cfg.window;
        let mut inflight = self.in_flight;
        let mut peak = self.stats.max_inflight;
        let (done, _) = self.queue.step(tick, self.cfg.bandwidth, |m| {
            if inflight > 0 && inflight + m.bytes > window {
                return false;
            }
            inflight += m.bytes;
            peak = peak.max(inflight);
            started.push((m.id, m.bytes));
            true
        });
        self.in_flight = inflight;
        self.stats.max_inflight = peak;
        done.into_iter().map(|t| (t.msg, t.start_tick)).collect()
    }

    /// Even split of the tick's bandwidth across all active messages, with
    /// leftover share redistributed (water filling).
    fn step_shared(&mut self, _tick: u64) -> Vec<(Message, u64)> {
        let mut cap = self.cfg.bandwidth;
        loop {
            let live = self.active.iter().filter(|a| a.remaining > 0).count() as u64;
            if live == 0 || cap == 0 {
                break;
            }
            let share = (cap / live).max(1);
            for a in self.active.iter_mut().filter(|a| a.remaining > 0) {
                if cap == 0 {
                    break;
                }
                let x = share.min(a.remaining).min(cap);
                a.remaining -= x;
                cap -= x;
            }
        }
        let mut done = Vec::new();
        let mut i = 0;
        while i < self.active.len() {
            if self.active[i].remaining == 0 {
                let a = self.active.remove(i);
                done.push((a.msg, a.start));
            } else {
                i += 1;
            }
        }
        done
    }
}
