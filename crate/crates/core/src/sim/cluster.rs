use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;

use super::metrics::{Metrics, MetricsRow};
use super::{SimConfig, SimError, SimOutput, SimSummary, WorkerTime};
use crate::engine::{check_disjoint, EngineError, IcProgram, ModelState, Payload, UpdateDelta};
use crate::fabric::{
    default_window, encoded_len, restrict_rows, server_rows, Codec, Link, LinkConfig, Message,
    MessageKind, Shape, Topology, TopologyKind, TrafficReport,
};
use crate::rng::{self, Rng};
use crate::sched::ScheduleSource;
use crate::store::{ClockDecision, SspTable, StalenessConfig};
use crate::trace::{EventKind, SimTrace, TraceEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Computing { end: u64, extra: bool },
    Blocked { since: u64 },
}

struct Worker {
    phase: Phase,
    since: u64,
    /// Uncommitted increment for the current clock.
    pending: Payload,
    rng: Rng,
    time: WorkerTime,
}

#[derive(Default)]
struct Server {
    received: BTreeMap<(u64, usize), Arc<UpdateDelta>>,
    /// Per worker: updates already forwarded to it.
    sent: Vec<BTreeSet<(u64, usize)>>,
}

/// Reads recorded at one clock.
#[derive(Default, Clone, Copy)]
struct ReadStats {
    sum: u64,
    count: u64,
    max: u64,
}

struct Sim<'a, P: IcProgram, S: ?Sized> {
    program: &'a P,
    data: &'a P::Data,
    schedule: &'a mut S,
    topology: &'a Topology,
    cfg: &'a SimConfig,
    shape: Shape,
    link_cfg: LinkConfig,
    table: SspTable,
    workers: Vec<Worker>,
    rounds: BTreeMap<u64, Vec<P::Work>>,
    links: BTreeMap<(usize, usize), Link>,
    routes: BTreeMap<(usize, usize), Vec<usize>>,
    /// Halton relays waiting at each node for its next clock.
    relays: Vec<Vec<Message>>,
    servers: Vec<Server>,
    /// Master-slave: servers that have forwarded each update to each worker.
    partial: Vec<BTreeMap<(u64, usize), BTreeSet<usize>>>,
    reads: BTreeMap<u64, ReadStats>,
    trace: SimTrace,
    metrics: Metrics,
    trajectory: Vec<Vec<f64>>,
    next_id: u64,
    bytes_sent: u64,
    blocked_ticks: u64,
    extra_passes: u64,
    evaluations: u64,
    stopped: bool,
}

/// Runs `program` on a simulated cluster of `config.workers` nodes.
///
/// Each tick processes, in order: worker compute completions (commit, clock,
/// send, then read and the next compute or a block), unblocks of waiting
/// workers, one step of every link, and message arrivals. A metrics row is
/// written whenever every worker has committed a clock; the objective is the
/// one of that consistent snapshot. The run halts when `config.stop` fires on
/// the snapshot series; in-flight messages are then drained.
pub fn run_simulation<P, S>(
    program: &P,
    data: &P::Data,
    schedule: &mut S,
    topology: &Topology,
    staleness: StalenessConfig,
    config: &SimConfig,
) -> Result<SimOutput, SimError>
where
    P: IcProgram,
    S: ScheduleSource<P::Work> + ?Sized,
{
    config.validate()?;
    if topology.workers() != config.workers {
        return Err(SimError::Config(format!(
            "topology has {} workers, config has {}",
            topology.workers(),
            config.workers
        )));
    }
    let init = program.initial_state(data, config.seed);
    if init.len() != program.param_len() {
        return Err(EngineError::ShapeMismatch {
            expected: program.param_len(),
            got: init.len(),
        }
        .into());
    }
    let shape = config.shape.unwrap_or(Shape::vector(init.len()));
    if shape.len() != init.len() {
        return Err(SimError::Config(format!(
            "shape {}x{} does not match {} parameters",
            shape.rows,
            shape.cols,
            init.len()
        )));
    }
    let full = encoded_len(&Payload::Dense(vec![1.0; init.len()]), Codec::Full, shape)? as u64;
    let max_msg = encoded_len(&Payload::Dense(vec![1.0; init.len()]), config.codec, shape)
        .map_or(full, |b| (b as u64).max(full));
    let window = config
        .window
        .unwrap_or_else(|| default_window(config.bandwidth, config.latency, max_msg));
    let link_cfg = LinkConfig {
        bandwidth: config.bandwidth,
        latency: config.latency,
        window,
        managed: config.managed,
        mode: config.priority,
    };

    let p = config.workers;
    let mut trace = SimTrace::new();
    trace.set_meta("workers", p);
    trace.set_meta("staleness", staleness.s);
    trace.set_meta("managed", u8::from(config.managed));
    trace.set_meta("window", window);
    trace.set_meta("topology", topology.kind().name());
    trace.set_meta("codec", config.codec.name());
    trace.set_meta("seed", config.seed);

    let sim = Sim {
        program,
        data,
        schedule,
        topology,
        cfg: config,
        shape,
        link_cfg,
        table: SspTable::new(p, staleness, init.values.clone()),
        workers: (0..p)
            .map(|w| Worker {
                phase: Phase::Blocked { since: 0 },
                since: 0,
                pending: Payload::empty(),
                rng: rng::stream(config.seed, w),
                time: WorkerTime::default(),
            })
            .collect(),
        rounds: BTreeMap::new(),
        links: BTreeMap::new(),
        routes: BTreeMap::new(),
        relays: vec![Vec::new(); topology.nodes()],
        servers: (0..topology.servers())
            .map(|_| Server {
                received: BTreeMap::new(),
                sent: vec![BTreeSet::new(); p],
            })
            .collect(),
        partial: vec![BTreeMap::new(); p],
        reads: BTreeMap::new(),
        trace,
        metrics: Metrics::default(),
        trajectory: Vec::new(),
        next_id: 0,
        bytes_sent: 0,
        blocked_ticks: 0,
        extra_passes: 0,
        evaluations: 0,
        stopped: false,
    };
    sim.run(init)
}

impl<P, S> Sim<'_, P, S>
where
    P: IcProgram,
    S: ScheduleSource<P::Work> + ?Sized,
{
    fn emit(&mut self, e: TraceEvent) {
        self.trace.push(e);
    }

    fn run(mut self, init: ModelState) -> Result<SimOutput, SimError> {
        let p = self.cfg.workers;
        self.record_row(0, 0)?;
        if self.cfg.record_trajectory {
            self.trajectory.push(init.values.clone());
        }
        self.stopped = self.cfg.stop.should_stop(&self.metrics.objectives());
        let mut tick = 0u64;
        if !self.stopped {
            for w in 0..p {
                self.read(w, 0)?;
                self.start_compute(w, 0, false)?;
            }
        }

        while !self.stopped {
            for w in 0..p {
                if self.stopped {
                    break;
                }
                if let Phase::Computing { end, extra } = self.workers[w].phase {
                    if end == tick {
                        self.finish(w, tick, extra)?;
                    }
                }
            }
            if !self.stopped {
                for w in 0..p {
                    if let Phase::Blocked { since } = self.workers[w].phase {
                        if self.table.can_proceed(w) {
                            self.emit(TraceEvent::new(EventKind::Unblock, tick).worker(w).clock(self.table.clock_of(w)));
                            self.blocked_ticks += tick - since;
                            self.read(w, tick)?;
                            self.start_compute(w, tick, false)?;
                        }
                    }
                }
            }
            self.step_links(tick)?;
            if self.stopped {
                break;
            }
            tick = self.next_tick(tick)?;
        }
        let stop_tick = tick;
        for w in &mut self.workers {
            let span = stop_tick - w.since;
            match w.phase {
                Phase::Computing { .. } => w.time.computing += span,
                Phase::Blocked { .. } => w.time.blocked += span,
            }
        }

        // Drain: everything already sent is delivered.
        for node in 0..self.relays.len() {
            self.flush_relays(node, tick, Vec::new())?;
        }
        while self.links.values().any(|l| !l.is_idle()) {
            tick += 1;
            self.step_links(tick)?;
            for node in 0..self.relays.len() {
                self.flush_relays(node, tick, Vec::new())?;
            }
        }

        self.trace.set_meta("bytes_sent", self.bytes_sent);
        let traffic = TrafficReport::from_links(self.links.values());
        let (st_sum, st_count, st_max) = self
            .reads
            .values()
            .fold((0, 0, 0), |(s, c, m), r| (s + r.sum, c + r.count, m.max(r.max)));
        let last = *self.metrics.last().expect("initial row");
        let summary = SimSummary {
            ticks: stop_tick,
            iterations: last.iteration,
            final_objective: last.objective,
            blocked_ticks: self.workers.iter().map(|w| w.time.blocked).sum(),
            extra_passes: self.extra_passes,
            evaluations: self.evaluations,
            bytes_sent: self.bytes_sent,
            messages: traffic.total_messages(),
            mean_staleness: if st_count == 0 {
                0.0
            } else {
                st_sum as f64 / st_count as f64
            },
            max_staleness: st_max,
            worker_time: self.workers.iter().map(|w| w.time).collect(),
        };
        Ok(SimOutput {
            state: ModelState {
                values: self.table.snapshot().to_vec(),
                clock: self.table.snapshot_clock(),
            },
            trace: self.trace,
            metrics: self.metrics,
            traffic,
            summary,
            trajectory: self.trajectory,
        })
    }

    fn next_tick(&self, tick: u64) -> Result<u64, SimError> {
        let busy_links = self.links.values().any(|l| !l.is_idle());
        let next_end = self
            .workers
            .iter()
            .filter_map(|w| match w.phase {
                Phase::Computing { end, .. } => Some(end),
                Phase::Blocked { .. } => None,
            })
            .min();
        let next = match (busy_links, next_end) {
            (true, _) => tick + 1,
            (false, Some(e)) => e.max(tick + 1),
            (false, None) => return Err(SimError::Deadlock { tick, dump: self.dump() }),
        };
        if next > self.cfg.max_ticks {
            return Err(SimError::TickLimit(self.cfg.max_ticks));
        }
        Ok(next)
    }

    fn dump(&self) -> String {
        let mut out = String::new();
        for (w, s) in self.workers.iter().enumerate() {
            let _ = writeln!(
                out,
                "worker {w}: clock {} phase {:?} inbox {}",
                self.table.clock_of(w),
                s.phase,
                self.table.inbox_len(w)
            );
        }
        for (&(a, b), l) in &self.links {
            let _ = writeln!(out, "link {a}->{b}: in flight {} idle {}", l.in_flight(), l.is_idle());
        }
        out
    }

    fn set_phase(&mut self, w: usize, phase: Phase, tick: u64) {
        let wk = &mut self.workers[w];
        let span = tick - wk.since;
        match wk.phase {
            Phase::Computing { .. } => wk.time.computing += span,
            Phase::Blocked { .. } => wk.time.blocked += span,
        }
        wk.phase = phase;
        wk.since = tick;
    }

    fn round(&mut self, clock: u64) -> Result<&Vec<P::Work>, SimError> {
        if !self.rounds.contains_key(&clock) {
            let works = self.schedule.round(clock, self.table.master())?;
            if works.len() != self.cfg.workers {
                return Err(EngineError::WorkerCount {
                    expected: self.cfg.workers,
                    got: works.len(),
                }
                .into());
            }
            check_disjoint(self.program, &works, clock)?;
            self.rounds.insert(clock, works);
            let min = self.table.min_clock();
            self.rounds.retain(|&c, _| c >= min);
        }
        Ok(&self.rounds[&clock])
    }

    fn read(&mut self, w: usize, tick: u64) -> Result<(), SimError> {
        let report = self.table.read(w)?;
        let fetched: BTreeSet<(u64, usize)> = report.fetched.iter().copied().collect();
        for &(ts, origin) in &report.applied {
            let kind = if fetched.contains(&(ts, origin)) {
                EventKind::Fetch
            } else {
                EventKind::Apply
            };
            self.emit(
                TraceEvent::new(kind, tick)
                    .worker(w)
                    .peer(origin)
                    .timestamp(ts)
                    .clock(report.clock),
            );
        }
        self.emit(
            TraceEvent::new(EventKind::Read, tick)
                .worker(w)
                .clock(report.clock)
                .keys(report.applied.len() as u64),
        );
        let r = self.reads.entry(report.clock).or_default();
        r.sum += report.staleness;
        r.count += 1;
        r.max = r.max.max(report.staleness);
        Ok(())
    }

    /// Computes this worker's Δ for its current clock against its view (plus
    /// its own pending increment on extra passes) and schedules completion.
    fn start_compute(&mut self, w: usize, tick: u64, extra: bool) -> Result<(), SimError> {
        let clock = self.table.clock_of(w);
        let work = self.round(clock)?[w].clone();
        let mut view = self.table.view(w).to_vec();
        let wk = &mut self.workers[w];
        if extra {
            wk.pending.add_to(&mut view);
        }
        let delta = self.program.delta_on(&view, self.data, &work, clock, &mut wk.rng);
        if extra {
            wk.pending.merge(&delta);
        } else {
            wk.pending = delta;
        }
        self.evaluations += self.program.evaluations(self.data, &work);
        let cost = self.program.work_cost(self.data, &work);
        let end = tick + self.cfg.compute_ticks(w, cost, tick);
        let kind = if extra {
            self.extra_passes += 1;
            EventKind::ExtraPass
        } else {
            EventKind::ComputeStart
        };
        self.emit(TraceEvent::new(kind, tick).worker(w).clock(clock));
        self.set_phase(w, Phase::Computing { end, extra }, tick);
        Ok(())
    }

    /// Whether `w` should keep refining instead of committing: advancing its
    /// clock would leave it more than `s` ahead of some worker that is still
    /// in its main pass. Laggards that are themselves on extra passes do not
    /// count, otherwise equally fast workers at s = 0 would wait on each
    /// other forever.
    fn wants_extra_pass(&self, w: usize) -> bool {
        let next = self.table.clock_of(w) + 1;
        (0..self.cfg.workers).filter(|&q| q != w).any(|q| {
            next - next.min(self.table.clock_of(q)) > self.table.staleness()
                && !matches!(self.workers[q].phase, Phase::Computing { extra: true, .. })
        })
    }

    fn finish(&mut self, w: usize, tick: u64, _extra: bool) -> Result<(), SimError> {
        let clock = self.table.clock_of(w);
        self.emit(TraceEvent::new(EventKind::ComputeEnd, tick).worker(w).clock(clock));
        if self.cfg.slow_worker_passes && self.wants_extra_pass(w) {
            self.read(w, tick)?;
            return self.start_compute(w, tick, true);
        }

        let payload = std::mem::replace(&mut self.workers[w].pending, Payload::empty());
        let keys = payload.key_count() as u64;
        let arc = self.table.commit(w, UpdateDelta::new(payload, clock, w))?;
        self.emit(
            TraceEvent::new(EventKind::Commit, tick)
                .worker(w)
                .clock(clock)
                .timestamp(clock)
                .keys(keys),
        );
        self.emit(
            TraceEvent::new(EventKind::Apply, tick)
                .worker(w)
                .peer(w)
                .timestamp(clock)
                .clock(clock),
        );
        self.schedule.observe(&arc.payload);

        let decision = self.table.clock(w)?;
        self.emit(TraceEvent::new(EventKind::Clock, tick).worker(w).clock(clock + 1));
        self.send(w, &arc, tick)?;

        if self.table.snapshot_clock() as usize >= self.metrics.rows.len() {
            let it = self.table.snapshot_clock();
            self.record_row(it, tick)?;
            if self.cfg.record_trajectory {
                self.trajectory.push(self.table.snapshot().to_vec());
            }
            if self.cfg.stop.should_stop(&self.metrics.objectives()) {
                self.stopped = true;
                self.set_phase(w, Phase::Blocked { since: tick }, tick);
                return Ok(());
            }
        }

        match decision {
            ClockDecision::Proceed => {
                self.read(w, tick)?;
                self.start_compute(w, tick, false)
            }
            ClockDecision::Block => {
                self.emit(TraceEvent::new(EventKind::Block, tick).worker(w).clock(clock + 1));
                self.set_phase(w, Phase::Blocked { since: tick }, tick);
                Ok(())
            }
        }
    }

    fn record_row(&mut self, iteration: u64, tick: u64) -> Result<(), SimError> {
        let value = self.program.objective(self.table.snapshot(), self.data)?;
        if !value.is_finite() {
            return Err(EngineError::NonFinite { iteration, value }.into());
        }
        let r = iteration
            .checked_sub(1)
            .and_then(|c| self.reads.get(&c).copied())
            .unwrap_or_default();
        self.metrics.rows.push(MetricsRow {
            iteration,
            tick,
            objective: value,
            mean_staleness: if r.count == 0 {
                0.0
            } else {
                r.sum as f64 / r.count as f64
            },
            max_staleness: r.max,
            blocked_ticks: self.blocked_ticks + self.blocked_now(tick),
            bytes_sent: self.bytes_sent,
        });
        Ok(())
    }

    /// Ticks spent so far by workers still waiting.
    fn blocked_now(&self, tick: u64) -> u64 {
        self.workers
            .iter()
            .map(|w| match w.phase {
                Phase::Blocked { since } => tick.saturating_sub(since),
                _ => 0,
            })
            .sum()
    }

    fn new_message(
        &mut self,
        kind: MessageKind,
        route: Vec<usize>,
        clock: u64,
        payload: Payload,
        bytes: u64,
        updates: Vec<Arc<UpdateDelta>>,
    ) -> Message {
        let id = self.next_id;
        self.next_id += 1;
        Message {
            id,
            kind,
            source: route[0],
            destination: *route.last().unwrap(),
            route,
            hop: 0,
            send_clock: clock,
            enqueue_tick: 0,
            bytes,
            payload,
            updates,
        }
    }

    fn enqueue(&mut self, msg: Message, tick: u64) {
        let (a, b) = (msg.route[0], msg.route[1]);
        let cfg = self.link_cfg;
        let model: &[f64] = if a < self.cfg.workers {
            self.table.view(a)
        } else {
            self.table.master()
        };
        self.links
            .entry((a, b))
            .or_insert_with(|| Link::new(a, b, cfg))
            .enqueue(msg, tick, model);
    }

    fn send(&mut self, w: usize, arc: &Arc<UpdateDelta>, tick: u64) -> Result<(), SimError> {
        let p = self.cfg.workers;
        let clock = arc.timestamp;
        match self.topology.kind() {
            TopologyKind::FullP2P => {
                let bytes = encoded_len(&arc.payload, self.cfg.codec, self.shape)? as u64;
                for d in (0..p).filter(|&d| d != w) {
                    let m = self.new_message(
                        MessageKind::Update,
                        vec![w, d],
                        clock,
                        arc.payload.clone(),
                        bytes,
                        vec![Arc::clone(arc)],
                    );
                    self.enqueue(m, tick);
                }
            }
            TopologyKind::Halton => {
                let mut own = Vec::new();
                for d in (0..p).filter(|&d| d != w) {
                    let route = match self.routes.get(&(w, d)) {
                        Some(r) => r.clone(),
                        None => {
                            let r = self.topology.route(w, d).map_err(crate::fabric::FabricError::from)?;
                            self.routes.insert((w, d), r.clone());
                            r
                        }
                    };
                    own.push((route, arc.payload.clone(), vec![Arc::clone(arc)]));
                }
                self.flush_relays(w, tick, own)?;
            }
            TopologyKind::MasterSlave => {
                let rows = server_rows(self.shape, self.topology.servers());
                for (k, r) in rows.iter().enumerate() {
                    let part = restrict_rows(&arc.payload, self.shape, r.start, r.end);
                    let sub = Shape::new(r.len(), self.shape.cols);
                    let bytes = encoded_len(&part, self.cfg.codec, sub)? as u64;
                    let server = self.topology.server_node(k);
                    let m = self.new_message(
                        MessageKind::Update,
                        vec![w, server],
                        clock,
                        part,
                        bytes,
                        vec![Arc::clone(arc)],
                    );
                    self.enqueue(m, tick);
                }
            }
        }
        Ok(())
    }

    /// Sends everything waiting at `node`, combining messages whose remaining
    /// routes are identical into one.
    fn flush_relays(
        &mut self,
        node: usize,
        tick: u64,
        own: Vec<(Vec<usize>, Payload, Vec<Arc<UpdateDelta>>)>,
    ) -> Result<(), SimError> {
        let waiting = std::mem::take(&mut self.relays[node]);
        if waiting.is_empty() && own.is_empty() {
            return Ok(());
        }
        let mut groups: BTreeMap<Vec<usize>, (Payload, Vec<Arc<UpdateDelta>>)> = BTreeMap::new();
        let items = waiting
            .into_iter()
            .map(|m| (m.route, m.payload, m.updates))
            .chain(own);
        for (route, payload, updates) in items {
            let g = groups.entry(route).or_insert_with(|| (Payload::empty(), Vec::new()));
            g.0.merge(&payload);
            g.1.extend(updates);
        }
        let clock = if node < self.cfg.workers {
            self.table.clock_of(node)
        } else {
            0
        };
        for (route, (payload, updates)) in groups {
            let bytes = encoded_len(&payload, self.cfg.codec, self.shape)? as u64;
            let m = self.new_message(MessageKind::Update, route, clock, payload, bytes, updates);
            self.enqueue(m, tick);
        }
        Ok(())
    }

    fn step_links(&mut self, tick: u64) -> Result<(), SimError> {
        let mut arrivals = Vec::new();
        let keys: Vec<(usize, usize)> = self.links.keys().copied().collect();
        for key in keys {
            let step = self.links.get_mut(&key).unwrap().step(tick);
            for (id, bytes) in step.started {
                self.bytes_sent += bytes;
                self.emit(
                    TraceEvent::new(EventKind::MsgSend, tick)
                        .worker(key.0)
                        .peer(key.1)
                        .id(id)
                        .bytes(bytes),
                );
            }
            arrivals.extend(step.arrivals.into_iter().map(|a| (key, a.msg)));
        }
        for ((from, to), msg) in arrivals {
            self.emit(
                TraceEvent::new(EventKind::MsgDeliver, tick)
                    .worker(to)
                    .peer(from)
                    .id(msg.id)
                    .bytes(msg.bytes),
            );
            self.arrive(from, to, msg, tick)?;
        }
        Ok(())
    }

    fn record_staleness(&mut self, link: (usize, usize), staleness: u64) {
        if let Some(l) = self.links.get_mut(&link) {
            l.record_staleness(staleness as f64);
        }
    }

    fn arrive(&mut self, from: usize, to: usize, msg: Message, tick: u64) -> Result<(), SimError> {
        let p = self.cfg.workers;
        match msg.kind {
            MessageKind::Update if to < p => {
                if msg.route.len() > 2 {
                    let mut relay = msg;
                    relay.route.remove(0);
                    self.relays[to].push(relay);
                    if self.stopped {
                        self.flush_relays(to, tick, Vec::new())?;
                    }
                    return Ok(());
                }
                let clock = self.table.clock_of(to);
                for u in &msg.updates {
                    self.table.deliver(to, u);
                    self.record_staleness((from, to), clock.saturating_sub(u.timestamp));
                }
            }
            MessageKind::Update => {
                let k = to - p;
                for u in &msg.updates {
                    let origin_clock = self.table.clock_of(u.origin);
                    self.record_staleness((from, to), origin_clock.saturating_sub(u.timestamp));
                    self.servers[k]
                        .received
                        .insert((u.timestamp, u.origin), Arc::clone(u));
                }
                let server = &mut self.servers[k];
                let mut out = Vec::new();
                for (&key, u) in &server.received {
                    if u.origin != from && server.sent[from].insert(key) {
                        out.push(Arc::clone(u));
                    }
                }
                let rows = server_rows(self.shape, self.topology.servers());
                let sub = Shape::new(rows[k].len(), self.shape.cols);
                let bytes = encoded_len(&Payload::empty(), Codec::Full, sub)? as u64;
                let m = self.new_message(
                    MessageKind::Reply { server: k },
                    vec![to, from],
                    msg.send_clock,
                    Payload::empty(),
                    bytes,
                    out,
                );
                self.enqueue(m, tick);
            }
            MessageKind::Reply { server } => {
                let servers = self.topology.servers();
                let clock = self.table.clock_of(to);
                for u in &msg.updates {
                    let key = (u.timestamp, u.origin);
                    let seen = self.partial[to].entry(key).or_default();
                    seen.insert(server);
                    if seen.len() == servers {
                        self.partial[to].remove(&key);
                        self.table.deliver(to, u);
                        self.record_staleness((from, to), clock.saturating_sub(u.timestamp));
                    }
                }
            }
        }
        Ok(())
    }
}
