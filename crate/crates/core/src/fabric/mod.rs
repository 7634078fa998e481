//! Managed communication: topologies, wire codecs, rate-limited links and
//! per-link traffic accounting.

mod codec;
mod link;
mod queue;
mod topology;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::ops::Range;

use thiserror::Error;

pub use codec::{
    decode_delta, encode_delta, encoded_len, restrict_rows, Codec, CodecError, Shape, HEADER_BYTES,
};
pub use link::{default_window, Arrival, Link, LinkConfig, LinkStats, LinkStep};
pub use queue::{
    message_priority, prioritize_queue, Message, MessageKind, OutgoingQueue, PriorityMode,
    Transmitted,
};
pub use topology::{halton_offsets, Topology, TopologyError, TopologyKind};

use crate::engine::{split_ranges, Payload, UpdateDelta};
use crate::trace::{EventKind, SimTrace};

#[derive(Debug, Error, PartialEq)]
pub enum FabricError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Codecs for the two traffic directions. Replies from servers carry the
/// parameters themselves, so only `Full` is accepted there.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodecPair {
    pub update: Codec,
    pub reply: Codec,
}

impl CodecPair {
    pub fn new(update: Codec) -> Self {
        Self {
            update,
            reply: Codec::Full,
        }
    }

    pub fn uniform(codec: Codec) -> Self {
        Self {
            update: codec,
            reply: codec,
        }
    }
}

/// Contiguous row ranges owned by each server.
pub fn server_rows(shape: Shape, servers: usize) -> Vec<Range<usize>> {
    split_ranges(shape.rows, servers)
}

/// One message of a planned broadcast.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedMessage {
    pub from: usize,
    pub to: usize,
    pub kind: MessageKind,
    /// Path still to travel, starting at `from`.
    pub remaining: Vec<usize>,
    /// Origins of the updates carried.
    pub origins: Vec<usize>,
    pub bytes: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BroadcastPlan {
    pub messages: Vec<PlannedMessage>,
    pub total_bytes: u64,
    /// Clocks of staleness at delivery for each `(origin, destination)`:
    /// one per hop.
    pub staleness: BTreeMap<(usize, usize), u64>,
}

impl BroadcastPlan {
    pub fn on_link(&self, from: usize, to: usize) -> Vec<&PlannedMessage> {
        self.messages
            .iter()
            .filter(|m| m.from == from && m.to == to)
            .collect()
    }
}

/// Messages needed to spread `delta` from `src` to every other worker.
pub fn broadcast(
    topology: &Topology,
    src: usize,
    delta: &UpdateDelta,
    codecs: CodecPair,
    shape: Shape,
) -> Result<BroadcastPlan, FabricError> {
    if src >= topology.workers() {
        return Err(TopologyError::UnknownNode(src).into());
    }
    broadcast_round(topology, std::slice::from_ref(&(src, delta)), codecs, shape)
}

/// Messages for one round in which every listed worker broadcasts its update.
///
/// On Halton graphs hops that share the same remaining path are combined into
/// one message carrying the sum of their payloads. On master-slave graphs each
/// update is split by row range across servers and every server sends one
/// full-codec reply per worker.
pub fn broadcast_round(
    topology: &Topology,
    updates: &[(usize, &UpdateDelta)],
    codecs: CodecPair,
    shape: Shape,
) -> Result<BroadcastPlan, FabricError> {
    let p = topology.workers();
    let mut plan = BroadcastPlan::default();
    match topology.kind() {
        TopologyKind::MasterSlave => {
            if codecs.reply != Codec::Full {
                return Err(TopologyError::ReplyCodec.into());
            }
            let rows = server_rows(shape, topology.servers());
            for &(src, delta) in updates {
                for (k, r) in rows.iter().enumerate() {
                    let part = restrict_rows(&delta.payload, shape, r.start, r.end);
                    let sub = Shape::new(r.len(), shape.cols);
                    let server = topology.server_node(k);
                    plan.messages.push(PlannedMessage {
                        from: src,
                        to: server,
                        kind: MessageKind::Update,
                        remaining: vec![src, server],
                        origins: vec![src],
                        bytes: encoded_len(&part, codecs.update, sub)? as u64,
                    });
                }
                for w in (0..p).filter(|&w| w != src) {
                    plan.staleness.insert((src, w), 2);
                }
            }
            let origins: Vec<usize> = updates.iter().map(|(s, _)| *s).collect();
            for (k, r) in rows.iter().enumerate() {
                let sub = Shape::new(r.len(), shape.cols);
                let bytes = encoded_len(&Payload::empty(), Codec::Full, sub)? as u64;
                for w in 0..p {
                    plan.messages.push(PlannedMessage {
                        from: topology.server_node(k),
                        to: w,
                        kind: MessageKind::Reply { server: k },
                        remaining: vec![topology.server_node(k), w],
                        origins: origins.clone(),
                        bytes,
                    });
                }
            }
        }
        TopologyKind::FullP2P | TopologyKind::Halton => {
            // remaining path -> payloads riding on it
            let mut groups: BTreeMap<Vec<usize>, Vec<(usize, &UpdateDelta)>> = BTreeMap::new();
            for &(src, delta) in updates {
                for dst in (0..p).filter(|&d| d != src) {
                    let route = topology.route(src, dst)?;
                    plan.staleness.insert((src, dst), route.len() as u64 - 1);
                    for i in 0..route.len() - 1 {
                        groups.entry(route[i..].to_vec()).or_default().push((src, delta));
                    }
                }
            }
            for (remaining, members) in groups {
                let mut payload = Payload::empty();
                let mut origins = Vec::with_capacity(members.len());
                for (src, d) in &members {
                    payload.merge(&d.payload);
                    origins.push(*src);
                }
                plan.messages.push(PlannedMessage {
                    from: remaining[0],
                    to: remaining[1],
                    kind: MessageKind::Update,
                    bytes: encoded_len(&payload, codecs.update, shape)? as u64,
                    remaining,
                    origins,
                });
            }
        }
    }
    plan.total_bytes = plan.messages.iter().map(|m| m.bytes).sum();
    Ok(plan)
}

/// Per-link traffic summary.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrafficReport {
    pub links: BTreeMap<(usize, usize), LinkStats>,
}

impl TrafficReport {
    pub const HEADER: &'static str = "link,messages,bytes,max_inflight,mean_delivered_staleness";

    pub fn from_links<'a>(links: impl IntoIterator<Item = &'a Link>) -> Self {
        Self {
            links: links
                .into_iter()
                .map(|l| (l.endpoints(), l.stats().clone()))
                .collect(),
        }
    }

    pub fn total_messages(&self) -> u64 {
        self.links.values().map(|s| s.messages).sum()
    }

    pub fn total_bytes(&self) -> u64 {
        self.links.values().map(|s| s.bytes).sum()
    }

    pub fn max_delay(&self) -> u64 {
        self.links.values().map(|s| s.max_delay).max().unwrap_or(0)
    }

    /// CSV with one row per link that carried traffic.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::HEADER);
        out.push('\n');
        for (&(a, b), s) in &self.links {
            if s.messages == 0 {
                continue;
            }
            let _ = writeln!(
                out,
                "{a}->{b},{},{},{},{:.6}",
                s.messages,
                s.bytes,
                s.max_inflight,
                s.mean_staleness()
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InflightViolationKind {
    OverBudget,
    /// A delivery with no matching send, or a second delivery of one send.
    Unmatched,
    /// A send that never arrived.
    Undelivered,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InflightViolation {
    pub kind: InflightViolationKind,
    pub event: usize,
    pub link: (usize, usize),
    pub in_flight: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InflightReport {
    pub violations: Vec<InflightViolation>,
    pub max_inflight: u64,
    pub sends: usize,
    pub delivers: usize,
}

impl InflightReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Replays `msg_send`/`msg_deliver` pairs per link and checks the in-flight
/// budget (trace metadata `window`, only when `managed = 1`). A send into an
/// empty link may exceed the budget on its own.
pub fn check_inflight(trace: &SimTrace) -> InflightReport {
    let window = match trace.meta_u64("managed") {
        Some(1) => trace.meta_u64("window"),
        _ => None,
    };
    let mut report = InflightReport::default();
    let mut in_flight: HashMap<(usize, usize), u64> = HashMap::new();
    let mut open: HashMap<u64, ((usize, usize), u64, usize)> = HashMap::new();
    for (i, e) in trace.events.iter().enumerate() {
        let (Some(w), Some(peer), Some(id)) = (e.worker, e.peer, e.id) else {
            continue;
        };
        match e.kind {
            EventKind::MsgSend => {
                report.sends += 1;
                let link = (w, peer);
                let bytes = e.bytes.unwrap_or(0);
                let cur = in_flight.entry(link).or_insert(0);
                let before = *cur;
                *cur += bytes;
                report.max_inflight = report.max_inflight.max(*cur);
                if let Some(budget) = window {
                    if before > 0 && *cur > budget {
                        report.violations.push(InflightViolation {
                            kind: InflightViolationKind::OverBudget,
                            event: i,
                            link,
                            in_flight: *cur,
                        });
                    }
                }
                if open.insert(id, (link, bytes, i)).is_some() {
                    report.violations.push(InflightViolation {
                        kind: InflightViolationKind::Unmatched,
                        event: i,
                        link,
                        in_flight: *cur,
                    });
                }
            }
            EventKind::MsgDeliver => {
                report.delivers += 1;
                let link = (peer, w);
                match open.remove(&id) {
                    Some((l, bytes, _)) if l == link => {
                        let cur = in_flight.entry(link).or_insert(0);
                        *cur = cur.saturating_sub(bytes);
                    }
                    _ => report.violations.push(InflightViolation {
                        kind: InflightViolationKind::Unmatched,
                        event: i,
                        link,
                        in_flight: in_flight.get(&link).copied().unwrap_or(0),
                    }),
                }
            }
            _ => {}
        }
    }
    let mut left: Vec<_> = open.into_iter().collect();
    left.sort_by_key(|(_, (_, _, i))| *i);
    for (_, (link, _, i)) in left {
        report.violations.push(InflightViolation {
            kind: InflightViolationKind::Undelivered,
            event: i,
            link,
            in_flight: in_flight.get(&link).copied().unwrap_or(0),
        });
    }
    report
}
