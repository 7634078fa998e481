use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("topology needs at least one worker")]
    NoWorkers,
    #[error("master-slave topology needs at least one server")]
    NoServers,
    #[error("node {0} does not exist")]
    UnknownNode(usize),
    #[error("route from a node to itself ({0})")]
    SelfRoute(usize),
    #[error("no route from {src} to {dst}")]
    Unreachable { src: usize, dst: usize },
    #[error("master-slave topology has no worker-to-worker routes")]
    NotPeerToPeer,
    #[error("server-to-worker replies carry parameters and must use the full codec")]
    ReplyCodec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyKind {
    MasterSlave,
    FullP2P,
    Halton,
}

impl TopologyKind {
    pub fn name(self) -> &'static str {
        match self {
            TopologyKind::MasterSlave => "master_slave",
            TopologyKind::FullP2P => "p2p",
            TopologyKind::Halton => "halton",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "master_slave" | "ms" => Some(TopologyKind::MasterSlave),
            "p2p" | "full_p2p" => Some(TopologyKind::FullP2P),
            "halton" => Some(TopologyKind::Halton),
            _ => None,
        }
    }
}

/// Communication graph over `P` workers (ids `0..P`) and, for master-slave,
/// servers (ids `P..P+servers`).
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    kind: TopologyKind,
    workers: usize,
    servers: usize,
    /// Out-neighbours per worker (P2P variants).
    neighbors: Vec<Vec<usize>>,
    /// Signed offset class of each directed edge, for the Halton tie-break.
    offsets: Vec<usize>,
}

/// Base-2 radical inverse (van der Corput / Halton in one dimension).
fn halton2(mut k: u64) -> f64 {
    let mut f = 0.5;
    let mut r = 0.0;
    while k > 0 {
        if k & 1 == 1 {
            r += f;
        }
        k >>= 1;
        f *= 0.5;
    }
    r
}

/// Offsets `⌊P·h_k⌋` for the first `⌊log₂ P⌋` base-2 Halton points, plus `+1`.
pub fn halton_offsets(p: usize) -> Vec<usize> {
    let mut out = vec![1];
    if p < 2 {
        return Vec::new();
    }
    let count = usize::BITS - 1 - p.leading_zeros();
    for k in 1..=count as u64 {
        let o = (p as f64 * halton2(k)).floor() as usize % p;
        if o != 0 && !out.contains(&o) {
            out.push(o);
        }
    }
    out.sort_unstable();
    out
}

impl Topology {
    pub fn master_slave(workers: usize, servers: usize) -> Result<Self, TopologyError> {
        if workers == 0 {
            return Err(TopologyError::NoWorkers);
        }
        if servers == 0 {
            return Err(TopologyError::NoServers);
        }
        Ok(Self {
            kind: TopologyKind::MasterSlave,
            workers,
            servers,
            neighbors: vec![Vec::new(); workers],
            offsets: Vec::new(),
        })
    }

    pub fn full_p2p(workers: usize) -> Result<Self, TopologyError> {
        if workers == 0 {
            return Err(TopologyError::NoWorkers);
        }
        let neighbors = (0..workers)
            .map(|i| (0..workers).filter(|&j| j != i).collect())
            .collect();
        Ok(Self {
            kind: TopologyKind::FullP2P,
            workers,
            servers: 0,
            neighbors,
            offsets: Vec::new(),
        })
    }

    /// Directed circulant: worker `i` sends to `i + o (mod P)` for each Halton offset `o`.
    pub fn halton(workers: usize) -> Result<Self, TopologyError> {
        if workers == 0 {
            return Err(TopologyError::NoWorkers);
        }
        let offsets = halton_offsets(workers);
        let neighbors = (0..workers)
            .map(|i| {
                let mut n: Vec<usize> = offsets.iter().map(|o| (i + o) % workers).collect();
                n.sort_unstable();
                n.dedup();
                n
            })
            .collect();
        Ok(Self {
            kind: TopologyKind::Halton,
            workers,
            servers: 0,
            neighbors,
            offsets,
        })
    }

    pub fn build(kind: TopologyKind, workers: usize, servers: usize) -> Result<Self, TopologyError> {
        match kind {
            TopologyKind::MasterSlave => Self::master_slave(workers, servers),
            TopologyKind::FullP2P => Self::full_p2p(workers),
            TopologyKind::Halton => Self::halton(workers),
        }
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn servers(&self) -> usize {
        self.servers
    }

    pub fn nodes(&self) -> usize {
        self.workers + self.servers
    }

    pub fn server_node(&self, k: usize) -> usize {
        self.workers + k
    }

    pub fn halton_offset_set(&self) -> &[usize] {
        &self.offsets
    }

    pub fn neighbors(&self, worker: usize) -> &[usize] {
        &self.neighbors[worker]
    }

    /// Shortest worker path from `src` to `dst`, both ends included.
    ///
    /// Ties are broken first by the fewest consecutive hops that reuse the
    /// same offset, then by the lowest next hop.
    pub fn route(&self, src: usize, dst: usize) -> Result<Vec<usize>, TopologyError> {
        if self.kind == TopologyKind::MasterSlave {
            return Err(TopologyError::NotPeerToPeer);
        }
        for n in [src, dst] {
            if n >= self.workers {
                return Err(TopologyError::UnknownNode(n));
            }
        }
        if src == dst {
            return Err(TopologyError::SelfRoute(src));
        }
        if self.kind == TopologyKind::FullP2P {
            return Ok(vec![src, dst]);
        }
        self.halton_route(src, dst)
    }

    fn halton_route(&self, src: usize, dst: usize) -> Result<Vec<usize>, TopologyError> {
        let p = self.workers;
        // hop distance to dst over the directed graph (reverse BFS)
        let mut dist = vec![usize::MAX; p];
        dist[dst] = 0;
        let mut q = VecDeque::from([dst]);
        while let Some(v) = q.pop_front() {
            for u in 0..p {
                if dist[u] == usize::MAX && self.neighbors[u].contains(&v) {
                    dist[u] = dist[v] + 1;
                    q.push_back(u);
                }
            }
        }
        if dist[src] == usize::MAX {
            return Err(TopologyError::Unreachable { src, dst });
        }
        // Among shortest paths pick the lexicographically smallest
        // (repeats, path) label; layered over (node, last offset).
        type Label = (usize, Vec<usize>);
        let mut layer: BTreeMap<(usize, Option<usize>), Label> = BTreeMap::new();
        layer.insert((src, None), (0, vec![src]));
        for _ in 0..dist[src] {
            let mut next: BTreeMap<(usize, Option<usize>), Label> = BTreeMap::new();
            for (&(node, last), (reps, path)) in &layer {
                for &o in &self.offsets {
                    let v = (node + o) % p;
                    if dist[v] + 1 != dist[node] {
                        continue;
                    }
                    let r = reps + usize::from(last == Some(o));
                    let mut np = path.clone();
                    np.push(v);
                    let cand = (r, np);
                    let slot = next.entry((v, Some(o))).or_insert_with(|| cand.clone());
                    if cand < *slot {
                        *slot = cand;
                    }
                }
            }
            layer = next;
        }
        layer
            .into_iter()
            .filter(|((n, _), _)| *n == dst)
            .map(|(_, l)| l)
            .min()
            .map(|(_, path)| path)
            .ok_or(TopologyError::Unreachable { src, dst })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_worker_offsets() {
        assert_eq!(halton_offsets(6), vec![1, 3]);
        assert_eq!(halton_offsets(8), vec![1, 2, 4, 6]);
        assert_eq!(halton_offsets(2), vec![1]);
        assert!(halton_offsets(1).is_empty());
    }

    #[test]
    fn worked_example_route() {
        let t = Topology::halton(6).unwrap();
        // workers 1..6 are ids 0..5
        assert_eq!(t.route(0, 5).unwrap(), vec![0, 1, 4, 5]);
    }

    #[test]
    fn every_pair_reachable() {
        for p in 2..=16 {
            let t = Topology::halton(p).unwrap();
            for a in 0..p {
                for b in 0..p {
                    if a != b {
                        let r = t.route(a, b).unwrap();
                        assert_eq!(r.first(), Some(&a));
                        assert_eq!(r.last(), Some(&b));
                        for w in r.windows(2) {
                            assert!(t.neighbors(w[0]).contains(&w[1]));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn p2p_and_master_slave_routes() {
        let t = Topology::full_p2p(4).unwrap();
        assert_eq!(t.route(2, 0).unwrap(), vec![2, 0]);
        let ms = Topology::master_slave(4, 1).unwrap();
        assert_eq!(ms.route(0, 1), Err(TopologyError::NotPeerToPeer));
        assert_eq!(ms.server_node(0), 4);
        assert!(Topology::master_slave(4, 0).is_err());
        assert_eq!(t.route(1, 1), Err(TopologyError::SelfRoute(1)));
    }
}
