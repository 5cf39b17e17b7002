//! The omniscient offline protocol: max-flow over the time-expanded graph of
//! a recorded schedule.
//!
//! Each activation of (u, v) creates a new copy of u and of v. A copy links
//! to its successor (storage), and the previous copy of each
//! endpoint links to the new copy of the other with capacity 1 (one packet
//! per direction per activation). The Sender is the source, the Receiver the
//! sink, and corrupt nodes are absent. Copies are only created at
//! activations, which leaves the max-flow value unchanged. Each copy is an
//! (in, out) pair with a capacity-C edge between, bounding what a node holds.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::model::NodeId;

const INF: u64 = u64::MAX / 4;

/// Dinic's algorithm on an adjacency-list graph.
pub struct FlowGraph {
    head: Vec<usize>,
    next: Vec<usize>,
    to: Vec<usize>,
    cap: Vec<u64>,
    level: Vec<i32>,
    iter: Vec<usize>,
}

const NIL: usize = usize::MAX;

impl FlowGraph {
    pub fn new(nodes: usize) -> FlowGraph {
        FlowGraph { head: vec![NIL; nodes], next: Vec::new(), to: Vec::new(), cap: Vec::new(), level: Vec::new(), iter: Vec::new() }
    }

    pub fn add_node(&mut self) -> usize {
        self.head.push(NIL);
        self.head.len() - 1
    }

    pub fn add_edge(&mut self, a: usize, b: usize, c: u64) {
        for (x, y, cc) in [(a, b, c), (b, a, 0)] {
            self.to.push(y);
            self.cap.push(cc);
            self.next.push(self.head[x]);
            self.head[x] = self.to.len() - 1;
        }
    }

    fn bfs(&mut self, s: usize, t: usize) -> bool {
        self.level = vec![-1; self.head.len()];
        self.level[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(x) = q.pop_front() {
            let mut e = self.head[x];
            while e != NIL {
                let y = self.to[e];
                if self.cap[e] > 0 && self.level[y] < 0 {
                    self.level[y] = self.level[x] + 1;
                    q.push_back(y);
                }
                e = self.next[e];
            }
        }
        self.level[t] >= 0
    }

    fn dfs(&mut self, s: usize, t: usize, limit: u64) -> u64 {
        // iterative DFS along level-increasing edges
        let mut path: Vec<usize> = Vec::new();
        let mut x = s;
        loop {
            if x == t {
                let f = path.iter().map(|&e| self.cap[e]).min().unwrap_or(0).min(limit);
                for &e in &path {
                    self.cap[e] -= f;
                    self.cap[e ^ 1] += f;
                }
                return f;
            }
            let mut advanced = false;
            while self.iter[x] != NIL {
                let e = self.iter[x];
                let y = self.to[e];
                if self.cap[e] > 0 && self.level[y] == self.level[x] + 1 {
                    path.push(e);
                    x = y;
                    advanced = true;
                    break;
                }
                self.iter[x] = self.next[e];
            }
            if !advanced {
                self.level[x] = -1;
                match path.pop() {
                    Some(e) => {
                        x = self.to[e ^ 1];
                        self.iter[x] = self.next[self.iter[x]];
                    }
                    None => return 0,
                }
            }
        }
    }

    pub fn max_flow(&mut self, s: usize, t: usize) -> u64 {
        let mut total = 0;
        while self.bfs(s, t) {
            self.iter = self.head.clone();
            loop {
                let f = self.dfs(s, t, INF);
                if f == 0 {
                    break;
                }
                total += f;
            }
        }
        total
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OfflineOracleResult {
    /// Packets the omniscient protocol can move from Sender to Receiver.
    pub packets: u64,
    pub packets_per_message: u64,
    pub messages: u64,
}

/// Time-expanded flow network built one activation at a time. Max-flow can
/// be re-queried after each extension; Dinic resumes from the residual graph.
pub struct OfflineOracle {
    g: FlowGraph,
    current: Vec<Option<usize>>,
    capacity: u64,
    sender: NodeId,
    receiver: NodeId,
    corrupt: Vec<NodeId>,
    flow: u64,
}

const SRC: usize = 0;
const SINK: usize = 1;

impl OfflineOracle {
    pub fn new(n: usize, capacity: u64, sender: NodeId, receiver: NodeId, corrupt: &[NodeId]) -> OfflineOracle {
        OfflineOracle {
            g: FlowGraph::new(2),
            current: vec![None; n],
            capacity,
            sender,
            receiver,
            corrupt: corrupt.to_vec(),
            flow: 0,
        }
    }

    /// Out-node of the latest copy of `u`, if it has one that can originate flow.
    fn tail(&self, u: NodeId) -> Option<usize> {
        if u == self.sender {
            Some(SRC)
        } else if u == self.receiver {
            None
        } else {
            self.current[u.index()]
        }
    }

    /// Creates the next copy of `u` as an (in, out) pair joined by a
    /// capacity-C edge, so a copy never holds more than C. Returns the in-node.
    fn fresh_copy(&mut self, u: NodeId) -> usize {
        if u == self.sender {
            return SRC;
        }
        if u == self.receiver {
            return SINK;
        }
        let inn = self.g.add_node();
        let out = self.g.add_node();
        self.g.add_edge(inn, out, self.capacity);
        if let Some(prev) = self.current[u.index()] {
            self.g.add_edge(prev, inn, self.capacity);
        }
        self.current[u.index()] = Some(out);
        inn
    }

    pub fn push(&mut self, a: NodeId, b: NodeId) {
        let n = self.current.len();
        if a == b || a.index() >= n || b.index() >= n || self.corrupt.contains(&a) || self.corrupt.contains(&b) {
            return;
        }
        let (pa, pb) = (self.tail(a), self.tail(b));
        let na = self.fresh_copy(a);
        let nb = self.fresh_copy(b);
        if let Some(pa) = pa {
            self.g.add_edge(pa, nb, 1);
        }
        if let Some(pb) = pb {
            self.g.add_edge(pb, na, 1);
        }
    }

    /// Max packets deliverable over everything pushed so far.
    pub fn packets(&mut self) -> u64 {
        self.flow += self.g.max_flow(SRC, SINK);
        self.flow
    }
}

/// Max packets from `sender` to `receiver` over the activations in
/// `schedule`, never routing through `corrupt` nodes.
pub fn offline_packets(
    n: usize,
    capacity: u64,
    schedule: &[(NodeId, NodeId)],
    sender: NodeId,
    receiver: NodeId,
    corrupt: &[NodeId],
) -> u64 {
    let mut o = OfflineOracle::new(n, capacity, sender, receiver, corrupt);
    for &(a, b) in schedule {
        o.push(a, b);
    }
    o.packets()
}

pub fn offline_optimal(
    n: usize,
    capacity: u64,
    schedule: &[(NodeId, NodeId)],
    corrupt: &[NodeId],
    packets_per_message: u64,
) -> OfflineOracleResult {
    let packets = offline_packets(n, capacity, schedule, NodeId(0), NodeId((n - 1) as u16), corrupt);
    OfflineOracleResult { packets, packets_per_message, messages: packets / packets_per_message.max(1) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_path_alternating() {
        let (s, u, r) = (NodeId(0), NodeId(1), NodeId(2));
        let t = 50;
        let sched: Vec<_> = (0..2 * t).map(|i| if i % 2 == 0 { (s, u) } else { (u, r) }).collect();
        assert_eq!(offline_packets(3, 100, &sched, s, r, &[]), t as u64);
    }

    #[test]
    fn order_matters() {
        let (s, u, r) = (NodeId(0), NodeId(1), NodeId(2));
        // receiver-side edge first: nothing to forward yet
        assert_eq!(offline_packets(3, 10, &[(u, r), (s, u)], s, r, &[]), 0);
        assert_eq!(offline_packets(3, 10, &[(s, u), (u, r)], s, r, &[]), 1);
    }

    #[test]
    fn storage_capacity_limits_buffering() {
        let (s, u, r) = (NodeId(0), NodeId(1), NodeId(2));
        let mut sched = vec![(s, u); 10];
        sched.extend(vec![(u, r); 10]);
        assert_eq!(offline_packets(3, 4, &sched, s, r, &[]), 4);
    }

    #[test]
    fn no_sender_edges_means_zero() {
        let sched = vec![(NodeId(1), NodeId(2)); 20];
        assert_eq!(offline_packets(3, 10, &sched, NodeId(0), NodeId(2), &[]), 0);
    }

    #[test]
    fn corrupt_nodes_are_avoided() {
        let (s, u, r) = (NodeId(0), NodeId(1), NodeId(2));
        let sched: Vec<_> = (0..20).map(|i| if i % 2 == 0 { (s, u) } else { (u, r) }).collect();
        assert_eq!(offline_packets(3, 10, &sched, s, r, &[u]), 0);
    }

    #[test]
    fn incremental_matches_fresh() {
        let (s, u, w, r) = (NodeId(0), NodeId(1), NodeId(2), NodeId(3));
        let sched = [(s, u), (u, w), (s, w), (w, r), (u, r), (s, u), (u, w), (w, r), (u, r), (s, w)];
        let mut o = OfflineOracle::new(4, 2, s, r, &[]);
        let mut last = 0;
        for (i, &(a, b)) in sched.iter().enumerate() {
            o.push(a, b);
            let inc = o.packets();
            assert_eq!(inc, offline_packets(4, 2, &sched[..=i], s, r, &[]));
            assert!(inc >= last);
            last = inc;
        }
    }

    #[test]
    fn direct_edge_carries_one_per_activation() {
        let sched = vec![(NodeId(0), NodeId(2)); 7];
        assert_eq!(offline_packets(3, 10, &sched, NodeId(0), NodeId(2), &[]), 7);
    }
}
