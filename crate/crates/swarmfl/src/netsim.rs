//! Connectivity-graph derivation and per-tick gossip delivery.
//!
//! Each tick the harness rebuilds the distance-threshold graph from robot
//! positions and exchanges every robot's outbox with its current neighbors.
//! Delivery is broadcast-only: an envelope reaches exactly the sender's
//! neighbors at the delivery tick, within one tick, with no loss. Arrival
//! order per receiver is deterministic: senders ascending, then enqueue
//! order.

use crate::chain::ChainMessage;

pub type RobotId = u16;

/// Undirected distance-threshold graph over robot positions.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityGraph {
    n: usize,
    adj: Vec<bool>,
    /// Edges as `(a, b)` with `a < b`, ascending.
    pub edges: Vec<(RobotId, RobotId)>,
}

impl ConnectivityGraph {
    /// Exact threshold graph: edge iff distance <= `comm_range`.
    pub fn build(positions: &[(f64, f64)], comm_range: f64) -> ConnectivityGraph {
        let n = positions.len();
        let mut adj = vec![false; n * n];
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                let dx = positions[a].0 - positions[b].0;
                let dy = positions[a].1 - positions[b].1;
                if dx.hypot(dy) <= comm_range {
                    adj[a * n + b] = true;
                    adj[b * n + a] = true;
                    edges.push((a as RobotId, b as RobotId));
                }
            }
        }
        ConnectivityGraph { n, adj, edges }
    }

    /// Complete graph, used by the end-of-run sync window.
    pub fn complete(n: usize) -> ConnectivityGraph {
        let mut adj = vec![true; n * n];
        let mut edges = Vec::new();
        for a in 0..n {
            adj[a * n + a] = false;
            for b in a + 1..n {
                edges.push((a as RobotId, b as RobotId));
            }
        }
        ConnectivityGraph { n, adj, edges }
    }

    /// Graph with exactly the given edges (scripted scenarios).
    pub fn from_edges(n: usize, edges: &[(RobotId, RobotId)]) -> ConnectivityGraph {
        let mut adj = vec![false; n * n];
        let mut sorted: Vec<(RobotId, RobotId)> = edges
            .iter()
            .map(|&(a, b)| if a < b { (a, b) } else { (b, a) })
            .collect();
        sorted.sort_unstable();
        sorted.dedup();
        for &(a, b) in &sorted {
            adj[a as usize * n + b as usize] = true;
            adj[b as usize * n + a as usize] = true;
        }
        ConnectivityGraph {
            n,
            adj,
            edges: sorted,
        }
    }

    pub fn connected(&self, a: RobotId, b: RobotId) -> bool {
        self.adj[a as usize * self.n + b as usize]
    }

    /// Neighbor ids of `robot`, ascending.
    pub fn neighbors(&self, robot: RobotId) -> impl Iterator<Item = RobotId> + '_ {
        let row = &self.adj[robot as usize * self.n..(robot as usize + 1) * self.n];
        row.iter()
            .enumerate()
            .filter(|(_, &c)| c)
            .map(|(j, _)| j as RobotId)
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    /// Hop-count diameter of the largest component (usize::MAX if the graph
    /// is disconnected); used by flood-propagation bounds in tests.
    pub fn diameter(&self) -> usize {
        let mut diameter = 0;
        for start in 0..self.n {
            let mut dist = vec![usize::MAX; self.n];
            dist[start] = 0;
            let mut queue = std::collections::VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for v in self.neighbors(u as RobotId) {
                    if dist[v as usize] == usize::MAX {
                        dist[v as usize] = dist[u] + 1;
                        queue.push_back(v as usize);
                    }
                }
            }
            let far = dist.iter().copied().max().unwrap_or(0);
            diameter = diameter.max(far);
        }
        diameter
    }
}

/// Delivers every outbox message to the sender's current neighbors.
/// `outboxes[i]` are robot `i`'s messages this tick; returns per-robot
/// inboxes of `(sender, message)` in deterministic arrival order. Messages
/// from isolated senders are dropped. `on_delivery` observes every delivery
/// for audit logs.
pub fn exchange(
    graph: &ConnectivityGraph,
    outboxes: Vec<Vec<ChainMessage>>,
    mut on_delivery: impl FnMut(RobotId, RobotId, &ChainMessage),
) -> Vec<Vec<(RobotId, ChainMessage)>> {
    let n = graph.n_nodes();
    let mut inboxes: Vec<Vec<(RobotId, ChainMessage)>> = vec![Vec::new(); n];
    for receiver in 0..n {
        for sender in 0..n {
            if sender == receiver || !graph.connected(sender as RobotId, receiver as RobotId) {
                continue;
            }
            for msg in &outboxes[sender] {
                on_delivery(sender as RobotId, receiver as RobotId, msg);
                inboxes[receiver].push((sender as RobotId, msg.clone()));
            }
        }
    }
    inboxes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::ChainMessage;
    use rand::Rng;

    fn head_msg(h: u64) -> ChainMessage {
        ChainMessage::Head {
            hash: crate::chain::BlockHash([0u8; 32]),
            height: h,
        }
    }

    #[test]
    fn coincident_robots_form_complete_graph() {
        let positions = vec![(1.0, 1.0); 15];
        let g = ConnectivityGraph::build(&positions, 2.5);
        assert_eq!(g.edges.len(), 105); // C(15, 2)
    }

    #[test]
    fn widely_spaced_line_is_empty() {
        let positions: Vec<(f64, f64)> = (0..15).map(|i| (3.0 * i as f64, 0.0)).collect();
        let g = ConnectivityGraph::build(&positions, 2.5);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn graph_matches_pairwise_oracle() {
        let mut r = crate::rng::stream(9, crate::rng::Domain::WorldPlacement, 1);
        for _ in 0..50 {
            let positions: Vec<(f64, f64)> = (0..15)
                .map(|_| (r.gen_range(0.0..5.0), r.gen_range(0.0..5.0)))
                .collect();
            let g = ConnectivityGraph::build(&positions, 2.5);
            for a in 0..15u16 {
                for b in 0..15u16 {
                    if a == b {
                        continue;
                    }
                    let dx = positions[a as usize].0 - positions[b as usize].0;
                    let dy = positions[a as usize].1 - positions[b as usize].1;
                    assert_eq!(g.connected(a, b), dx.hypot(dy) <= 2.5);
                }
            }
        }
    }

    #[test]
    fn fan_out_to_three_neighbors() {
        let g = ConnectivityGraph::from_edges(5, &[(0, 1), (0, 2), (0, 3)]);
        let mut outboxes = vec![Vec::new(); 5];
        outboxes[0].push(head_msg(1));
        let mut deliveries = 0;
        let inboxes = exchange(&g, outboxes, |_, _, _| deliveries += 1);
        assert_eq!(deliveries, 3);
        assert_eq!(inboxes[1].len(), 1);
        assert_eq!(inboxes[2].len(), 1);
        assert_eq!(inboxes[3].len(), 1);
        assert!(inboxes[4].is_empty());
    }

    #[test]
    fn isolated_sender_is_dropped() {
        let g = ConnectivityGraph::from_edges(3, &[(1, 2)]);
        let mut outboxes = vec![Vec::new(); 3];
        outboxes[0].push(head_msg(1));
        let inboxes = exchange(&g, outboxes, |_, _, _| {});
        assert!(inboxes.iter().all(|inbox| inbox.is_empty()));
    }

    #[test]
    fn arrival_order_is_sender_then_enqueue_order() {
        let g = ConnectivityGraph::complete(4);
        let mut outboxes = vec![Vec::new(); 4];
        outboxes[2].push(head_msg(10));
        outboxes[2].push(head_msg(11));
        outboxes[1].push(head_msg(20));
        let inboxes = exchange(&g, outboxes, |_, _, _| {});
        let seen: Vec<(RobotId, u64)> = inboxes[0]
            .iter()
            .map(|(s, m)| match m {
                ChainMessage::Head { height, .. } => (*s, *height),
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(seen, vec![(1, 20), (2, 10), (2, 11)]);
    }

    #[test]
    fn deliveries_only_cross_current_edges() {
        let mut r = crate::rng::stream(4, crate::rng::Domain::WorldPlacement, 2);
        for _ in 0..500 {
            let positions: Vec<(f64, f64)> = (0..10)
                .map(|_| (r.gen_range(0.0..5.0), r.gen_range(0.0..5.0)))
                .collect();
            let g = ConnectivityGraph::build(&positions, 1.5);
            let mut outboxes = vec![Vec::new(); 10];
            for (i, o) in outboxes.iter_mut().enumerate() {
                if r.gen_bool(0.5) {
                    o.push(head_msg(i as u64));
                }
            }
            let graph = g.clone();
            exchange(&g, outboxes, move |s, rcv, _| {
                assert!(graph.connected(s, rcv), "delivery across non-edge {s}-{rcv}");
            });
        }
    }

    #[test]
    fn partition_isolation() {
        let g = ConnectivityGraph::from_edges(6, &[(0, 1), (1, 2), (3, 4), (4, 5)]);
        let mut outboxes = vec![Vec::new(); 6];
        for o in outboxes.iter_mut() {
            o.push(head_msg(0));
        }
        let inboxes = exchange(&g, outboxes, |_, _, _| {});
        let left = [0u16, 1, 2];
        for (receiver, inbox) in inboxes.iter().enumerate() {
            for (sender, _) in inbox {
                assert_eq!(
                    left.contains(&(receiver as u16)),
                    left.contains(sender),
                    "message crossed the partition"
                );
            }
        }
    }
}
