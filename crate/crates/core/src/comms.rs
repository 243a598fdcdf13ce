//! Distance-thresholded communication graph and synchronous message rounds.

use thiserror::Error;

use crate::agent::AgentState;

#[derive(Debug, Error, PartialEq)]
pub enum CommsError {
    #[error("expected {expected} outgoing payloads, got {got}")]
    PayloadCount { expected: usize, got: usize },
    #[error("agent ids must be 0..n in order; position {index} has id {id}")]
    AgentIds { index: usize, id: usize },
}

/// Symmetric communication graph with a binary graph shift operator.
#[derive(Clone, Debug, PartialEq)]
pub struct CommGraph {
    n: usize,
    adjacency: Vec<bool>,
    neighbors: Vec<Vec<usize>>,
}

impl CommGraph {
    /// Graph from an explicit neighbour relation; pairs are symmetrized and
    /// self-loops dropped.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut adjacency = vec![false; n * n];
        for (i, j) in edges {
            if i != j {
                adjacency[i * n + j] = true;
                adjacency[j * n + i] = true;
            }
        }
        let neighbors = (0..n).map(|i| (0..n).filter(|&j| adjacency[i * n + j]).collect()).collect();
        Self { n, adjacency, neighbors }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.n + j]
    }

    /// Neighbours of `i` in ascending id order.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn neighbor_lists(&self) -> &[Vec<usize>] {
        &self.neighbors
    }

    /// `S_t` as a dense row-major `n x n` matrix: 1 where adjacent, 0 elsewhere.
    pub fn shift(&self) -> Vec<f64> {
        self.adjacency.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().filter(|a| **a).count() / 2
    }
}

/// Agents `i` and `j` are linked when `|p_i - p_j| <= min(r_comm_i, r_comm_j)`.
pub fn build_graph(states: &[AgentState]) -> Result<CommGraph, CommsError> {
    for (index, s) in states.iter().enumerate() {
        if s.id != index {
            return Err(CommsError::AgentIds { index, id: s.id });
        }
    }
    let n = states.len();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let range = states[i].spec.r_comm.min(states[j].spec.r_comm);
            if states[i].position.dist(states[j].position) <= range {
                edges.push((i, j));
            }
        }
    }
    Ok(CommGraph::from_edges(n, edges))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Message {
    pub sender: usize,
    pub round: usize,
    pub payload: Vec<f64>,
}

/// Per-agent inboxes for one round, each sorted by sender id.
#[derive(Clone, Debug, PartialEq)]
pub struct Mailbox {
    pub inboxes: Vec<Vec<Message>>,
}

impl Mailbox {
    pub fn inbox(&self, agent: usize) -> &[Message] {
        &self.inboxes[agent]
    }
}

/// Every agent broadcasts one payload; each receives exactly its neighbours'.
pub fn exchange_round(graph: &CommGraph, round: usize, outgoing: &[Vec<f64>]) -> Result<Mailbox, CommsError> {
    if outgoing.len() != graph.len() {
        return Err(CommsError::PayloadCount { expected: graph.len(), got: outgoing.len() });
    }
    let inboxes = (0..graph.len())
        .map(|i| {
            graph
                .neighbors(i)
                .iter()
                .map(|&j| Message { sender: j, round, payload: outgoing[j].clone() })
                .collect()
        })
        .collect();
    Ok(Mailbox { inboxes })
}

/// Which agents carry information originating at `source` after `rounds`
/// broadcast rounds, where each agent forwards everything it holds.
pub fn propagate_taint(graph: &CommGraph, source: usize, rounds: usize) -> Result<Vec<bool>, CommsError> {
    let mut tainted = vec![false; graph.len()];
    if let Some(t) = tainted.get_mut(source) {
        *t = true;
    }
    for round in 0..rounds {
        let outgoing: Vec<Vec<f64>> = tainted.iter().map(|&t| vec![if t { 1.0 } else { 0.0 }]).collect();
        let mail = exchange_round(graph, round, &outgoing)?;
        for (i, t) in tainted.iter_mut().enumerate() {
            *t |= mail.inbox(i).iter().any(|m| m.payload[0] != 0.0);
        }
    }
    Ok(tainted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{default_specs, AgentKind};
    use crate::grid::Cell;
    use proptest::prelude::*;

    fn team(positions: &[(usize, usize)], r_comm: f64) -> Vec<AgentState> {
        positions
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| {
                AgentState::new(i, default_specs(AgentKind::Ugv).with_r_comm(r_comm), Cell::new(x, y))
            })
            .collect()
    }

    #[test]
    fn zero_range_has_no_edges() {
        let g = build_graph(&team(&[(0, 0), (0, 1), (1, 0)], 0.0)).unwrap();
        assert_eq!(g.edge_count(), 0);
        assert!(g.shift().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn range_six_threshold() {
        let g = build_graph(&team(&[(0, 0), (5, 0)], 6.0)).unwrap();
        assert!(g.adjacent(0, 1));
        let g = build_graph(&team(&[(0, 0), (7, 0)], 6.0)).unwrap();
        assert!(!g.adjacent(0, 1));
    }

    #[test]
    fn asymmetric_ranges_use_minimum() {
        let mut t = team(&[(0, 0), (4, 0)], 6.0);
        t[1].spec.r_comm = 3.0;
        assert!(!build_graph(&t).unwrap().adjacent(0, 1));
    }

    #[test]
    fn rejects_out_of_order_ids() {
        let mut t = team(&[(0, 0), (4, 0)], 6.0);
        t[1].id = 5;
        assert!(build_graph(&t).is_err());
    }

    #[test]
    fn exchange_counts() {
        let empty = CommGraph::from_edges(3, []);
        let out = vec![vec![0.0], vec![1.0], vec![2.0]];
        assert!(exchange_round(&empty, 0, &out).unwrap().inboxes.iter().all(|b| b.is_empty()));

        let full = CommGraph::from_edges(3, [(0, 1), (0, 2), (1, 2)]);
        let mb = exchange_round(&full, 0, &out).unwrap();
        assert!(mb.inboxes.iter().all(|b| b.len() == 2));
        assert!(mb.inboxes.iter().enumerate().all(|(i, b)| b.iter().all(|m| m.sender != i)));

        assert_eq!(
            exchange_round(&full, 0, &out[..2]),
            Err(CommsError::PayloadCount { expected: 3, got: 2 })
        );
    }

    #[test]
    fn chain_single_round_is_one_hop() {
        // a - b - c
        let g = CommGraph::from_edges(3, [(0, 1), (1, 2)]);
        let out = vec![vec![10.0], vec![20.0], vec![30.0]];
        let mb = exchange_round(&g, 0, &out).unwrap();
        assert_eq!(mb.inbox(0).len(), 1);
        assert_eq!(mb.inbox(0)[0].sender, 1);
        assert_eq!(mb.inbox(0)[0].payload, vec![20.0]);
        let senders: Vec<usize> = mb.inbox(1).iter().map(|m| m.sender).collect();
        assert_eq!(senders, vec![0, 2]);
    }

    proptest! {
        #[test]
        fn graph_is_symmetric_without_self_loops(
            pts in prop::collection::vec((0usize..15, 0usize..15), 1..9),
            r in 0.0f64..10.0,
        ) {
            let g = build_graph(&team(&pts, r)).unwrap();
            let s = g.shift();
            let n = g.len();
            for i in 0..n {
                prop_assert_eq!(s[i * n + i], 0.0);
                for j in 0..n {
                    prop_assert_eq!(s[i * n + j], s[j * n + i]);
                    let d = Cell::new(pts[i].0, pts[i].1).dist(Cell::new(pts[j].0, pts[j].1));
                    prop_assert_eq!(g.adjacent(i, j), i != j && d <= r);
                }
            }
        }
    }

    #[test]
    fn taint_on_a_chain() {
        let g = CommGraph::from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4)]);
        assert_eq!(propagate_taint(&g, 0, 0).unwrap(), [true, false, false, false, false]);
        assert_eq!(propagate_taint(&g, 0, 2).unwrap(), [true, true, true, false, false]);
        assert_eq!(propagate_taint(&g, 2, 1).unwrap(), [false, true, true, true, false]);
        assert_eq!(propagate_taint(&g, 0, 9).unwrap(), [true; 5]);
    }
}
