// SPDX-License-Identifier: Apache-2.0

use crate::miner::Schedule;
use crate::types::TxId;

/// Fork-join task graph: one task per transaction, each joining its
/// happens-before predecessors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskGraph {
    /// Serial order S; tasks are forked in this order.
    pub order: Vec<TxId>,
    /// Join set B of each task, indexed by tx id.
    pub joins: Vec<Vec<TxId>>,
    /// Reverse of `joins`: tasks waiting on each task.
    pub(crate) dependents: Vec<Vec<TxId>>,
}

impl TaskGraph {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

/// Builds the task graph of `s`, or explains why `s` is not a valid
/// schedule (S not a permutation of the nodes, not topological for H, or H
/// not acyclic).
pub fn construct_validator(s: &Schedule) -> Result<TaskGraph, String> {
    let n = s.serial_order.len();
    if !s.hb.nodes.iter().copied().eq(0..n) {
        return Err(format!("graph nodes are not the tx ids 0..{n}"));
    }
    let mut position = vec![usize::MAX; n];
    for (pos, &tx) in s.serial_order.iter().enumerate() {
        if tx >= n || position[tx] != usize::MAX {
            return Err(format!(
                "serial order is not a permutation (entry {pos} = {tx})"
            ));
        }
        position[tx] = pos;
    }
    let mut joins = vec![Vec::new(); n];
    let mut dependents = vec![Vec::new(); n];
    for &(u, v) in &s.hb.edges {
        if u >= n || v >= n {
            return Err(format!("edge ({u}, {v}) names an unknown tx"));
        }
        // A cycle always contains an edge pointing backwards in S.
        if position[u] >= position[v] {
            return Err(format!("edge ({u}, {v}) contradicts the serial order"));
        }
        joins[v].push(u);
        dependents[u].push(v);
    }
    Ok(TaskGraph {
        order: s.serial_order.clone(),
        joins,
        dependents,
    })
}

/// Transitive closure of the happens-before relation as one bitset per tx.
#[derive(Debug, Clone)]
pub struct Reachability {
    words: usize,
    bits: Vec<u64>,
}

impl Reachability {
    pub fn new(graph: &TaskGraph) -> Self {
        let n = graph.len();
        let words = n.div_ceil(64).max(1);
        let mut bits = vec![0u64; n * words];
        // Successors come later in S, so a reverse sweep sees them finished.
        for &u in graph.order.iter().rev() {
            for &v in &graph.dependents[u] {
                bits[u * words + v / 64] |= 1 << (v % 64);
                for w in 0..words {
                    let from_v = bits[v * words + w];
                    bits[u * words + w] |= from_v;
                }
            }
        }
        Reachability { words, bits }
    }

    /// Whether `u` happens before `v` (strictly).
    pub fn reaches(&self, u: TxId, v: TxId) -> bool {
        self.bits[u * self.words + v / 64] & (1 << (v % 64)) != 0
    }

    pub fn ordered(&self, u: TxId, v: TxId) -> bool {
        self.reaches(u, v) || self.reaches(v, u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::miner::HappensBeforeGraph;

    fn schedule(order: &[TxId], edges: &[(TxId, TxId)]) -> Schedule {
        let mut hb = HappensBeforeGraph::with_nodes(0..order.len());
        for &(u, v) in edges {
            hb.add_edge(u, v);
        }
        Schedule {
            serial_order: order.to_vec(),
            hb,
        }
    }

    #[test]
    fn worked_example_joins() {
        let g = construct_validator(&schedule(&[0, 1, 2], &[(0, 2)])).unwrap();
        assert_eq!(g.joins, vec![vec![], vec![], vec![0]]);
    }

    #[test]
    fn independent_and_chain() {
        let g = construct_validator(&schedule(&[0, 1, 2], &[])).unwrap();
        assert!(g.joins.iter().all(Vec::is_empty));
        let g = construct_validator(&schedule(&[0, 1, 2], &[(0, 1), (1, 2)])).unwrap();
        assert_eq!(g.joins, vec![vec![], vec![0], vec![1]]);
        let r = Reachability::new(&g);
        assert!(r.reaches(0, 2) && !r.reaches(2, 0) && !r.reaches(0, 0));
    }

    #[test]
    fn malformed_schedules() {
        assert!(construct_validator(&schedule(&[1, 0, 2], &[(0, 1)])).is_err());
        assert!(construct_validator(&schedule(&[0, 0, 2], &[])).is_err());
        assert!(construct_validator(&schedule(&[0, 1], &[(0, 1), (1, 0)])).is_err());
        assert!(construct_validator(&schedule(&[0, 1], &[(0, 5)])).is_err());
    }

    #[test]
    fn closure_spans_words() {
        let n = 200;
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
        let order: Vec<_> = (0..n).collect();
        let r = Reachability::new(&construct_validator(&schedule(&order, &edges)).unwrap());
        assert!(r.reaches(0, n - 1));
        assert!(r.reaches(63, 64) && r.reaches(64, 130));
        assert!(!r.reaches(130, 64));
    }
}
