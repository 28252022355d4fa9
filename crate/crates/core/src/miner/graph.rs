// SPDX-License-Identifier: Apache-2.0

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::speculative::LockProfile;
use crate::storage::StorageKey;
use crate::types::TxId;

/// Happens-before graph over a block's transactions. `(u, v)` means u is
/// ordered before v.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HappensBeforeGraph {
    pub nodes: Vec<TxId>,
    pub edges: BTreeSet<(TxId, TxId)>,
}

impl HappensBeforeGraph {
    pub fn with_nodes(nodes: impl IntoIterator<Item = TxId>) -> Self {
        let mut nodes: Vec<TxId> = nodes.into_iter().collect();
        nodes.sort_unstable();
        nodes.dedup();
        HappensBeforeGraph {
            nodes,
            edges: BTreeSet::new(),
        }
    }

    pub fn add_edge(&mut self, from: TxId, to: TxId) {
        self.edges.insert((from, to));
    }

    pub fn predecessors(&self, v: TxId) -> impl Iterator<Item = TxId> + '_ {
        self.edges.iter().filter(move |e| e.1 == v).map(|e| e.0)
    }
}

/// Published schedule: serial order S and the graph H it sorts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub serial_order: Vec<TxId>,
    pub hb: HappensBeforeGraph,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MalformedProfiles {
    #[error("lock {key}: counters {counters:?} are not exactly 1..={len}", len = counters.len())]
    NotContiguous { key: StorageKey, counters: Vec<u64> },
    #[error("tx {0} has more than one profile")]
    DuplicateTx(TxId),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("happens-before graph has a cycle through tx {0}")]
pub struct CycleError(pub TxId);

/// Holders of each lock, sorted by counter.
pub(crate) fn holders_by_key(profiles: &[LockProfile]) -> BTreeMap<&StorageKey, Vec<(u64, TxId)>> {
    let mut by_key: BTreeMap<&StorageKey, Vec<(u64, TxId)>> = BTreeMap::new();
    for p in profiles {
        for (k, &c) in &p.counters {
            by_key.entry(k).or_default().push((c, p.tx_id));
        }
    }
    for holders in by_key.values_mut() {
        holders.sort_unstable();
    }
    by_key
}

pub(crate) fn is_contiguous(holders: &[(u64, TxId)]) -> bool {
    holders.iter().zip(1u64..).all(|(&(c, _), want)| c == want)
}

/// One edge per pair of consecutive counter values on a lock.
pub fn build_happens_before(
    profiles: &[LockProfile],
) -> Result<HappensBeforeGraph, MalformedProfiles> {
    let mut seen = BTreeSet::new();
    for p in profiles {
        if !seen.insert(p.tx_id) {
            return Err(MalformedProfiles::DuplicateTx(p.tx_id));
        }
    }
    let mut graph = HappensBeforeGraph::with_nodes(seen);
    for (key, holders) in holders_by_key(profiles) {
        if !is_contiguous(&holders) {
            return Err(MalformedProfiles::NotContiguous {
                key: key.clone(),
                counters: holders.iter().map(|h| h.0).collect(),
            });
        }
        for pair in holders.windows(2) {
            graph.add_edge(pair[0].1, pair[1].1);
        }
    }
    Ok(graph)
}

/// Kahn's algorithm, releasing the smallest ready tx id first.
pub fn topo_sort(graph: &HappensBeforeGraph) -> Result<Vec<TxId>, CycleError> {
    let mut indegree: BTreeMap<TxId, usize> = graph.nodes.iter().map(|&n| (n, 0)).collect();
    let mut succ: BTreeMap<TxId, Vec<TxId>> = BTreeMap::new();
    for &(u, v) in &graph.edges {
        *indegree.entry(v).or_default() += 1;
        indegree.entry(u).or_default();
        succ.entry(u).or_default().push(v);
    }
    let mut ready: BinaryHeap<Reverse<TxId>> = indegree
        .iter()
        .filter(|(_, &d)| d == 0)
        .map(|(&n, _)| Reverse(n))
        .collect();
    let mut order = Vec::with_capacity(indegree.len());
    while let Some(Reverse(n)) = ready.pop() {
        order.push(n);
        for &v in succ.get(&n).map_or(&[][..], Vec::as_slice) {
            let d = indegree.get_mut(&v).expect("edge target registered");
            *d -= 1;
            if *d == 0 {
                ready.push(Reverse(v));
            }
        }
    }
    if order.len() < indegree.len() {
        let stuck = indegree
            .iter()
            .find(|(_, &d)| d > 0)
            .map(|(&n, _)| n)
            .expect("some node kept a positive in-degree");
        return Err(CycleError(stuck));
    }
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lock(name: &'static str) -> StorageKey {
        StorageKey::scalar("t", name)
    }

    fn profile(tx: TxId, counters: &[(&'static str, u64)]) -> LockProfile {
        LockProfile {
            tx_id: tx,
            counters: counters.iter().map(|&(k, c)| (lock(k), c)).collect(),
        }
    }

    fn edges(g: &HappensBeforeGraph) -> Vec<(TxId, TxId)> {
        g.edges.iter().copied().collect()
    }

    #[test]
    fn worked_example() {
        // A=0, B=1, C=2
        let g = build_happens_before(&[
            profile(0, &[("l", 1)]),
            profile(1, &[]),
            profile(2, &[("l", 2)]),
        ])
        .unwrap();
        assert_eq!(g.nodes, vec![0, 1, 2]);
        assert_eq!(edges(&g), vec![(0, 2)]);
    }

    #[test]
    fn empty_profiles_have_no_edges() {
        let g = build_happens_before(&[profile(0, &[]), profile(1, &[])]).unwrap();
        assert!(g.edges.is_empty());
    }

    #[test]
    fn only_consecutive_counters_link() {
        let g = build_happens_before(&[
            profile(0, &[("m", 1)]),
            profile(1, &[("m", 2)]),
            profile(2, &[("m", 3)]),
        ])
        .unwrap();
        assert_eq!(edges(&g), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn gaps_and_duplicates_are_malformed() {
        let gap = build_happens_before(&[profile(0, &[("m", 1)]), profile(1, &[("m", 3)])]);
        assert!(matches!(gap, Err(MalformedProfiles::NotContiguous { .. })));
        let dup = build_happens_before(&[profile(0, &[("m", 1)]), profile(1, &[("m", 1)])]);
        assert!(matches!(dup, Err(MalformedProfiles::NotContiguous { .. })));
        let twice = build_happens_before(&[profile(0, &[]), profile(0, &[])]);
        assert_eq!(twice, Err(MalformedProfiles::DuplicateTx(0)));
    }

    fn graph(n: usize, e: &[(TxId, TxId)]) -> HappensBeforeGraph {
        let mut g = HappensBeforeGraph::with_nodes(0..n);
        for &(u, v) in e {
            g.add_edge(u, v);
        }
        g
    }

    #[test]
    fn topo_examples() {
        assert_eq!(
            topo_sort(&graph(3, &[(0, 2), (1, 2)])).unwrap(),
            vec![0, 1, 2]
        );
        assert_eq!(topo_sort(&graph(3, &[])).unwrap(), vec![0, 1, 2]);
        assert_eq!(
            topo_sort(&graph(3, &[(2, 1), (1, 0)])).unwrap(),
            vec![2, 1, 0]
        );
        assert_eq!(topo_sort(&graph(4, &[(3, 0)])).unwrap(), vec![1, 2, 3, 0]);
    }

    #[test]
    fn topo_cycle_is_reported() {
        assert!(topo_sort(&graph(3, &[(0, 1), (1, 0)])).is_err());
    }
}
