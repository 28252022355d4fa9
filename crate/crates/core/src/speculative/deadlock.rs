// SPDX-License-Identifier: Apache-2.0

//! Waits-for bookkeeping and victim selection.
//!
//! The victim of a cycle is always its member with the largest transaction
//! id, so repeated runs of the same conflict abort the same transaction.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use crate::types::TxId;

/// Picks a victim from the first cycle found, scanning start nodes in
/// ascending order. Returns `None` for an acyclic graph.
pub fn resolve_deadlock(waits_for: &BTreeMap<TxId, BTreeSet<TxId>>) -> Option<TxId> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    let mut marks: HashMap<TxId, Mark> = HashMap::new();

    // Iterative DFS keeping the current path so a back edge yields its cycle.
    for &root in waits_for.keys() {
        if marks.contains_key(&root) {
            continue;
        }
        let mut path: Vec<TxId> = vec![root];
        let mut iters = vec![succ(waits_for, root)];
        marks.insert(root, Mark::Open);
        while let Some(it) = iters.last_mut() {
            match it.next() {
                Some(next) => match marks.get(&next) {
                    Some(Mark::Open) => {
                        let at = path
                            .iter()
                            .position(|&n| n == next)
                            .expect("open node on path");
                        return path[at..].iter().copied().max();
                    }
                    Some(Mark::Done) => {}
                    None => {
                        marks.insert(next, Mark::Open);
                        path.push(next);
                        iters.push(succ(waits_for, next));
                    }
                },
                None => {
                    iters.pop();
                    let done = path.pop().expect("path tracks iters");
                    marks.insert(done, Mark::Done);
                }
            }
        }
    }
    None
}

fn succ(g: &BTreeMap<TxId, BTreeSet<TxId>>, n: TxId) -> std::vec::IntoIter<TxId> {
    g.get(&n)
        .map(|s| s.iter().copied().collect::<Vec<_>>())
        .unwrap_or_default()
        .into_iter()
}

/// Outcome of registering a wait.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum WaitDecision {
    Park,
    /// The caller must abort and retry.
    AbortSelf,
    /// Another transaction was chosen; it is parked on the given shard.
    Victim {
        shard: usize,
    },
}

/// Live waits-for edges. A blocked transaction waits on exactly one other.
#[derive(Debug, Default)]
pub(crate) struct WaitsFor {
    edges: HashMap<TxId, (TxId, usize)>,
    doomed: HashSet<TxId>,
}

impl WaitsFor {
    /// Records `waiter -> blocker` (waiter parked on `shard`) and checks for a
    /// cycle through `waiter`.
    pub fn block(&mut self, waiter: TxId, blocker: TxId, shard: usize) -> WaitDecision {
        if self.doomed.remove(&waiter) {
            self.edges.remove(&waiter);
            return WaitDecision::AbortSelf;
        }
        self.edges.insert(waiter, (blocker, shard));

        let mut cycle = vec![waiter];
        let mut cur = blocker;
        while cur != waiter {
            match self.edges.get(&cur) {
                Some(&(next, _)) => {
                    cycle.push(cur);
                    cur = next;
                    if cycle.len() > self.edges.len() {
                        // A cycle not through `waiter`; whoever closed it resolves it.
                        return WaitDecision::Park;
                    }
                }
                None => return WaitDecision::Park,
            }
        }
        let victim = cycle.into_iter().max().expect("non-empty cycle");
        if victim == waiter {
            self.edges.remove(&waiter);
            WaitDecision::AbortSelf
        } else if !self.doomed.insert(victim) {
            // Already signalled; its abort will wake us.
            WaitDecision::Park
        } else {
            let (_, shard) = self.edges[&victim];
            WaitDecision::Victim { shard }
        }
    }

    /// Clears all wait state of `tx` (it acquired, or it is finishing).
    pub fn clear(&mut self, tx: TxId) {
        self.edges.remove(&tx);
        self.doomed.remove(&tx);
    }

    #[cfg(test)]
    pub fn is_doomed(&self, tx: TxId) -> bool {
        self.doomed.contains(&tx)
    }
}
