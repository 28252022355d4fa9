// SPDX-License-Identifier: Apache-2.0

//! Dependency-counting executor for a [`TaskGraph`]. Joins are the only
//! synchronization between tasks; ready tasks start smallest tx id first.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use parking_lot::{Condvar, Mutex};

use super::TaskGraph;
use crate::types::TxId;

struct Queue {
    ready: BinaryHeap<Reverse<TxId>>,
    pending: Vec<usize>,
    finished: usize,
}

/// Runs `task` once per tx on up to `workers` threads, each task after all
/// of its joins. Results are indexed by tx id.
pub(crate) fn run_fork_join<R, F>(graph: &TaskGraph, workers: usize, task: F) -> Vec<R>
where
    R: Send,
    F: Fn(TxId) -> R + Sync,
{
    let n = graph.len();
    let pending: Vec<usize> = graph.joins.iter().map(Vec::len).collect();
    let ready = (0..n).filter(|&t| pending[t] == 0).map(Reverse).collect();
    let queue = Mutex::new(Queue {
        ready,
        pending,
        finished: 0,
    });
    let wake = Condvar::new();

    let worker = || {
        let mut out = Vec::new();
        loop {
            let tx = {
                let mut q = queue.lock();
                loop {
                    if let Some(Reverse(tx)) = q.ready.pop() {
                        break Some(tx);
                    }
                    if q.finished == n {
                        break None;
                    }
                    wake.wait(&mut q);
                }
            };
            let Some(tx) = tx else { break };
            out.push((tx, task(tx)));
            let mut q = queue.lock();
            q.finished += 1;
            for &d in &graph.dependents[tx] {
                q.pending[d] -= 1;
                if q.pending[d] == 0 {
                    q.ready.push(Reverse(d));
                }
            }
            drop(q);
            wake.notify_all();
        }
        out
    };

    let mut results: Vec<Option<R>> = (0..n).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers.clamp(1, n.max(1)))
            .map(|_| scope.spawn(worker))
            .collect();
        for h in handles {
            for (tx, r) in h.join().expect("replay worker panicked") {
                results[tx] = Some(r);
            }
        }
    });
    results
        .into_iter()
        .map(|r| r.expect("acyclic graph runs every task"))
        .collect()
}
