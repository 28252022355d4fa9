// SPDX-License-Identifier: Apache-2.0

//! Parallel speculative mining.
//!
//! Workers pull transactions in block order and run each as a top-level
//! action on a shared [`SpeculativeStore`]. Committed and failed
//! transactions both publish lock profiles; consecutive use counters on a
//! lock become happens-before edges, and the graph's min-id topological
//! order is the block's serial order.

mod graph;

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use crate::chain::{Block, BLOCK_VERSION};
use crate::contracts::dispatch;
use crate::host::{execute_serial_tx, Abort, VmConfig};
use crate::speculative::{LockProfile, SpeculativeStore};
use crate::storage::State;
use crate::types::{TxRequest, TxStatus};

pub use graph::{
    build_happens_before, topo_sort, CycleError, HappensBeforeGraph, MalformedProfiles, Schedule,
};
pub(crate) use graph::{holders_by_key, is_contiguous};

/// Result of running a tx list one at a time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SerialRun {
    pub state: State,
    pub digest: String,
    /// In list order.
    pub statuses: Vec<TxStatus>,
}

/// Executes `txs` in list order on a copy of `initial`.
pub fn execute_serial(txs: &[TxRequest], initial: &State, config: VmConfig) -> SerialRun {
    let mut state = initial.clone();
    let statuses = run_serial(&mut state, txs, config);
    let digest = state.digest();
    SerialRun {
        state,
        digest,
        statuses,
    }
}

/// Executes `txs` in list order against `state` in place.
pub fn run_serial(state: &mut State, txs: &[TxRequest], config: VmConfig) -> Vec<TxStatus> {
    txs.iter()
        .map(|tx| execute_serial_tx(state, tx, config))
        .collect()
}

/// Execution products of one mined block, before digests are attached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MineOutcome {
    /// Indexed by tx id.
    pub statuses: Vec<TxStatus>,
    /// Indexed by tx id.
    pub profiles: Vec<LockProfile>,
    pub schedule: Schedule,
    /// Deadlock-induced re-executions.
    pub retries: u64,
}

/// A block together with the state it leads to.
#[derive(Debug, Clone)]
pub struct MinedBlock {
    pub block: Block,
    pub post_state: State,
}

fn assert_dense(txs: &[TxRequest]) {
    for (i, tx) in txs.iter().enumerate() {
        assert_eq!(tx.tx_id, i, "tx ids must be dense and in block order");
    }
}

/// Runs one transaction to a terminal status, retrying deadlock victims.
fn run_speculative(
    store: &SpeculativeStore,
    tx: &TxRequest,
    retries: &AtomicU64,
) -> (TxStatus, LockProfile) {
    loop {
        let mut action = store.begin_action(tx.tx_id, tx.msg.gas_limit);
        match dispatch(&mut action, tx) {
            Ok(()) => {
                let profile = action.commit().expect("dispatch resolves nested actions");
                return (TxStatus::Committed, profile);
            }
            Err(Abort::Deadlock) => {
                action.abort();
                retries.fetch_add(1, Ordering::Relaxed);
            }
            Err(abort) => {
                let status = abort.status().expect("deadlock handled above");
                let profile = action.revert().expect("action is live");
                return (status, profile);
            }
        }
    }
}

/// Mines `txs` on `store` with up to `workers` threads: execution, graph
/// construction and sorting. Resets the store's use counters first.
pub fn mine_on_store(store: &SpeculativeStore, txs: &[TxRequest], workers: usize) -> MineOutcome {
    assert!(workers > 0, "at least one worker");
    assert_dense(txs);
    store.reset_block_counters();

    let next = AtomicUsize::new(0);
    let retries = AtomicU64::new(0);
    let mut results: Vec<Option<(TxStatus, LockProfile)>> = vec![None; txs.len()];
    let threads = workers.min(txs.len());
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        let Some(tx) = txs.get(i) else { break };
                        done.push((i, run_speculative(store, tx, &retries)));
                    }
                    done
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("mining worker panicked") {
                results[i] = Some(r);
            }
        }
    });

    let (statuses, profiles): (Vec<_>, Vec<_>) = results
        .into_iter()
        .map(|r| r.expect("every tx executed"))
        .unzip();
    let hb = build_happens_before(&profiles).expect("store counters are contiguous");
    let serial_order = topo_sort(&hb).expect("counter edges are acyclic");
    MineOutcome {
        statuses,
        profiles,
        schedule: Schedule { serial_order, hb },
        retries: retries.into_inner(),
    }
}

/// Mines a block on top of `pre`.
pub fn mine_in_parallel(
    pre: &State,
    txs: &[TxRequest],
    workers: usize,
    config: VmConfig,
    parent_digest: &str,
) -> MinedBlock {
    let store = SpeculativeStore::from_state(pre, config);
    let outcome = mine_on_store(&store, txs, workers);
    let post_state = store.snapshot();
    let block = Block {
        version: BLOCK_VERSION,
        parent_digest: parent_digest.to_owned(),
        txs: txs.to_vec(),
        statuses: outcome.statuses,
        schedule: outcome.schedule,
        profiles: outcome.profiles,
        pre_state_digest: pre.digest(),
        post_state_digest: post_state.digest(),
    };
    MinedBlock { block, post_state }
}

/// `txs` reordered by a serial order.
pub fn reorder(txs: &[TxRequest], order: &[usize]) -> Vec<TxRequest> {
    order.iter().map(|&i| txs[i].clone()).collect()
}
