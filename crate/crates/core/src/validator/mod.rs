// SPDX-License-Identifier: Apache-2.0

//! Deterministic fork-join replay of a mined block.
//!
//! Verification order: schedule shape, published profiles against the
//! schedule, pre-state digest, parallel replay, replay traces against the
//! profiles, statuses, post-state digest. The first failure decides the
//! rejection reason.

mod graph;
mod replay_host;
mod scheduler;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::chain::{Block, BlockError};
use crate::host::VmConfig;
use crate::miner::{holders_by_key, is_contiguous};
use crate::storage::{State, StorageKey};
use crate::types::TxId;

pub use graph::{construct_validator, Reachability, TaskGraph};
pub use replay_host::{ReplayBase, ReplayTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RejectReason {
    DigestMismatch,
    StatusMismatch,
    ProfileMismatch,
    RaceDetected,
    MalformedSchedule,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectReason::DigestMismatch => "DigestMismatch",
            RejectReason::StatusMismatch => "StatusMismatch",
            RejectReason::ProfileMismatch => "ProfileMismatch",
            RejectReason::RaceDetected => "RaceDetected",
            RejectReason::MalformedSchedule => "MalformedSchedule",
        })
    }
}

/// A rejection reason with a human-readable explanation.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{reason}: {detail}")]
pub struct Rejection {
    pub reason: RejectReason,
    pub detail: String,
}

fn reject(reason: RejectReason, detail: impl Into<String>) -> Rejection {
    Rejection {
        reason,
        detail: detail.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject(Rejection),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerificationResult {
    pub verdict: Verdict,
    /// Digest reached by replay, if replay ran.
    pub replay_digest: Option<String>,
}

impl VerificationResult {
    pub fn is_accept(&self) -> bool {
        self.verdict == Verdict::Accept
    }

    pub fn reason(&self) -> Option<RejectReason> {
        match &self.verdict {
            Verdict::Accept => None,
            Verdict::Reject(r) => Some(r.reason),
        }
    }
}

fn block_error(e: BlockError) -> Rejection {
    let reason = match &e {
        BlockError::Invalid {
            field: "statuses", ..
        } => RejectReason::StatusMismatch,
        BlockError::Invalid {
            field: "profiles", ..
        } => RejectReason::ProfileMismatch,
        BlockError::Invalid { field, .. } if field.ends_with("digest") => {
            RejectReason::DigestMismatch
        }
        _ => RejectReason::MalformedSchedule,
    };
    reject(reason, e.to_string())
}

/// A block whose schedule and profiles passed the static checks, ready to
/// be replayed.
pub struct Replayer<'b> {
    block: &'b Block,
    graph: TaskGraph,
    reach: Reachability,
}

/// Output of the parallel phase.
pub struct ReplayOutput {
    pub base: ReplayBase,
    /// Indexed by tx id.
    pub traces: Vec<ReplayTrace>,
}

impl<'b> Replayer<'b> {
    /// Static checks: block shape, schedule, and published profiles
    /// against the schedule.
    pub fn new(block: &'b Block) -> Result<Self, Rejection> {
        block.check().map_err(block_error)?;
        let graph = construct_validator(&block.schedule)
            .map_err(|d| reject(RejectReason::MalformedSchedule, d))?;
        let reach = Reachability::new(&graph);
        let replayer = Replayer {
            block,
            graph,
            reach,
        };
        replayer.check_profiles()?;
        Ok(replayer)
    }

    pub fn graph(&self) -> &TaskGraph {
        &self.graph
    }

    /// Every lock's holders must carry counters 1..k, each consecutive pair
    /// ordered by the schedule in counter order.
    fn check_profiles(&self) -> Result<(), Rejection> {
        let by_key = holders_by_key(&self.block.profiles);
        for (key, holders) in &by_key {
            if !is_contiguous(holders) {
                return Err(reject(
                    RejectReason::ProfileMismatch,
                    format!("counters on {key} are not 1..{}", holders.len()),
                ));
            }
        }
        for (key, holders) in &by_key {
            for pair in holders.windows(2) {
                let (a, b) = (pair[0].1, pair[1].1);
                if !self.reach.ordered(a, b) {
                    return Err(reject(
                        RejectReason::RaceDetected,
                        format!("txs {a} and {b} both hold {key} but are unordered"),
                    ));
                }
            }
        }
        for (key, holders) in &by_key {
            for pair in holders.windows(2) {
                let (a, b) = (pair[0].1, pair[1].1);
                if !self.reach.reaches(a, b) {
                    return Err(reject(
                        RejectReason::ProfileMismatch,
                        format!("counters on {key} order tx {a} before {b}, schedule disagrees"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Runs every transaction as a fork-join task over `base`.
    pub fn execute(&self, base: ReplayBase, workers: usize, config: VmConfig) -> ReplayOutput {
        let txs = &self.block.txs;
        let traces = scheduler::run_fork_join(&self.graph, workers, |tx| {
            replay_host::replay_tx(&base, &txs[tx], config)
        });
        ReplayOutput { base, traces }
    }

    /// Post-replay checks and the final verdict.
    pub fn verify(&self, output: ReplayOutput) -> VerificationResult {
        let state = output.base.into_state();
        let digest = state.digest();
        let verdict = match self
            .check_traces(&output.traces)
            .and_then(|()| self.check_post_digest(&digest))
        {
            Ok(()) => Verdict::Accept,
            Err(r) => Verdict::Reject(r),
        };
        VerificationResult {
            verdict,
            replay_digest: Some(digest),
        }
    }

    fn check_post_digest(&self, digest: &str) -> Result<(), Rejection> {
        if digest != self.block.post_state_digest {
            return Err(reject(
                RejectReason::DigestMismatch,
                format!(
                    "replay reached {digest}, block claims {}",
                    self.block.post_state_digest
                ),
            ));
        }
        Ok(())
    }

    /// Compares replay traces with the published profiles and statuses.
    pub fn check_traces(&self, traces: &[ReplayTrace]) -> Result<(), Rejection> {
        let block = self.block;
        // (a) membership
        for (tx, (trace, profile)) in traces.iter().zip(&block.profiles).enumerate() {
            let touched: BTreeSet<&StorageKey> = trace.keys.iter().collect();
            let listed: BTreeSet<&StorageKey> = profile.counters.keys().collect();
            if touched != listed {
                let diff = touched
                    .symmetric_difference(&listed)
                    .next()
                    .expect("sets differ");
                return Err(reject(
                    RejectReason::ProfileMismatch,
                    format!("tx {tx}: replay and profile disagree on {diff}"),
                ));
            }
        }

        let mut position = vec![0; traces.len()];
        for (pos, &tx) in self.graph.order.iter().enumerate() {
            position[tx] = pos;
        }
        let mut touchers: BTreeMap<&StorageKey, Vec<TxId>> = BTreeMap::new();
        for (tx, trace) in traces.iter().enumerate() {
            for key in &trace.keys {
                touchers.entry(key).or_default().push(tx);
            }
        }
        for txs in touchers.values_mut() {
            txs.sort_unstable_by_key(|&t| position[t]);
        }
        // (b) race freedom: S-adjacent touchers must be H-ordered, which by
        // transitivity orders every pair.
        for (key, txs) in &touchers {
            for pair in txs.windows(2) {
                if !self.reach.reaches(pair[0], pair[1]) {
                    return Err(reject(
                        RejectReason::RaceDetected,
                        format!("txs {} and {} touch {key} unordered", pair[0], pair[1]),
                    ));
                }
            }
        }
        // (c) per-key order agrees with counters
        let holders = holders_by_key(&block.profiles);
        for (key, txs) in &touchers {
            let by_counter: Vec<TxId> = holders
                .get(key)
                .map(|h| h.iter().map(|&(_, t)| t).collect())
                .unwrap_or_default();
            if *txs != by_counter {
                return Err(reject(
                    RejectReason::ProfileMismatch,
                    format!("order on {key} is {txs:?}, counters say {by_counter:?}"),
                ));
            }
        }
        // (d) statuses
        for (tx, (trace, &claimed)) in traces.iter().zip(&block.statuses).enumerate() {
            if trace.status != claimed {
                return Err(reject(
                    RejectReason::StatusMismatch,
                    format!("tx {tx} replayed as {}, block says {claimed}", trace.status),
                ));
            }
        }
        Ok(())
    }
}

/// Full validation of `block` starting from `pre_state`.
pub fn replay(
    block: &Block,
    pre_state: &State,
    workers: usize,
    config: VmConfig,
) -> VerificationResult {
    let rejected = |r| VerificationResult {
        verdict: Verdict::Reject(r),
        replay_digest: None,
    };
    let replayer = match Replayer::new(block) {
        Ok(r) => r,
        Err(r) => return rejected(r),
    };
    let pre_digest = pre_state.digest();
    if pre_digest != block.pre_state_digest {
        return rejected(reject(
            RejectReason::DigestMismatch,
            format!(
                "pre-state is {pre_digest}, block claims {}",
                block.pre_state_digest
            ),
        ));
    }
    let output = replayer.execute(ReplayBase::from_state(pre_state), workers, config);
    replayer.verify(output)
}

/// Validates a serialized block. Bytes that do not parse are rejected like
/// any other malformed block rather than reported as an I/O problem.
pub fn replay_bytes(
    bytes: &[u8],
    pre_state: &State,
    workers: usize,
    config: VmConfig,
) -> VerificationResult {
    match crate::chain::parse_block(bytes) {
        Ok(block) => replay(&block, pre_state, workers, config),
        Err(e) => VerificationResult {
            verdict: Verdict::Reject(block_error(e)),
            replay_digest: None,
        },
    }
}

/// Standalone trace check, for callers holding traces from elsewhere.
pub fn check_traces(traces: &[ReplayTrace], block: &Block) -> Result<(), Rejection> {
    if traces.len() != block.txs.len() {
        return Err(reject(
            RejectReason::ProfileMismatch,
            format!("{} traces for {} txs", traces.len(), block.txs.len()),
        ));
    }
    Replayer::new(block)?.check_traces(traces)
}
