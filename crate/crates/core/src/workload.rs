// SPDX-License-Identifier: Apache-2.0

//! Seeded benchmark workloads with a controlled share of contending
//! transactions.
//!
//! A transaction contends when it shares a storage key with another
//! transaction of the block. Each recipe keeps non-contending transactions
//! on private keys. The contending count is the feasible count closest to
//! `conflict_pct * block_size / 100`: pairs for double votes and shared
//! hashes, at least two for hot cells.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::contracts::{auction, ballot, etherdoc, relay};
use crate::host::{execute_serial_tx, VmConfig};
use crate::storage::{State, Value};
use crate::types::{Address, MsgContext, TxRequest, TxStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Benchmark {
    Ballot,
    Auction,
    Etherdoc,
    Mixed,
    Nested,
}

impl Benchmark {
    pub const ALL: [Benchmark; 5] = [
        Benchmark::Ballot,
        Benchmark::Auction,
        Benchmark::Etherdoc,
        Benchmark::Mixed,
        Benchmark::Nested,
    ];

    /// The contract workloads; `Nested` is a synthetic extra.
    pub const STANDARD: [Benchmark; 4] = [
        Benchmark::Ballot,
        Benchmark::Auction,
        Benchmark::Etherdoc,
        Benchmark::Mixed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Ballot => "ballot",
            Benchmark::Auction => "auction",
            Benchmark::Etherdoc => "etherdoc",
            Benchmark::Mixed => "mixed",
            Benchmark::Nested => "nested",
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Benchmark {
    type Err = WorkloadError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Benchmark::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| WorkloadError::UnknownBenchmark(s.to_owned()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub benchmark: Benchmark,
    pub block_size: usize,
    pub conflict_pct: u8,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WorkloadError {
    #[error("unknown benchmark {0:?}")]
    UnknownBenchmark(String),
    #[error("block size must be positive")]
    EmptyBlock,
    #[error("conflict percentage {0} exceeds 100")]
    ConflictRange(u8),
}

/// Generated block input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workload {
    pub spec: WorkloadSpec,
    /// Transactions meant to contend, after feasibility rounding.
    pub contending: usize,
    pub initial_state: State,
    pub txs: Vec<TxRequest>,
}

impl WorkloadSpec {
    /// `round(conflict_pct * block_size / 100)`, halves rounded up.
    pub fn requested_contending(&self) -> usize {
        (self.conflict_pct as usize * self.block_size + 50) / 100
    }
}

/// Transactions that must stay adjacent in block order.
type Unit = Vec<Call>;

/// A transaction before tx ids are assigned.
struct Call {
    contract: &'static str,
    function: &'static str,
    args: Vec<Value>,
    msg: MsgContext,
}

impl Call {
    fn new(
        contract: &'static str,
        function: &'static str,
        args: Vec<Value>,
        sender: Address,
    ) -> Self {
        Call {
            contract,
            function,
            args,
            msg: MsgContext::new(sender),
        }
    }

    fn with_value(mut self, value: u64) -> Self {
        self.msg = self.msg.with_value(value);
        self
    }
}

struct Builder {
    state: State,
    rng: ChaCha8Rng,
    next_addr: u64,
}

impl Builder {
    fn addr(&mut self) -> Address {
        self.next_addr += 1;
        Address::from_index(self.next_addr)
    }

    fn hashcode(&mut self) -> Vec<u8> {
        let mut h = vec![0u8; 32];
        self.rng.fill(h.as_mut_slice());
        h
    }

    /// Applies a setup transaction that must succeed.
    fn setup(&mut self, call: Call) {
        let tx = TxRequest {
            tx_id: 0,
            contract: call.contract.to_owned(),
            function: call.function.to_owned(),
            args: call.args,
            msg: call.msg,
        };
        let status = execute_serial_tx(&mut self.state, &tx, VmConfig::default());
        assert_eq!(
            status,
            TxStatus::Committed,
            "setup {}.{} failed",
            tx.contract,
            tx.function
        );
    }

    /// `singles` private votes and `pairs` double votes.
    fn ballot(&mut self, singles: usize, pairs: usize) -> Vec<Unit> {
        let chair = self.addr();
        let voters: Vec<Address> = (0..singles + pairs).map(|_| self.addr()).collect();
        let names: Vec<Vec<u8>> = (0..voters.len())
            .map(|i| format!("proposal-{i}").into_bytes())
            .collect();
        let names: Vec<&[u8]> = names.iter().map(Vec::as_slice).collect();
        ballot::init(&mut self.state, chair, &names).expect("fresh state");
        for &v in &voters {
            self.setup(Call::new(
                ballot::ID,
                "give_right_to_vote",
                vec![Value::Addr(v)],
                chair,
            ));
        }
        // Each voter backs its own proposal, so only double votes share keys.
        voters
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let vote = || Call::new(ballot::ID, "vote", vec![Value::Int(i as u64)], v);
                if i < pairs {
                    vec![vote(), vote()]
                } else {
                    vec![vote()]
                }
            })
            .collect()
    }

    /// `withdraws` private withdrawals and `raises` bid_plus_one calls.
    fn auction(&mut self, withdraws: usize, raises: usize) -> Vec<Unit> {
        let owner = self.addr();
        auction::init(&mut self.state, owner).expect("fresh state");
        let bidders: Vec<Address> = (0..withdraws).map(|_| self.addr()).collect();
        for (i, &b) in bidders.iter().enumerate() {
            let amount = i as u64 + 1;
            self.setup(
                Call::new(auction::ID, "bid", vec![Value::Int(amount)], b).with_value(amount),
            );
        }
        if withdraws > 0 {
            // Outbids the last bidder so every bidder has pending returns;
            // this bidder never withdraws.
            let top = self.addr();
            let amount = withdraws as u64 + 1;
            self.setup(
                Call::new(auction::ID, "bid", vec![Value::Int(amount)], top).with_value(amount),
            );
        }
        let mut units: Vec<Unit> = bidders
            .into_iter()
            .map(|b| vec![Call::new(auction::ID, "withdraw", vec![], b)])
            .collect();
        for _ in 0..raises {
            let b = self.addr();
            units.push(vec![Call::new(auction::ID, "bid_plus_one", vec![], b)]);
        }
        units
    }

    /// `checks` existence checks and `transfers` transfers to the creator,
    /// each on its own document.
    fn etherdoc(&mut self, checks: usize, transfers: usize) -> Vec<Unit> {
        let creator = self.addr();
        etherdoc::init(&mut self.state, creator).expect("fresh state");
        let mut units = Vec::with_capacity(checks + transfers);
        for i in 0..checks + transfers {
            let owner = self.addr();
            let h = self.hashcode();
            self.setup(Call::new(
                etherdoc::ID,
                "create",
                vec![Value::Bytes(h.clone())],
                owner,
            ));
            units.push(vec![if i < transfers {
                Call::new(
                    etherdoc::ID,
                    "transfer",
                    vec![Value::Bytes(h), Value::Addr(creator)],
                    owner,
                )
            } else {
                Call::new(etherdoc::ID, "exists", vec![Value::Bytes(h)], owner)
            }]);
        }
        units
    }

    /// Relay forwards: `singles` unique hashes and `pairs` shared ones.
    fn nested(&mut self, singles: usize, pairs: usize) -> Vec<Unit> {
        let creator = self.addr();
        etherdoc::init(&mut self.state, creator).expect("fresh state");
        (0..singles + pairs)
            .map(|i| {
                let h = self.hashcode();
                let mut fwd = || {
                    let sender = self.addr();
                    Call::new(relay::ID, "forward", vec![Value::Bytes(h.clone())], sender)
                };
                if i < pairs {
                    vec![fwd(), fwd()]
                } else {
                    vec![fwd()]
                }
            })
            .collect()
    }
}

/// Contending counts a recipe can realize in a part of `size` txs: pairs
/// (double votes, shared hashes) need an even count, hot cells at least two.
#[derive(Clone, Copy)]
enum Shape {
    Pairs,
    Hot,
}

impl Shape {
    fn feasible(self, count: usize, size: usize) -> bool {
        count <= size
            && match self {
                Shape::Pairs => count.is_multiple_of(2),
                Shape::Hot => count != 1,
            }
    }

    /// Feasible count closest to `target100 / 100`, ties toward fewer.
    fn nearest(self, target100: usize, size: usize) -> usize {
        let below = target100 / 100;
        let largest = if self.feasible(size, size) {
            size
        } else {
            size.saturating_sub(1)
        };
        [
            0,
            below.saturating_sub(1),
            below,
            below + 1,
            below + 2,
            largest,
        ]
        .into_iter()
        .filter(|&c| self.feasible(c, size))
        .min_by_key(|&c| (distance(c, target100), c))
        .unwrap_or(0)
    }
}

/// `|100 * count - target100|`.
fn distance(count: usize, target100: usize) -> usize {
    (100 * count).abs_diff(target100)
}

/// Splits the mixed target over ballot, auction and etherdoc parts: the
/// feasible total closest to `target100 / 100` (ties toward fewer), then
/// the most even split.
fn split_mixed(target100: usize, sizes: [usize; 3]) -> [usize; 3] {
    let [b, a, e] = sizes;
    let share = target100 / 300;
    let mut best = [0; 3];
    let mut best_key = (usize::MAX, usize::MAX, usize::MAX);
    for ka in (0..=a).filter(|&x| Shape::Hot.feasible(x, a)) {
        for ke in (0..=e).filter(|&x| Shape::Hot.feasible(x, e)) {
            let rest = target100.saturating_sub(100 * (ka + ke));
            let kb = Shape::Pairs.nearest(rest, b);
            let total = ka + ke + kb;
            let spread = [kb, ka, ke]
                .iter()
                .map(|&x| x.abs_diff(share))
                .max()
                .unwrap_or(0);
            let key = (distance(total, target100), total, spread);
            if key < best_key {
                best_key = key;
                best = [kb, ka, ke];
            }
        }
    }
    best
}

/// Deterministic in `spec`.
pub fn gen_workload(spec: WorkloadSpec) -> Result<Workload, WorkloadError> {
    if spec.block_size == 0 {
        return Err(WorkloadError::EmptyBlock);
    }
    if spec.conflict_pct > 100 {
        return Err(WorkloadError::ConflictRange(spec.conflict_pct));
    }
    let n = spec.block_size;
    let target100 = spec.conflict_pct as usize * n;
    let mut b = Builder {
        state: State::new(),
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        next_addr: 0,
    };
    let (units, contending) = match spec.benchmark {
        Benchmark::Ballot => {
            let k = Shape::Pairs.nearest(target100, n);
            (b.ballot(n - k, k / 2), k)
        }
        Benchmark::Auction => {
            let k = Shape::Hot.nearest(target100, n);
            (b.auction(n - k, k), k)
        }
        Benchmark::Etherdoc => {
            let k = Shape::Hot.nearest(target100, n);
            (b.etherdoc(n - k, k), k)
        }
        Benchmark::Nested => {
            let k = Shape::Pairs.nearest(target100, n);
            (b.nested(n - k, k / 2), k)
        }
        Benchmark::Mixed => {
            let third = n / 3;
            let sizes = [n - 2 * third, third, third];
            let [kb, ka, ke] = split_mixed(target100, sizes);
            let mut units = b.ballot(sizes[0] - kb, kb / 2);
            units.extend(b.auction(sizes[1] - ka, ka));
            units.extend(b.etherdoc(sizes[2] - ke, ke));
            (units, kb + ka + ke)
        }
    };
    let mut units = units;
    units.shuffle(&mut b.rng);
    let txs: Vec<TxRequest> = units
        .into_iter()
        .flatten()
        .enumerate()
        .map(|(tx_id, c)| TxRequest {
            tx_id,
            contract: c.contract.to_owned(),
            function: c.function.to_owned(),
            args: c.args,
            msg: c.msg,
        })
        .collect();
    debug_assert_eq!(txs.len(), n);
    Ok(Workload {
        spec,
        contending,
        initial_state: b.state,
        txs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::miner::execute_serial;

    fn spec(benchmark: Benchmark, block_size: usize, conflict_pct: u8) -> WorkloadSpec {
        WorkloadSpec {
            benchmark,
            block_size,
            conflict_pct,
            seed: 7,
        }
    }

    #[test]
    fn ballot_small_block() {
        let w = gen_workload(spec(Benchmark::Ballot, 4, 50)).unwrap();
        assert_eq!(w.txs.len(), 4);
        assert_eq!(w.contending, 2);
        let run = execute_serial(&w.txs, &w.initial_state, VmConfig::default());
        assert_eq!(
            run.statuses
                .iter()
                .filter(|s| **s == TxStatus::Reverted)
                .count(),
            1
        );
    }

    #[test]
    fn ballot_full_conflict() {
        let w = gen_workload(spec(Benchmark::Ballot, 10, 100)).unwrap();
        let run = execute_serial(&w.txs, &w.initial_state, VmConfig::default());
        assert_eq!(
            run.statuses
                .iter()
                .filter(|s| **s == TxStatus::Reverted)
                .count(),
            5
        );
    }

    #[test]
    fn deterministic_in_seed() {
        for b in Benchmark::ALL {
            let a = gen_workload(spec(b, 30, 40)).unwrap();
            let again = gen_workload(spec(b, 30, 40)).unwrap();
            assert_eq!(a, again);
            assert_eq!(a.initial_state.digest(), again.initial_state.digest());
            let other = gen_workload(WorkloadSpec {
                seed: 8,
                ..spec(b, 30, 40)
            })
            .unwrap();
            assert_ne!(a.txs, other.txs, "{b}");
        }
    }

    #[test]
    fn every_tx_succeeds_without_conflict() {
        for b in Benchmark::ALL {
            let w = gen_workload(spec(b, 25, 0)).unwrap();
            assert_eq!(w.contending, 0);
            let run = execute_serial(&w.txs, &w.initial_state, VmConfig::default());
            assert!(
                run.statuses.iter().all(|s| *s == TxStatus::Committed),
                "{b}"
            );
        }
    }

    #[test]
    fn infeasible_counts_take_nearest_feasible() {
        assert_eq!(
            gen_workload(spec(Benchmark::Auction, 10, 10))
                .unwrap()
                .contending,
            0
        );
        assert_eq!(
            gen_workload(spec(Benchmark::Auction, 149, 1))
                .unwrap()
                .contending,
            2
        );
        assert_eq!(
            gen_workload(spec(Benchmark::Ballot, 10, 30))
                .unwrap()
                .contending,
            2
        );
        assert_eq!(
            gen_workload(spec(Benchmark::Ballot, 151, 99))
                .unwrap()
                .contending,
            150
        );
        assert_eq!(
            gen_workload(spec(Benchmark::Nested, 10, 35))
                .unwrap()
                .contending,
            4
        );
        assert_eq!(
            gen_workload(spec(Benchmark::Mixed, 10, 50))
                .unwrap()
                .contending,
            5
        );
        assert_eq!(
            gen_workload(spec(Benchmark::Mixed, 200, 15))
                .unwrap()
                .contending,
            30
        );
    }

    #[test]
    fn mixed_split_is_even_when_possible() {
        assert_eq!(split_mixed(3000, [68, 66, 66]), [10, 10, 10]);
        assert_eq!(split_mixed(500, [4, 3, 3]).iter().sum::<usize>(), 5);
        assert_eq!(split_mixed(100, [4, 3, 3]), [0, 0, 0]);
        assert_eq!(split_mixed(300, [1, 1, 1]), [0, 0, 0]);
    }

    #[test]
    fn bad_specs() {
        assert_eq!(
            gen_workload(spec(Benchmark::Ballot, 0, 0)),
            Err(WorkloadError::EmptyBlock)
        );
        assert_eq!(
            gen_workload(spec(Benchmark::Ballot, 5, 101)),
            Err(WorkloadError::ConflictRange(101))
        );
        assert!("voting".parse::<Benchmark>().is_err());
        assert_eq!("mixed".parse::<Benchmark>(), Ok(Benchmark::Mixed));
    }
}
