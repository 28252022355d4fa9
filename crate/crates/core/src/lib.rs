// SPDX-License-Identifier: Apache-2.0

//! Speculative parallel execution of contract transactions.
//!
//! A miner runs a block's transactions concurrently under transactional
//! boosting ([`speculative`]), publishes the serial schedule it discovered
//! ([`miner`]), and a validator replays that schedule as a deterministic
//! fork-join program ([`validator`]). Blocks and state digests are defined
//! in [`chain`]; [`workload`] and [`harness`] drive the benchmarks.

pub mod chain;
pub mod contracts;
pub mod harness;
pub mod host;
pub mod miner;
pub mod speculative;
pub mod storage;
pub mod striped;
pub mod types;
pub mod validator;
pub mod workload;

pub use chain::{state_digest, Block, GENESIS_DIGEST};
pub use host::{Abort, Exec, Host, VmConfig};
pub use miner::{execute_serial, mine_in_parallel, HappensBeforeGraph, Schedule};
pub use speculative::{ActionHandle, LockProfile, SpeculativeStore};
pub use storage::{MapKey, State, StorageKey, Value};
pub use types::{Address, MsgContext, TxId, TxRequest, TxStatus, DEFAULT_GAS_LIMIT};
pub use validator::{replay, replay_bytes, RejectReason, Verdict, VerificationResult};
pub use workload::{gen_workload, Benchmark, Workload, WorkloadSpec};
