// SPDX-License-Identifier: Apache-2.0

//! The storage interface contract code runs against.
//!
//! Contracts never touch a [`State`] directly. Every access flows through a
//! [`Host`], so the same contract procedures run serially, speculatively
//! under the miner, and deterministically under the validator.

use std::hint::black_box;

use crate::storage::{State, StorageKey, Value};
use crate::types::{TxRequest, TxStatus};

/// Signal that unwinds a contract invocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum Abort {
    /// Application-level `throw`.
    #[error("reverted: {0}")]
    Revert(&'static str),
    #[error("out of gas")]
    OutOfGas,
    /// Chosen as a deadlock victim; the whole transaction is retried.
    #[error("aborted to break a deadlock")]
    Deadlock,
}

impl Abort {
    /// Status recorded for a transaction that terminated with this signal.
    /// `Deadlock` never terminates a transaction.
    pub fn status(self) -> Option<TxStatus> {
        match self {
            Abort::Revert(_) => Some(TxStatus::Reverted),
            Abort::OutOfGas => Some(TxStatus::OutOfGas),
            Abort::Deadlock => None,
        }
    }
}

pub type Exec<T> = Result<T, Abort>;

/// Nested contract call body.
pub type NestedCall<'a> = dyn FnMut(&mut dyn Host) -> Exec<()> + 'a;

/// Execution handle. Each storage operation costs one step.
pub trait Host {
    fn read(&mut self, key: &StorageKey) -> Exec<Value>;
    fn write(&mut self, key: &StorageKey, value: Value) -> Exec<()>;
    fn delete(&mut self, key: &StorageKey) -> Exec<()>;
    /// Charges one step that is not a storage access (e.g. a loop hop).
    fn step(&mut self) -> Exec<()>;
    /// Runs `call` as a nested action. A revert inside the child is undone
    /// and reported as `Ok(false)`; the parent keeps running. Every other
    /// abort propagates.
    fn nested(&mut self, call: &mut NestedCall<'_>) -> Exec<bool>;
}

/// Knobs shared by every execution mode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VmConfig {
    /// Busy-work iterations per charged step, emulating interpreter cost.
    pub step_work: u32,
}

/// Emulated cost of one VM step.
#[inline]
pub fn burn(iterations: u32) {
    let mut x = 0x9e37_79b9_7f4a_7c15u64;
    for i in 0..iterations {
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        x = x.wrapping_add(i as u64);
    }
    black_box(x);
}

/// Step accounting against a transaction's gas limit.
#[derive(Debug, Clone, Copy)]
pub struct GasMeter {
    used: u64,
    limit: u64,
    work: u32,
}

impl GasMeter {
    pub fn new(limit: u64, config: VmConfig) -> Self {
        GasMeter {
            used: 0,
            limit,
            work: config.step_work,
        }
    }

    pub fn charge(&mut self) -> Exec<()> {
        self.used += 1;
        if self.used > self.limit {
            return Err(Abort::OutOfGas);
        }
        burn(self.work);
        Ok(())
    }

    pub fn used(&self) -> u64 {
        self.used
    }
}

/// Serial shim: applies operations directly to a [`State`], keeping only an
/// undo log so a failed transaction (or nested call) can be discarded.
pub struct SerialHost<'a> {
    state: &'a mut State,
    gas: GasMeter,
    undo: Vec<(StorageKey, Value)>,
}

impl<'a> SerialHost<'a> {
    pub fn new(state: &'a mut State, gas_limit: u64, config: VmConfig) -> Self {
        SerialHost {
            state,
            gas: GasMeter::new(gas_limit, config),
            undo: Vec::new(),
        }
    }

    fn rollback_to(&mut self, mark: usize) {
        while self.undo.len() > mark {
            let (k, v) = self.undo.pop().expect("len checked");
            self.state.set(k, v);
        }
    }

    pub fn steps_used(&self) -> u64 {
        self.gas.used()
    }
}

impl Host for SerialHost<'_> {
    fn read(&mut self, key: &StorageKey) -> Exec<Value> {
        self.gas.charge()?;
        Ok(self.state.get(key).clone())
    }

    fn write(&mut self, key: &StorageKey, value: Value) -> Exec<()> {
        self.gas.charge()?;
        let prior = self.state.set(key.clone(), value);
        self.undo.push((key.clone(), prior));
        Ok(())
    }

    fn delete(&mut self, key: &StorageKey) -> Exec<()> {
        self.write(key, Value::Absent)
    }

    fn step(&mut self) -> Exec<()> {
        self.gas.charge()
    }

    fn nested(&mut self, call: &mut NestedCall<'_>) -> Exec<bool> {
        let mark = self.undo.len();
        match call(self) {
            Ok(()) => Ok(true),
            Err(Abort::Revert(_)) => {
                self.rollback_to(mark);
                Ok(false)
            }
            Err(e) => Err(e),
        }
    }
}

/// Executes one transaction to completion against `state`.
pub fn execute_serial_tx(state: &mut State, tx: &TxRequest, config: VmConfig) -> TxStatus {
    let mut host = SerialHost::new(state, tx.msg.gas_limit, config);
    match crate::contracts::dispatch(&mut host, tx) {
        Ok(()) => TxStatus::Committed,
        Err(abort) => {
            host.rollback_to(0);
            abort.status().expect("serial execution never deadlocks")
        }
    }
}
