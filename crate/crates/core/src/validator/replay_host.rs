// SPDX-License-Identifier: Apache-2.0

//! Non-speculative execution handle used during replay: no locks, no undo
//! log. Writes go to task-local overlay frames (one per nested call) that
//! reach the shared state only when the transaction commits.

use std::collections::{HashMap, HashSet};

use crate::host::{Abort, Exec, GasMeter, Host, NestedCall, VmConfig};
use crate::storage::{State, StorageKey, Value};
use crate::striped::StripedMap;
use crate::types::{TxRequest, TxStatus};

/// Shared state during replay. Tasks ordered by the schedule never touch
/// the same key concurrently; the shard mutexes only keep a dishonest
/// schedule memory-safe.
pub struct ReplayBase {
    cells: StripedMap<StorageKey, Value>,
}

impl ReplayBase {
    pub fn from_state(state: &State) -> Self {
        ReplayBase {
            cells: state.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
        }
    }

    pub fn into_state(self) -> State {
        self.cells.into_entries().collect()
    }
}

/// Keys one transaction touched, in first-touch order, and its outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayTrace {
    pub keys: Vec<StorageKey>,
    pub status: TxStatus,
}

struct ReplayHost<'b> {
    base: &'b ReplayBase,
    frames: Vec<HashMap<StorageKey, Value>>,
    gas: GasMeter,
    trace: Vec<StorageKey>,
    seen: HashSet<StorageKey>,
}

impl ReplayHost<'_> {
    fn touch(&mut self, key: &StorageKey) {
        if self.seen.insert(key.clone()) {
            self.trace.push(key.clone());
        }
    }
}

impl Host for ReplayHost<'_> {
    fn read(&mut self, key: &StorageKey) -> Exec<Value> {
        self.gas.charge()?;
        self.touch(key);
        for frame in self.frames.iter().rev() {
            if let Some(v) = frame.get(key) {
                return Ok(v.clone());
            }
        }
        Ok(self.base.cells.get_cloned(key).unwrap_or_default())
    }

    fn write(&mut self, key: &StorageKey, value: Value) -> Exec<()> {
        self.gas.charge()?;
        self.touch(key);
        self.frames
            .last_mut()
            .expect("root frame")
            .insert(key.clone(), value);
        Ok(())
    }

    fn delete(&mut self, key: &StorageKey) -> Exec<()> {
        self.write(key, Value::Absent)
    }

    fn step(&mut self) -> Exec<()> {
        self.gas.charge()
    }

    fn nested(&mut self, call: &mut NestedCall<'_>) -> Exec<bool> {
        self.frames.push(HashMap::new());
        let outcome = call(self);
        let child = self.frames.pop().expect("child frame");
        match outcome {
            Ok(()) => {
                self.frames.last_mut().expect("parent frame").extend(child);
                Ok(true)
            }
            Err(Abort::Revert(_)) => Ok(false),
            Err(e) => Err(e),
        }
    }
}

/// Executes `tx` against `base`, publishing its writes only on commit.
pub(crate) fn replay_tx(base: &ReplayBase, tx: &TxRequest, config: VmConfig) -> ReplayTrace {
    let mut host = ReplayHost {
        base,
        frames: vec![HashMap::new()],
        gas: GasMeter::new(tx.msg.gas_limit, config),
        trace: Vec::new(),
        seen: HashSet::new(),
    };
    let status = match crate::contracts::dispatch(&mut host, tx) {
        Ok(()) => {
            let writes = host.frames.pop().expect("root frame");
            for (k, v) in writes {
                let mut shard = base.cells.lock(&k);
                if v.is_absent() {
                    shard.remove(&k);
                } else {
                    shard.insert(k, v);
                }
            }
            TxStatus::Committed
        }
        Err(abort) => abort.status().expect("replay takes no locks"),
    };
    ReplayTrace {
        keys: host.trace,
        status,
    }
}
