// SPDX-License-Identifier: Apache-2.0

//! Transactional boosting over contract storage.
//!
//! Every [`StorageKey`] has one mutually exclusive abstract lock. An action
//! acquires the lock before operating on the key, applies the operation in
//! place (eagerly) and, for mutations, pushes the prior value on its inverse
//! log. Locks are held until the top-level action finishes:
//!
//! * commit: each held lock's use counter is bumped and recorded in the
//!   returned [`LockProfile`]; locks are released; the log is discarded.
//! * abort: the log is replayed newest-first and locks are released with no
//!   counter change.
//! * revert (application `throw`): the log is replayed, then the action
//!   commits holding its locks, so the schedule still orders it.
//!
//! Nested actions inherit the locks of their ancestors. A committing child
//! hands its locks and log to its parent; an aborting child undoes its own
//! log and releases the locks it acquired. A child that reverts undoes its
//! log but hands its locks to the parent, because the parent's control flow
//! observed the child's outcome.
//!
//! Blocked acquisitions queue per lock in arrival order. Every wait
//! registers a waits-for edge; a cycle aborts its largest transaction id,
//! which the caller retries from scratch.

mod deadlock;
mod events;

use std::collections::{BTreeMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::host::{Abort, Exec, GasMeter, Host, NestedCall, VmConfig};
use crate::storage::{State, StorageKey, Value};
use crate::striped::StripedMap;
use crate::types::TxId;

pub use deadlock::resolve_deadlock;
use deadlock::{WaitDecision, WaitsFor};
pub use events::{check_two_phase, Event, EventKind, EventLog};

pub type ActionId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum UsageError {
    #[error("parent action {0} is not live")]
    ParentNotLive(ActionId),
    #[error("action {0} is not the innermost live action")]
    NotInnermost(ActionId),
    #[error("action has live children")]
    LiveChildren,
    #[error("top-level action cannot be finished as nested")]
    NotNested,
    #[error("action already finished")]
    Finished,
}

/// Undo record for one mutation: restore `key` to `prior`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InverseEntry {
    pub key: StorageKey,
    pub prior: Value,
}

/// Last-in-first-out undo log.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InverseLog {
    entries: Vec<InverseEntry>,
}

impl InverseLog {
    pub fn push(&mut self, key: StorageKey, prior: Value) {
        self.entries.push(InverseEntry { key, prior });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn append(&mut self, other: InverseLog) {
        self.entries.extend(other.entries);
    }

    pub fn newest_first(&self) -> impl Iterator<Item = &InverseEntry> {
        self.entries.iter().rev()
    }
}

/// Locks a committed transaction held, with the use-counter value each
/// received at commit.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LockProfile {
    pub tx_id: TxId,
    pub counters: BTreeMap<StorageKey, u64>,
}

#[derive(Serialize, Deserialize)]
struct CounterRecord {
    key: StorageKey,
    counter: u64,
}

#[derive(Serialize, Deserialize)]
struct ProfileRecord {
    counters: Vec<CounterRecord>,
    tx_id: TxId,
}

impl Serialize for LockProfile {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ProfileRecord {
            tx_id: self.tx_id,
            counters: self
                .counters
                .iter()
                .map(|(k, &c)| CounterRecord {
                    key: k.clone(),
                    counter: c,
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for LockProfile {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rec = ProfileRecord::deserialize(d)?;
        let mut counters = BTreeMap::new();
        for c in rec.counters {
            if c.counter == 0 {
                return Err(serde::de::Error::custom(format!(
                    "zero counter for {}",
                    c.key
                )));
            }
            if counters.insert(c.key.clone(), c.counter).is_some() {
                return Err(serde::de::Error::custom(format!(
                    "duplicate lock {}",
                    c.key
                )));
            }
        }
        Ok(LockProfile {
            tx_id: rec.tx_id,
            counters,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Holder {
    tx: TxId,
    action: ActionId,
}

#[derive(Debug, Default)]
struct LockEntry {
    value: Value,
    holder: Option<Holder>,
    queue: VecDeque<TxId>,
    use_counter: u64,
}

/// Shared lock table plus the values it guards.
pub struct SpeculativeStore {
    cells: StripedMap<StorageKey, LockEntry>,
    waits: Mutex<WaitsFor>,
    next_action: AtomicU64,
    events: Option<EventLog>,
    config: VmConfig,
}

impl SpeculativeStore {
    pub fn new(config: VmConfig) -> Self {
        SpeculativeStore {
            cells: StripedMap::new(),
            waits: Mutex::new(WaitsFor::default()),
            next_action: AtomicU64::new(0),
            events: None,
            config,
        }
    }

    pub fn from_state(state: &State, config: VmConfig) -> Self {
        let store = Self::new(config);
        for (k, v) in state.iter() {
            store.cells.insert(
                k.clone(),
                LockEntry {
                    value: v.clone(),
                    ..LockEntry::default()
                },
            );
        }
        store
    }

    /// Enables the event log.
    pub fn with_event_log(mut self) -> Self {
        self.events = Some(EventLog::default());
        self
    }

    pub fn events(&self) -> Option<&EventLog> {
        self.events.as_ref()
    }

    fn emit(&self, tx: TxId, action: ActionId, kind: impl FnOnce() -> EventKind) {
        if let Some(log) = &self.events {
            log.record(tx, action, kind());
        }
    }

    /// Starts a top-level action for `tx`.
    pub fn begin_action(&self, tx: TxId, gas_limit: u64) -> ActionHandle<'_> {
        let id = self.next_action.fetch_add(1, Ordering::Relaxed);
        self.emit(tx, id, || EventKind::Begin { parent: None });
        ActionHandle {
            store: self,
            tx,
            frames: vec![Frame::new(id, None)],
            gas: GasMeter::new(gas_limit, self.config),
            waiting: false,
            done: false,
        }
    }

    /// Zeroes every use counter; done when a block starts.
    pub fn reset_block_counters(&self) {
        for shard in self.cells.shards() {
            for entry in shard.map.lock().values_mut() {
                entry.use_counter = 0;
            }
        }
    }

    pub fn use_counter(&self, key: &StorageKey) -> u64 {
        self.cells.lock(key).get(key).map_or(0, |e| e.use_counter)
    }

    pub fn holder(&self, key: &StorageKey) -> Option<TxId> {
        self.cells
            .lock(key)
            .get(key)
            .and_then(|e| e.holder.map(|h| h.tx))
    }

    /// Committed value of `key`, ignoring locks. Only meaningful when no
    /// action holding `key` is live.
    pub fn peek(&self, key: &StorageKey) -> Value {
        self.cells
            .lock(key)
            .get(key)
            .map_or(Value::Absent, |e| e.value.clone())
    }

    /// Materializes current values. Call after all workers quiesce.
    pub fn snapshot(&self) -> State {
        let mut state = State::new();
        for shard in self.cells.shards() {
            for (k, e) in shard.map.lock().iter() {
                debug_assert!(e.holder.is_none(), "snapshot while {k} is locked");
                if !e.value.is_absent() {
                    state.set(k.clone(), e.value.clone());
                }
            }
        }
        state
    }

    fn restore(&self, log: &InverseLog) {
        for inv in log.newest_first() {
            let mut map = self.cells.lock(&inv.key);
            let entry = map.get_mut(&inv.key).expect("logged key has an entry");
            entry.value = inv.prior.clone();
        }
    }

    /// Releases `keys`, bumping use counters when `profile` is given.
    fn release(
        &self,
        tx: TxId,
        action: ActionId,
        keys: &[StorageKey],
        mut profile: Option<&mut LockProfile>,
    ) {
        for key in keys {
            let idx = self.cells.shard_index(key);
            let shard = self.cells.shard(idx);
            {
                let mut map = shard.map.lock();
                let entry = map.get_mut(key).expect("held key has an entry");
                debug_assert_eq!(entry.holder.map(|h| h.tx), Some(tx));
                if let Some(p) = profile.as_deref_mut() {
                    entry.use_counter += 1;
                    p.counters.insert(key.clone(), entry.use_counter);
                }
                entry.holder = None;
            }
            self.emit(tx, action, || EventKind::Release(key.clone()));
            shard.cond.notify_all();
        }
    }
}

#[derive(Debug)]
struct Frame {
    id: ActionId,
    parent: Option<ActionId>,
    acquired: Vec<StorageKey>,
    log: InverseLog,
}

impl Frame {
    fn new(id: ActionId, parent: Option<ActionId>) -> Self {
        Frame {
            id,
            parent,
            acquired: Vec::new(),
            log: InverseLog::default(),
        }
    }
}

/// A transaction's live action and its live nested descendants.
pub struct ActionHandle<'s> {
    store: &'s SpeculativeStore,
    tx: TxId,
    frames: Vec<Frame>,
    gas: GasMeter,
    waiting: bool,
    done: bool,
}

impl<'s> ActionHandle<'s> {
    pub fn tx_id(&self) -> TxId {
        self.tx
    }

    /// Innermost live action.
    pub fn id(&self) -> ActionId {
        self.frames.last().expect("at least the root frame").id
    }

    pub fn parent(&self) -> Option<ActionId> {
        self.frames.last().and_then(|f| f.parent)
    }

    pub fn depth(&self) -> usize {
        self.frames.len()
    }

    pub fn steps_used(&self) -> u64 {
        self.gas.used()
    }

    /// Keys locked by this transaction, in acquisition order.
    pub fn held_locks(&self) -> Vec<StorageKey> {
        self.frames
            .iter()
            .flat_map(|f| f.acquired.iter().cloned())
            .collect()
    }

    pub fn log_len(&self) -> usize {
        self.frames.last().map_or(0, |f| f.log.len())
    }

    fn top(&mut self) -> &mut Frame {
        self.frames.last_mut().expect("at least the root frame")
    }

    /// Starts a nested action under `parent`, which must be the innermost
    /// live action.
    pub fn begin_nested(&mut self, parent: ActionId) -> Result<ActionId, UsageError> {
        if self.done || self.id() != parent {
            return Err(UsageError::ParentNotLive(parent));
        }
        let id = self.store.next_action.fetch_add(1, Ordering::Relaxed);
        self.store.emit(self.tx, id, || EventKind::Begin {
            parent: Some(parent),
        });
        self.frames.push(Frame::new(id, Some(parent)));
        Ok(id)
    }

    fn pop_nested(&mut self, id: ActionId) -> Result<Frame, UsageError> {
        if self.done {
            return Err(UsageError::Finished);
        }
        if self.id() != id {
            return Err(UsageError::NotInnermost(id));
        }
        if self.frames.len() == 1 {
            return Err(UsageError::NotNested);
        }
        Ok(self.frames.pop().expect("checked"))
    }

    fn merge_into_parent(&mut self, child: Frame) {
        let parent = self.top();
        let parent_id = parent.id;
        for key in &child.acquired {
            let mut map = self.store.cells.lock(key);
            if let Some(e) = map.get_mut(key) {
                e.holder = Some(Holder {
                    tx: self.tx,
                    action: parent_id,
                });
            }
        }
        let parent = self.top();
        parent.acquired.extend(child.acquired);
        parent.log.append(child.log);
    }

    /// Child's locks and log pass to its parent.
    pub fn commit_nested(&mut self, id: ActionId) -> Result<(), UsageError> {
        let child = self.pop_nested(id)?;
        self.store.emit(self.tx, id, || EventKind::Commit);
        self.merge_into_parent(child);
        Ok(())
    }

    /// Undoes the child and releases the locks it acquired. The parent is
    /// unaffected.
    pub fn abort_nested(&mut self, id: ActionId) -> Result<(), UsageError> {
        let child = self.pop_nested(id)?;
        self.store.restore(&child.log);
        self.store.emit(self.tx, id, || EventKind::Abort);
        self.store.release(self.tx, id, &child.acquired, None);
        Ok(())
    }

    /// Undoes the child but keeps its locks in the parent.
    pub fn revert_nested(&mut self, id: ActionId) -> Result<(), UsageError> {
        let mut child = self.pop_nested(id)?;
        self.store.restore(&child.log);
        self.store.emit(self.tx, id, || EventKind::Revert);
        child.log = InverseLog::default();
        self.merge_into_parent(child);
        Ok(())
    }

    fn finish(&mut self) {
        self.done = true;
        if self.waiting {
            self.store.waits.lock().clear(self.tx);
            self.waiting = false;
        }
    }

    /// Commits the top-level action and returns its lock profile.
    pub fn commit(&mut self) -> Result<LockProfile, UsageError> {
        if self.done {
            return Err(UsageError::Finished);
        }
        if self.frames.len() > 1 {
            return Err(UsageError::LiveChildren);
        }
        let root = self.frames.pop().expect("root frame");
        self.store.emit(self.tx, root.id, || EventKind::Commit);
        let mut profile = LockProfile {
            tx_id: self.tx,
            counters: BTreeMap::new(),
        };
        self.store
            .release(self.tx, root.id, &root.acquired, Some(&mut profile));
        self.finish();
        Ok(profile)
    }

    /// Undoes every live action of the transaction, then commits holding all
    /// acquired locks.
    pub fn revert(&mut self) -> Result<LockProfile, UsageError> {
        if self.done {
            return Err(UsageError::Finished);
        }
        while self.frames.len() > 1 {
            let id = self.id();
            self.revert_nested(id)?;
        }
        let root = self.top();
        let log = std::mem::take(&mut root.log);
        let root_id = root.id;
        self.store.restore(&log);
        self.store.emit(self.tx, root_id, || EventKind::Revert);
        let root = self.frames.pop().expect("root frame");
        let mut profile = LockProfile {
            tx_id: self.tx,
            counters: BTreeMap::new(),
        };
        self.store
            .release(self.tx, root.id, &root.acquired, Some(&mut profile));
        self.finish();
        Ok(profile)
    }

    /// Undoes every live action and releases all locks without touching use
    /// counters.
    pub fn abort(&mut self) {
        if self.done {
            return;
        }
        while let Some(frame) = self.frames.pop() {
            self.store.restore(&frame.log);
            self.store.emit(self.tx, frame.id, || EventKind::Abort);
            self.store.release(self.tx, frame.id, &frame.acquired, None);
        }
        self.finish();
    }

    /// Acquires `key` (blocking if needed) and applies `op` to its entry
    /// under the shard lock.
    fn access<R>(&mut self, key: &StorageKey, op: impl FnOnce(&mut Value) -> R) -> Exec<R> {
        assert!(!self.done, "operation on a finished action");
        let store = self.store;
        let tx = self.tx;
        let idx = store.cells.shard_index(key);
        let shard = store.cells.shard(idx);
        let mut map = shard.map.lock();
        loop {
            if !map.contains_key(key) {
                map.insert(key.clone(), LockEntry::default());
            }
            let entry = map.get_mut(key).expect("just ensured");
            match entry.holder {
                Some(h) if h.tx == tx => return Ok(op(&mut entry.value)),
                None if entry.queue.front().is_none_or(|&t| t == tx) => {
                    if entry.queue.front() == Some(&tx) {
                        entry.queue.pop_front();
                    }
                    let action = self.frames.last().expect("root frame").id;
                    entry.holder = Some(Holder { tx, action });
                    let out = op(&mut entry.value);
                    if self.waiting {
                        store.waits.lock().clear(tx);
                        self.waiting = false;
                    }
                    drop(map);
                    self.top().acquired.push(key.clone());
                    store.emit(tx, action, || EventKind::Acquire(key.clone()));
                    return Ok(out);
                }
                _ => {}
            }

            let blocker = match entry.holder {
                Some(h) => h.tx,
                None => *entry
                    .queue
                    .front()
                    .expect("queue non-empty when lock is free"),
            };
            if !entry.queue.contains(&tx) {
                entry.queue.push_back(tx);
            }
            self.waiting = true;
            let decision = store.waits.lock().block(tx, blocker, idx);
            match decision {
                WaitDecision::Park => shard.cond.wait(&mut map),
                WaitDecision::AbortSelf => {
                    entry.queue.retain(|&t| t != tx);
                    self.waiting = false;
                    drop(map);
                    shard.cond.notify_all();
                    return Err(Abort::Deadlock);
                }
                WaitDecision::Victim {
                    shard: victim_shard,
                } => {
                    drop(map);
                    let vs = store.cells.shard(victim_shard);
                    {
                        let _parked = vs.map.lock();
                        vs.cond.notify_all();
                    }
                    map = shard.map.lock();
                }
            }
        }
    }

    /// Locks `key` without reading or writing it.
    pub fn lock_only(&mut self, key: &StorageKey) -> Exec<()> {
        self.access(key, |_| ())
    }
}

impl Drop for ActionHandle<'_> {
    fn drop(&mut self) {
        self.abort();
    }
}

impl Host for ActionHandle<'_> {
    fn read(&mut self, key: &StorageKey) -> Exec<Value> {
        self.gas.charge()?;
        let v = self.access(key, |v| v.clone())?;
        self.store
            .emit(self.tx, self.id(), || EventKind::Read(key.clone()));
        Ok(v)
    }

    fn write(&mut self, key: &StorageKey, value: Value) -> Exec<()> {
        self.gas.charge()?;
        let deleting = value.is_absent();
        let prior = self.access(key, |v| std::mem::replace(v, value))?;
        self.top().log.push(key.clone(), prior);
        self.store.emit(self.tx, self.id(), || {
            if deleting {
                EventKind::Delete(key.clone())
            } else {
                EventKind::Write(key.clone())
            }
        });
        Ok(())
    }

    fn delete(&mut self, key: &StorageKey) -> Exec<()> {
        self.write(key, Value::Absent)
    }

    fn step(&mut self) -> Exec<()> {
        self.gas.charge()
    }

    fn nested(&mut self, call: &mut NestedCall<'_>) -> Exec<bool> {
        let parent = self.id();
        let child = self.begin_nested(parent).expect("innermost action is live");
        match call(self) {
            Ok(()) => {
                self.commit_nested(child).expect("child is innermost");
                Ok(true)
            }
            Err(Abort::Revert(_)) => {
                self.revert_nested(child).expect("child is innermost");
                Ok(false)
            }
            // Left for the top level to resolve.
            Err(e) => Err(e),
        }
    }
}

#[cfg(test)]
mod tests;
