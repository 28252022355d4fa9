// SPDX-License-Identifier: Apache-2.0

//! Optional in-memory trace of action lifecycles, lock traffic and storage
//! operations, for debugging and for checking two-phase locking.

use std::collections::HashMap;
use std::fmt;

use parking_lot::Mutex;

use crate::storage::StorageKey;
use crate::types::TxId;

use super::ActionId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    Begin {
        parent: Option<ActionId>,
    },
    Acquire(StorageKey),
    Release(StorageKey),
    Read(StorageKey),
    Write(StorageKey),
    Delete(StorageKey),
    Commit,
    /// Effects undone; locks kept and committed.
    Revert,
    Abort,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub seq: u64,
    pub tx: TxId,
    pub action: ActionId,
    pub kind: EventKind,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:>6} tx={} action={} ", self.seq, self.tx, self.action)?;
        match &self.kind {
            EventKind::Begin { parent: None } => write!(f, "begin"),
            EventKind::Begin { parent: Some(p) } => write!(f, "begin parent={p}"),
            EventKind::Acquire(k) => write!(f, "acquire {k}"),
            EventKind::Release(k) => write!(f, "release {k}"),
            EventKind::Read(k) => write!(f, "read {k}"),
            EventKind::Write(k) => write!(f, "write {k}"),
            EventKind::Delete(k) => write!(f, "delete {k}"),
            EventKind::Commit => write!(f, "commit"),
            EventKind::Revert => write!(f, "revert"),
            EventKind::Abort => write!(f, "abort"),
        }
    }
}

#[derive(Debug, Default)]
pub struct EventLog {
    events: Mutex<Vec<Event>>,
}

impl EventLog {
    pub fn record(&self, tx: TxId, action: ActionId, kind: EventKind) {
        let mut events = self.events.lock();
        let seq = events.len() as u64;
        events.push(Event {
            seq,
            tx,
            action,
            kind,
        });
    }

    pub fn snapshot(&self) -> Vec<Event> {
        self.events.lock().clone()
    }

    pub fn clear(&self) {
        self.events.lock().clear();
    }

    /// One event per line.
    pub fn export_text(&self) -> String {
        self.events
            .lock()
            .iter()
            .map(|e| format!("{e}\n"))
            .collect()
    }
}

/// Checks that no action released a lock before it reached its
/// commit/revert/abort point. Returns the first offending event.
pub fn check_two_phase(events: &[Event]) -> Result<(), Event> {
    // Locks a committed child acquired are released under its ancestor's id.
    let mut finished: HashMap<ActionId, bool> = HashMap::new();
    for e in events {
        match &e.kind {
            EventKind::Begin { .. } => {
                finished.insert(e.action, false);
            }
            EventKind::Commit | EventKind::Revert | EventKind::Abort => {
                finished.insert(e.action, true);
            }
            EventKind::Release(_) if !finished.get(&e.action).copied().unwrap_or(false) => {
                return Err(e.clone());
            }
            _ => {}
        }
    }
    Ok(())
}
