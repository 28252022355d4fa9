// SPDX-License-Identifier: Apache-2.0

//! Contract procedures written against [`Host`].
//!
//! Scalar fields are cells keyed `(contract, field)`; mapping entries are
//! keyed `(contract, mapping, key)`. One abstract lock guards each cell.

pub mod auction;
pub mod ballot;
pub mod etherdoc;
pub mod relay;

use crate::host::{Abort, Exec, Host};
use crate::storage::{StorageKey, Value};
use crate::types::{Address, TxRequest};

/// Errors from initializing a contract outside any block.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SetupError {
    #[error("contract `{0}` is already initialized")]
    AlreadyInitialized(&'static str),
    #[error("contract `{0}` is not initialized")]
    NotInitialized(&'static str),
    #[error("setup call failed: {0}")]
    Call(Abort),
}

/// Errors from read-only queries.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QueryError {
    #[error("ballot has no proposals")]
    NoProposals,
    #[error(transparent)]
    Aborted(#[from] Abort),
}

/// Routes a transaction to its contract function. The call itself costs one
/// step, so every transaction consumes at least one.
pub fn dispatch(host: &mut dyn Host, tx: &TxRequest) -> Exec<()> {
    host.step()?;
    let msg = &tx.msg;
    let args = tx.args.as_slice();
    match (tx.contract.as_str(), tx.function.as_str()) {
        (ballot::ID, "give_right_to_vote") => {
            ballot::give_right_to_vote(host, msg, arg_addr(args, 0)?)
        }
        (ballot::ID, "vote") => ballot::vote(host, msg, arg_int(args, 0)?),
        (ballot::ID, "delegate") => ballot::delegate(host, msg, arg_addr(args, 0)?),
        (ballot::ID, "winning_proposal") => ballot::winning_proposal(host)
            .map(drop)
            .map_err(query_abort),
        (ballot::ID, "winner_name") => ballot::winner_name(host).map(drop).map_err(query_abort),
        (auction::ID, "bid") => auction::bid(host, msg, arg_int(args, 0)?),
        (auction::ID, "bid_plus_one") => auction::bid_plus_one(host, msg),
        (auction::ID, "withdraw") => auction::withdraw(host, msg),
        (etherdoc::ID, "create") => etherdoc::create(host, msg, arg_bytes(args, 0)?),
        (etherdoc::ID, "exists") => etherdoc::exists(host, msg, arg_bytes(args, 0)?).map(drop),
        (etherdoc::ID, "transfer") => {
            etherdoc::transfer(host, msg, arg_bytes(args, 0)?, arg_addr(args, 1)?)
        }
        (relay::ID, "forward") => relay::forward(host, msg, arg_bytes(args, 0)?),
        _ => Err(Abort::Revert("unknown function")),
    }
}

fn query_abort(e: QueryError) -> Abort {
    match e {
        QueryError::NoProposals => Abort::Revert("no proposals"),
        QueryError::Aborted(a) => a,
    }
}

fn arg_int(args: &[Value], i: usize) -> Exec<u64> {
    match args.get(i) {
        Some(Value::Int(v)) => Ok(*v),
        _ => Err(Abort::Revert("bad arguments")),
    }
}

fn arg_addr(args: &[Value], i: usize) -> Exec<Address> {
    match args.get(i) {
        Some(Value::Addr(a)) => Ok(*a),
        _ => Err(Abort::Revert("bad arguments")),
    }
}

fn arg_bytes(args: &[Value], i: usize) -> Exec<&[u8]> {
    match args.get(i) {
        Some(Value::Bytes(b)) => Ok(b),
        _ => Err(Abort::Revert("bad arguments")),
    }
}

// Typed reads. A cell holding the wrong type is a corrupted state; the
// transaction is reverted rather than panicking a worker.

pub(crate) fn read_int(host: &mut dyn Host, key: &StorageKey) -> Exec<u64> {
    host.read(key)?
        .as_int()
        .ok_or(Abort::Revert("type mismatch"))
}

pub(crate) fn read_bool(host: &mut dyn Host, key: &StorageKey) -> Exec<bool> {
    host.read(key)?
        .as_bool()
        .ok_or(Abort::Revert("type mismatch"))
}

pub(crate) fn read_addr(host: &mut dyn Host, key: &StorageKey) -> Exec<Option<Address>> {
    host.read(key)?
        .as_addr()
        .ok_or(Abort::Revert("type mismatch"))
}

pub(crate) fn add_int(host: &mut dyn Host, key: &StorageKey, delta: u64) -> Exec<()> {
    let current = read_int(host, key)?;
    let next = current
        .checked_add(delta)
        .ok_or(Abort::Revert("overflow"))?;
    host.write(key, Value::Int(next))
}
