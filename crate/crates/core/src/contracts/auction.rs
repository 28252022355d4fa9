// SPDX-License-Identifier: Apache-2.0

//! Open auction with pending returns.
//!
//! Withdrawn funds are credited to a per-address ledger in contract state;
//! there is no account layer to transfer to.

use super::{add_int, read_addr, read_int, SetupError};
use crate::host::{Abort, Exec, Host};
use crate::storage::{MapKey, State, StorageKey, Value};
use crate::types::{Address, MsgContext};

pub const ID: &str = "auction";

pub fn owner() -> StorageKey {
    StorageKey::scalar(ID, "owner")
}

pub fn highest_bid() -> StorageKey {
    StorageKey::scalar(ID, "highest_bid")
}

pub fn highest_bidder() -> StorageKey {
    StorageKey::scalar(ID, "highest_bidder")
}

pub fn pending_returns(bidder: Address) -> StorageKey {
    StorageKey::entry(ID, "pending_returns", MapKey::Addr(bidder))
}

pub fn withdrawn(bidder: Address) -> StorageKey {
    StorageKey::entry(ID, "withdrawn", MapKey::Addr(bidder))
}

pub fn init(state: &mut State, auction_owner: Address) -> Result<(), SetupError> {
    if !state.get(&owner()).is_absent() {
        return Err(SetupError::AlreadyInitialized(ID));
    }
    state.set(owner(), Value::Addr(auction_owner));
    Ok(())
}

/// Bids `amount`, which must equal the value sent with the call.
pub fn bid(host: &mut dyn Host, msg: &MsgContext, amount: u64) -> Exec<()> {
    if amount != msg.value {
        return Err(Abort::Revert("bid amount differs from value sent"));
    }
    let current = read_int(host, &highest_bid())?;
    outbid(host, msg.sender, current, amount)
}

/// Reads the highest bid and bids one more. Every call touches the
/// highest-bid cell.
pub fn bid_plus_one(host: &mut dyn Host, msg: &MsgContext) -> Exec<()> {
    let current = read_int(host, &highest_bid())?;
    let amount = current.checked_add(1).ok_or(Abort::Revert("overflow"))?;
    outbid(host, msg.sender, current, amount)
}

fn outbid(host: &mut dyn Host, bidder: Address, current: u64, amount: u64) -> Exec<()> {
    if amount <= current {
        return Err(Abort::Revert("there already is a higher bid"));
    }
    if current != 0 {
        let previous = read_addr(host, &highest_bidder())?
            .ok_or(Abort::Revert("highest bid without bidder"))?;
        add_int(host, &pending_returns(previous), current)?;
    }
    host.write(&highest_bid(), Value::Int(amount))?;
    host.write(&highest_bidder(), Value::Addr(bidder))
}

/// Moves the sender's pending returns to their withdrawn balance. A zero
/// balance is a successful no-op.
pub fn withdraw(host: &mut dyn Host, msg: &MsgContext) -> Exec<()> {
    let key = pending_returns(msg.sender);
    let amount = read_int(host, &key)?;
    if amount == 0 {
        return Ok(());
    }
    host.delete(&key)?;
    add_int(host, &withdrawn(msg.sender), amount)
}
