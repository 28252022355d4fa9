// SPDX-License-Identifier: Apache-2.0

//! Voting with delegation.
//!
//! A voter record is split across four mappings keyed by address (weight,
//! voted flag, delegate, chosen proposal); a proposal across two keyed by
//! index (name, vote count). An index is in range iff its vote count cell is
//! bound, so `vote` never reads the shared proposal count.

use super::{add_int, read_addr, read_bool, read_int, QueryError, SetupError};
use crate::host::{Abort, Exec, Host};
use crate::storage::{MapKey, State, StorageKey, Value};
use crate::types::{Address, MsgContext};

pub const ID: &str = "ballot";

pub fn chairperson() -> StorageKey {
    StorageKey::scalar(ID, "chairperson")
}

pub fn proposal_count() -> StorageKey {
    StorageKey::scalar(ID, "proposals.len")
}

pub fn weight(voter: Address) -> StorageKey {
    StorageKey::entry(ID, "voters.weight", MapKey::Addr(voter))
}

pub fn voted(voter: Address) -> StorageKey {
    StorageKey::entry(ID, "voters.voted", MapKey::Addr(voter))
}

pub fn delegate_of(voter: Address) -> StorageKey {
    StorageKey::entry(ID, "voters.delegate", MapKey::Addr(voter))
}

pub fn vote_of(voter: Address) -> StorageKey {
    StorageKey::entry(ID, "voters.vote", MapKey::Addr(voter))
}

pub fn proposal_name(index: u64) -> StorageKey {
    StorageKey::entry(ID, "proposals.name", MapKey::Int(index))
}

pub fn vote_count(index: u64) -> StorageKey {
    StorageKey::entry(ID, "proposals.vote_count", MapKey::Int(index))
}

/// Constructor. Names longer than 32 bytes are truncated.
pub fn init(state: &mut State, chair: Address, proposal_names: &[&[u8]]) -> Result<(), SetupError> {
    if !state.get(&chairperson()).is_absent() {
        return Err(SetupError::AlreadyInitialized(ID));
    }
    state.set(chairperson(), Value::Addr(chair));
    state.set(weight(chair), Value::Int(1));
    for (i, name) in proposal_names.iter().enumerate() {
        let i = i as u64;
        let name = &name[..name.len().min(32)];
        state.set(proposal_name(i), Value::Bytes(name.to_vec()));
        state.set(vote_count(i), Value::Int(0));
    }
    state.set(proposal_count(), Value::Int(proposal_names.len() as u64));
    Ok(())
}

pub fn give_right_to_vote(host: &mut dyn Host, msg: &MsgContext, voter: Address) -> Exec<()> {
    if read_addr(host, &chairperson())? != Some(msg.sender) {
        return Err(Abort::Revert("only the chairperson can give right to vote"));
    }
    if read_bool(host, &voted(voter))? {
        return Err(Abort::Revert("voter already voted"));
    }
    host.write(&weight(voter), Value::Int(1))
}

pub fn vote(host: &mut dyn Host, msg: &MsgContext, proposal: u64) -> Exec<()> {
    let sender = msg.sender;
    if read_bool(host, &voted(sender))? {
        return Err(Abort::Revert("already voted"));
    }
    host.write(&voted(sender), Value::Bool(true))?;
    host.write(&vote_of(sender), Value::Int(proposal))?;
    let w = read_int(host, &weight(sender))?;
    credit_proposal(host, proposal, w)
}

fn credit_proposal(host: &mut dyn Host, proposal: u64, amount: u64) -> Exec<()> {
    let key = vote_count(proposal);
    let count = match host.read(&key)? {
        Value::Absent => return Err(Abort::Revert("proposal out of range")),
        v => v.as_int().ok_or(Abort::Revert("type mismatch"))?,
    };
    let next = count.checked_add(amount).ok_or(Abort::Revert("overflow"))?;
    host.write(&key, Value::Int(next))
}

/// Delegates the sender's vote, following the target's own delegation chain
/// to its end. Reaching the sender along the chain is a loop and reverts.
pub fn delegate(host: &mut dyn Host, msg: &MsgContext, to: Address) -> Exec<()> {
    let sender = msg.sender;
    if read_bool(host, &voted(sender))? {
        return Err(Abort::Revert("already voted"));
    }
    let mut to = to;
    loop {
        if to == sender {
            return Err(Abort::Revert("found loop in delegation"));
        }
        match read_addr(host, &delegate_of(to))? {
            Some(next) => {
                host.step()?;
                to = next;
            }
            None => break,
        }
    }
    host.write(&voted(sender), Value::Bool(true))?;
    host.write(&delegate_of(sender), Value::Addr(to))?;
    let w = read_int(host, &weight(sender))?;
    if read_bool(host, &voted(to))? {
        let chosen = read_int(host, &vote_of(to))?;
        credit_proposal(host, chosen, w)
    } else {
        add_int(host, &weight(to), w)
    }
}

/// First index holding the maximum vote count.
pub fn winning_proposal(host: &mut dyn Host) -> Result<u64, QueryError> {
    let n = read_int(host, &proposal_count())?;
    if n == 0 {
        return Err(QueryError::NoProposals);
    }
    let mut winner = 0;
    let mut best = 0;
    for p in 0..n {
        let c = read_int(host, &vote_count(p))?;
        if c > best {
            best = c;
            winner = p;
        }
    }
    Ok(winner)
}

pub fn winner_name(host: &mut dyn Host) -> Result<Vec<u8>, QueryError> {
    let p = winning_proposal(host)?;
    match host.read(&proposal_name(p))? {
        Value::Bytes(b) => Ok(b),
        _ => Err(Abort::Revert("type mismatch").into()),
    }
}
