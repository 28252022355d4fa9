// SPDX-License-Identifier: Apache-2.0

//! Proof-of-existence registry: documents keyed by hashcode, each with an
//! owner, plus a per-owner document count.

use super::{add_int, read_addr, read_int, SetupError};
use crate::host::{Abort, Exec, Host};
use crate::storage::{MapKey, State, StorageKey, Value};
use crate::types::{Address, MsgContext};

pub const ID: &str = "etherdoc";

pub fn creator() -> StorageKey {
    StorageKey::scalar(ID, "creator")
}

pub fn doc_owner(hashcode: &[u8]) -> StorageKey {
    StorageKey::entry(ID, "documents.owner", MapKey::Bytes(hashcode.to_vec()))
}

pub fn owned_count(owner: Address) -> StorageKey {
    StorageKey::entry(ID, "owned_count", MapKey::Addr(owner))
}

pub fn init(state: &mut State, contract_creator: Address) -> Result<(), SetupError> {
    if !state.get(&creator()).is_absent() {
        return Err(SetupError::AlreadyInitialized(ID));
    }
    state.set(creator(), Value::Addr(contract_creator));
    Ok(())
}

pub fn create(host: &mut dyn Host, msg: &MsgContext, hashcode: &[u8]) -> Exec<()> {
    let key = doc_owner(hashcode);
    if read_addr(host, &key)?.is_some() {
        return Err(Abort::Revert("document already exists"));
    }
    host.write(&key, Value::Addr(msg.sender))?;
    add_int(host, &owned_count(msg.sender), 1)
}

pub fn exists(host: &mut dyn Host, _msg: &MsgContext, hashcode: &[u8]) -> Exec<bool> {
    Ok(read_addr(host, &doc_owner(hashcode))?.is_some())
}

pub fn transfer(
    host: &mut dyn Host,
    msg: &MsgContext,
    hashcode: &[u8],
    new_owner: Address,
) -> Exec<()> {
    let key = doc_owner(hashcode);
    let owner = read_addr(host, &key)?.ok_or(Abort::Revert("no such document"))?;
    if owner != msg.sender {
        return Err(Abort::Revert("only the owner can transfer"));
    }
    host.write(&key, Value::Addr(new_owner))?;
    let held = read_int(host, &owned_count(owner))?;
    let held = held
        .checked_sub(1)
        .ok_or(Abort::Revert("owned count underflow"))?;
    host.write(&owned_count(owner), Value::Int(held))?;
    add_int(host, &owned_count(new_owner), 1)
}
