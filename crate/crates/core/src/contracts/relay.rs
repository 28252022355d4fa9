// SPDX-License-Identifier: Apache-2.0

//! Synthetic contract that registers documents in `etherdoc` through a
//! nested call, counting forwarded and failed registrations per sender.

use super::{add_int, etherdoc};
use crate::host::{Exec, Host};
use crate::storage::{MapKey, StorageKey};
use crate::types::{Address, MsgContext};

pub const ID: &str = "relay";

pub fn forwarded(sender: Address) -> StorageKey {
    StorageKey::entry(ID, "forwarded", MapKey::Addr(sender))
}

pub fn failed(sender: Address) -> StorageKey {
    StorageKey::entry(ID, "failed", MapKey::Addr(sender))
}

/// A revert inside the nested `create` is absorbed; the relay still commits.
pub fn forward(host: &mut dyn Host, msg: &MsgContext, hashcode: &[u8]) -> Exec<()> {
    add_int(host, &forwarded(msg.sender), 1)?;
    let created =
        host.nested(&mut |child: &mut dyn Host| etherdoc::create(child, msg, hashcode))?;
    if !created {
        add_int(host, &failed(msg.sender), 1)?;
    }
    Ok(())
}
