// SPDX-License-Identifier: Apache-2.0

//! Canonical state digests, the block document format and the append-only
//! chain file.

mod block;
mod chain_file;

use sha2::{Digest, Sha256};

use crate::storage::State;

pub use block::{parse_block, serialize_block, Block, BlockError, BLOCK_VERSION};
pub use chain_file::{append_block, load_chain, ChainError};

/// Digest of the empty state; also the parent digest of the first block.
pub const GENESIS_DIGEST: &str = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855";

/// SHA-256 over the bindings of `state` in key order, lowercase hex.
///
/// Each binding contributes its key encoding followed by its value
/// encoding; both are self-delimiting, so the concatenation is unambiguous.
pub fn state_digest(state: &State) -> String {
    let mut hasher = Sha256::new();
    let mut buf = Vec::with_capacity(128);
    for (k, v) in state.canonical() {
        buf.clear();
        k.encode_into(&mut buf);
        v.encode_into(&mut buf);
        hasher.update(&buf);
    }
    hex::encode(hasher.finalize())
}

pub(crate) fn is_digest(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}
