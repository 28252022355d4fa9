// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::miner::Schedule;
use crate::speculative::LockProfile;
use crate::types::{TxRequest, TxStatus};

use super::is_digest;

pub const BLOCK_VERSION: u64 = 1;

/// A mined block: the unit of persistence and validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub version: u64,
    pub parent_digest: String,
    pub txs: Vec<TxRequest>,
    /// Indexed by tx id.
    pub statuses: Vec<TxStatus>,
    pub schedule: Schedule,
    /// Indexed by tx id.
    pub profiles: Vec<LockProfile>,
    pub pre_state_digest: String,
    pub post_state_digest: String,
}

#[derive(Debug, thiserror::Error)]
pub enum BlockError {
    #[error("malformed block document: {0}")]
    Malformed(String),
    #[error("unsupported block version {0}")]
    UnknownVersion(u64),
    #[error("invalid field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> BlockError {
    BlockError::Invalid {
        field,
        reason: reason.into(),
    }
}

impl Block {
    /// Structural invariants that do not need execution to check.
    pub fn check(&self) -> Result<(), BlockError> {
        if self.version != BLOCK_VERSION {
            return Err(BlockError::UnknownVersion(self.version));
        }
        for (field, d) in [
            ("parent_digest", &self.parent_digest),
            ("pre_state_digest", &self.pre_state_digest),
            ("post_state_digest", &self.post_state_digest),
        ] {
            if !is_digest(d) {
                return Err(invalid(field, "expected 64 lowercase hex digits"));
            }
        }
        let n = self.txs.len();
        if let Some((i, tx)) = self.txs.iter().enumerate().find(|(i, t)| t.tx_id != *i) {
            return Err(invalid("txs", format!("entry {i} has tx_id {}", tx.tx_id)));
        }
        if let Some(tx) = self.txs.iter().find(|t| t.msg.gas_limit == 0) {
            return Err(invalid(
                "txs",
                format!("tx {} has zero gas_limit", tx.tx_id),
            ));
        }
        if self.statuses.len() != n {
            return Err(invalid(
                "statuses",
                format!("{} entries for {n} txs", self.statuses.len()),
            ));
        }
        if self.profiles.len() != n {
            return Err(invalid(
                "profiles",
                format!("{} entries for {n} txs", self.profiles.len()),
            ));
        }
        if let Some((i, p)) = self
            .profiles
            .iter()
            .enumerate()
            .find(|(i, p)| p.tx_id != *i)
        {
            return Err(invalid(
                "profiles",
                format!("entry {i} has tx_id {}", p.tx_id),
            ));
        }
        if !self.schedule.hb.nodes.iter().copied().eq(0..n) {
            return Err(invalid(
                "schedule.hb.nodes",
                "must list exactly the block's tx ids",
            ));
        }
        Ok(())
    }
}

/// Canonical text: pretty-printed JSON, keys sorted, LF line endings,
/// trailing newline.
pub fn serialize_block(block: &Block) -> Vec<u8> {
    // serde_json's default object map is ordered by key.
    let doc = serde_json::to_value(block).expect("block is representable as JSON");
    let mut out = serde_json::to_vec_pretty(&doc).expect("JSON value serializes");
    out.push(b'\n');
    out
}

pub fn parse_block(bytes: &[u8]) -> Result<Block, BlockError> {
    let doc: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| BlockError::Malformed(e.to_string()))?;
    match doc.get("version").and_then(serde_json::Value::as_u64) {
        Some(BLOCK_VERSION) => {}
        Some(v) => return Err(BlockError::UnknownVersion(v)),
        None => return Err(invalid("version", "missing or not an integer")),
    }
    let block: Block =
        serde_json::from_value(doc).map_err(|e| BlockError::Malformed(e.to_string()))?;
    block.check()?;
    Ok(block)
}
