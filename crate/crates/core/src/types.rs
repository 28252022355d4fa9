// SPDX-License-Identifier: Apache-2.0

//! Transaction-level domain types shared by every execution mode.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::storage::Value;

/// Dense, block-unique transaction index.
pub type TxId = usize;

/// Default per-transaction step budget.
pub const DEFAULT_GAS_LIMIT: u64 = 10_000;

pub const ADDRESS_LEN: usize = 20;

/// Opaque account identifier, rendered as lowercase hex.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address(pub [u8; ADDRESS_LEN]);

impl Address {
    pub const ZERO: Address = Address([0; ADDRESS_LEN]);

    /// Deterministic address for a small integer, big-endian in the low bytes.
    pub fn from_index(index: u64) -> Self {
        let mut bytes = [0u8; ADDRESS_LEN];
        bytes[ADDRESS_LEN - 8..].copy_from_slice(&index.to_be_bytes());
        // Tag the high byte so generated accounts never collide with ZERO.
        bytes[0] = 0xa0;
        Address(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; ADDRESS_LEN] {
        &self.0
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({self})")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid address {0:?}: expected {len} lowercase hex bytes", len = ADDRESS_LEN)]
pub struct AddressParseError(pub String);

impl FromStr for Address {
    type Err = AddressParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != ADDRESS_LEN * 2 || s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(AddressParseError(s.to_owned()));
        }
        let mut bytes = [0u8; ADDRESS_LEN];
        hex::decode_to_slice(s, &mut bytes).map_err(|_| AddressParseError(s.to_owned()))?;
        Ok(Address(bytes))
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-invocation context visible to contract code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MsgContext {
    pub sender: Address,
    pub value: u64,
    pub gas_limit: u64,
}

impl MsgContext {
    pub fn new(sender: Address) -> Self {
        MsgContext {
            sender,
            value: 0,
            gas_limit: DEFAULT_GAS_LIMIT,
        }
    }

    pub fn with_value(mut self, value: u64) -> Self {
        self.value = value;
        self
    }

    pub fn with_gas_limit(mut self, gas_limit: u64) -> Self {
        self.gas_limit = gas_limit;
        self
    }
}

/// One contract invocation in a block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxRequest {
    pub tx_id: TxId,
    pub contract: String,
    pub function: String,
    pub args: Vec<Value>,
    pub msg: MsgContext,
}

impl TxRequest {
    pub fn new(
        tx_id: TxId,
        contract: &str,
        function: &str,
        args: Vec<Value>,
        msg: MsgContext,
    ) -> Self {
        TxRequest {
            tx_id,
            contract: contract.to_owned(),
            function: function.to_owned(),
            args,
            msg,
        }
    }
}

/// Terminal outcome of a transaction. Anything but `Committed` leaves no
/// net storage effect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxStatus {
    Committed,
    Reverted,
    OutOfGas,
}

impl fmt::Display for TxStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TxStatus::Committed => "committed",
            TxStatus::Reverted => "reverted",
            TxStatus::OutOfGas => "out_of_gas",
        })
    }
}
