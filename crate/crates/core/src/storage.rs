// SPDX-License-Identifier: Apache-2.0

//! Storage addressing and contents.
//!
//! A [`StorageKey`] names exactly one state cell: a scalar field of a
//! contract, or one entry of a contract mapping. Each key carries its own
//! abstract lock in the speculative store, so operations on distinct keys
//! always commute.

use std::borrow::Cow;
use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::types::Address;

/// Mapping key of a map-entry cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKey {
    Addr(Address),
    Bytes(#[serde(with = "hex_bytes")] Vec<u8>),
    Int(u64),
}

impl MapKey {
    fn tag(&self) -> u8 {
        match self {
            MapKey::Addr(_) => 1,
            MapKey::Bytes(_) => 2,
            MapKey::Int(_) => 3,
        }
    }

    /// Canonical bytes: tag, then a fixed-width or length-prefixed payload.
    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(self.tag());
        match self {
            MapKey::Addr(a) => out.extend_from_slice(a.as_bytes()),
            MapKey::Bytes(b) => {
                out.extend_from_slice(&(b.len() as u32).to_be_bytes());
                out.extend_from_slice(b);
            }
            MapKey::Int(i) => out.extend_from_slice(&i.to_be_bytes()),
        }
    }
}

// Agrees with lexicographic order of the canonical encoding.
impl Ord for MapKey {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (MapKey::Addr(a), MapKey::Addr(b)) => a.cmp(b),
            (MapKey::Int(a), MapKey::Int(b)) => a.cmp(b),
            (MapKey::Bytes(a), MapKey::Bytes(b)) => a.len().cmp(&b.len()).then_with(|| a.cmp(b)),
            _ => self.tag().cmp(&other.tag()),
        }
    }
}

impl PartialOrd for MapKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Semantic address of one state cell.
///
/// Ordering is by contract id, then variable name, then map key bytes; it is
/// the order used for canonical state serialization.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StorageKey {
    pub contract: Cow<'static, str>,
    pub variable: Cow<'static, str>,
    pub map_key: Option<MapKey>,
}

impl StorageKey {
    pub fn scalar(contract: &'static str, variable: &'static str) -> Self {
        StorageKey {
            contract: Cow::Borrowed(contract),
            variable: Cow::Borrowed(variable),
            map_key: None,
        }
    }

    pub fn entry(contract: &'static str, variable: &'static str, key: MapKey) -> Self {
        StorageKey {
            contract: Cow::Borrowed(contract),
            variable: Cow::Borrowed(variable),
            map_key: Some(key),
        }
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        put_str(out, &self.contract);
        put_str(out, &self.variable);
        match &self.map_key {
            None => out.push(0),
            Some(k) => k.encode_into(out),
        }
    }
}

impl fmt::Display for StorageKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.contract, self.variable)?;
        match &self.map_key {
            None => Ok(()),
            Some(MapKey::Addr(a)) => write!(f, "[{a}]"),
            Some(MapKey::Bytes(b)) => write!(f, "[0x{}]", hex::encode(b)),
            Some(MapKey::Int(i)) => write!(f, "[{i}]"),
        }
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_be_bytes());
    out.extend_from_slice(s.as_bytes());
}

/// Contents of a state cell. `Absent` denotes an unbound key and is never
/// materialized in a [`State`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Value {
    #[default]
    Absent,
    Int(u64),
    Bool(bool),
    Addr(Address),
    Bytes(#[serde(with = "hex_bytes")] Vec<u8>),
}

impl Value {
    pub fn is_absent(&self) -> bool {
        matches!(self, Value::Absent)
    }

    /// Integer view; unbound cells read as zero, like Solidity defaults.
    pub fn as_int(&self) -> Option<u64> {
        match self {
            Value::Int(i) => Some(*i),
            Value::Absent => Some(0),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            Value::Absent => Some(false),
            _ => None,
        }
    }

    /// Address view; unbound reads as `None` (the zero address).
    pub fn as_addr(&self) -> Option<Option<Address>> {
        match self {
            Value::Addr(a) => Some(Some(*a)),
            Value::Absent => Some(None),
            _ => None,
        }
    }

    pub fn as_bytes(&self) -> Option<&[u8]> {
        match self {
            Value::Bytes(b) => Some(b),
            _ => None,
        }
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            Value::Absent => out.push(0),
            Value::Int(i) => {
                out.push(1);
                out.extend_from_slice(&i.to_be_bytes());
            }
            Value::Bool(b) => {
                out.push(2);
                out.push(*b as u8);
            }
            Value::Addr(a) => {
                out.push(3);
                out.extend_from_slice(a.as_bytes());
            }
            Value::Bytes(b) => {
                out.push(4);
                out.extend_from_slice(&(b.len() as u32).to_be_bytes());
                out.extend_from_slice(b);
            }
        }
    }
}

impl From<u64> for Value {
    fn from(i: u64) -> Self {
        Value::Int(i)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

impl From<Address> for Value {
    fn from(a: Address) -> Self {
        Value::Addr(a)
    }
}

impl From<Option<Address>> for Value {
    fn from(a: Option<Address>) -> Self {
        a.map_or(Value::Absent, Value::Addr)
    }
}

/// Materialized contract state across all contracts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct State {
    cells: HashMap<StorageKey, Value>,
}

impl State {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &StorageKey) -> &Value {
        static ABSENT: Value = Value::Absent;
        self.cells.get(key).unwrap_or(&ABSENT)
    }

    /// Binds `key`; writing `Absent` unbinds it. Returns the prior value.
    pub fn set(&mut self, key: StorageKey, value: Value) -> Value {
        if value.is_absent() {
            self.cells.remove(&key).unwrap_or_default()
        } else {
            self.cells.insert(key, value).unwrap_or_default()
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StorageKey, &Value)> {
        self.cells.iter()
    }

    /// Bindings in canonical key order.
    pub fn canonical(&self) -> Vec<(&StorageKey, &Value)> {
        let mut pairs: Vec<_> = self.cells.iter().collect();
        pairs.sort_unstable_by(|a, b| a.0.cmp(b.0));
        pairs
    }

    /// SHA-256 of the canonical encoding, lowercase hex.
    pub fn digest(&self) -> String {
        crate::chain::state_digest(self)
    }
}

impl FromIterator<(StorageKey, Value)> for State {
    fn from_iter<I: IntoIterator<Item = (StorageKey, Value)>>(iter: I) -> Self {
        let mut state = State::new();
        for (k, v) in iter {
            state.set(k, v);
        }
        state
    }
}

/// One `(key, value)` binding, the unit of state files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Binding {
    pub key: StorageKey,
    pub value: Value,
}

impl Serialize for State {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let pairs = self.canonical();
        let mut seq = serializer.serialize_seq(Some(pairs.len()))?;
        for (k, v) in pairs {
            seq.serialize_element(&Binding {
                key: k.clone(),
                value: v.clone(),
            })?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for State {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let bindings = Vec::<Binding>::deserialize(deserializer)?;
        let mut state = State::new();
        for b in bindings {
            if b.value.is_absent() {
                return Err(serde::de::Error::custom(format!(
                    "absent value bound to {}",
                    b.key
                )));
            }
            if state.set(b.key.clone(), b.value) != Value::Absent {
                return Err(serde::de::Error::custom(format!("duplicate key {}", b.key)));
            }
        }
        Ok(state)
    }
}

pub(crate) mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        if s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(serde::de::Error::custom("hex must be lowercase"));
        }
        hex::decode(&s).map_err(serde::de::Error::custom)
    }
}
