// SPDX-License-Identifier: Apache-2.0

//! Hash map split into independently locked shards, each with a condition
//! variable that waiters on any key of the shard can park on.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{BuildHasher, BuildHasherDefault, Hash};

use parking_lot::{Condvar, Mutex, MutexGuard};

const DEFAULT_SHARDS: usize = 64;

pub struct Shard<K, V> {
    pub map: Mutex<HashMap<K, V>>,
    pub cond: Condvar,
}

pub struct StripedMap<K, V> {
    shards: Box<[Shard<K, V>]>,
    hasher: BuildHasherDefault<DefaultHasher>,
}

impl<K: Hash + Eq, V> StripedMap<K, V> {
    pub fn new() -> Self {
        Self::with_shards(DEFAULT_SHARDS)
    }

    pub fn with_shards(n: usize) -> Self {
        assert!(n > 0, "at least one shard");
        let shards = (0..n)
            .map(|_| Shard {
                map: Mutex::new(HashMap::new()),
                cond: Condvar::new(),
            })
            .collect();
        StripedMap {
            shards,
            hasher: BuildHasherDefault::default(),
        }
    }

    pub fn shard_index(&self, key: &K) -> usize {
        (self.hasher.hash_one(key) as usize) % self.shards.len()
    }

    pub fn shard(&self, index: usize) -> &Shard<K, V> {
        &self.shards[index]
    }

    pub fn lock(&self, key: &K) -> MutexGuard<'_, HashMap<K, V>> {
        self.shards[self.shard_index(key)].map.lock()
    }

    pub fn shards(&self) -> impl Iterator<Item = &Shard<K, V>> {
        self.shards.iter()
    }

    pub fn insert(&self, key: K, value: V) -> Option<V> {
        self.lock(&key).insert(key, value)
    }

    pub fn get_cloned(&self, key: &K) -> Option<V>
    where
        V: Clone,
    {
        self.lock(key).get(key).cloned()
    }

    pub fn remove(&self, key: &K) -> Option<V> {
        self.lock(key).remove(key)
    }

    /// Drains every shard; requires exclusive access.
    pub fn into_entries(self) -> impl Iterator<Item = (K, V)> {
        self.shards
            .into_vec()
            .into_iter()
            .flat_map(|s| s.map.into_inner().into_iter())
    }
}

impl<K: Hash + Eq, V> Default for StripedMap<K, V> {
    fn default() -> Self {
        Self::new()
    }
}

impl<K: Hash + Eq, V> FromIterator<(K, V)> for StripedMap<K, V> {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        let map = StripedMap::new();
        for (k, v) in iter {
            map.insert(k, v);
        }
        map
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concurrent_inserts_land_once() {
        let map: StripedMap<u32, u32> = StripedMap::with_shards(4);
        std::thread::scope(|s| {
            for t in 0..4u32 {
                let map = &map;
                s.spawn(move || {
                    for i in 0..250 {
                        map.insert(t * 1000 + i, i);
                    }
                });
            }
        });
        assert_eq!(map.get_cloned(&3007), Some(7));
        assert_eq!(map.remove(&3007), Some(7));
        assert_eq!(map.into_entries().count(), 999);
    }
}
