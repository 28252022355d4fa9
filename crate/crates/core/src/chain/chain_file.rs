// SPDX-License-Identifier: Apache-2.0

//! Append-only chain file.
//!
//! Each record is `len: u64 BE | sha256(payload): 32 bytes | payload`, where
//! the payload is a canonical block document.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{parse_block, serialize_block, Block, GENESIS_DIGEST};

const HEADER_LEN: usize = 8 + 32;

#[derive(Debug, thiserror::Error)]
pub enum ChainError {
    #[error("chain i/o: {0}")]
    Io(#[from] io::Error),
    #[error("parent digest {found} does not match chain tip {expected}")]
    ParentMismatch { expected: String, found: String },
    #[error("corrupt record {index}: {reason}")]
    Corrupt { index: usize, reason: String },
    #[error("record {index} does not extend record {}", index.wrapping_sub(1))]
    BrokenLink { index: usize },
}

/// Digest a new block must name as its parent.
fn tip_digest(chain: &[Block]) -> &str {
    chain
        .last()
        .map_or(GENESIS_DIGEST, |b| b.post_state_digest.as_str())
}

/// Appends `block` after verifying the existing chain and the linkage.
pub fn append_block(path: &Path, block: &Block) -> Result<(), ChainError> {
    let chain = load_chain(path)?;
    let tip = tip_digest(&chain);
    if block.parent_digest != tip {
        return Err(ChainError::ParentMismatch {
            expected: tip.to_owned(),
            found: block.parent_digest.clone(),
        });
    }
    let payload = serialize_block(block);
    let mut record = Vec::with_capacity(HEADER_LEN + payload.len());
    record.extend_from_slice(&(payload.len() as u64).to_be_bytes());
    record.extend_from_slice(&Sha256::digest(&payload));
    record.extend_from_slice(&payload);
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    file.write_all(&record)?;
    file.sync_data()?;
    Ok(())
}

/// Loads every block, verifying record checksums and parent linkage. A
/// missing file is an empty chain.
pub fn load_chain(path: &Path) -> Result<Vec<Block>, ChainError> {
    let mut bytes = Vec::new();
    match File::open(path) {
        Ok(mut f) => {
            f.read_to_end(&mut bytes)?;
        }
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    }

    let mut chain: Vec<Block> = Vec::new();
    let mut rest = bytes.as_slice();
    while !rest.is_empty() {
        let index = chain.len();
        let corrupt = |reason: &str| ChainError::Corrupt {
            index,
            reason: reason.to_owned(),
        };
        if rest.len() < HEADER_LEN {
            return Err(corrupt("truncated header"));
        }
        let (len_bytes, tail) = rest.split_at(8);
        let (sum, tail) = tail.split_at(32);
        let len = u64::from_be_bytes(len_bytes.try_into().expect("8 bytes"));
        let len = usize::try_from(len)
            .ok()
            .filter(|&l| l <= tail.len())
            .ok_or_else(|| corrupt("truncated payload"))?;
        let (payload, tail) = tail.split_at(len);
        if Sha256::digest(payload).as_slice() != sum {
            return Err(corrupt("checksum mismatch"));
        }
        let block = parse_block(payload).map_err(|e| corrupt(&e.to_string()))?;
        if block.parent_digest != tip_digest(&chain) {
            return Err(ChainError::BrokenLink { index });
        }
        chain.push(block);
        rest = tail;
    }
    Ok(chain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::block::tests::sample;

    fn chained(n: usize) -> Vec<Block> {
        let mut parent = GENESIS_DIGEST.to_owned();
        (0..n)
            .map(|i| {
                let mut b = sample();
                b.parent_digest = parent.clone();
                b.post_state_digest = format!("{:064x}", i + 1);
                parent = b.post_state_digest.clone();
                b
            })
            .collect()
    }

    #[test]
    fn append_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chain.bin");
        assert!(load_chain(&path).unwrap().is_empty());
        let blocks = chained(3);
        append_block(&path, &blocks[0]).unwrap();
        assert_eq!(load_chain(&path).unwrap().len(), 1);
        append_block(&path, &blocks[1]).unwrap();
        append_block(&path, &blocks[2]).unwrap();
        assert_eq!(load_chain(&path).unwrap(), blocks);
    }

    #[test]
    fn stale_parent_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chain.bin");
        let blocks = chained(2);
        append_block(&path, &blocks[0]).unwrap();
        append_block(&path, &blocks[1]).unwrap();
        let err = append_block(&path, &blocks[1]).unwrap_err();
        assert!(matches!(err, ChainError::ParentMismatch { .. }));
        assert_eq!(load_chain(&path).unwrap().len(), 2);
    }

    #[test]
    fn any_byte_flip_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chain.bin");
        for b in chained(2) {
            append_block(&path, &b).unwrap();
        }
        let good = std::fs::read(&path).unwrap();
        for pos in (0..good.len()).step_by(37) {
            let mut bad = good.clone();
            bad[pos] ^= 0x01;
            std::fs::write(&path, &bad).unwrap();
            assert!(load_chain(&path).is_err(), "flip at {pos} went unnoticed");
        }
        std::fs::write(&path, &good[..good.len() - 1]).unwrap();
        assert!(matches!(
            load_chain(&path),
            Err(ChainError::Corrupt { index: 1, .. })
        ));
    }

    #[test]
    fn relinked_records_are_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chain.bin");
        let blocks = chained(3);
        append_block(&path, &blocks[0]).unwrap();
        // Block 2 directly after block 0, with a valid checksum.
        let payload = serialize_block(&blocks[2]);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(&(payload.len() as u64).to_be_bytes()).unwrap();
        f.write_all(&Sha256::digest(&payload)).unwrap();
        f.write_all(&payload).unwrap();
        drop(f);
        assert!(matches!(
            load_chain(&path),
            Err(ChainError::BrokenLink { index: 1 })
        ));
    }
}
