//! In-memory hash index: a power-of-two bucket array of chain heads over
//! arena-allocated entries. Not persisted; the engine rebuilds it from the
//! base table at open.
//!
//! Equality on the full key is the only probe shape. Range predicates and
//! partial keys are refused by construction (there is no operation for
//! them), which pushes the planner back to a scan.

use crate::error::{Error, Result};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Chain link: index+1 into the entry arena; 0 is the empty reference.
/// One 8-byte reference per bucket.
type Ref = u64;

struct HashEntry {
    key: Vec<u8>,
    locator: Vec<u8>,
    next: Ref,
}

pub struct HashIndex {
    buckets: Vec<Ref>,
    entries: Vec<HashEntry>,
    live: u64,
    unique: bool,
}

/// Cost of one lookup: buckets touched (always 1) and chain entries walked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProbeCost {
    pub buckets_probed: u64,
    pub chain_hops: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainStats {
    pub avg_chain: f64,
    pub max_chain: u64,
    pub empty_buckets: u64,
}

impl HashIndex {
    /// Bucket array sized to the next power of two >= `requested`.
    pub fn create(requested: u64, unique: bool) -> Result<HashIndex> {
        if requested == 0 {
            return Err(Error::InvalidBucketCount(0));
        }
        let len = requested.next_power_of_two() as usize;
        Ok(HashIndex {
            buckets: vec![0; len],
            entries: Vec::new(),
            live: 0,
            unique,
        })
    }

    pub fn bucket_count(&self) -> u64 {
        self.buckets.len() as u64
    }

    pub fn len(&self) -> u64 {
        self.live
    }

    pub fn is_empty(&self) -> bool {
        self.live == 0
    }

    pub fn is_unique(&self) -> bool {
        self.unique
    }

    fn bucket_of(&self, key: &[u8]) -> usize {
        (fnv1a(key) & (self.buckets.len() as u64 - 1)) as usize
    }

    /// Prepend an entry to its bucket chain.
    pub fn insert(&mut self, key: Vec<u8>, locator: Vec<u8>) -> Result<()> {
        if self.unique && !self.lookup_equal(&key).0.is_empty() {
            let hex: String = key.iter().map(|b| format!("{b:02x}")).collect();
            return Err(Error::DuplicateKey { index: String::new(), key: hex });
        }
        let b = self.bucket_of(&key);
        self.entries.push(HashEntry { key, locator, next: self.buckets[b] });
        self.buckets[b] = self.entries.len() as Ref;
        self.live += 1;
        Ok(())
    }

    /// All locators stored under exactly this key, cheapest-to-find first
    /// (reverse insertion order), plus the probe cost.
    pub fn lookup_equal(&self, key: &[u8]) -> (Vec<Vec<u8>>, ProbeCost) {
        let mut out = Vec::new();
        let mut hops = 0;
        let mut cursor = self.buckets[self.bucket_of(key)];
        while cursor != 0 {
            let e = &self.entries[cursor as usize - 1];
            hops += 1;
            if e.key == key {
                out.push(e.locator.clone());
            }
            cursor = e.next;
        }
        (out, ProbeCost { buckets_probed: 1, chain_hops: hops })
    }

    /// Remove the entry matching (key, locator) exactly.
    pub fn delete(&mut self, key: &[u8], locator: &[u8]) -> Result<()> {
        let b = self.bucket_of(key);
        let mut cursor = self.buckets[b];
        let mut prev: Ref = 0;
        while cursor != 0 {
            let e = &self.entries[cursor as usize - 1];
            if e.key == key && e.locator == locator {
                let next = e.next;
                if prev == 0 {
                    self.buckets[b] = next;
                } else {
                    self.entries[prev as usize - 1].next = next;
                }
                // Arena slot stays behind unlinked; the index is rebuilt at
                // every open, so slack never accumulates across sessions.
                self.live -= 1;
                return Ok(());
            }
            prev = cursor;
            cursor = e.next;
        }
        Err(Error::EntryNotFound)
    }

    /// Every live (key, locator) pair, in no particular order.
    pub fn iter(&self) -> impl Iterator<Item = (&[u8], &[u8])> {
        self.buckets.iter().flat_map(move |&head| {
            let mut cursor = head;
            std::iter::from_fn(move || {
                if cursor == 0 {
                    return None;
                }
                let e = &self.entries[cursor as usize - 1];
                cursor = e.next;
                Some((e.key.as_slice(), e.locator.as_slice()))
            })
        })
    }

    pub fn chain_stats(&self) -> ChainStats {
        let mut max = 0u64;
        let mut empty = 0u64;
        for &head in &self.buckets {
            let mut len = 0u64;
            let mut cursor = head;
            while cursor != 0 {
                len += 1;
                cursor = self.entries[cursor as usize - 1].next;
            }
            max = max.max(len);
            if len == 0 {
                empty += 1;
            }
        }
        ChainStats {
            avg_chain: self.live as f64 / self.buckets.len() as f64,
            max_chain: max,
            empty_buckets: empty,
        }
    }
}

/// The bucket a key would land in for a given bucket count; exposed so
/// tests can pre-compute chain-length bounds with the real hash function.
pub fn bucket_for(key: &[u8], bucket_count: u64) -> u64 {
    debug_assert!(bucket_count.is_power_of_two());
    fnv1a(key) & (bucket_count - 1)
}
