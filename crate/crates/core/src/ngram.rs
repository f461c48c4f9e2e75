//! N-gram count tables with un-discounted backoff scoring.
//!
//! Each k-gram is packed into a `u128` with a fixed bit width per token
//! (`ceil(log2(vocab_size))`), most significant token first. The packing is
//! injective, so the hash tables hold exact keys and counts can never be
//! merged by a collision. Sorting packed keys numerically equals sorting the
//! token tuples lexicographically, which makes serialization deterministic.
//!
//! Scoring backs off from order k to k - 1 only when the full k-gram has
//! count zero; no probability mass is discounted, so the conditional
//! distribution is not globally normalized. Only per-token surprisals are
//! consumed downstream.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use rustc_hash::FxHashMap;

use crate::corpus::{SequenceStore, TokenId};
use crate::error::{Error, Result};

pub const TABLE_MAGIC: &[u8; 4] = b"NGT1";
pub const TABLE_VERSION: u32 = 1;
pub const DEFAULT_ORDER: usize = 5;

const SHARD_SEQUENCES: usize = 2048;

type CountMap = FxHashMap<u128, u64>;

#[derive(Debug, Clone)]
pub struct NgramTable {
    max_order: usize,
    vocab_size: usize,
    bits: u32,
    /// `counts[k - 1]`: k-gram counts.
    counts: Vec<CountMap>,
    /// `context_counts[k - 1]`: total continuation count of each (k-1)-token
    /// context. Index 0 is unused; order-1 contexts use `total`.
    context_counts: Vec<CountMap>,
    total: u64,
}

fn bits_for(vocab_size: usize) -> u32 {
    (usize::BITS - (vocab_size.max(2) - 1).leading_zeros()).max(1)
}

impl NgramTable {
    fn empty(max_order: usize, vocab_size: usize) -> Result<Self> {
        if max_order == 0 {
            return Err(Error::Param("n-gram order must be at least 1".into()));
        }
        if vocab_size == 0 || vocab_size > u32::MAX as usize {
            return Err(Error::Param(format!("invalid vocab size {vocab_size}")));
        }
        let bits = bits_for(vocab_size);
        if bits as usize * max_order > 128 {
            return Err(Error::Param(format!(
                "order {max_order} with vocab {vocab_size} needs {} key bits (max 128)",
                bits as usize * max_order
            )));
        }
        Ok(Self {
            max_order,
            vocab_size,
            bits,
            counts: vec![CountMap::default(); max_order],
            context_counts: vec![CountMap::default(); max_order],
            total: 0,
        })
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn total_tokens(&self) -> u64 {
        self.total
    }

    /// Number of distinct k-grams stored at order `k`.
    pub fn distinct(&self, k: usize) -> usize {
        self.counts[k - 1].len()
    }

    fn pack(&self, tokens: &[u32]) -> Option<u128> {
        let mut key = 0u128;
        for &t in tokens {
            if t as usize >= self.vocab_size {
                return None;
            }
            key = (key << self.bits) | u128::from(t);
        }
        Some(key)
    }

    fn unpack(&self, mut key: u128, k: usize) -> Vec<u32> {
        let mask = (1u128 << self.bits) - 1;
        let mut out = vec![0u32; k];
        for slot in out.iter_mut().rev() {
            *slot = (key & mask) as u32;
            key >>= self.bits;
        }
        out
    }

    /// Count of the exact token tuple (its length is the order).
    pub fn count(&self, ngram: &[u32]) -> u64 {
        if ngram.is_empty() || ngram.len() > self.max_order {
            return 0;
        }
        self.pack(ngram)
            .and_then(|k| self.counts[ngram.len() - 1].get(&k).copied())
            .unwrap_or(0)
    }

    /// Sum of counts over all continuations of `context`.
    pub fn context_count(&self, context: &[u32]) -> u64 {
        if context.is_empty() {
            return self.total;
        }
        if context.len() >= self.max_order {
            return 0;
        }
        self.pack(context)
            .and_then(|k| self.context_counts[context.len()].get(&k).copied())
            .unwrap_or(0)
    }

    /// log2 probability assigned to a unigram never seen in training.
    pub fn unseen_log_prob(&self) -> f64 {
        -((self.total + 1) as f64).log2()
    }

    fn finish(&mut self) {
        self.total = self.counts[0].values().sum();
        for k in 2..=self.max_order {
            let mut ctx = CountMap::default();
            for (&key, &c) in &self.counts[k - 1] {
                *ctx.entry(key >> self.bits).or_insert(0) += c;
            }
            self.context_counts[k - 1] = ctx;
        }
    }

    /// Iterate (tokens, count) at order `k` in lexicographic token order.
    pub fn sorted_entries(&self, k: usize) -> Vec<(Vec<u32>, u64)> {
        let mut keys: Vec<(&u128, &u64)> = self.counts[k - 1].iter().collect();
        keys.sort_unstable_by_key(|(key, _)| **key);
        keys.into_iter()
            .map(|(&key, &c)| (self.unpack(key, k), c))
            .collect()
    }
}

/// Count all k-grams (k = 1..=max_order) inside each sequence; n-grams never
/// span two records. Shards are counted in parallel and merged in shard
/// order, and since counts are integers the result is layout independent.
pub fn build(store: &SequenceStore, vocab_size: usize, max_order: usize) -> Result<NgramTable> {
    if max_order > store.sequence_length() {
        return Err(Error::Param(format!(
            "order {max_order} exceeds sequence length {}",
            store.sequence_length()
        )));
    }
    let mut table = NgramTable::empty(max_order, vocab_size)?;
    if store.is_empty() {
        return Err(Error::Param("cannot build an n-gram table from no sequences".into()));
    }
    let seq_len = store.sequence_length();
    let bits = table.bits;
    let key_mask: Vec<u128> = (1..=max_order)
        .map(|k| {
            let width = bits as usize * k;
            if width >= 128 {
                u128::MAX
            } else {
                (1u128 << width) - 1
            }
        })
        .collect();

    let shards: Vec<&[u32]> = store.shards(SHARD_SEQUENCES).collect();
    let partials: Vec<Result<Vec<CountMap>>> = shards
        .par_iter()
        .map(|tokens| {
            let mut local = vec![CountMap::default(); max_order];
            for seq in tokens.chunks_exact(seq_len) {
                // Rolling key of the last `max_order` tokens.
                let mut rolling = 0u128;
                for (i, &t) in seq.iter().enumerate() {
                    if t as usize >= vocab_size {
                        return Err(Error::Format(format!(
                            "token id {t} >= vocab size {vocab_size}"
                        )));
                    }
                    rolling = (rolling << bits) | u128::from(t);
                    if bits as usize * max_order < 128 {
                        rolling &= key_mask[max_order - 1];
                    }
                    for k in 1..=max_order.min(i + 1) {
                        *local[k - 1].entry(rolling & key_mask[k - 1]).or_insert(0) += 1;
                    }
                }
            }
            Ok(local)
        })
        .collect();

    for p in partials {
        for (dst, src) in table.counts.iter_mut().zip(p?) {
            if dst.is_empty() {
                *dst = src;
            } else {
                for (k, c) in src {
                    *dst.entry(k).or_insert(0) += c;
                }
            }
        }
    }
    table.finish();
    Ok(table)
}

/// Backoff log2 probability of `target` after `context` at `order`.
///
/// Only the last `order - 1` context tokens are used; shorter contexts (near
/// a record start) begin at the highest order they support.
pub fn log_prob(table: &NgramTable, context: &[u32], target: TokenId, order: usize) -> Result<f64> {
    if order == 0 || order > table.max_order {
        return Err(Error::Param(format!(
            "order {order} outside 1..={}",
            table.max_order
        )));
    }
    let avail = (order - 1).min(context.len());
    let mut gram: Vec<u32> = Vec::with_capacity(avail + 1);
    for k in (1..=avail + 1).rev() {
        let ctx = &context[context.len() - (k - 1)..];
        gram.clear();
        gram.extend_from_slice(ctx);
        gram.push(target.0);
        let c = table.count(&gram);
        if c > 0 {
            let denom = table.context_count(ctx);
            return Ok((c as f64 / denom as f64).log2());
        }
    }
    Ok(table.unseen_log_prob())
}

/// −log2 of the backoff probability; always finite.
pub fn surprisal(table: &NgramTable, context: &[u32], target: TokenId, order: usize) -> Result<f64> {
    Ok(-log_prob(table, context, target, order)?)
}

/// Score many (context, target) queries in parallel, preserving order.
pub fn score_batch(
    table: &NgramTable,
    queries: &[(Vec<u32>, TokenId)],
    order: usize,
) -> Result<Vec<f64>> {
    queries
        .par_iter()
        .map(|(ctx, t)| surprisal(table, ctx, *t, order))
        .collect()
}

pub fn write_table(path: &Path, table: &NgramTable) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(TABLE_MAGIC).map_err(io)?;
    w.write_all(&TABLE_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(table.max_order as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&(table.vocab_size as u32).to_le_bytes()).map_err(io)?;
    for k in 1..=table.max_order {
        let entries = table.sorted_entries(k);
        w.write_all(&(entries.len() as u64).to_le_bytes()).map_err(io)?;
        for (toks, c) in entries {
            for t in toks {
                w.write_all(&t.to_le_bytes()).map_err(io)?;
            }
            w.write_all(&c.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn read_table(path: &Path) -> Result<NgramTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic)?;
    if &magic != TABLE_MAGIC {
        return Err(Error::Format("not an NGT1 n-gram table".into()));
    }
    let version = read_u32(&mut r)?;
    if version != TABLE_VERSION {
        return Err(Error::Format(format!("unsupported NGT1 version {version}")));
    }
    let order = read_u32(&mut r)? as usize;
    let vocab = read_u32(&mut r)? as usize;
    let mut table = NgramTable::empty(order, vocab)?;
    let mut toks = vec![0u32; order];
    for k in 1..=order {
        let n = read_u64(&mut r)?;
        let map = &mut table.counts[k - 1];
        map.reserve(n as usize);
        for _ in 0..n {
            for t in toks.iter_mut().take(k) {
                *t = read_u32(&mut r)?;
            }
            let c = read_u64(&mut r)?;
            let key = {
                let mut key = 0u128;
                for &t in &toks[..k] {
                    if t as usize >= vocab {
                        return Err(Error::Format(format!("token id {t} >= vocab {vocab}")));
                    }
                    key = (key << table.bits) | u128::from(t);
                }
                key
            };
            map.insert(key, c);
        }
    }
    table.finish();
    Ok(table)
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Format("truncated n-gram table".into()))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}
