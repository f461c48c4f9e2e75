//! Tokenized corpus ingestion and unigram statistics.
//!
//! Two on-disk layouts are accepted:
//!
//! * binary: the 5 magic bytes `CSEQ1`, a `u8` format version (1), a `u32`
//!   little-endian sequence length, then fixed-length records of `u32`
//!   little-endian token ids until end of file;
//! * text: one sequence per line, token ids separated by whitespace. Blank
//!   lines and lines starting with `#` are skipped.
//!
//! A zero-byte file is an empty corpus.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::CounterRng;

pub const CORPUS_MAGIC: &[u8; 5] = b"CSEQ1";
pub const CORPUS_VERSION: u8 = 1;
pub const DEFAULT_SEQUENCE_LENGTH: usize = 128;

/// Sequences per shard when counting in parallel.
const SHARD_SEQUENCES: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Fixed-length token sequences stored back to back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceStore {
    sequence_length: usize,
    tokens: Vec<u32>,
}

impl SequenceStore {
    pub fn new(sequence_length: usize) -> Self {
        assert!(sequence_length > 0, "sequence length must be positive");
        Self {
            sequence_length,
            tokens: Vec::new(),
        }
    }

    pub fn from_sequences(sequence_length: usize, sequences: &[Vec<u32>]) -> Result<Self> {
        let mut store = Self::new(sequence_length);
        for s in sequences {
            store.push(s)?;
        }
        Ok(store)
    }

    pub fn push(&mut self, seq: &[u32]) -> Result<()> {
        if seq.len() != self.sequence_length {
            return Err(Error::Format(format!(
                "sequence {} has {} tokens, expected {}",
                self.len(),
                seq.len(),
                self.sequence_length
            )));
        }
        self.tokens.extend_from_slice(seq);
        Ok(())
    }

    pub fn sequence_length(&self) -> usize {
        self.sequence_length
    }

    pub fn len(&self) -> usize {
        self.tokens.len() / self.sequence_length
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&[u32]> {
        let start = i.checked_mul(self.sequence_length)?;
        self.tokens.get(start..start + self.sequence_length)
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, u32> {
        self.tokens.chunks_exact(self.sequence_length)
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    /// Contiguous sub-stores of at most `shard` sequences each.
    pub fn shards(&self, shard: usize) -> impl Iterator<Item = &[u32]> + '_ {
        self.tokens.chunks(shard.max(1) * self.sequence_length)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub vocab_size: usize,
    pub total_tokens: u64,
    pub counts: Vec<u64>,
}

impl CorpusStats {
    pub fn empty(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            total_tokens: 0,
            counts: vec![0; vocab_size],
        }
    }

    /// Tally a store in parallel shards. Integer counts merge associatively,
    /// so the result does not depend on the shard layout.
    pub fn from_store(store: &SequenceStore, vocab_size: usize) -> Result<Self> {
        let shards: Vec<&[u32]> = store.shards(SHARD_SEQUENCES).collect();
        let partials: Vec<Result<Vec<u64>>> = shards
            .par_iter()
            .map(|tokens| {
                let mut counts = vec![0u64; vocab_size];
                for &t in *tokens {
                    let slot = counts.get_mut(t as usize).ok_or_else(|| {
                        Error::Format(format!("token id {t} >= vocab size {vocab_size}"))
                    })?;
                    *slot += 1;
                }
                Ok(counts)
            })
            .collect();
        let mut stats = Self::empty(vocab_size);
        for p in partials {
            stats.merge_counts(&p?);
        }
        Ok(stats)
    }

    fn merge_counts(&mut self, counts: &[u64]) {
        for (a, b) in self.counts.iter_mut().zip(counts) {
            *a += b;
        }
        self.total_tokens = self.counts.iter().sum();
    }

    pub fn count(&self, w: TokenId) -> u64 {
        self.counts.get(w.index()).copied().unwrap_or(0)
    }

    /// log2(1 / (total_tokens + 1)), the log-frequency assigned to unseen tokens.
    pub fn unseen_log_frequency(&self) -> f64 {
        -((self.total_tokens + 1) as f64).log2()
    }

    pub fn token_log_frequency(&self, w: TokenId) -> Result<f64> {
        token_log_frequency(self, w)
    }

    pub fn relative_frequencies(&self) -> Vec<f64> {
        let total = self.total_tokens as f64;
        self.counts.iter().map(|&c| c as f64 / total).collect()
    }
}

/// log2(count(w) / total_tokens); unseen tokens get
/// [`CorpusStats::unseen_log_frequency`].
pub fn token_log_frequency(stats: &CorpusStats, w: TokenId) -> Result<f64> {
    if stats.total_tokens == 0 {
        return Err(Error::EmptyCorpus);
    }
    let c = stats.count(w);
    if c == 0 {
        Ok(stats.unseen_log_frequency())
    } else {
        Ok((c as f64 / stats.total_tokens as f64).log2())
    }
}

/// The `k` most frequent tokens, ties broken by ascending id.
pub fn top_k_tokens(stats: &CorpusStats, k: usize) -> Result<Vec<TokenId>> {
    if k == 0 {
        return Err(Error::Param("k must be at least 1".into()));
    }
    let k = if k > stats.vocab_size {
        log::warn!("top-k: k={k} exceeds vocab size {}; clamping", stats.vocab_size);
        stats.vocab_size
    } else {
        k
    };
    let mut ids: Vec<u32> = (0..stats.vocab_size as u32).collect();
    let by_count = |a: &u32, b: &u32| {
        stats.counts[*b as usize]
            .cmp(&stats.counts[*a as usize])
            .then(a.cmp(b))
    };
    if k < ids.len() {
        ids.select_nth_unstable_by(k, by_count);
        ids.truncate(k);
    }
    ids.sort_by(by_count);
    Ok(ids.into_iter().map(TokenId).collect())
}

/// Streaming record reader over either corpus layout.
pub struct RecordReader {
    inner: RecordSource,
    sequence_length: usize,
    vocab_size: usize,
    record: usize,
}

enum RecordSource {
    Binary(BufReader<File>),
    Text(std::io::Lines<BufReader<File>>),
    Empty,
}

impl RecordReader {
    pub fn open(path: &Path, vocab_size: usize, sequence_length: usize) -> Result<Self> {
        if sequence_length == 0 {
            return Err(Error::Param("sequence length must be positive".into()));
        }
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = BufReader::new(file);
        let head = reader.fill_buf().map_err(|e| Error::io(path, e))?;
        let inner = if head.is_empty() {
            RecordSource::Empty
        } else if head.starts_with(CORPUS_MAGIC) {
            let mut header = [0u8; 10];
            reader
                .read_exact(&mut header)
                .map_err(|_| Error::Format("truncated CSEQ1 header".into()))?;
            if header[5] != CORPUS_VERSION {
                return Err(Error::Format(format!(
                    "unsupported CSEQ1 version {}",
                    header[5]
                )));
            }
            let len = u32::from_le_bytes(header[6..10].try_into().unwrap()) as usize;
            if len != sequence_length {
                return Err(Error::Format(format!(
                    "file sequence length {len} does not match requested {sequence_length}"
                )));
            }
            RecordSource::Binary(reader)
        } else {
            RecordSource::Text(reader.lines())
        };
        Ok(Self {
            inner,
            sequence_length,
            vocab_size,
            record: 0,
        })
    }

    fn check_ids(&self, seq: &[u32]) -> Result<()> {
        if let Some(&bad) = seq.iter().find(|&&t| t as usize >= self.vocab_size) {
            return Err(Error::Format(format!(
                "record {}: token id {bad} >= vocab size {}",
                self.record, self.vocab_size
            )));
        }
        Ok(())
    }
}

impl Iterator for RecordReader {
    type Item = Result<Vec<u32>>;

    fn next(&mut self) -> Option<Self::Item> {
        let seq = match &mut self.inner {
            RecordSource::Empty => return None,
            RecordSource::Binary(r) => {
                let mut buf = vec![0u8; 4 * self.sequence_length];
                let mut filled = 0;
                while filled < buf.len() {
                    match r.read(&mut buf[filled..]) {
                        Ok(0) => break,
                        Ok(n) => filled += n,
                        Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                        Err(e) => return Some(Err(Error::Format(e.to_string()))),
                    }
                }
                if filled == 0 {
                    return None;
                }
                if filled < buf.len() {
                    return Some(Err(Error::Format(format!(
                        "truncated record {}: {filled} of {} bytes",
                        self.record,
                        buf.len()
                    ))));
                }
                buf.chunks_exact(4)
                    .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                    .collect::<Vec<u32>>()
            }
            RecordSource::Text(lines) => loop {
                let line = match lines.next()? {
                    Ok(l) => l,
                    Err(e) => return Some(Err(Error::Format(e.to_string()))),
                };
                let t = line.trim();
                if t.is_empty() || t.starts_with('#') {
                    continue;
                }
                let parsed: std::result::Result<Vec<u32>, _> =
                    t.split_whitespace().map(str::parse::<u32>).collect();
                match parsed {
                    Ok(v) if v.len() == self.sequence_length => break v,
                    Ok(v) => {
                        return Some(Err(Error::Format(format!(
                            "record {}: {} tokens, expected {}",
                            self.record,
                            v.len(),
                            self.sequence_length
                        ))))
                    }
                    Err(e) => {
                        return Some(Err(Error::Format(format!(
                            "record {}: {e}",
                            self.record
                        ))))
                    }
                }
            },
        };
        if let Err(e) = self.check_ids(&seq) {
            return Some(Err(e));
        }
        self.record += 1;
        Some(Ok(seq))
    }
}

/// Read a corpus into memory and tally unigram counts.
pub fn ingest_corpus(
    path: &Path,
    vocab_size: usize,
    sequence_length: usize,
) -> Result<(SequenceStore, CorpusStats)> {
    let mut store = SequenceStore::new(sequence_length);
    for rec in RecordReader::open(path, vocab_size, sequence_length)? {
        store.push(&rec?)?;
    }
    let stats = CorpusStats::from_store(&store, vocab_size)?;
    Ok((store, stats))
}

/// Tally counts without retaining sequences (memory bounded by vocab size).
pub fn scan_corpus_stats(
    path: &Path,
    vocab_size: usize,
    sequence_length: usize,
) -> Result<CorpusStats> {
    let mut stats = CorpusStats::empty(vocab_size);
    for rec in RecordReader::open(path, vocab_size, sequence_length)? {
        for t in rec? {
            stats.counts[t as usize] += 1;
            stats.total_tokens += 1;
        }
    }
    Ok(stats)
}

pub fn write_corpus_binary(path: &Path, store: &SequenceStore) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(CORPUS_MAGIC).map_err(io)?;
    w.write_all(&[CORPUS_VERSION]).map_err(io)?;
    w.write_all(&(store.sequence_length() as u32).to_le_bytes())
        .map_err(io)?;
    for &t in store.tokens() {
        w.write_all(&t.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_corpus_text(path: &Path, store: &SequenceStore) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for seq in store.iter() {
        let line: Vec<String> = seq.iter().map(u32::to_string).collect();
        writeln!(w, "{}", line.join(" ")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Seeded uniform split without replacement. Returns (train, eval); both
/// keep the original relative order of their sequences.
pub fn split_train_eval(
    store: &SequenceStore,
    eval_fraction: f64,
    seed: u64,
) -> Result<(SequenceStore, SequenceStore)> {
    if !(0.0..=1.0).contains(&eval_fraction) {
        return Err(Error::Param(format!(
            "eval fraction {eval_fraction} outside [0, 1]"
        )));
    }
    let n = store.len();
    let n_eval = (n as f64 * eval_fraction).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    CounterRng::new(seed).shuffle(&mut order);
    let mut is_eval = vec![false; n];
    for &i in &order[..n_eval] {
        is_eval[i] = true;
    }
    let mut train = SequenceStore::new(store.sequence_length());
    let mut eval = SequenceStore::new(store.sequence_length());
    for (i, seq) in store.iter().enumerate() {
        if is_eval[i] {
            eval.push(seq)?;
        } else {
            train.push(seq)?;
        }
    }
    Ok((train, eval))
}
