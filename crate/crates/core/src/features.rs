//! Example-level predictors: target frequency, n-gram predictability,
//! context length and frequency, contextual diversity, and POS annotations.
//!
//! An example `seq:pos` predicts token `pos` of sequence `seq` from the
//! tokens before it, so its context length is `pos`.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use rustc_hash::FxHashSet;
use serde::Serialize;

use crate::corpus::{top_k_tokens, CorpusStats, SequenceStore, TokenId};
use crate::curves::ExampleId;
use crate::error::{Error, Result};
use crate::gamfit::{fit_gam, GamConfig};
use crate::ngram::{log_prob, NgramTable};
use crate::stats::{mean, pairwise_sum_by, sample_std};
use crate::table::{read_table, TableWriter};

pub const DIVERSITY_WINDOW: usize = 30;
pub const DIVERSITY_TOP_K: usize = 10_000;

pub const UPOS_TAGS: [&str; 17] = [
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM", "PART", "PRON", "PROPN", "PUNCT",
    "SCONJ", "SYM", "VERB", "X",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Upos(u8);

impl Upos {
    pub fn name(self) -> &'static str {
        UPOS_TAGS[self.0 as usize]
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn all() -> impl Iterator<Item = Upos> {
        (0..UPOS_TAGS.len() as u8).map(Upos)
    }
}

impl FromStr for Upos {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        UPOS_TAGS
            .iter()
            .position(|t| *t == s)
            .map(|i| Upos(i as u8))
            .ok_or_else(|| Error::Format(format!("unknown POS tag `{s}`")))
    }
}

impl fmt::Display for Upos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Position of the token within its word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum WordPosition {
    B,
    I,
    L,
    U,
}

impl WordPosition {
    pub const ALL: [WordPosition; 4] = [WordPosition::B, WordPosition::I, WordPosition::L, WordPosition::U];

    pub fn name(self) -> &'static str {
        match self {
            WordPosition::B => "B",
            WordPosition::I => "I",
            WordPosition::L => "L",
            WordPosition::U => "U",
        }
    }
}

impl FromStr for WordPosition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        WordPosition::ALL
            .into_iter()
            .find(|w| w.name() == s)
            .ok_or_else(|| Error::Format(format!("unknown word position `{s}` (expected B, I, L or U)")))
    }
}

impl fmt::Display for WordPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExampleFeatures {
    pub id: ExampleId,
    pub log_freq: f64,
    pub fg_resid: f64,
    pub ctx_loglen: f64,
    pub ctx_logprob: f64,
    pub div_resid: f64,
    pub pos: Option<Upos>,
    pub word_pos: Option<WordPosition>,
}

pub const CONTINUOUS: [&str; 5] = ["log_freq", "fg_resid", "ctx_loglen", "ctx_logprob", "div_resid"];

impl ExampleFeatures {
    pub fn continuous(&self) -> [f64; 5] {
        [self.log_freq, self.fg_resid, self.ctx_loglen, self.ctx_logprob, self.div_resid]
    }

    pub fn set_continuous(&mut self, v: [f64; 5]) {
        [self.log_freq, self.fg_resid, self.ctx_loglen, self.ctx_logprob, self.div_resid] = v;
    }
}

/// Natural log of the context token count.
pub fn context_log_length(len: usize) -> Result<f64> {
    if len == 0 {
        return Err(Error::Param("context is empty".into()));
    }
    Ok((len as f64).ln())
}

/// Mean token log2-frequency over the context.
pub fn context_log_prob(context: &[u32], stats: &CorpusStats) -> Result<f64> {
    if context.is_empty() {
        return Err(Error::Param("context is empty".into()));
    }
    let lf: Vec<f64> = context
        .iter()
        .map(|&t| stats.token_log_frequency(TokenId(t)))
        .collect::<Result<_>>()?;
    Ok(mean(&lf))
}

/// [`context_log_prob`] over the last `window` context tokens.
pub fn context_log_prob_windowed(context: &[u32], stats: &CorpusStats, window: usize) -> Result<f64> {
    if window == 0 {
        return Err(Error::Param("window must be at least 1".into()));
    }
    context_log_prob(&context[context.len().saturating_sub(window)..], stats)
}

/// Residuals of a simple least-squares regression of `y` on `x`.
pub fn simple_residuals(y: &[f64], x: &[f64], x_name: &str) -> Result<Vec<f64>> {
    if y.len() != x.len() || y.len() < 2 {
        return Err(Error::Param("residualization needs two aligned columns of length >= 2".into()));
    }
    let n = x.len();
    let mx = mean(x);
    let my = mean(y);
    let sxx = pairwise_sum_by(n, |i| (x[i] - mx) * (x[i] - mx));
    if sxx <= 0.0 {
        return Err(Error::ZeroVariance {
            column: x_name.to_string(),
        });
    }
    let sxy = pairwise_sum_by(n, |i| (x[i] - mx) * (y[i] - my));
    let slope = sxy / sxx;
    Ok((0..n).map(|i| (y[i] - my) - slope * (x[i] - mx)).collect())
}

/// 5-gram log-probability residualized on target log-frequency.
pub fn fivegram_residual(fivegram_logprob: &[f64], log_freq: &[f64]) -> Result<Vec<f64>> {
    simple_residuals(fivegram_logprob, log_freq, "log_freq")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiversityTable {
    /// Distinct frequent tokens seen in the preceding window, per token type.
    pub raw: Vec<u32>,
    /// False for types that never occur in the corpus.
    pub occurs: Vec<bool>,
    /// Raw diversity minus its smooth fit on log-frequency.
    pub residual: Vec<f64>,
}

/// Per-type count of distinct top-`top_k` tokens among the `window` tokens
/// preceding each occurrence, within a sequence.
pub fn contextual_diversity_raw(
    store: &SequenceStore,
    stats: &CorpusStats,
    window: usize,
    top_k: usize,
) -> Result<(Vec<u32>, Vec<bool>)> {
    if window == 0 {
        return Err(Error::Param("diversity window must be at least 1".into()));
    }
    let frequent: FxHashSet<u32> = top_k_tokens(stats, top_k)?.into_iter().map(|t| t.0).collect();
    let shard_pairs: Vec<Vec<u64>> = store
        .shards(64)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|tokens| {
            let mut set: FxHashSet<u64> = FxHashSet::default();
            for seq in tokens.chunks(store.sequence_length()) {
                for (p, &t) in seq.iter().enumerate() {
                    for &c in &seq[p.saturating_sub(window)..p] {
                        if frequent.contains(&c) {
                            set.insert((u64::from(t) << 32) | u64::from(c));
                        }
                    }
                }
            }
            let mut v: Vec<u64> = set.into_iter().collect();
            v.sort_unstable();
            v
        })
        .collect();
    let mut all: Vec<u64> = shard_pairs.into_iter().flatten().collect();
    all.sort_unstable();
    all.dedup();
    let mut raw = vec![0u32; stats.vocab_size];
    for key in all {
        raw[(key >> 32) as usize] += 1;
    }
    let occurs = stats.counts.iter().map(|&c| c > 0).collect();
    Ok((raw, occurs))
}

/// Raw diversity and its residual after a smooth fit on token log-frequency
/// across the types that occur.
pub fn contextual_diversity(
    store: &SequenceStore,
    stats: &CorpusStats,
    window: usize,
    top_k: usize,
    gam: &GamConfig,
) -> Result<DiversityTable> {
    let (raw, occurs) = contextual_diversity_raw(store, stats, window, top_k)?;
    let log_freq: Vec<f64> = (0..stats.vocab_size)
        .map(|t| stats.token_log_frequency(TokenId(t as u32)))
        .collect::<Result<_>>()?;
    let seen: Vec<usize> = (0..stats.vocab_size).filter(|&t| occurs[t]).collect();
    let x: Vec<f64> = seen.iter().map(|&t| log_freq[t]).collect();
    let y: Vec<f64> = seen.iter().map(|&t| f64::from(raw[t])).collect();
    let mut distinct = x.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 5 {
        return Err(Error::Data(format!(
            "diversity fit needs at least 5 distinct token frequencies, corpus has {}",
            distinct.len()
        )));
    }
    let mut cfg = gam.clone();
    if distinct.len() < cfg.n_basis + 2 {
        cfg.n_basis = distinct.len() - 2;
        log::warn!(
            "diversity fit: only {} distinct frequencies; using {} basis functions",
            distinct.len(),
            cfg.n_basis
        );
    }
    let fit = fit_gam(&x, &y, &cfg)?;
    let residual = (0..stats.vocab_size)
        .map(|t| f64::from(raw[t]) - fit.evaluate(log_freq[t]))
        .collect();
    Ok(DiversityTable { raw, occurs, residual })
}

fn context_of(store: &SequenceStore, id: ExampleId) -> Result<(&[u32], u32)> {
    let seq = store
        .get(id.sequence_index as usize)
        .ok_or_else(|| Error::Data(format!("example {id}: sequence not in corpus")))?;
    let pos = id.token_position as usize;
    if pos == 0 || pos >= seq.len() {
        return Err(Error::Data(format!(
            "example {id}: token position outside 1..{}",
            seq.len()
        )));
    }
    Ok((&seq[..pos], seq[pos]))
}

/// Continuous predictors for every example (POS fields left empty).
pub fn example_features(
    ids: &[ExampleId],
    store: &SequenceStore,
    stats: &CorpusStats,
    table: &NgramTable,
    diversity: &DiversityTable,
) -> Result<Vec<ExampleFeatures>> {
    let order = table.max_order();
    let partial: Vec<(ExampleFeatures, f64)> = ids
        .par_iter()
        .map(|&id| {
            let (ctx, target) = context_of(store, id)?;
            let lp = log_prob(table, ctx, TokenId(target), order)?;
            let f = ExampleFeatures {
                id,
                log_freq: stats.token_log_frequency(TokenId(target))?,
                fg_resid: 0.0,
                ctx_loglen: context_log_length(ctx.len())?,
                ctx_logprob: context_log_prob(ctx, stats)?,
                div_resid: diversity.residual[target as usize],
                pos: None,
                word_pos: None,
            };
            Ok((f, lp))
        })
        .collect::<Result<_>>()?;
    let lf: Vec<f64> = partial.iter().map(|p| p.0.log_freq).collect();
    let lp: Vec<f64> = partial.iter().map(|p| p.1).collect();
    let resid = fivegram_residual(&lp, &lf)?;
    Ok(partial
        .into_iter()
        .zip(resid)
        .map(|((mut f, _), r)| {
            f.fg_resid = r;
            f
        })
        .collect())
}

pub type PosAnnotations = HashMap<ExampleId, (Upos, WordPosition)>;

/// Read `sequence_index, token_position, UPOS, B|I|L|U` rows. A header row
/// and `#` comments are skipped.
pub fn ingest_pos(path: &Path) -> Result<PosAnnotations> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = HashMap::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end();
        if line.is_empty() || line.starts_with('#') || line.starts_with("sequence_index") {
            continue;
        }
        let at = |msg: String| Error::Format(format!("{}:{}: {msg}", path.display(), lineno + 1));
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(at(format!("expected 4 fields, found {}", f.len())));
        }
        let seq = f[0].parse().map_err(|_| at(format!("bad sequence index `{}`", f[0])))?;
        let pos = f[1].parse().map_err(|_| at(format!("bad token position `{}`", f[1])))?;
        let id = ExampleId::new(seq, pos).map_err(|e| at(e.to_string()))?;
        let tag: Upos = f[2].parse().map_err(|e: Error| at(e.to_string()))?;
        let wp: WordPosition = f[3].parse().map_err(|e: Error| at(e.to_string()))?;
        if out.insert(id, (tag, wp)).is_some() {
            return Err(at(format!("duplicate annotation for {id}")));
        }
    }
    Ok(out)
}

/// Attach annotations; every example must have one.
pub fn join_pos(features: &mut [ExampleFeatures], pos: &PosAnnotations) -> Result<()> {
    let missing: Vec<String> = features
        .iter()
        .filter(|f| !pos.contains_key(&f.id))
        .map(|f| f.id.to_string())
        .collect();
    if !missing.is_empty() {
        let shown: Vec<&str> = missing.iter().take(20).map(String::as_str).collect();
        return Err(Error::Data(format!(
            "{} examples lack POS annotations: {}{}",
            missing.len(),
            shown.join(", "),
            if missing.len() > 20 { ", ..." } else { "" }
        )));
    }
    for f in features.iter_mut() {
        let (t, w) = pos[&f.id];
        f.pos = Some(t);
        f.word_pos = Some(w);
    }
    Ok(())
}

/// Clip each column to mean +/- 5 sample standard deviations (pre-clip
/// statistics). Returns the number of clipped values per column.
pub fn clip_columns(columns: &mut [Vec<f64>], names: &[&str]) -> Result<Vec<usize>> {
    let mut clipped = Vec::with_capacity(columns.len());
    for (j, col) in columns.iter_mut().enumerate() {
        if col.len() < 2 {
            return Err(Error::Param("clipping needs at least two rows".into()));
        }
        let m = mean(col);
        let sd = sample_std(col);
        if sd == 0.0 || !sd.is_finite() {
            log::warn!("clip: column `{}` has zero variance; left unchanged", names.get(j).unwrap_or(&"?"));
            clipped.push(0);
            continue;
        }
        let (lo, hi) = (m - 5.0 * sd, m + 5.0 * sd);
        let mut k = 0;
        for v in col.iter_mut() {
            if *v < lo || *v > hi {
                *v = v.clamp(lo, hi);
                k += 1;
            }
        }
        clipped.push(k);
    }
    Ok(clipped)
}

/// Clip the continuous predictors of a feature set in place.
pub fn clip_features(features: &mut [ExampleFeatures]) -> Result<Vec<usize>> {
    let mut cols: Vec<Vec<f64>> = (0..5).map(|j| features.iter().map(|f| f.continuous()[j]).collect()).collect();
    let counts = clip_columns(&mut cols, &CONTINUOUS)?;
    for (i, f) in features.iter_mut().enumerate() {
        f.set_continuous([cols[0][i], cols[1][i], cols[2][i], cols[3][i], cols[4][i]]);
    }
    Ok(counts)
}

pub const FEATURE_COLUMNS: [&str; 8] = [
    "example_id", "log_freq", "fg_resid", "ctx_loglen", "ctx_logprob", "div_resid", "pos", "word_pos",
];

pub fn write_features(path: &Path, features: &[ExampleFeatures]) -> Result<()> {
    let mut w = TableWriter::create(path, &FEATURE_COLUMNS)?;
    for f in features {
        let mut row = vec![f.id.to_string()];
        row.extend(f.continuous().iter().map(f64::to_string));
        row.push(f.pos.map_or("-".to_string(), |p| p.to_string()));
        row.push(f.word_pos.map_or("-".to_string(), |p| p.to_string()));
        w.row(&row)?;
    }
    w.finish()
}

pub fn read_features(path: &Path) -> Result<Vec<ExampleFeatures>> {
    let t = read_table(path, '\t')?;
    if t.columns != FEATURE_COLUMNS {
        return Err(Error::Format(format!(
            "{}: feature columns must be {}",
            path.display(),
            FEATURE_COLUMNS.join(", ")
        )));
    }
    let cols: Vec<Vec<f64>> = CONTINUOUS.iter().map(|c| t.f64_column(c)).collect::<Result<_>>()?;
    t.rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            fn opt(s: &str) -> Option<&str> {
                (s != "-").then_some(s)
            }
            Ok(ExampleFeatures {
                id: r[0].parse()?,
                log_freq: cols[0][i],
                fg_resid: cols[1][i],
                ctx_loglen: cols[2][i],
                ctx_logprob: cols[3][i],
                div_resid: cols[4][i],
                pos: opt(&r[6]).map(str::parse).transpose()?,
                word_pos: opt(&r[7]).map(str::parse).transpose()?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ngram::build;
    use crate::rng::CounterRng;
    use proptest::prelude::*;

    fn stats_of(store: &SequenceStore, vocab: usize) -> CorpusStats {
        CorpusStats::from_store(store, vocab).unwrap()
    }

    #[test]
    fn context_length_examples() {
        assert_eq!(context_log_length(1).unwrap(), 0.0);
        assert!((context_log_length(7).unwrap() - 7f64.ln()).abs() < 1e-15);
        assert!((context_log_length(7).unwrap() - 1.945910149055313).abs() < 1e-15);
        assert!(context_log_length(0).is_err());
    }

    #[test]
    fn context_log_prob_examples() {
        // a corpus with a single type: probability 1
        let one = SequenceStore::from_sequences(3, &[vec![0, 0, 0]]).unwrap();
        assert_eq!(context_log_prob(&[0], &stats_of(&one, 2)).unwrap(), 0.0);
        // counts 4,1,3 of 8: log-freqs -1, -3, log2(3/8)
        let s = SequenceStore::from_sequences(4, &[vec![0, 0, 1, 2], vec![0, 0, 2, 2]]).unwrap();
        let st = stats_of(&s, 3);
        assert!((context_log_prob(&[0, 1], &st).unwrap() + 2.0).abs() < 1e-15);
        let ctx = [2, 0, 1, 0];
        assert_eq!(context_log_prob_windowed(&ctx, &st, 4).unwrap(), context_log_prob(&ctx, &st).unwrap());
        assert_eq!(context_log_prob_windowed(&ctx, &st, 1).unwrap(), -1.0);
    }

    #[test]
    fn fivegram_residual_cases() {
        let x = vec![-3.0, -5.0, -7.5, -2.0];
        assert!(fivegram_residual(&x, &x).unwrap().iter().all(|r| r.abs() < 1e-12));
        // two points: the line passes through both
        let r = fivegram_residual(&[1.0, 4.0], &[0.0, 1.0]).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-15));
        // closed form on three points: slope = 1.5, intercept = 0.5
        let r = fivegram_residual(&[1.0, 1.0, 4.0], &[0.0, 1.0, 2.0]).unwrap();
        let expect = [1.0 - 0.5, 1.0 - 2.0, 4.0 - 3.5];
        for (a, b) in r.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(fivegram_residual(&[1.0, 2.0], &[3.0, 3.0]), Err(Error::ZeroVariance { .. })));
    }

    #[test]
    fn residuals_orthogonal_to_regressor() {
        let mut rng = CounterRng::new(1);
        let x: Vec<f64> = (0..500).map(|_| rng.uniform(-20.0, -2.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.7 * v + rng.normal() * 3.0).collect();
        let r = fivegram_residual(&y, &x).unwrap();
        let dot: f64 = r.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-8 * 500.0);
        assert!(r.iter().sum::<f64>().abs() < 1e-8 * 500.0);
    }

    fn brute_diversity(store: &SequenceStore, top: &[u32], window: usize, vocab: usize) -> Vec<u32> {
        let mut sets = vec![Vec::<u32>::new(); vocab];
        for seq in store.iter() {
            for p in 0..seq.len() {
                for q in 0..p {
                    if p - q <= window && top.contains(&seq[q]) && !sets[seq[p] as usize].contains(&seq[q]) {
                        sets[seq[p] as usize].push(seq[q]);
                    }
                }
            }
        }
        sets.iter().map(|s| s.len() as u32).collect()
    }

    #[test]
    fn diversity_raw_cases() {
        // token 5 always preceded by token 1 only
        let s = SequenceStore::from_sequences(2, &[vec![1, 5], vec![1, 5], vec![2, 3]]).unwrap();
        let st = stats_of(&s, 8);
        let (raw, occurs) = contextual_diversity_raw(&s, &st, 30, 100).unwrap();
        assert_eq!(raw[5], 1);
        // token 1 and 2 only at position 0
        assert_eq!(raw[1], 0);
        assert_eq!(raw[2], 0);
        assert!(!occurs[7] && raw[7] == 0);
    }

    #[test]
    fn diversity_matches_window_scan() {
        let mut rng = CounterRng::new(2);
        let seqs: Vec<Vec<u32>> = (0..40).map(|_| (0..50).map(|_| (rng.below(60) as f64).sqrt() as u32 * 7 % 60).collect()).collect();
        let s = SequenceStore::from_sequences(50, &seqs).unwrap();
        let st = stats_of(&s, 60);
        let top: Vec<u32> = top_k_tokens(&st, 12).unwrap().into_iter().map(|t| t.0).collect();
        let (raw, _) = contextual_diversity_raw(&s, &st, 30, 12).unwrap();
        assert_eq!(raw, brute_diversity(&s, &top, 30, 60));
        let (raw5, _) = contextual_diversity_raw(&s, &st, 5, 12).unwrap();
        assert_eq!(raw5, brute_diversity(&s, &top, 5, 60));
    }

    #[test]
    fn diversity_residual_orthogonal_to_log_freq() {
        let mut rng = CounterRng::new(3);
        let seqs: Vec<Vec<u32>> = (0..400)
            .map(|_| (0..64).map(|_| (rng.next_f64().powi(3) * 2000.0) as u32).collect())
            .collect();
        let s = SequenceStore::from_sequences(64, &seqs).unwrap();
        let st = stats_of(&s, 2000);
        let d = contextual_diversity(&s, &st, 30, 200, &GamConfig::default()).unwrap();
        let seen: Vec<usize> = (0..2000).filter(|&t| d.occurs[t]).collect();
        let n = seen.len() as f64;
        let dot: f64 = seen.iter().map(|&t| d.residual[t] * st.token_log_frequency(TokenId(t as u32)).unwrap()).sum();
        let sum: f64 = seen.iter().map(|&t| d.residual[t]).sum();
        assert!(dot.abs() < 1e-8 * n, "{dot}");
        assert!(sum.abs() < 1e-8 * n, "{sum}");
    }

    #[test]
    fn example_features_fixture() {
        let mut rng = CounterRng::new(4);
        let seqs: Vec<Vec<u32>> = (0..300).map(|_| (0..32).map(|_| (rng.next_f64().powi(2) * 500.0) as u32).collect()).collect();
        let s = SequenceStore::from_sequences(32, &seqs).unwrap();
        let st = stats_of(&s, 500);
        let table = build(&s, 500, 5).unwrap();
        let d = contextual_diversity(&s, &st, 30, 100, &GamConfig::default()).unwrap();
        let ids: Vec<ExampleId> = (0..50).map(|i| ExampleId::new(i, 1 + i % 31).unwrap()).collect();
        let f = example_features(&ids, &s, &st, &table, &d).unwrap();
        let e = &f[7];
        let seq = s.get(7).unwrap();
        let pos = 8usize;
        let lf: f64 = seq[..pos].iter().map(|&t| (st.counts[t as usize] as f64 / st.total_tokens as f64).log2()).sum::<f64>() / pos as f64;
        assert!((e.ctx_logprob - lf).abs() < 1e-12);
        assert!((e.ctx_loglen - (pos as f64).ln()).abs() < 1e-15);
        assert_eq!(e.div_resid, d.residual[seq[pos] as usize]);
        let lfs: Vec<f64> = f.iter().map(|e| e.log_freq).collect();
        let dot: f64 = f.iter().zip(&lfs).map(|(e, x)| e.fg_resid * x).sum();
        assert!(dot.abs() < 1e-8 * 50.0);
        let bad = [ExampleId::new(0, 32).unwrap()];
        assert!(example_features(&bad, &s, &st, &table, &d).is_err());
    }

    #[test]
    fn pos_ingest_and_join() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pos.tsv");
        std::fs::write(&p, "sequence_index\ttoken_position\tupos\tword_pos\n0\t1\tNOUN\tB\n0\t2\tVERB\tU\n1\t3\tX\tL\n").unwrap();
        let pos = ingest_pos(&p).unwrap();
        assert_eq!(pos.len(), 3);
        assert_eq!(pos[&ExampleId::new(0, 1).unwrap()], ("NOUN".parse().unwrap(), WordPosition::B));
        let mk = |s, q| ExampleFeatures {
            id: ExampleId::new(s, q).unwrap(),
            log_freq: 0.0, fg_resid: 0.0, ctx_loglen: 0.0, ctx_logprob: 0.0, div_resid: 0.0, pos: None, word_pos: None,
        };
        let mut fs = vec![mk(0, 1), mk(0, 2), mk(1, 3)];
        join_pos(&mut fs, &pos).unwrap();
        assert_eq!(fs.iter().filter(|f| f.pos.is_some()).count(), 3);
        let mut extra = vec![mk(4, 4)];
        let err = join_pos(&mut extra, &pos).unwrap_err().to_string();
        assert!(err.contains("4:4"));
        std::fs::write(&p, "0\t1\tNOUNN\tB\n").unwrap();
        assert!(matches!(ingest_pos(&p), Err(Error::Format(_))));
        std::fs::write(&p, "0\t1\tNOUN\tQ\n").unwrap();
        assert!(matches!(ingest_pos(&p), Err(Error::Format(_))));
    }

    #[test]
    fn clipping_cases() {
        let mut rng = CounterRng::new(5);
        let base: Vec<f64> = (0..200).map(|_| rng.normal()).collect();
        let mut cols = vec![base.clone()];
        assert_eq!(clip_columns(&mut cols, &["a"]).unwrap(), vec![0]);
        assert_eq!(cols[0], base);
        let mut with_outlier = base.clone();
        with_outlier[199] = 1e3;
        let (m, sd) = (mean(&with_outlier), sample_std(&with_outlier));
        let mut cols = vec![with_outlier.clone(), vec![2.0; 200]];
        assert_eq!(clip_columns(&mut cols, &["a", "b"]).unwrap(), vec![1, 0]);
        assert_eq!(cols[0][199], m + 5.0 * sd);
        assert_eq!(&cols[0][..199], &with_outlier[..199]);
        assert_eq!(cols[1], vec![2.0; 200]);
    }

    #[test]
    fn features_tsv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.tsv");
        let f = vec![ExampleFeatures {
            id: ExampleId::new(2, 9).unwrap(),
            log_freq: -7.25,
            fg_resid: 0.1 + 0.2,
            ctx_loglen: 2.0,
            ctx_logprob: -9.5,
            div_resid: 3.0,
            pos: Some("PROPN".parse().unwrap()),
            word_pos: None,
        }];
        write_features(&p, &f).unwrap();
        assert_eq!(read_features(&p).unwrap(), f);
    }

    proptest! {
        #[test]
        fn diversity_monotone_in_corpus_growth(seed in 0u64..500) {
            let mut rng = CounterRng::new(seed);
            let seqs: Vec<Vec<u32>> = (0..30).map(|_| (0..20).map(|_| rng.below(40) as u32).collect()).collect();
            let small = SequenceStore::from_sequences(20, &seqs[..20]).unwrap();
            let big = SequenceStore::from_sequences(20, &seqs).unwrap();
            // a shared frequent-token set isolates the effect of extra sequences
            let st = stats_of(&big, 40);
            let (a, _) = contextual_diversity_raw(&small, &st, 30, 40).unwrap();
            let (b, _) = contextual_diversity_raw(&big, &st, 30, 40).unwrap();
            prop_assert!(a.iter().zip(&b).all(|(x, y)| x <= y));
        }

        #[test]
        fn windowed_equals_full_when_window_covers(seed in 0u64..500, extra in 0usize..100) {
            let mut rng = CounterRng::new(seed);
            let seqs: Vec<Vec<u32>> = (0..10).map(|_| (0..16).map(|_| rng.below(30) as u32).collect()).collect();
            let s = SequenceStore::from_sequences(16, &seqs).unwrap();
            let st = stats_of(&s, 30);
            let ctx = &seqs[3][..1 + seed as usize % 15];
            prop_assert_eq!(context_log_prob_windowed(ctx, &st, ctx.len() + extra).unwrap(), context_log_prob(ctx, &st).unwrap());
        }
    }
}
