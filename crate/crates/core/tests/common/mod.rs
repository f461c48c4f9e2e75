#![allow(dead_code)]

use std::path::Path;

use curvescope::corpus::{write_corpus_text, SequenceStore};
use curvescope::curves::{write_curves_binary, CheckpointGrid};
use curvescope::rng::CounterRng;
use curvescope::schedule::{schedule_steps, ScheduleParams};
use curvescope::synth::{generate_cohort, CohortPlan};

/// Token stream with enough repetition that 5-grams recur: each token
/// follows a fixed successor of its predecessor most of the time, otherwise
/// a draw skewed toward small ids.
pub fn markov_corpus(n_seq: usize, seq_len: usize, vocab: usize, seed: u64) -> SequenceStore {
    let mut rng = CounterRng::new(seed);
    let seqs: Vec<Vec<u32>> = (0..n_seq)
        .map(|_| {
            let mut s = Vec::with_capacity(seq_len);
            let mut prev = rng.below(vocab as u64) as u32;
            for _ in 0..seq_len {
                let t = if rng.next_f64() < 0.6 {
                    ((prev as u64 * 7 + 3) % vocab as u64) as u32
                } else {
                    let u = rng.next_f64();
                    ((u * u * u) * vocab as f64) as u32 % vocab as u32
                };
                s.push(t);
                prev = t;
            }
            s
        })
        .collect();
    SequenceStore::from_sequences(seq_len, &seqs).unwrap()
}

pub fn write_text(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

/// Every regular file under `dir`, sorted, with its bytes.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

/// Short schedule for the CLI fixtures.
pub fn small_grid() -> CheckpointGrid {
    CheckpointGrid::new(schedule_steps(&ScheduleParams::new(10.0, 2000.0, 20_000).unwrap()).unwrap()).unwrap()
}

/// Corpus, four synthetic runs on the short grid, POS annotations, score
/// queries, a synth plan and three pipeline configs (a, b, c) differing only
/// in their output directory.
pub fn cli_fixture(dir: &Path) {
    let seq_len = 32;
    let n = 300;
    let vocab = 400;
    let store = markov_corpus(n, seq_len, vocab, 21);
    write_corpus_text(&dir.join("corpus.txt"), &store).unwrap();
    let plan = CohortPlan {
        n_examples: n,
        n_runs: 4,
        vocab_size: vocab,
        seed: 3,
        ..CohortPlan::default()
    };
    let grid = small_grid();
    let cohort = generate_cohort(&plan, &grid).unwrap();
    let mut runs = Vec::new();
    for (k, run) in cohort.runs.iter().enumerate() {
        let name = format!("run{k}.scrv");
        write_curves_binary(&dir.join(&name), run).unwrap();
        runs.push(name);
    }
    let pos: String = cohort
        .features
        .iter()
        .map(|f| {
            format!(
                "{}\t{}\t{}\t{}\n",
                f.id.sequence_index,
                f.id.token_position,
                f.pos.unwrap().name(),
                f.word_pos.unwrap().name()
            )
        })
        .collect();
    write_text(&dir.join("pos.tsv"), &pos);
    let t1 = grid.max_step();
    let queries: String = (0..50)
        .map(|i| {
            let s = store.get(i).unwrap();
            format!("{} {} {}\t{}\n", s[1], s[2], s[3], s[4])
        })
        .collect();
    write_text(&dir.join("queries.tsv"), &queries);
    write_text(&dir.join("plan.kv"), "n_examples = 200\nvocab_size = 400\n");
    for out in ["a", "b", "c"] {
        write_text(
            &dir.join(format!("{out}.conf")),
            &format!(
                "seed = 1\nout_dir = {out}\nschedule.s0 = 10\nschedule.s1 = 2000\nschedule.t1 = {t1}\nvocab_size = {vocab}\n\
                 curves.runs = {}\ncorpus.path = corpus.txt\ncorpus.sequence_length = {seq_len}\n\
                 pos.path = pos.tsv\nregress.pos = true\ndiversity.window = 5\ndiversity.top_k = 100\n",
                runs.join(", ")
            ),
        );
    }
}

