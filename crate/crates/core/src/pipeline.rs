//! End-to-end run: curves and corpus in, metric tables, correlations,
//! regression reports and profiles out.
//!
//! Stages run in order: count-ngrams, fit-gams, metrics, profiles,
//! features, regress, cohort. Each output is a pure function of the
//! configuration and input files.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use crate::config::PipelineConfig;
use crate::corpus::{ingest_corpus, CorpusStats, SequenceStore, TokenId};
use crate::curves::{check_aligned, ingest_curves, ExampleId, SurprisalMatrix};
use crate::error::{Error, Result};
use crate::features::{
    clip_features, contextual_diversity, example_features, ingest_pos, join_pos, read_features,
    write_features, ExampleFeatures, Upos,
};
use crate::gamfit::{write_fitted, FittedRun, GamSmoother};
use crate::metrics::{
    aggregate_over_runs, checkpoint_similarity_profile, cohort_query, compute_run_metrics, correlation_table,
    evaluate_fits, ngram_alignment_profile, rises, run_variability_table, write_metrics, CohortQuery,
    CorrelationMatrix, CurvePredicate, Metric, MetricsTable,
};
use crate::ngram::{build, surprisal, write_table, NgramTable};
use crate::regress::{pos_coefficients, regression_report, Column};
use crate::table::{read_table, TableWriter};

fn stage<T>(name: &str, artifact: &Path, f: impl FnOnce() -> Result<T>) -> Result<T> {
    log::info!("stage {name}: {}", artifact.display());
    f().map_err(|e| Error::Stage {
        stage: name.to_string(),
        artifact: artifact.display().to_string(),
        source: Box::new(e),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub outputs: Vec<PathBuf>,
}

/// Surprisal of each example's target at orders 1..=table order, indexed
/// [order - 1][example].
pub fn example_ngram_surprisals(
    ids: &[ExampleId],
    store: &SequenceStore,
    table: &NgramTable,
) -> Result<Vec<Vec<f64>>> {
    use rayon::prelude::*;
    let per_example: Vec<Vec<f64>> = ids
        .par_iter()
        .map(|&id| {
            let seq = store
                .get(id.sequence_index as usize)
                .ok_or_else(|| Error::Data(format!("example {id}: sequence not in corpus")))?;
            let pos = id.token_position as usize;
            if pos >= seq.len() {
                return Err(Error::Data(format!("example {id}: position past sequence end")));
            }
            (1..=table.max_order())
                .map(|n| surprisal(table, &seq[..pos], TokenId(seq[pos]), n))
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok((0..table.max_order())
        .map(|k| per_example.iter().map(|v| v[k]).collect())
        .collect())
}

/// One row per example: id, then surprisal under each order.
pub fn write_ngram_scores(path: &Path, ids: &[ExampleId], scores: &[Vec<f64>]) -> Result<()> {
    let names: Vec<String> = (1..=scores.len()).map(|n| format!("n{n}")).collect();
    let mut cols = vec!["example_id"];
    cols.extend(names.iter().map(String::as_str));
    let mut w = TableWriter::create(path, &cols)?;
    for (i, id) in ids.iter().enumerate() {
        let mut row = vec![id.to_string()];
        row.extend(scores.iter().map(|s| s[i].to_string()));
        w.row(&row)?;
    }
    w.finish()
}

/// Inverse of [`write_ngram_scores`], reordered to match `ids`.
pub fn read_ngram_scores(path: &Path, ids: &[ExampleId]) -> Result<Vec<Vec<f64>>> {
    let t = read_table(path, '\t')?;
    let id_col = t.column_index("example_id")?;
    let orders: Vec<usize> = (1..t.columns.len()).take_while(|n| t.columns.contains(&format!("n{n}"))).collect();
    if orders.is_empty() {
        return Err(Error::Format(format!("{}: no n-gram score columns", path.display())));
    }
    let cols: Vec<Vec<f64>> = orders.iter().map(|n| t.f64_column(&format!("n{n}"))).collect::<Result<_>>()?;
    let mut at: HashMap<ExampleId, usize> = HashMap::with_capacity(t.rows.len());
    for (r, row) in t.rows.iter().enumerate() {
        at.insert(row[id_col].parse()?, r);
    }
    let rows: Vec<usize> = ids
        .iter()
        .map(|id| at.get(id).copied().ok_or_else(|| Error::Data(format!("no n-gram scores for example {id}"))))
        .collect::<Result<_>>()?;
    Ok(cols.iter().map(|c| rows.iter().map(|&r| c[r]).collect()).collect())
}

/// Cross-run similarity (series `runs`) and, given n-gram scores, each
/// run's alignment with every order (series `run{k}/n{n}`), plus a peak table.
pub fn write_profiles(csv: &Path, peaks: &Path, runs: &[&SurprisalMatrix], scores: Option<&[Vec<f64>]>) -> Result<()> {
    let mut w = TableWriter::with_separator(csv, &["step", "series", "r", "std"], ',')?;
    if runs.len() >= 2 {
        for pt in checkpoint_similarity_profile(runs)? {
            w.row(&[pt.step.to_string(), "runs".into(), pt.mean.to_string(), pt.std.to_string()])?;
        }
    }
    let mut pw = TableWriter::create(peaks, &["run", "order", "argmax_step", "max_r"])?;
    if let Some(scores) = scores {
        for (k, run) in runs.iter().enumerate() {
            let prof = ngram_alignment_profile(run, scores)?;
            for (n, row) in prof.r.iter().enumerate() {
                for (step, r) in prof.steps.iter().zip(row) {
                    w.row(&[step.to_string(), format!("run{k}/n{}", n + 1), r.to_string(), String::new()])?;
                }
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                pw.row(&[k.to_string(), (n + 1).to_string(), prof.argmax_step[n].to_string(), max.to_string()])?;
            }
        }
    }
    pw.finish()?;
    w.finish()
}

pub fn write_correlations(path: &Path, m: &CorrelationMatrix) -> Result<()> {
    let mut cols = vec!["metric"];
    cols.extend(m.names.iter().map(String::as_str));
    let mut w = TableWriter::create(path, &cols)?;
    for (name, row) in m.names.iter().zip(&m.values) {
        let mut fields = vec![name.clone()];
        fields.extend(row.iter().map(f64::to_string));
        w.row(&fields)?;
    }
    w.finish()
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Data(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Features for exactly the given examples, in the given order.
fn align_features(ids: &[ExampleId], features: Vec<ExampleFeatures>) -> Result<Vec<ExampleFeatures>> {
    let mut by_id: HashMap<ExampleId, ExampleFeatures> = features.into_iter().map(|f| (f.id, f)).collect();
    let mut missing = Vec::new();
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        match by_id.remove(id) {
            Some(f) => out.push(f),
            None => missing.push(id.to_string()),
        }
    }
    if !missing.is_empty() {
        let shown: Vec<&str> = missing.iter().take(20).map(String::as_str).collect();
        return Err(Error::Data(format!(
            "{} examples have no features: {}",
            missing.len(),
            shown.join(", ")
        )));
    }
    Ok(out)
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineReport> {
    let out = &cfg.out_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut outputs = Vec::new();
    let path = |name: &str| out.join(name);

    let runs: Vec<SurprisalMatrix> = cfg
        .runs
        .iter()
        .map(|p| stage("ingest-curves", p, || Ok(ingest_curves(p)?.sorted_by_id())))
        .collect::<Result<_>>()?;
    let refs: Vec<&SurprisalMatrix> = runs.iter().collect();
    stage("ingest-curves", &cfg.runs[0], || check_aligned(&refs))?;
    let grid = runs[0].grid().clone();
    let ids = runs[0].example_ids().to_vec();

    // count-ngrams
    let corpus: Option<(SequenceStore, CorpusStats, NgramTable)> = match &cfg.corpus {
        Some(cp) => {
            let p = path("ngram.ngt");
            let c = stage("count-ngrams", &p, || {
                let (store, stats) = ingest_corpus(cp, cfg.vocab_size, cfg.sequence_length)?;
                let table = build(&store, cfg.vocab_size, cfg.ngram_order)?;
                write_table(&p, &table)?;
                Ok((store, stats, table))
            })?;
            outputs.push(p);
            Some(c)
        }
        None => None,
    };

    // fit-gams
    let xs = grid.log10_steps();
    let skip = grid.first_nonzero();
    let smoother = stage("fit-gams", out, || GamSmoother::new(&xs, &cfg.gam))?;
    let mut fits_per_run: Vec<Vec<Vec<f64>>> = Vec::with_capacity(runs.len());
    for (k, run) in runs.iter().enumerate() {
        let p = path(&format!("run{k}.gam"));
        let evals = stage("fit-gams", &p, || {
            let ys: Vec<Vec<f64>> = (0..run.n_examples()).map(|i| run.row_f64(i)[skip..].to_vec()).collect();
            let curves = smoother.fit_batch(&ys)?;
            write_fitted(
                &p,
                &FittedRun {
                    run_id: run.run_id().to_string(),
                    ids: ids.clone(),
                    curves: curves.clone(),
                },
            )?;
            Ok(evaluate_fits(&curves, &grid))
        })?;
        outputs.push(p);
        fits_per_run.push(evals);
    }

    // metrics
    let mut per_run: Vec<MetricsTable> = Vec::with_capacity(runs.len());
    for (k, run) in runs.iter().enumerate() {
        let p = path(&format!("metrics-run{k}.tsv"));
        let t = stage("metrics", &p, || {
            let t = compute_run_metrics(run, &fits_per_run[k], cfg.schedule.t1, cfg.vocab_size)?;
            write_metrics(&p, &t)?;
            Ok(t)
        })?;
        outputs.push(p);
        per_run.push(t);
    }
    let p = path("metrics.tsv");
    let mean_table = stage("metrics", &p, || {
        let mut t = aggregate_over_runs(&per_run)?;
        t.var_runs = Some(run_variability_table(&fits_per_run)?);
        write_metrics(&p, &t)?;
        Ok(t)
    })?;
    outputs.push(p);
    let p = path("correlations.tsv");
    stage("metrics", &p, || write_correlations(&p, &correlation_table(&per_run, &fits_per_run)?))?;
    outputs.push(p);

    // profiles
    let p = path("profile.csv");
    let peaks = path("profile-peaks.tsv");
    stage("profiles", &p, || {
        let scores = match &corpus {
            Some((store, _, table)) => {
                let scores = example_ngram_surprisals(&ids, store, table)?;
                write_ngram_scores(&out.join("ngram-scores.tsv"), &ids, &scores)?;
                Some(scores)
            }
            None => None,
        };
        write_profiles(&p, &peaks, &refs, scores.as_deref())
    })?;
    outputs.push(p);
    outputs.push(peaks);
    if corpus.is_some() {
        outputs.push(path("ngram-scores.tsv"));
    }

    // features
    let p = path("features.tsv");
    let features = stage("features", &p, || {
        let raw = match (&cfg.features, &corpus) {
            (Some(fp), _) => read_features(fp)?,
            (None, Some((store, stats, table))) => {
                let div = contextual_diversity(store, stats, cfg.diversity_window, cfg.diversity_top_k, &cfg.gam)?;
                example_features(&ids, store, stats, table, &div)?
            }
            (None, None) => return Err(Error::Config(vec!["no feature source configured".into()])),
        };
        let mut f = align_features(&ids, raw)?;
        if let Some(pp) = &cfg.pos {
            join_pos(&mut f, &ingest_pos(pp)?)?;
        }
        if cfg.regress_pos && f.iter().any(|e| e.pos.is_none()) {
            return Err(Error::Data("POS regression requested but annotations are missing".into()));
        }
        if cfg.clip {
            let counts = clip_features(&mut f)?;
            log::info!("clipped values per predictor: {counts:?}");
        }
        write_features(&p, &f)?;
        Ok(f)
    })?;
    outputs.push(p);

    // regress
    let has_pos = features.iter().all(|f| f.pos.is_some() && f.word_pos.is_some());
    let mut pos_tables: Vec<(Metric, crate::regress::PosCoefficients)> = Vec::new();
    for &target in &cfg.targets {
        let p = path(&format!("regress-{target}.json"));
        stage("regress", &p, || {
            let y = mean_table
                .column(target)
                .ok_or_else(|| Error::Data(format!("metric `{target}` not available")))?;
            let report = regression_report(target.name(), &features, &y)?;
            write_json(&p, &report)?;
            if has_pos {
                let cont: Vec<Column> = crate::features::CONTINUOUS
                    .iter()
                    .enumerate()
                    .map(|(j, n)| (n.to_string(), features.iter().map(|f| f.continuous()[j]).collect()))
                    .collect();
                let tags: Vec<Upos> = features.iter().map(|f| f.pos.unwrap()).collect();
                let wps: Vec<_> = features.iter().map(|f| f.word_pos.unwrap()).collect();
                pos_tables.push((target, pos_coefficients(&y, &cont, &tags, &wps)?));
            }
            Ok(())
        })?;
        outputs.push(p);
    }
    if has_pos && !pos_tables.is_empty() {
        let p = path("pos-coefs.tsv");
        stage("regress", &p, || {
            let mut cols = vec!["kind", "tag"];
            cols.extend(pos_tables.iter().map(|(m, _)| m.name()));
            let mut w = TableWriter::create(&p, &cols)?;
            let first = &pos_tables[0].1;
            for (kind, names) in [
                ("pos", first.pos.iter().map(|x| x.0.clone()).collect::<Vec<_>>()),
                ("word_pos", first.word_pos.iter().map(|x| x.0.clone()).collect()),
            ] {
                for name in names {
                    let mut row = vec![kind.to_string(), name.clone()];
                    for (_, t) in &pos_tables {
                        let list = if kind == "pos" { &t.pos } else { &t.word_pos };
                        row.push(list.iter().find(|x| x.0 == name).map_or(String::new(), |x| x.1.to_string()));
                    }
                    w.row(&row)?;
                }
            }
            w.finish()
        })?;
        outputs.push(p);
    }

    // cohort: rises on the run-mean fitted curve
    let p = path("cohort.tsv");
    stage("cohort", &p, || {
        let r = runs.len() as f64;
        let mean_fits: Vec<Vec<f64>> = (0..ids.len())
            .map(|i| (0..xs.len()).map(|j| fits_per_run.iter().map(|f| f[i][j]).sum::<f64>() / r).collect())
            .collect();
        let chance = crate::curves::chance_surprisal(cfg.vocab_size)?;
        let theta = cfg.rise_threshold;
        let q = CohortQuery {
            bands: vec![],
            require: vec![CurvePredicate::HasRise(theta)],
            report: vec![CurvePredicate::Recovered(theta)],
        };
        let res = cohort_query(&mean_table, &mean_fits, &xs, chance, &q)?;
        log::info!("cohort: {} examples with a rise above {theta} bits", res.selected.len());
        let mut w = TableWriter::create(&p, &["example_id", "max_rise", "has_rise", "recovered"])?;
        let mut sel = res.selected.iter().peekable();
        for (i, id) in ids.iter().enumerate() {
            let hit = sel.peek() == Some(&&i);
            if hit {
                sel.next();
            }
            let max_rise = rises(&mean_fits[i]).iter().map(|x| x.2).fold(0.0, f64::max);
            let recovered = hit && CurvePredicate::Recovered(theta).eval(&mean_fits[i], &xs, chance);
            w.row(&[id.to_string(), max_rise.to_string(), u8::from(hit).to_string(), u8::from(recovered).to_string()])?;
        }
        w.finish()
    })?;
    outputs.push(p);

    Ok(PipelineReport { outputs })
}
