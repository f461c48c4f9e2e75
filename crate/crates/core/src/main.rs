use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use curvescope::config::{validate_config, KeyValues};
use curvescope::corpus::{ingest_corpus, scan_corpus_stats, TokenId};
use curvescope::curves::{
    check_aligned, ingest_curves, nearest_neighbor_ranks, write_curves_binary, CheckpointGrid, CurveSet,
    SurprisalMatrix,
};
use curvescope::features::{
    clip_features, contextual_diversity, example_features, ingest_pos, join_pos, read_features, write_features,
};
use curvescope::gamfit::{default_lambdas, read_fitted, write_fitted, FittedRun, GamConfig, GamSmoother};
use curvescope::metrics::{compute_run_metrics, evaluate_fits, read_metrics, write_metrics, Metric};
use curvescope::ngram::{build, read_table, score_batch, write_table};
use curvescope::pipeline::{read_ngram_scores, run_pipeline, write_profiles};
use curvescope::regress::regression_report;
use curvescope::schedule::{generate_schedule, step_of_checkpoint, ScheduleParams};
use curvescope::synth::{generate_cohort, CohortPlan};
use curvescope::table::TableWriter;
use curvescope::{Error, Result};

#[derive(Parser)]
#[command(name = "curvescope", version, about = "Per-example learning-curve analysis for pre-training checkpoints")]
struct Cli {
    /// Worker threads (0 = all cores). Results do not depend on this.
    #[arg(long, global = true, env = "CURVESCOPE_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScheduleArgs {
    #[arg(long, default_value_t = 100.0)]
    s0: f64,
    #[arg(long, default_value_t = 25_000.0)]
    s1: f64,
    #[arg(long, default_value_t = 1_000_000)]
    t1: u64,
}

impl ScheduleArgs {
    fn params(&self) -> Result<ScheduleParams> {
        ScheduleParams::new(self.s0, self.s1, self.t1)
    }
}

#[derive(Args)]
struct CorpusArgs {
    /// Corpus file (CSEQ1 binary or whitespace-separated token ids).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    vocab_size: usize,
    #[arg(long)]
    seq_len: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Print the checkpoint schedule.
    Schedule {
        #[command(flatten)]
        params: ScheduleArgs,
        /// One step per line (the default).
        #[arg(long, conflicts_with_all = ["count", "n"])]
        list: bool,
        /// Print the number of checkpoints, step 0 included.
        #[arg(long, conflicts_with = "n")]
        count: bool,
        /// Print the step of checkpoint N.
        #[arg(long)]
        n: Option<u64>,
        /// Two-column output: index, step.
        #[arg(long)]
        tsv: bool,
    },
    /// Unigram counts as TSV (token_id, count).
    CorpusStats {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Count n-grams up to an order and write an NGT1 table.
    CountNgrams {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, default_value_t = 5)]
        order: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score (context, target) queries; rows gain a surprisal column.
    Score {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        order: usize,
        /// TSV rows: space-separated context ids, target id.
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate synthetic runs from a key-value cohort plan.
    Synth {
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Output path; `{i}` is replaced with the run index.
        #[arg(long, default_value = "run{i}.scrv")]
        out: String,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the planted feature table.
        #[arg(long)]
        features: Option<PathBuf>,
        #[command(flatten)]
        schedule: ScheduleArgs,
    },
    /// Read a curve file (SCRV1 or TSV), validate it and optionally convert it.
    IngestCurves {
        #[arg(long)]
        input: PathBuf,
        /// Only validate; print a summary.
        #[arg(long)]
        validate: bool,
        /// Write SCRV1 here.
        #[arg(long, required_unless_present = "validate")]
        out: Option<PathBuf>,
    },
    /// Fit a smoothed curve to every example of a run.
    FitGams {
        #[arg(long)]
        curves: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 25)]
        n_basis: usize,
        /// Comma-separated smoothing grid.
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
    },
    /// Per-example metrics for one run.
    Metrics {
        #[arg(long)]
        curves: PathBuf,
        #[arg(long)]
        gams: PathBuf,
        #[arg(long)]
        t1: u64,
        #[arg(long)]
        vocab_size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-run similarity and n-gram alignment profiles as CSV.
    Profiles {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        /// TSV of example_id, n1..nK surprisals.
        #[arg(long)]
        ngram_scores: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Peak table; defaults to `<out stem>-peaks.tsv`.
        #[arg(long)]
        peaks: Option<PathBuf>,
    },
    /// Nearest-neighbour rank of each example's curve across two runs.
    NnRank {
        #[arg(long)]
        run_a: PathBuf,
        #[arg(long)]
        run_b: PathBuf,
        /// Compare fitted curves from these GAMF1 files instead of raw surprisals.
        #[arg(long, num_args = 2, value_names = ["GAM_A", "GAM_B"])]
        fitted: Option<Vec<PathBuf>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Example-level predictors.
    Features {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        ngram_table: PathBuf,
        #[arg(long)]
        pos: Option<PathBuf>,
        /// Curve file whose examples get features.
        #[arg(long)]
        curves: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        window: usize,
        #[arg(long, default_value_t = 5000)]
        top_k: usize,
        #[arg(long)]
        no_clip: bool,
    },
    /// Incremental regression of one metric on the predictors (JSON report).
    Regress {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        target: Metric,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every stage from a config file.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
    },
    /// Check a config file without computing anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn out_path(template: &str, i: usize) -> PathBuf {
    PathBuf::from(template.replace("{i}", &i.to_string()))
}

fn load_run(path: &Path) -> Result<SurprisalMatrix> {
    Ok(ingest_curves(path)?.sorted_by_id())
}

fn read_queries(path: &Path) -> Result<Vec<(Vec<u32>, TokenId)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || Error::Format(format!("{}:{}: expected `context<TAB>target`", path.display(), i + 1));
        let (ctx, target) = line.split_once('\t').ok_or_else(bad)?;
        let ctx: Vec<u32> = ctx
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?;
        out.push((ctx, TokenId(target.trim().parse().map_err(|_| bad())?)));
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Schedule {
            params,
            list: _,
            count,
            n,
            tsv,
        } => {
            let p = params.params()?;
            if count {
                println!("{}", generate_schedule(&p)?.len());
            } else if let Some(n) = n {
                println!("{}", step_of_checkpoint(&p, n)?);
            } else {
                for c in generate_schedule(&p)? {
                    if tsv {
                        println!("{}\t{}", c.index, c.step);
                    } else {
                        println!("{}", c.step);
                    }
                }
            }
        }
        Command::CorpusStats { corpus, out } => {
            let stats = scan_corpus_stats(&corpus.input, corpus.vocab_size, corpus.seq_len)?;
            let mut w = TableWriter::create(&out, &["token_id", "count"])?;
            for (t, c) in stats.counts.iter().enumerate() {
                w.row(&[t.to_string(), c.to_string()])?;
            }
            w.finish()?;
        }
        Command::CountNgrams { corpus, order, out } => {
            let (store, _) = ingest_corpus(&corpus.input, corpus.vocab_size, corpus.seq_len)?;
            write_table(&out, &build(&store, corpus.vocab_size, order)?)?;
        }
        Command::Score {
            table,
            order,
            queries,
            out,
        } => {
            let table = read_table(&table)?;
            let qs = read_queries(&queries)?;
            let scores = score_batch(&table, &qs, order)?;
            let mut w = TableWriter::create(&out, &["context", "target", "surprisal"])?;
            for ((ctx, t), s) in qs.iter().zip(scores) {
                let ctx: Vec<String> = ctx.iter().map(u32::to_string).collect();
                w.row(&[ctx.join(" "), t.0.to_string(), s.to_string()])?;
            }
            w.finish()?;
        }
        Command::Synth {
            plan,
            out,
            runs,
            seed,
            features,
            schedule,
        } => {
            let mut p = match plan {
                Some(path) => CohortPlan::from_kv(&KeyValues::load(&path)?)?,
                None => CohortPlan::default(),
            };
            if let Some(r) = runs {
                p.n_runs = r;
            }
            if let Some(s) = seed {
                p.seed = s;
            }
            let steps: Vec<u64> = generate_schedule(&schedule.params()?)?.iter().map(|c| c.step).collect();
            let cohort = generate_cohort(&p, &CheckpointGrid::new(steps)?)?;
            for (i, run) in cohort.runs.iter().enumerate() {
                write_curves_binary(&out_path(&out, i), run)?;
            }
            if let Some(f) = features {
                write_features(&f, &cohort.features)?;
            }
        }
        Command::IngestCurves { input, validate, out } => {
            let m = ingest_curves(&input)?;
            eprintln!(
                "{}: run `{}`, {} examples x {} checkpoints (max step {})",
                input.display(),
                m.run_id(),
                m.n_examples(),
                m.n_checkpoints(),
                m.grid().max_step()
            );
            if !validate {
                if let Some(o) = out {
                    write_curves_binary(&o, &m)?;
                }
            }
        }
        Command::FitGams {
            curves,
            out,
            n_basis,
            lambdas,
        } => {
            let m = load_run(&curves)?;
            let cfg = GamConfig {
                n_basis,
                lambdas: lambdas.unwrap_or_else(default_lambdas),
            };
            let grid = m.grid();
            let skip = grid.first_nonzero();
            let smoother = GamSmoother::new(&grid.log10_steps(), &cfg)?;
            let ys: Vec<Vec<f64>> = (0..m.n_examples()).map(|i| m.row_f64(i)[skip..].to_vec()).collect();
            let fitted = FittedRun {
                run_id: m.run_id().to_string(),
                ids: m.example_ids().to_vec(),
                curves: smoother.fit_batch(&ys)?,
            };
            write_fitted(&out, &fitted)?;
        }
        Command::Metrics {
            curves,
            gams,
            t1,
            vocab_size,
            out,
        } => {
            let m = load_run(&curves)?;
            let fitted = read_fitted(&gams)?;
            if fitted.ids != m.example_ids() {
                return Err(Error::Data(format!(
                    "{} and {} cover different examples",
                    curves.display(),
                    gams.display()
                )));
            }
            let evals = evaluate_fits(&fitted.curves, m.grid());
            write_metrics(&out, &compute_run_metrics(&m, &evals, t1, vocab_size)?)?;
        }
        Command::Profiles {
            runs,
            ngram_scores,
            out,
            peaks,
        } => {
            let ms: Vec<SurprisalMatrix> = runs.iter().map(|p| load_run(p)).collect::<Result<_>>()?;
            let refs: Vec<&SurprisalMatrix> = ms.iter().collect();
            check_aligned(&refs)?;
            let scores = match ngram_scores {
                Some(p) => Some(read_ngram_scores(&p, ms[0].example_ids())?),
                None => None,
            };
            let peaks = peaks.unwrap_or_else(|| {
                let stem = out.file_stem().map_or("profile".into(), |s| s.to_string_lossy().into_owned());
                out.with_file_name(format!("{stem}-peaks.tsv"))
            });
            write_profiles(&out, &peaks, &refs, scores.as_deref())?;
        }
        Command::NnRank {
            run_a,
            run_b,
            fitted,
            out,
        } => {
            let a = load_run(&run_a)?;
            let b = load_run(&run_b)?;
            check_aligned(&[&a, &b])?;
            let (sa, sb) = match fitted {
                Some(g) => {
                    let xs = a.grid().log10_steps();
                    let set = |path: &Path| -> Result<CurveSet> {
                        let f = read_fitted(path)?;
                        if f.ids != a.example_ids() {
                            return Err(Error::Data(format!("{} covers different examples", path.display())));
                        }
                        Ok(CurveSet {
                            ids: f.ids,
                            points: xs.len(),
                            values: f.curves.iter().flat_map(|c| c.evaluate_grid(&xs)).collect(),
                        })
                    };
                    (set(&g[0])?, set(&g[1])?)
                }
                None => (CurveSet::from_matrix_nonzero(&a), CurveSet::from_matrix_nonzero(&b)),
            };
            let ranks = nearest_neighbor_ranks(&sa, &sb)?;
            let mut w = TableWriter::create(&out, &["example_id", "rank"])?;
            for (id, r) in sa.ids.iter().zip(ranks) {
                w.row(&[id.to_string(), r.to_string()])?;
            }
            w.finish()?;
        }
        Command::Features {
            corpus,
            ngram_table,
            pos,
            curves,
            out,
            window,
            top_k,
            no_clip,
        } => {
            let m = load_run(&curves)?;
            let (store, stats) = ingest_corpus(&corpus.input, corpus.vocab_size, corpus.seq_len)?;
            let table = read_table(&ngram_table)?;
            let div = contextual_diversity(&store, &stats, window, top_k, &GamConfig::default())?;
            let mut f = example_features(m.example_ids(), &store, &stats, &table, &div)?;
            if let Some(p) = pos {
                join_pos(&mut f, &ingest_pos(&p)?)?;
            }
            if !no_clip {
                clip_features(&mut f)?;
            }
            write_features(&out, &f)?;
        }
        Command::Regress {
            features,
            metrics,
            target,
            out,
        } => {
            let mut f = read_features(&features)?;
            f.sort_by_key(|e| e.id);
            let t = read_metrics(&metrics)?;
            let ids: Vec<_> = f.iter().map(|e| e.id).collect();
            if ids != t.ids {
                return Err(Error::Data(format!(
                    "{} and {} cover different examples",
                    features.display(),
                    metrics.display()
                )));
            }
            let y = t
                .column(target)
                .ok_or_else(|| Error::Data(format!("{} has no `{target}` column", metrics.display())))?;
            let report = regression_report(target.name(), &f, &y)?;
            let mut text = serde_json::to_string_pretty(&report).map_err(|e| Error::Data(e.to_string()))?;
            text.push('\n');
            std::fs::write(&out, text).map_err(|e| Error::io(&out, e))?;
        }
        Command::Pipeline { config } => {
            let cfg = validate_config(&config)?;
            for p in run_pipeline(&cfg)?.outputs {
                println!("{}", p.display());
            }
        }
        Command::Validate { config } => {
            validate_config(&config)?;
            println!("ok");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
