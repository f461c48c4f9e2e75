//! Learning-curve metrics, cross-run agreement and cohort queries.
//!
//! Within-run metrics come in two kinds. Final surprisal and step
//! variability read the raw curve over the late window (step >= 0.75 t1).
//! Age of acquisition and forgettability read the fitted curve evaluated on
//! the log10 steps of the non-zero checkpoints.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::curves::{chance_surprisal, check_aligned, squared_distance, CheckpointGrid, ExampleId, SurprisalMatrix};
use crate::error::{Error, Result};
use crate::gamfit::{extrema, ExtremumKind, FittedCurve};
use crate::table::{read_table, TableWriter};
use crate::stats::{mean, pairwise_sum, pearson_named, population_std, quantile, sample_std};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Metric {
    Surprisal,
    VarSteps,
    Aoa,
    Forgettability,
    VarRuns,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Surprisal,
        Metric::VarSteps,
        Metric::Aoa,
        Metric::Forgettability,
        Metric::VarRuns,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Surprisal => "surprisal",
            Metric::VarSteps => "var_steps",
            Metric::Aoa => "aoa",
            Metric::Forgettability => "forgettability",
            Metric::VarRuns => "var_runs",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Param(format!("unknown metric `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurveMetrics {
    pub final_surprisal: f64,
    pub step_variability: f64,
    pub aoa: f64,
    pub forgettability: f64,
    pub never_acquired: bool,
}

/// Indices of checkpoints with step >= 0.75 t1.
pub fn late_window(grid: &CheckpointGrid, t1: u64) -> Vec<usize> {
    let threshold = 0.75 * t1 as f64;
    grid.steps()
        .iter()
        .enumerate()
        .filter(|(_, &s)| s as f64 >= threshold)
        .map(|(i, _)| i)
        .collect()
}

fn window_values(curve: &[f64], grid: &CheckpointGrid, t1: u64, min_len: usize) -> Result<Vec<f64>> {
    if curve.len() != grid.len() {
        return Err(Error::Param(format!(
            "curve has {} values for a {}-checkpoint grid",
            curve.len(),
            grid.len()
        )));
    }
    let vals: Vec<f64> = late_window(grid, t1).into_iter().map(|i| curve[i]).collect();
    if vals.len() < min_len {
        return Err(Error::Data(format!(
            "late window (step >= 0.75*{t1}) holds {} checkpoints; need {min_len}",
            vals.len()
        )));
    }
    Ok(vals)
}

/// Mean raw surprisal over the late window.
pub fn final_surprisal(curve: &[f64], grid: &CheckpointGrid, t1: u64) -> Result<f64> {
    Ok(mean(&window_values(curve, grid, t1, 1)?))
}

/// Sample standard deviation of raw surprisal over the late window.
pub fn step_variability(curve: &[f64], grid: &CheckpointGrid, t1: u64) -> Result<f64> {
    Ok(sample_std(&window_values(curve, grid, t1, 2)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aoa {
    pub x: f64,
    pub never_acquired: bool,
}

/// Age of acquisition from fitted values on `grid`: the first crossing of
/// the halfway point between `chance` and the curve minimum, linearly
/// interpolated between grid points.
pub fn aoa_from_values(values: &[f64], grid: &[f64], chance: f64) -> Result<Aoa> {
    if values.len() != grid.len() || grid.is_empty() {
        return Err(Error::Param("aoa: values and grid must be non-empty and aligned".into()));
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if min >= chance {
        return Ok(Aoa {
            x: *grid.last().unwrap(),
            never_acquired: true,
        });
    }
    let tau = chance - 0.5 * (chance - min);
    let i = values.iter().position(|&v| v <= tau).expect("minimum lies below the threshold");
    let x = if i == 0 {
        grid[0]
    } else {
        let (v0, v1) = (values[i - 1], values[i]);
        grid[i - 1] + (v0 - tau) / (v0 - v1) * (grid[i] - grid[i - 1])
    };
    Ok(Aoa {
        x,
        never_acquired: false,
    })
}

pub fn aoa(fitted: &FittedCurve, grid: &[f64], vocab_size: usize) -> Result<Aoa> {
    aoa_from_values(&fitted.evaluate_grid(grid), grid, chance_surprisal(vocab_size)?)
}

/// Sum of positive increments along the sequence.
pub fn forgettability_from_values(values: &[f64]) -> f64 {
    values.windows(2).map(|w| (w[1] - w[0]).max(0.0)).sum()
}

pub fn forgettability(fitted: &FittedCurve, grid: &[f64]) -> Result<f64> {
    if grid.len() < 2 {
        return Err(Error::Param("forgettability needs a grid of at least two points".into()));
    }
    Ok(forgettability_from_values(&fitted.evaluate_grid(grid)))
}

/// Each relative maximum paired with its preceding relative minimum,
/// as (min index, max index, rise).
pub fn rises(values: &[f64]) -> Vec<(usize, usize, f64)> {
    let ex = extrema(values);
    ex.windows(2)
        .filter(|w| w[0].kind == ExtremumKind::Min && w[1].kind == ExtremumKind::Max)
        .map(|w| (w[0].index, w[1].index, w[1].value - w[0].value))
        .collect()
}

/// Mean over unordered run pairs of the squared distance between evaluated curves.
pub fn run_variability_from_values(curves: &[&[f64]]) -> Result<f64> {
    if curves.len() < 2 {
        return Err(Error::Param("run variability needs at least two runs".into()));
    }
    let len = curves[0].len();
    if curves.iter().any(|c| c.len() != len) {
        return Err(Error::Data("run curves are on different grids".into()));
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for a in 0..curves.len() {
        for b in a + 1..curves.len() {
            total += squared_distance(curves[a], curves[b]);
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

pub fn run_variability(fitted: &[&FittedCurve], grid: &[f64]) -> Result<f64> {
    let evals: Vec<Vec<f64>> = fitted.iter().map(|c| c.evaluate_grid(grid)).collect();
    let refs: Vec<&[f64]> = evals.iter().map(Vec::as_slice).collect();
    run_variability_from_values(&refs)
}

/// All within-run metrics for one example. `raw` spans the whole grid
/// (including step 0); `fitted` is evaluated on the non-zero log10 steps.
pub fn compute_metrics(
    raw: &[f64],
    fitted_values: &[f64],
    grid: &CheckpointGrid,
    t1: u64,
    chance: f64,
) -> Result<CurveMetrics> {
    let xs = grid.log10_steps();
    let a = aoa_from_values(fitted_values, &xs, chance)?;
    Ok(CurveMetrics {
        final_surprisal: final_surprisal(raw, grid, t1)?,
        step_variability: step_variability(raw, grid, t1)?,
        aoa: a.x,
        forgettability: forgettability_from_values(fitted_values),
        never_acquired: a.never_acquired,
    })
}

/// Per-example metrics, optionally with cross-run variability attached.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    pub ids: Vec<ExampleId>,
    pub rows: Vec<CurveMetrics>,
    pub var_runs: Option<Vec<f64>>,
}

impl MetricsTable {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn column(&self, metric: Metric) -> Option<Vec<f64>> {
        let pick = |f: fn(&CurveMetrics) -> f64| Some(self.rows.iter().map(f).collect());
        match metric {
            Metric::Surprisal => pick(|m| m.final_surprisal),
            Metric::VarSteps => pick(|m| m.step_variability),
            Metric::Aoa => pick(|m| m.aoa),
            Metric::Forgettability => pick(|m| m.forgettability),
            Metric::VarRuns => self.var_runs.clone(),
        }
    }
}

/// Fitted values on the metric grid for every example of a run.
pub fn evaluate_fits(fitted: &[FittedCurve], grid: &CheckpointGrid) -> Vec<Vec<f64>> {
    let xs = grid.log10_steps();
    fitted.par_iter().map(|c| c.evaluate_grid(&xs)).collect()
}

pub fn compute_run_metrics(
    matrix: &SurprisalMatrix,
    fitted_values: &[Vec<f64>],
    t1: u64,
    vocab_size: usize,
) -> Result<MetricsTable> {
    if fitted_values.len() != matrix.n_examples() {
        return Err(Error::Data(format!(
            "{} fitted curves for {} examples",
            fitted_values.len(),
            matrix.n_examples()
        )));
    }
    let chance = chance_surprisal(vocab_size)?;
    let grid = matrix.grid();
    let rows = (0..matrix.n_examples())
        .into_par_iter()
        .map(|i| compute_metrics(&matrix.row_f64(i), &fitted_values[i], grid, t1, chance))
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsTable {
        ids: matrix.example_ids().to_vec(),
        rows,
        var_runs: None,
    })
}

/// Per-example cross-run variability from each run's evaluated fits.
pub fn run_variability_table(runs: &[Vec<Vec<f64>>]) -> Result<Vec<f64>> {
    if runs.len() < 2 {
        return Err(Error::Param("run variability needs at least two runs".into()));
    }
    let n = runs[0].len();
    if runs.iter().any(|r| r.len() != n) {
        return Err(Error::Data("runs have different example counts".into()));
    }
    (0..n)
        .into_par_iter()
        .map(|i| {
            let curves: Vec<&[f64]> = runs.iter().map(|r| r[i].as_slice()).collect();
            run_variability_from_values(&curves)
        })
        .collect()
}

/// Arithmetic mean of each metric across runs. Every run must cover the
/// same examples in the same order.
pub fn aggregate_over_runs(tables: &[MetricsTable]) -> Result<MetricsTable> {
    let first = tables
        .first()
        .ok_or_else(|| Error::Param("no metric tables to aggregate".into()))?;
    for (r, t) in tables.iter().enumerate().skip(1) {
        if t.ids != first.ids {
            let missing: Vec<String> = first
                .ids
                .iter()
                .filter(|id| !t.ids.contains(id))
                .chain(t.ids.iter().filter(|id| !first.ids.contains(id)))
                .take(20)
                .map(ToString::to_string)
                .collect();
            return Err(Error::Data(if missing.is_empty() {
                format!("run {r} lists the examples in a different order")
            } else {
                format!("run {r} example set differs; mismatched: {}", missing.join(", "))
            }));
        }
    }
    let k = tables.len() as f64;
    let avg = |f: fn(&CurveMetrics) -> f64, i: usize| {
        let v: Vec<f64> = tables.iter().map(|t| f(&t.rows[i])).collect();
        pairwise_sum(&v) / k
    };
    let rows = (0..first.len())
        .map(|i| CurveMetrics {
            final_surprisal: avg(|m| m.final_surprisal, i),
            step_variability: avg(|m| m.step_variability, i),
            aoa: avg(|m| m.aoa, i),
            forgettability: avg(|m| m.forgettability, i),
            never_acquired: tables.iter().any(|t| t.rows[i].never_acquired),
        })
        .collect();
    Ok(MetricsTable {
        ids: first.ids.clone(),
        rows,
        var_runs: first.var_runs.clone(),
    })
}

/// Mean Pearson r between every unordered pair of per-run vectors.
pub fn mean_pairwise_correlation(per_run: &[Vec<f64>], name: &str) -> Result<f64> {
    if per_run.len() < 2 {
        return Err(Error::Param("cross-run correlation needs at least two runs".into()));
    }
    let mut rs = Vec::new();
    for a in 0..per_run.len() {
        for b in a + 1..per_run.len() {
            rs.push(pearson_named(&per_run[a], &per_run[b], name, name)?);
        }
    }
    Ok(mean(&rs))
}

/// Pairs of three-run subsets sharing as few runs as possible.
pub fn disjointish_subset_pairs(runs: usize) -> Result<Vec<([usize; 3], [usize; 3])>> {
    if runs < 4 {
        return Err(Error::Param(format!(
            "var_runs self-correlation needs at least 4 runs to form two distinct three-run subsets, got {runs}"
        )));
    }
    let mut subsets = Vec::new();
    for a in 0..runs {
        for b in a + 1..runs {
            for c in b + 1..runs {
                subsets.push([a, b, c]);
            }
        }
    }
    let min_overlap = 6usize.saturating_sub(runs);
    let mut pairs = Vec::new();
    for i in 0..subsets.len() {
        for j in i + 1..subsets.len() {
            let overlap = subsets[i].iter().filter(|r| subsets[j].contains(r)).count();
            if overlap == min_overlap {
                pairs.push((subsets[i], subsets[j]));
            }
        }
    }
    Ok(pairs)
}

/// Self-correlation of cross-run variability: run variability recomputed on
/// three-run subsets, correlated between subsets with minimal overlap.
pub fn run_variability_self_correlation(runs: &[Vec<Vec<f64>>]) -> Result<f64> {
    let pairs = disjointish_subset_pairs(runs.len())?;
    let n = runs[0].len();
    let r = runs.len();
    // Per-example squared distance for every run pair, indexed [a * r + b].
    let dist: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut d = vec![0.0; r * r];
            for a in 0..r {
                for b in a + 1..r {
                    let v = squared_distance(&runs[a][i], &runs[b][i]);
                    d[a * r + b] = v;
                    d[b * r + a] = v;
                }
            }
            d
        })
        .collect();
    let subset_values = |s: [usize; 3]| -> Vec<f64> {
        dist.iter()
            .map(|d| (d[s[0] * r + s[1]] + d[s[0] * r + s[2]] + d[s[1] * r + s[2]]) / 3.0)
            .collect()
    };
    let mut rs = Vec::with_capacity(pairs.len());
    for (a, b) in pairs {
        rs.push(pearson_named(&subset_values(a), &subset_values(b), "var_runs", "var_runs")?);
    }
    Ok(mean(&rs))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

/// Correlations between metrics. Off-diagonal entries correlate the
/// run-mean metric columns; the diagonal holds each metric's cross-run
/// self-correlation, supplied by the caller.
pub fn metric_correlations(columns: &[(String, Vec<f64>)], diagonal: &[f64]) -> Result<CorrelationMatrix> {
    if columns.len() != diagonal.len() {
        return Err(Error::Param("one diagonal entry per metric is required".into()));
    }
    let k = columns.len();
    let mut values = vec![vec![0.0; k]; k];
    for i in 0..k {
        values[i][i] = diagonal[i];
        for j in i + 1..k {
            let r = pearson_named(&columns[i].1, &columns[j].1, &columns[i].0, &columns[j].0)?;
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrelationMatrix {
        names: columns.iter().map(|c| c.0.clone()).collect(),
        values,
    })
}

/// Full correlation table from per-run metric tables and per-run
/// evaluated fits (for cross-run variability).
pub fn correlation_table(per_run: &[MetricsTable], fits_per_run: &[Vec<Vec<f64>>]) -> Result<CorrelationMatrix> {
    let mean_table = aggregate_over_runs(per_run)?;
    let var_runs = run_variability_table(fits_per_run)?;
    let mut columns = Vec::new();
    let mut diagonal = Vec::new();
    for m in [Metric::Surprisal, Metric::VarSteps, Metric::Aoa, Metric::Forgettability] {
        columns.push((m.name().to_string(), mean_table.column(m).unwrap()));
        let runs: Vec<Vec<f64>> = per_run.iter().map(|t| t.column(m).unwrap()).collect();
        diagonal.push(mean_pairwise_correlation(&runs, m.name())?);
    }
    columns.push((Metric::VarRuns.name().to_string(), var_runs));
    diagonal.push(run_variability_self_correlation(fits_per_run)?);
    metric_correlations(&columns, &diagonal)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfilePoint {
    pub step: u64,
    pub mean: f64,
    pub std: f64,
}

/// Per-checkpoint mean and population std of cross-run Pearson r.
pub fn checkpoint_similarity_profile(runs: &[&SurprisalMatrix]) -> Result<Vec<ProfilePoint>> {
    if runs.len() < 2 {
        return Err(Error::Param("similarity profile needs at least two runs".into()));
    }
    check_aligned(runs)?;
    let grid = runs[0].grid();
    (0..grid.len())
        .into_par_iter()
        .map(|j| {
            let cols: Vec<Vec<f64>> = runs.iter().map(|m| m.column(j)).collect();
            let name = format!("checkpoint step {}", grid.steps()[j]);
            let mut rs = Vec::new();
            for a in 0..cols.len() {
                for b in a + 1..cols.len() {
                    rs.push(pearson_named(&cols[a], &cols[b], &name, &name)?);
                }
            }
            Ok(ProfilePoint {
                step: grid.steps()[j],
                mean: mean(&rs),
                std: population_std(&rs),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentProfile {
    pub steps: Vec<u64>,
    /// r[n-1][j]: correlation with the order-n scores at checkpoint j.
    pub r: Vec<Vec<f64>>,
    /// Step of maximum correlation per order (earliest on ties).
    pub argmax_step: Vec<u64>,
}

/// Correlation of each checkpoint's surprisals with n-gram surprisals,
/// for n = 1..=ngram_scores.len(). Scores are aligned with matrix rows.
pub fn ngram_alignment_profile(matrix: &SurprisalMatrix, ngram_scores: &[Vec<f64>]) -> Result<AlignmentProfile> {
    if ngram_scores.is_empty() {
        return Err(Error::Param("no n-gram scores supplied".into()));
    }
    for (k, s) in ngram_scores.iter().enumerate() {
        if s.len() != matrix.n_examples() {
            return Err(Error::Data(format!(
                "order-{} scores cover {} examples, matrix has {}",
                k + 1,
                s.len(),
                matrix.n_examples()
            )));
        }
    }
    let steps = matrix.grid().steps().to_vec();
    let by_col: Vec<Vec<f64>> = (0..steps.len())
        .into_par_iter()
        .map(|j| {
            let col = matrix.column(j);
            let name = format!("model surprisal at step {}", steps[j]);
            ngram_scores
                .iter()
                .enumerate()
                .map(|(k, s)| pearson_named(&col, s, &name, &format!("{}-gram surprisal", k + 1)))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let r: Vec<Vec<f64>> = (0..ngram_scores.len())
        .map(|k| by_col.iter().map(|c| c[k]).collect())
        .collect();
    let argmax_step = r
        .iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            steps[best]
        })
        .collect();
    Ok(AlignmentProfile { steps, r, argmax_step })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Band {
    /// Values at or above the (1 - q) quantile.
    Top(f64),
    /// Values at or below the q quantile.
    Bottom(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum CurvePredicate {
    /// Some relative maximum exceeds its preceding minimum by more than θ bits.
    HasRise(f64),
    /// A rise above θ is followed by a descent below the pre-rise minimum
    /// plus 10% of the rise.
    Recovered(f64),
    /// The minimum over grid points with x <= `x` is at most `below`.
    MinBefore { x: f64, below: f64 },
    /// The curve never improves on chance by more than this fraction.
    NeverImprovesBeyond(f64),
    /// Every value stays within this fraction of the first value.
    NeverDeviatesFromStart(f64),
}

impl CurvePredicate {
    pub fn label(&self) -> String {
        match self {
            CurvePredicate::HasRise(t) => format!("has_rise({t})"),
            CurvePredicate::Recovered(t) => format!("recovered({t})"),
            CurvePredicate::MinBefore { x, below } => format!("min_before(x={x},below={below})"),
            CurvePredicate::NeverImprovesBeyond(p) => format!("never_improves_beyond({p})"),
            CurvePredicate::NeverDeviatesFromStart(p) => format!("never_deviates_from_start({p})"),
        }
    }

    pub fn eval(&self, values: &[f64], grid: &[f64], chance: f64) -> bool {
        match *self {
            CurvePredicate::HasRise(t) => rises(values).iter().any(|r| r.2 > t),
            CurvePredicate::Recovered(t) => rises(values).iter().any(|&(imin, imax, rise)| {
                rise > t && values[imax..].iter().any(|&v| v < values[imin] + 0.1 * rise)
            }),
            CurvePredicate::MinBefore { x, below } => values
                .iter()
                .zip(grid)
                .filter(|(_, &g)| g <= x)
                .any(|(&v, _)| v <= below),
            CurvePredicate::NeverImprovesBeyond(p) => {
                let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
                chance - min <= p * chance
            }
            CurvePredicate::NeverDeviatesFromStart(p) => {
                let v0 = values[0];
                values.iter().all(|v| (v - v0).abs() <= p * v0.abs())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortQuery {
    pub bands: Vec<(Metric, Band)>,
    pub require: Vec<CurvePredicate>,
    pub report: Vec<CurvePredicate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortResult {
    /// Row indices of the selected examples, ascending.
    pub selected: Vec<usize>,
    /// Fraction of the selection satisfying each reported predicate.
    pub report: Vec<(String, f64)>,
}

/// Select examples by metric quantile bands and required curve predicates.
/// `fitted` holds each example's fitted values on `grid`.
pub fn cohort_query(
    table: &MetricsTable,
    fitted: &[Vec<f64>],
    grid: &[f64],
    chance: f64,
    query: &CohortQuery,
) -> Result<CohortResult> {
    if fitted.len() != table.len() {
        return Err(Error::Data("fitted curves and metrics table differ in length".into()));
    }
    let mut keep = vec![true; table.len()];
    for &(metric, band) in &query.bands {
        let col = table
            .column(metric)
            .ok_or_else(|| Error::Data(format!("metric `{metric}` not available")))?;
        let (lo, hi) = match band {
            Band::Top(q) => (quantile(&col, 1.0 - q), f64::INFINITY),
            Band::Bottom(q) => (f64::NEG_INFINITY, quantile(&col, q)),
        };
        for (k, v) in keep.iter_mut().zip(&col) {
            *k &= *v >= lo && *v <= hi;
        }
    }
    let selected: Vec<usize> = (0..table.len())
        .into_par_iter()
        .filter(|&i| keep[i] && query.require.iter().all(|p| p.eval(&fitted[i], grid, chance)))
        .collect();
    let report = query
        .report
        .iter()
        .map(|p| {
            let hits = selected.iter().filter(|&&i| p.eval(&fitted[i], grid, chance)).count();
            let rate = if selected.is_empty() { 0.0 } else { hits as f64 / selected.len() as f64 };
            (p.label(), rate)
        })
        .collect();
    Ok(CohortResult { selected, report })
}

/// Type-7 quantile bands of a column, for plotting summaries.
pub fn quantile_band_edges(values: &[f64], qs: &[f64]) -> Vec<f64> {
    qs.iter().map(|&q| quantile(values, q)).collect()
}

pub const METRIC_COLUMNS: [&str; 6] = [
    "example_id",
    "final_surprisal",
    "var_steps",
    "aoa",
    "forgettability",
    "never_acquired_flag",
];

/// Write a metrics table; a `var_runs` column is appended when present.
pub fn write_metrics(path: &Path, table: &MetricsTable) -> Result<()> {
    let mut cols = METRIC_COLUMNS.to_vec();
    if table.var_runs.is_some() {
        cols.push("var_runs");
    }
    let mut w = TableWriter::create(path, &cols)?;
    for (i, (id, m)) in table.ids.iter().zip(&table.rows).enumerate() {
        let mut row = vec![
            id.to_string(),
            m.final_surprisal.to_string(),
            m.step_variability.to_string(),
            m.aoa.to_string(),
            m.forgettability.to_string(),
            u8::from(m.never_acquired).to_string(),
        ];
        if let Some(v) = &table.var_runs {
            row.push(v[i].to_string());
        }
        w.row(&row)?;
    }
    w.finish()
}

pub fn read_metrics(path: &Path) -> Result<MetricsTable> {
    let t = read_table(path, '\t')?;
    if t.columns.len() < METRIC_COLUMNS.len() || t.columns[..METRIC_COLUMNS.len()] != METRIC_COLUMNS {
        return Err(Error::Format(format!(
            "{}: metrics columns must start with {}",
            path.display(),
            METRIC_COLUMNS.join(", ")
        )));
    }
    let num: Vec<Vec<f64>> = METRIC_COLUMNS[1..]
        .iter()
        .map(|c| t.f64_column(c))
        .collect::<Result<_>>()?;
    let ids = t.rows.iter().map(|r| r[0].parse()).collect::<Result<Vec<ExampleId>>>()?;
    let rows = (0..ids.len())
        .map(|i| CurveMetrics {
            final_surprisal: num[0][i],
            step_variability: num[1][i],
            aoa: num[2][i],
            forgettability: num[3][i],
            never_acquired: num[4][i] != 0.0,
        })
        .collect();
    let var_runs = if t.columns.iter().any(|c| c == "var_runs") {
        Some(t.f64_column("var_runs")?)
    } else {
        None
    };
    Ok(MetricsTable { ids, rows, var_runs })
}
