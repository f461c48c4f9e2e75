//! Ordinary least squares with incremental R² ledgers, sign checks, VIF,
//! nested F-tests and POS coefficient tables.
//!
//! Every model includes an intercept, which is never listed among the
//! predictor columns. Fits use a Householder QR; a column whose component
//! orthogonal to the earlier columns is below `ALIAS_TOL` of its norm is
//! treated as linearly dependent.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};
use crate::features::{ExampleFeatures, Upos, WordPosition, CONTINUOUS, UPOS_TAGS};
use crate::linalg::{Matrix, Qr};
use crate::stats::{mean, pairwise_sum_by, sample_std};

const ALIAS_TOL: f64 = 1e-10;
const SIGN_TOL: f64 = 1e-10;
const INTERCEPT: &str = "(intercept)";

/// A named predictor column.
pub type Column = (String, Vec<f64>);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OlsFit {
    /// Intercept first, then the kept predictors in input order.
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    /// Predictors dropped as linearly dependent (empty for [`ols_fit`]).
    pub aliased: Vec<String>,
    pub r2: f64,
    pub adj_r2: f64,
    pub rss: f64,
    pub tss: f64,
    pub n: usize,
    /// Number of kept predictors, excluding the intercept.
    pub p: usize,
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

impl OlsFit {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.coefficients[i])
    }
}

fn check_columns(columns: &[Column], y: &[f64]) -> Result<()> {
    for (name, c) in columns {
        if c.len() != y.len() {
            return Err(Error::Param(format!(
                "column `{name}` has {} rows, response has {}",
                c.len(),
                y.len()
            )));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("column `{name}` has non-finite values")));
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("response has non-finite values".into()));
    }
    Ok(())
}

/// Least squares that drops aliased columns instead of failing.
pub fn ols_fit_aliased(columns: &[Column], y: &[f64]) -> Result<OlsFit> {
    check_columns(columns, y)?;
    let n = y.len();
    let mut all = Vec::with_capacity(columns.len() + 1);
    all.push(vec![1.0; n]);
    all.extend(columns.iter().map(|c| c.1.clone()));
    let x = Matrix::from_columns(&all);
    let qr = Qr::factor(&x, ALIAS_TOL);
    let rank = qr.rank();
    if n <= rank {
        return Err(Error::Param(format!(
            "regression needs more rows ({n}) than columns ({rank})"
        )));
    }
    let mut qty = y.to_vec();
    qr.apply_qt(&mut qty);
    let rss = pairwise_sum_by(n - rank, |i| qty[rank + i] * qty[rank + i]);
    let ess = pairwise_sum_by(rank - 1, |i| qty[1 + i] * qty[1 + i]);
    let my = mean(y);
    let tss = pairwise_sum_by(n, |i| (y[i] - my) * (y[i] - my));
    // Take R² from whichever sum is smaller; its complement keeps full precision.
    let r2 = if tss <= 0.0 {
        0.0
    } else if ess <= rss {
        (ess / tss).clamp(0.0, 1.0)
    } else {
        (1.0 - rss / tss).clamp(0.0, 1.0)
    };
    let p = rank - 1;
    let adj_r2 = 1.0 - (1.0 - r2) * (n - 1) as f64 / (n - p - 1) as f64;
    let mut beta = qty[..rank].to_vec();
    qr.solve_r(&mut beta);
    let mut residuals = qty;
    residuals[..rank].iter_mut().for_each(|v| *v = 0.0);
    qr.apply_q(&mut residuals);
    let names = qr
        .kept()
        .iter()
        .map(|&j| if j == 0 { INTERCEPT.to_string() } else { columns[j - 1].0.clone() })
        .collect();
    let aliased = qr
        .aliased()
        .iter()
        .map(|&j| if j == 0 { INTERCEPT.to_string() } else { columns[j - 1].0.clone() })
        .collect();
    Ok(OlsFit {
        names,
        coefficients: beta,
        aliased,
        r2,
        adj_r2,
        rss,
        tss,
        n,
        p,
        residuals,
    })
}

/// Least squares with intercept. Fails on rank deficiency, naming the first
/// dependent column.
pub fn ols_fit(columns: &[Column], y: &[f64]) -> Result<OlsFit> {
    let fit = ols_fit_aliased(columns, y)?;
    if let Some(c) = fit.aliased.first() {
        return Err(Error::RankDeficient { column: c.clone() });
    }
    Ok(fit)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerStep {
    pub group: String,
    pub r2: f64,
    pub adj_r2: f64,
    pub delta_r2: f64,
    pub delta_adj_r2: f64,
    pub aliased: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct R2Ledger {
    pub steps: Vec<LedgerStep>,
    pub total_adj_r2: f64,
}

/// Fit nested models adding one predictor group at a time. The first step's
/// deltas are measured from the intercept-only model (R² = 0). Columns that
/// add no new direction are dropped, so they contribute exactly zero R².
pub fn incremental_r2(groups: &[(String, Vec<Column>)], y: &[f64]) -> Result<R2Ledger> {
    let mut cols: Vec<Column> = Vec::new();
    let mut steps = Vec::with_capacity(groups.len());
    let (mut prev_r2, mut prev_adj) = (0.0, 0.0);
    for (group, gcols) in groups {
        cols.extend(gcols.iter().cloned());
        let fit = ols_fit_aliased(&cols, y)?;
        steps.push(LedgerStep {
            group: group.clone(),
            r2: fit.r2,
            adj_r2: fit.adj_r2,
            delta_r2: fit.r2 - prev_r2,
            delta_adj_r2: fit.adj_r2 - prev_adj,
            aliased: fit.aliased.clone(),
        });
        prev_r2 = fit.r2;
        prev_adj = fit.adj_r2;
    }
    Ok(R2Ledger {
        steps,
        total_adj_r2: prev_adj,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Pos,
    #[serde(rename = "-")]
    Neg,
    #[serde(rename = "0")]
    Zero,
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Pos => "+",
            Sign::Neg => "-",
            Sign::Zero => "0",
        })
    }
}

/// Sign of `beta` for predictor `x` and response `y`; the standardized
/// effect must exceed 1e-10 to count as non-zero.
pub fn coefficient_sign(beta: f64, x: &[f64], y: &[f64]) -> Sign {
    let scale = sample_std(y);
    let effect = beta * sample_std(x);
    if !(effect.abs() >= SIGN_TOL * scale) || effect == 0.0 {
        Sign::Zero
    } else if effect > 0.0 {
        Sign::Pos
    } else {
        Sign::Neg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SignTriple {
    pub full: Sign,
    pub alone: Sign,
    pub alone_freq_resid: Sign,
}

impl fmt::Display for SignTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.full, self.alone, self.alone_freq_resid)
    }
}

fn find<'a>(columns: &'a [Column], name: &str) -> Result<&'a Vec<f64>> {
    columns
        .iter()
        .find(|c| c.0 == name)
        .map(|c| &c.1)
        .ok_or_else(|| Error::Param(format!("no column named `{name}`")))
}

/// Signs of `predictor` in the full model, alone, and alone against the
/// response residualized on the frequency column.
pub fn sign_triple(predictor: &str, columns: &[Column], y: &[f64], freq: &str) -> Result<SignTriple> {
    let x = find(columns, predictor)?;
    let f = find(columns, freq)?;
    let full = ols_fit(columns, y)?;
    let alone = ols_fit(&[(predictor.to_string(), x.clone())], y)?;
    let y_resid = ols_fit(&[(freq.to_string(), f.clone())], y)?.residuals;
    let resid = ols_fit(&[(predictor.to_string(), x.clone())], &y_resid)?;
    Ok(SignTriple {
        full: coefficient_sign(full.coefficient(predictor).unwrap(), x, y),
        alone: coefficient_sign(alone.coefficient(predictor).unwrap(), x, y),
        alone_freq_resid: coefficient_sign(resid.coefficient(predictor).unwrap(), x, y),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Vif {
    pub name: String,
    /// `f64::MAX` when the column is perfectly collinear with the others.
    pub value: f64,
    pub infinite: bool,
}

/// Variance inflation factor of each predictor (intercept excluded).
pub fn vif(columns: &[Column]) -> Result<Vec<Vif>> {
    if columns.len() < 2 {
        return Ok(columns
            .iter()
            .map(|c| Vif {
                name: c.0.clone(),
                value: 1.0,
                infinite: false,
            })
            .collect());
    }
    (0..columns.len())
        .into_par_iter()
        .map(|j| {
            let others: Vec<Column> = columns
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != j)
                .map(|(_, c)| c.clone())
                .collect();
            let fit = ols_fit_aliased(&others, &columns[j].1)?;
            if fit.tss <= 0.0 {
                return Err(Error::ZeroVariance {
                    column: columns[j].0.clone(),
                });
            }
            let tol = 1.0 - fit.r2;
            Ok(if tol <= 1e-12 {
                Vif {
                    name: columns[j].0.clone(),
                    value: f64::MAX,
                    infinite: true,
                }
            } else {
                Vif {
                    name: columns[j].0.clone(),
                    value: 1.0 / tol,
                    infinite: false,
                }
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NestedTest {
    pub f: f64,
    pub df1: usize,
    pub df2: usize,
    pub p_value: f64,
}

/// F-test of a small model against a larger one containing all its columns.
pub fn nested_test(small: &[Column], large: &[Column], y: &[f64]) -> Result<NestedTest> {
    for (name, col) in small {
        match large.iter().find(|c| &c.0 == name) {
            Some(c) if &c.1 == col => {}
            _ => {
                return Err(Error::Param(format!(
                    "models are not nested: `{name}` is missing from the larger model"
                )))
            }
        }
    }
    let s = ols_fit(small, y)?;
    let l = ols_fit(large, y)?;
    let df1 = l.p - s.p;
    let df2 = l.n - l.p - 1;
    if df1 == 0 {
        return Ok(NestedTest {
            f: 0.0,
            df1,
            df2,
            p_value: 1.0,
        });
    }
    let num = (s.rss - l.rss).max(0.0) / df1 as f64;
    let den = l.rss / df2 as f64;
    let f = if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    };
    let p_value = if f.is_infinite() {
        0.0
    } else if f == 0.0 {
        1.0
    } else {
        let dist = FisherSnedecor::new(df1 as f64, df2 as f64).map_err(|e| Error::Numeric(e.to_string()))?;
        dist.sf(f)
    };
    Ok(NestedTest { f, df1, df2, p_value })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosCoefficients {
    pub pos: Vec<(String, f64)>,
    pub word_pos: Vec<(String, f64)>,
}

/// Category effects on the response after residualizing it on the
/// continuous predictors. Every present POS tag gets a coefficient (no
/// intercept); word position is coded against U, which reports 0.
pub fn pos_coefficients(
    y: &[f64],
    continuous: &[Column],
    pos: &[Upos],
    word_pos: &[WordPosition],
) -> Result<PosCoefficients> {
    if pos.len() != y.len() || word_pos.len() != y.len() {
        return Err(Error::Param("POS annotations must align with the response".into()));
    }
    let resid = ols_fit(continuous, y)?.residuals;
    let mut design: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<(bool, String)> = Vec::new();
    for tag in Upos::all() {
        let col: Vec<f64> = pos.iter().map(|p| f64::from(u8::from(*p == tag))).collect();
        if col.iter().any(|v| *v != 0.0) {
            design.push(col);
            labels.push((true, tag.to_string()));
        } else {
            log::warn!("POS tag {tag} has no rows; dropped");
        }
    }
    for wp in [WordPosition::B, WordPosition::I, WordPosition::L] {
        let col: Vec<f64> = word_pos.iter().map(|p| f64::from(u8::from(*p == wp))).collect();
        if col.iter().any(|v| *v != 0.0) {
            design.push(col);
            labels.push((false, wp.to_string()));
        } else {
            log::warn!("word position {wp} has no rows; dropped");
        }
    }
    let x = Matrix::from_columns(&design);
    let qr = Qr::factor(&x, ALIAS_TOL);
    if let Some(&j) = qr.aliased().first() {
        return Err(Error::RankDeficient {
            column: labels[j].1.clone(),
        });
    }
    let beta = qr.solve_least_squares(&resid);
    let mut out = PosCoefficients {
        pos: Vec::new(),
        word_pos: Vec::new(),
    };
    for ((is_pos, name), b) in labels.into_iter().zip(beta) {
        if is_pos {
            out.pos.push((name, b));
        } else {
            out.word_pos.push((name, b));
        }
    }
    out.word_pos.push(("U".to_string(), 0.0));
    Ok(out)
}

pub use crate::stats::pearson;

/// Predictor groups in the standard order. POS tags enter one-hot against
/// the most frequent tag, word position one-hot against U.
pub fn standard_groups(features: &[ExampleFeatures]) -> Result<Vec<(String, Vec<Column>)>> {
    let mut groups: Vec<(String, Vec<Column>)> = CONTINUOUS
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let col = features.iter().map(|f| f.continuous()[j]).collect();
            (name.to_string(), vec![(name.to_string(), col)])
        })
        .collect();
    if features.iter().all(|f| f.pos.is_some() && f.word_pos.is_some()) && !features.is_empty() {
        let mut counts = [0usize; UPOS_TAGS.len()];
        for f in features {
            counts[f.pos.unwrap().index()] += 1;
        }
        let reference = (0..counts.len()).max_by_key(|&i| (counts[i], std::cmp::Reverse(i))).unwrap();
        let mut cols = Vec::new();
        for tag in Upos::all() {
            if tag.index() == reference || counts[tag.index()] == 0 {
                continue;
            }
            let col = features.iter().map(|f| f64::from(u8::from(f.pos == Some(tag)))).collect();
            cols.push((format!("pos={tag}"), col));
        }
        for wp in [WordPosition::B, WordPosition::I, WordPosition::L] {
            let col: Vec<f64> = features.iter().map(|f| f64::from(u8::from(f.word_pos == Some(wp)))).collect();
            if col.iter().any(|v| *v != 0.0) {
                cols.push((format!("word_pos={wp}"), col));
            }
        }
        groups.push(("pos".to_string(), cols));
    } else if features.iter().any(|f| f.pos.is_some()) {
        return Err(Error::Data("POS annotations are present for only some examples".into()));
    }
    Ok(groups)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictorRow {
    pub predictor: String,
    pub signs: Option<SignTriple>,
    pub delta_adj_r2: f64,
    pub delta_r2: f64,
    pub nested_f: f64,
    pub nested_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionReport {
    pub target: String,
    pub n: usize,
    pub rows: Vec<PredictorRow>,
    pub vif: Vec<Vif>,
    pub total_adj_r2: f64,
    pub total_r2: f64,
}

/// Incremental-R² analysis of one response against the standard groups.
pub fn regression_report(target: &str, features: &[ExampleFeatures], y: &[f64]) -> Result<RegressionReport> {
    let groups = standard_groups(features)?;
    let ledger = incremental_r2(&groups, y)?;
    let all: Vec<Column> = groups.iter().flat_map(|g| g.1.iter().cloned()).collect();
    let continuous: Vec<Column> = groups[..CONTINUOUS.len()].iter().map(|g| g.1[0].clone()).collect();
    let full = ols_fit(&all, y)?;
    let rows = groups
        .par_iter()
        .zip(ledger.steps.par_iter())
        .map(|((name, cols), step)| {
            let signs = if cols.len() == 1 {
                Some(sign_triple(name, &all, y, CONTINUOUS[0])?)
            } else {
                None
            };
            let small: Vec<Column> = all.iter().filter(|c| !cols.iter().any(|g| g.0 == c.0)).cloned().collect();
            let t = nested_test(&small, &all, y)?;
            Ok(PredictorRow {
                predictor: name.clone(),
                signs,
                delta_adj_r2: step.delta_adj_r2,
                delta_r2: step.delta_r2,
                nested_f: t.f,
                nested_p: t.p_value,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RegressionReport {
        target: target.to_string(),
        n: y.len(),
        rows,
        vif: vif(&continuous)?,
        total_adj_r2: ledger.total_adj_r2,
        total_r2: full.r2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cholesky_solve;
    use crate::rng::CounterRng;
    use proptest::prelude::*;

    fn col(name: &str, v: Vec<f64>) -> Column {
        (name.to_string(), v)
    }

    fn random_cols(rng: &mut CounterRng, n: usize, k: usize) -> Vec<Column> {
        (0..k).map(|j| col(&format!("x{j}"), (0..n).map(|_| rng.normal()).collect())).collect()
    }

    /// Normal equations with an intercept, solved by Cholesky.
    fn normal_equation_oracle(cols: &[Column], y: &[f64]) -> Vec<f64> {
        let n = y.len();
        let mut x: Vec<Vec<f64>> = vec![vec![1.0; n]];
        x.extend(cols.iter().map(|c| c.1.clone()));
        let p = x.len();
        let a: Vec<Vec<f64>> = (0..p).map(|i| (0..p).map(|j| x[i].iter().zip(&x[j]).map(|(u, v)| u * v).sum()).collect()).collect();
        let b: Vec<f64> = (0..p).map(|i| x[i].iter().zip(y).map(|(u, v)| u * v).sum()).collect();
        cholesky_solve(&a, &b).unwrap()
    }

    fn rss_oracle(cols: &[Column], y: &[f64]) -> f64 {
        let beta = normal_equation_oracle(cols, y);
        (0..y.len())
            .map(|i| {
                let f = beta[0] + cols.iter().zip(&beta[1..]).map(|(c, b)| c.1[i] * b).sum::<f64>();
                (y[i] - f).powi(2)
            })
            .sum()
    }

    #[test]
    fn exact_linear_data() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.37 - 2.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let fit = ols_fit(&[col("x", x)], &y).unwrap();
        assert_eq!(fit.r2, 1.0);
        assert!((fit.coefficient("x").unwrap() - 2.0).abs() < 1e-12);
        assert!(fit.coefficient(INTERCEPT).unwrap().abs() < 1e-12);
    }

    #[test]
    fn response_orthogonal_to_design() {
        // centered x and y with zero inner product
        let x = vec![-1.0, 0.0, 1.0, -1.0, 0.0, 1.0];
        let y = vec![1.0, -2.0, 1.0, 1.0, -2.0, 1.0];
        let fit = ols_fit(&[col("x", x)], &y).unwrap();
        assert!(fit.r2.abs() < 1e-15);
        assert!(fit.coefficient("x").unwrap().abs() < 1e-15);
    }

    #[test]
    fn random_system_matches_normal_equations() {
        let mut rng = CounterRng::new(1);
        let cols = random_cols(&mut rng, 50, 4);
        let y: Vec<f64> = (0..50).map(|i| 1.0 + cols[0].1[i] - 2.0 * cols[2].1[i] + rng.normal()).collect();
        let fit = ols_fit(&cols, &y).unwrap();
        for (a, b) in fit.coefficients.iter().zip(normal_equation_oracle(&cols, &y)) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!((fit.rss - rss_oracle(&cols, &y)).abs() < 1e-8);
        let (n, p) = (50.0, 4.0);
        assert!((fit.adj_r2 - (1.0 - (1.0 - fit.r2) * (n - 1.0) / (n - p - 1.0))).abs() < 1e-15);
        assert!(fit.adj_r2 <= fit.r2 && fit.r2 <= 1.0);
    }

    #[test]
    fn rank_deficiency_names_column() {
        let mut rng = CounterRng::new(2);
        let mut cols = random_cols(&mut rng, 30, 2);
        let dup: Vec<f64> = cols[0].1.iter().zip(&cols[1].1).map(|(a, b)| a - 3.0 * b).collect();
        cols.push(col("combo", dup));
        let y = vec![1.0; 30];
        match ols_fit(&cols, &y) {
            Err(Error::RankDeficient { column }) => assert_eq!(column, "combo"),
            other => panic!("{other:?}"),
        }
        let constant = vec![col("c", vec![4.0; 30])];
        assert!(matches!(ols_fit(&constant, &y), Err(Error::RankDeficient { .. })));
        assert!(ols_fit(&random_cols(&mut rng, 3, 2), &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn ledger_cases() {
        let mut rng = CounterRng::new(3);
        let n = 400;
        let cols = random_cols(&mut rng, n, 3);
        let y: Vec<f64> = (0..n).map(|i| 1.5 * cols[0].1[i] + 0.8 * cols[1].1[i] + rng.normal()).collect();
        let groups = vec![
            ("a".to_string(), vec![cols[0].clone()]),
            ("b".to_string(), vec![cols[1].clone()]),
            ("a again".to_string(), vec![col("a2", cols[0].1.clone())]),
            ("noise".to_string(), vec![cols[2].clone()]),
        ];
        let ledger = incremental_r2(&groups, &y).unwrap();
        assert!(ledger.steps[0].delta_adj_r2 > 0.3);
        assert!(ledger.steps[1].delta_adj_r2 > 0.05);
        assert_eq!(ledger.steps[2].delta_r2, 0.0);
        assert_eq!(ledger.steps[2].aliased, vec!["a2".to_string()]);
        assert!(ledger.steps[3].delta_adj_r2 < 0.01);
        // from-scratch nested fits
        let r2_of = |k: usize| {
            let c: Vec<Column> = cols[..k].to_vec();
            1.0 - rss_oracle(&c, &y) / y.iter().map(|v| (v - mean(&y)).powi(2)).sum::<f64>()
        };
        assert!((ledger.steps[0].r2 - r2_of(1)).abs() < 1e-10);
        assert!((ledger.steps[1].r2 - r2_of(2)).abs() < 1e-10);
        for w in ledger.steps.windows(2) {
            assert!(w[1].r2 >= w[0].r2);
        }
    }

    #[test]
    fn sign_triple_cases() {
        let mut rng = CounterRng::new(4);
        let n = 500;
        let freq: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let x: Vec<f64> = freq.iter().map(|f| 0.8 * f + 0.6 * rng.normal()).collect();
        let z: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let cols = vec![col("freq", freq.clone()), col("x", x.clone()), col("z", z.clone())];
        let t = sign_triple("x", &cols, &x, "freq").unwrap();
        assert_eq!(t, SignTriple { full: Sign::Pos, alone: Sign::Pos, alone_freq_resid: Sign::Pos });
        // suppression: y driven by frequency only, x positively correlated with it
        let y: Vec<f64> = freq.iter().map(|f| -2.0 * f + 0.1 * rng.normal()).collect();
        let t = sign_triple("x", &cols, &y, "freq").unwrap();
        assert_eq!(t.alone, Sign::Neg);
        // oracle: x residualized response slope
        let yr: Vec<f64> = {
            let b = normal_equation_oracle(&[col("freq", freq.clone())], &y);
            y.iter().zip(&freq).map(|(v, f)| v - b[0] - b[1] * f).collect()
        };
        let slope = normal_equation_oracle(&[col("x", x.clone())], &yr)[1];
        let expect = if slope > 0.0 { Sign::Pos } else { Sign::Neg };
        assert_eq!(t.alone_freq_resid, expect);
        assert_ne!(t.alone, t.alone_freq_resid);
        // frequency itself against frequency-residualized response is exactly zero
        assert_eq!(sign_triple("freq", &cols, &y, "freq").unwrap().alone_freq_resid, Sign::Zero);
        // exactly uncorrelated response
        assert_eq!(coefficient_sign(1e-14, &z, &z), Sign::Zero);
    }

    #[test]
    fn vif_cases() {
        let x1 = vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let x2 = vec![1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0];
        let x3 = vec![1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0];
        let v = vif(&[col("a", x1.clone()), col("b", x2.clone()), col("c", x3)]).unwrap();
        assert!(v.iter().all(|v| v.value == 1.0 && !v.infinite));
        let v = vif(&[col("a", x1.clone()), col("b", x2), col("a2", x1.clone())]).unwrap();
        assert!(v[0].infinite && v[2].infinite && !v[1].infinite);
        // two predictors with sample correlation r
        let mut rng = CounterRng::new(5);
        let a: Vec<f64> = (0..300).map(|_| rng.normal()).collect();
        let b: Vec<f64> = a.iter().map(|v| 0.6 * v + 0.8 * rng.normal()).collect();
        let r = pearson(&a, &b).unwrap();
        let v = vif(&[col("a", a), col("b", b)]).unwrap();
        for e in v {
            assert!((e.value - 1.0 / (1.0 - r * r)).abs() < 1e-8);
        }
    }

    #[test]
    fn nested_test_cases() {
        let mut rng = CounterRng::new(6);
        let n = 60;
        let cols = random_cols(&mut rng, n, 3);
        let y: Vec<f64> = (0..n).map(|i| cols[0].1[i] + 0.3 * cols[1].1[i] + rng.normal()).collect();
        let same = nested_test(&cols, &cols, &y).unwrap();
        assert_eq!((same.f, same.p_value), (0.0, 1.0));
        let t = nested_test(&cols[..1], &cols, &y).unwrap();
        let (rs, rl) = (rss_oracle(&cols[..1], &y), rss_oracle(&cols, &y));
        let f = ((rs - rl) / 2.0) / (rl / (n as f64 - 3.0 - 1.0));
        assert!((t.f - f).abs() < 1e-10 * f.max(1.0));
        let expect_p = 1.0 - FisherSnedecor::new(2.0, (n - 4) as f64).unwrap().cdf(f);
        assert!((t.p_value - expect_p).abs() < 1e-10);
        // a column that explains the residual entirely
        let resid = ols_fit(&cols[..1], &y).unwrap().residuals;
        let mut big = cols[..1].to_vec();
        big.push(col("r", resid));
        assert!(nested_test(&cols[..1], &big, &y).unwrap().p_value < 1e-12);
        assert!(matches!(nested_test(&cols[1..2], &cols[..1], &y), Err(Error::Param(_))));
    }

    #[test]
    fn pos_coefficient_cases() {
        let mut rng = CounterRng::new(7);
        let n = 600;
        let cont = random_cols(&mut rng, n, 2);
        let tags: Vec<Upos> = (0..n).map(|i| ["NOUN", "VERB", "ADJ"][i % 3].parse().unwrap()).collect();
        let wps: Vec<WordPosition> = (0..n).map(|i| WordPosition::ALL[(i / 3) % 4]).collect();
        let constant = vec![3.0; n];
        let flat = pos_coefficients(&constant, &cont, &tags, &wps).unwrap();
        assert!(flat.pos.iter().chain(&flat.word_pos).all(|(_, b)| b.abs() < 1e-12));
        let y: Vec<f64> = (0..n)
            .map(|i| cont[0].1[i] + if tags[i].name() == "NOUN" { 0.5 } else { 0.0 } + 0.01 * rng.normal())
            .collect();
        let c = pos_coefficients(&y, &cont, &tags, &wps).unwrap();
        let get = |name: &str| c.pos.iter().find(|p| p.0 == name).unwrap().1;
        assert!((get("NOUN") - get("VERB") - 0.5).abs() < 0.01);
        assert!((get("NOUN") - get("ADJ") - 0.5).abs() < 0.01);
        assert_eq!(c.word_pos.last().unwrap(), &("U".to_string(), 0.0));
        assert_eq!(c.pos.len(), 3);
    }

    proptest! {
        #[test]
        fn signs_invariant_to_positive_rescaling(seed in 0u64..300, scale in 0.01f64..100.0) {
            let mut rng = CounterRng::new(seed);
            let n = 80;
            let cols = random_cols(&mut rng, n, 3);
            let y: Vec<f64> = (0..n).map(|i| 0.5 * cols[0].1[i] - 0.4 * cols[1].1[i] + rng.normal()).collect();
            let mut scaled = cols.clone();
            scaled[1].1.iter_mut().for_each(|v| *v *= scale);
            prop_assert_eq!(sign_triple("x1", &cols, &y, "x0").unwrap(), sign_triple("x1", &scaled, &y, "x0").unwrap());
        }

        #[test]
        fn nested_p_invariant_to_affine_y(seed in 0u64..300, a in 0.1f64..10.0, b in -50.0f64..50.0) {
            let mut rng = CounterRng::new(seed);
            let n = 40;
            let cols = random_cols(&mut rng, n, 3);
            let y: Vec<f64> = (0..n).map(|i| cols[2].1[i] + rng.normal()).collect();
            let y2: Vec<f64> = y.iter().map(|v| a * v + b).collect();
            let p1 = nested_test(&cols[..1], &cols, &y).unwrap().p_value;
            let p2 = nested_test(&cols[..1], &cols, &y2).unwrap().p_value;
            prop_assert!((p1 - p2).abs() < 1e-9);
        }

        #[test]
        fn cumulative_r2_never_decreases(seed in 0u64..300) {
            let mut rng = CounterRng::new(seed);
            let cols = random_cols(&mut rng, 30, 5);
            let y: Vec<f64> = (0..30).map(|_| rng.normal()).collect();
            let groups: Vec<(String, Vec<Column>)> = cols.iter().map(|c| (c.0.clone(), vec![c.clone()])).collect();
            let l = incremental_r2(&groups, &y).unwrap();
            for w in l.steps.windows(2) {
                prop_assert!(w[1].r2 >= w[0].r2 - 1e-12);
            }
        }
    }
}
