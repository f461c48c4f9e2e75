//! Penalized piecewise-linear smoothing of surprisal curves.
//!
//! The model is a degree-1 B-spline (hat function) basis with `n_basis`
//! functions on uniform nodes spanning `[min x, max x]`, fitted by
//!
//! ```text
//! minimize ||y - B beta||^2 + lambda ||D beta||^2
//! ```
//!
//! with `D` the second-order difference operator. Linear functions lie in
//! the null space of `D`, so they are reproduced exactly at every lambda.
//! Lambda is picked from a fixed grid by generalized cross-validation,
//! `GCV = n RSS / (n - tr H)^2`.
//!
//! Each system is solved through a Householder QR of the stacked matrix
//! `[B; sqrt(lambda) D]`. All curves of a run share the same x grid, so a
//! [`GamSmoother`] factors once per lambda and every fit afterwards costs a
//! handful of matrix-vector products.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curves::ExampleId;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Qr};

pub const GAM_MAGIC: &[u8; 5] = b"GAMF1";
pub const GAM_VERSION: u32 = 1;
pub const DEFAULT_N_BASIS: usize = 25;

/// Added to the penalized normal system when it is numerically singular.
const RIDGE: f64 = 1e-8;

pub fn default_lambdas() -> Vec<f64> {
    (-3..=3).map(|e| 10f64.powi(e)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GamConfig {
    pub n_basis: usize,
    pub lambdas: Vec<f64>,
}

impl Default for GamConfig {
    fn default() -> Self {
        Self {
            n_basis: DEFAULT_N_BASIS,
            lambdas: default_lambdas(),
        }
    }
}

impl GamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_basis < 3 {
            return Err(Error::Param("n_basis must be at least 3".into()));
        }
        if self.lambdas.is_empty() {
            return Err(Error::Param("lambda grid is empty".into()));
        }
        if self.lambdas.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::Param("lambda grid values must be positive and finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedCurve {
    pub x_min: f64,
    pub x_max: f64,
    /// One weight per hat function; the fitted value at node k.
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    /// GCV score at the selected lambda (not persisted in GAMF1 files).
    #[serde(default)]
    pub gcv: f64,
}

impl FittedCurve {
    pub fn n_basis(&self) -> usize {
        self.coefficients.len()
    }

    pub fn n_segments(&self) -> usize {
        self.coefficients.len() - 1
    }

    /// Node positions (segment breakpoints).
    pub fn knots(&self) -> Vec<f64> {
        let p = self.coefficients.len();
        let h = (self.x_max - self.x_min) / (p - 1) as f64;
        (0..p).map(|k| self.x_min + k as f64 * h).collect()
    }

    /// Fitted value at `x`, clamped to the domain. The flag reports clamping.
    pub fn evaluate_checked(&self, x: f64) -> (f64, bool) {
        let clamped = x < self.x_min || x > self.x_max;
        let (j, w) = segment(self.x_min, self.x_max, self.coefficients.len(), x);
        let v = (1.0 - w) * self.coefficients[j] + w * self.coefficients[j + 1];
        (v, clamped)
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        self.evaluate_checked(x).0
    }

    pub fn evaluate_grid(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.evaluate(x)).collect()
    }
}

/// Segment index and position within it for a clamped `x`.
#[inline]
fn segment(x_min: f64, x_max: f64, p: usize, x: f64) -> (usize, f64) {
    let span = x_max - x_min;
    if span <= 0.0 {
        return (0, 0.0);
    }
    let t = ((x - x_min) / span * (p - 1) as f64).clamp(0.0, (p - 1) as f64);
    let j = (t.floor() as usize).min(p - 2);
    (j, t - j as f64)
}

/// `evaluate` for an arbitrary coefficient vector.
pub fn evaluate(curve: &FittedCurve, x: f64) -> f64 {
    curve.evaluate(x)
}

struct LambdaFactor {
    lambda: f64,
    /// Top n rows of the thin Q of [B; sqrt(lambda) D], column-major n x p.
    q_top: Matrix,
    qr: Qr,
    trace: f64,
}

/// Precomputed smoother for one x grid and lambda grid.
pub struct GamSmoother {
    x: Vec<f64>,
    x_min: f64,
    x_max: f64,
    n_basis: usize,
    rows: Vec<(usize, f64)>,
    factors: Vec<LambdaFactor>,
}

impl GamSmoother {
    pub fn new(x: &[f64], config: &GamConfig) -> Result<Self> {
        config.validate()?;
        let p = config.n_basis;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Param("x values must be finite".into()));
        }
        let mut distinct = x.to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        if distinct.len() < p + 2 {
            return Err(Error::Param(format!(
                "need at least {} distinct x values for {p} basis functions, got {}",
                p + 2,
                distinct.len()
            )));
        }
        let x_min = distinct[0];
        let x_max = *distinct.last().unwrap();
        let rows: Vec<(usize, f64)> = x.iter().map(|&v| segment(x_min, x_max, p, v)).collect();
        let n = x.len();

        let mut factors = Vec::with_capacity(config.lambdas.len());
        for &lambda in &config.lambdas {
            let qr = factor_penalized(&rows, n, p, lambda, 0.0);
            let qr = if qr.rank() < p || qr.diag_ratio() < 1e-12 {
                log::debug!("gam: penalized system singular at lambda={lambda}; adding ridge");
                factor_penalized(&rows, n, p, lambda, RIDGE)
            } else {
                qr
            };
            if qr.rank() < p {
                return Err(Error::Numeric(format!(
                    "penalized system rank deficient at lambda={lambda} even with ridge"
                )));
            }
            let q = qr.thin_q();
            let mut q_top = Matrix::zeros(n, p);
            let mut trace = 0.0;
            for j in 0..p {
                let src = &q.col(j)[..n];
                trace += src.iter().map(|v| v * v).sum::<f64>();
                q_top.col_mut(j).copy_from_slice(src);
            }
            factors.push(LambdaFactor {
                lambda,
                q_top,
                qr,
                trace,
            });
        }
        Ok(Self {
            x: x.to_vec(),
            x_min,
            x_max,
            n_basis: p,
            rows,
            factors,
        })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.factors.iter().map(|f| f.lambda).collect()
    }

    fn solve(&self, f: &LambdaFactor, y: &[f64]) -> (Vec<f64>, f64) {
        let p = self.n_basis;
        let mut c: Vec<f64> = (0..p)
            .map(|j| f.q_top.col(j).iter().zip(y).map(|(a, b)| a * b).sum())
            .collect();
        f.qr.solve_r(&mut c);
        let rss = self
            .rows
            .iter()
            .zip(y)
            .map(|(&(j, w), &yi)| {
                let r = yi - ((1.0 - w) * c[j] + w * c[j + 1]);
                r * r
            })
            .sum();
        (c, rss)
    }

    /// Fit at one lambda from the grid (by index). Returns the curve and RSS.
    pub fn fit_at(&self, lambda_index: usize, y: &[f64]) -> Result<(FittedCurve, f64)> {
        self.check_y(y)?;
        let f = &self.factors[lambda_index];
        let (beta, rss) = self.solve(f, y);
        let n = y.len() as f64;
        let gcv = n * rss / (n - f.trace).powi(2);
        Ok((
            FittedCurve {
                x_min: self.x_min,
                x_max: self.x_max,
                coefficients: beta,
                lambda: f.lambda,
                gcv,
            },
            rss,
        ))
    }

    /// GCV score at every grid lambda.
    pub fn gcv_scores(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_y(y)?;
        let n = y.len() as f64;
        Ok(self
            .factors
            .iter()
            .map(|f| {
                let (_, rss) = self.solve(f, y);
                n * rss / (n - f.trace).powi(2)
            })
            .collect())
    }

    /// Fit with lambda chosen by GCV (ties resolved toward the earlier grid value).
    pub fn fit(&self, y: &[f64]) -> Result<FittedCurve> {
        self.check_y(y)?;
        let n = y.len() as f64;
        let mut best: Option<FittedCurve> = None;
        for f in &self.factors {
            let (beta, rss) = self.solve(f, y);
            let gcv = n * rss / (n - f.trace).powi(2);
            if best.as_ref().map_or(true, |b| gcv < b.gcv) {
                best = Some(FittedCurve {
                    x_min: self.x_min,
                    x_max: self.x_max,
                    coefficients: beta,
                    lambda: f.lambda,
                    gcv,
                });
            }
        }
        Ok(best.expect("lambda grid is non-empty"))
    }

    fn check_y(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.x.len() {
            return Err(Error::Param(format!(
                "x and y lengths differ ({} vs {})",
                self.x.len(),
                y.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Param("y values must be finite".into()));
        }
        Ok(())
    }

    /// Fit many curves in parallel; output order matches input order.
    pub fn fit_batch(&self, ys: &[Vec<f64>]) -> Result<Vec<FittedCurve>> {
        ys.par_iter().map(|y| self.fit(y)).collect()
    }
}

fn factor_penalized(rows: &[(usize, f64)], n: usize, p: usize, lambda: f64, ridge: f64) -> Qr {
    let extra = if ridge > 0.0 { p } else { 0 };
    let m = n + (p - 2) + extra;
    let mut a = Matrix::zeros(m, p);
    for (i, &(j, w)) in rows.iter().enumerate() {
        a.set(i, j, 1.0 - w);
        a.set(i, j + 1, a.get(i, j + 1) + w);
    }
    let s = lambda.sqrt();
    for r in 0..p - 2 {
        a.set(n + r, r, s);
        a.set(n + r, r + 1, -2.0 * s);
        a.set(n + r, r + 2, s);
    }
    if ridge > 0.0 {
        let rs = ridge.sqrt();
        for k in 0..p {
            a.set(n + p - 2 + k, k, rs);
        }
    }
    Qr::factor(&a, 1e-13)
}

/// One-shot fit: builds a smoother for `x` and fits `y` with GCV selection.
pub fn fit_gam(x: &[f64], y: &[f64], config: &GamConfig) -> Result<FittedCurve> {
    if x.len() != y.len() {
        return Err(Error::Param(format!(
            "x and y lengths differ ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    GamSmoother::new(x, config)?.fit(y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtremumKind {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub index: usize,
    pub position: f64,
    pub value: f64,
    pub kind: ExtremumKind,
}

/// Relative extrema of a sequence. Plateaus collapse to their first index
/// and both endpoints are reported, so kinds alternate. A constant sequence
/// yields a single minimum at index 0.
pub fn extrema(values: &[f64]) -> Vec<Extremum> {
    // Collapse runs of equal values to (first index, value).
    let mut runs: Vec<(usize, f64)> = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        if runs.last().map_or(true, |&(_, u)| u != v) {
            runs.push((i, v));
        }
    }
    let mk = |(index, value): (usize, f64), kind| Extremum {
        index,
        position: index as f64,
        value,
        kind,
    };
    match runs.len() {
        0 => return Vec::new(),
        1 => return vec![mk(runs[0], ExtremumKind::Min)],
        _ => {}
    }
    let mut out = Vec::new();
    let last = runs.len() - 1;
    for k in 0..=last {
        let v = runs[k].1;
        let up_from_left = k > 0 && runs[k - 1].1 < v;
        let down_from_left = k > 0 && runs[k - 1].1 > v;
        let right_lower = k < last && runs[k + 1].1 < v;
        let right_higher = k < last && runs[k + 1].1 > v;
        let is_max = (k == 0 && right_lower)
            || (k == last && up_from_left)
            || (up_from_left && right_lower);
        let is_min = (k == 0 && right_higher)
            || (k == last && down_from_left)
            || (down_from_left && right_higher);
        if is_max {
            out.push(mk(runs[k], ExtremumKind::Max));
        } else if is_min {
            out.push(mk(runs[k], ExtremumKind::Min));
        }
    }
    out
}

/// Extrema of a fitted curve evaluated on `grid`; positions are grid x values.
pub fn extrema_on_grid(curve: &FittedCurve, grid: &[f64]) -> Result<Vec<Extremum>> {
    if grid.len() < 2 {
        return Err(Error::Param("extrema need a grid of at least two points".into()));
    }
    let vals = curve.evaluate_grid(grid);
    Ok(extrema(&vals)
        .into_iter()
        .map(|mut e| {
            e.position = grid[e.index];
            e
        })
        .collect())
}

/// Fitted curves for one run, keyed by example.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedRun {
    pub run_id: String,
    pub ids: Vec<ExampleId>,
    pub curves: Vec<FittedCurve>,
}

pub fn write_fitted(path: &Path, run: &FittedRun) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let p = run.curves.first().map_or(DEFAULT_N_BASIS, FittedCurve::n_basis);
    w.write_all(GAM_MAGIC).map_err(io)?;
    w.write_all(&GAM_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(run.run_id.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(run.run_id.as_bytes()).map_err(io)?;
    w.write_all(&(p as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&(run.curves.len() as u64).to_le_bytes()).map_err(io)?;
    for (id, c) in run.ids.iter().zip(&run.curves) {
        if c.n_basis() != p {
            return Err(Error::Data("fitted curves have mixed basis sizes".into()));
        }
        w.write_all(&id.sequence_index.to_le_bytes()).map_err(io)?;
        w.write_all(&id.token_position.to_le_bytes()).map_err(io)?;
        w.write_all(&c.x_min.to_le_bytes()).map_err(io)?;
        w.write_all(&c.x_max.to_le_bytes()).map_err(io)?;
        for b in &c.coefficients {
            w.write_all(&b.to_le_bytes()).map_err(io)?;
        }
        w.write_all(&c.lambda.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_fitted(path: &Path) -> Result<FittedRun> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let trunc = |_| Error::Format("truncated GAMF1 file".into());
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic).map_err(trunc)?;
    if &magic != GAM_MAGIC {
        return Err(Error::Format("not a GAMF1 file".into()));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4).map_err(trunc)?;
    let version = u32::from_le_bytes(b4);
    if version != GAM_VERSION {
        return Err(Error::Format(format!("unsupported GAMF1 version {version}")));
    }
    r.read_exact(&mut b4).map_err(trunc)?;
    let mut id = vec![0u8; u32::from_le_bytes(b4) as usize];
    r.read_exact(&mut id).map_err(trunc)?;
    let run_id = String::from_utf8(id).map_err(|_| Error::Format("run id is not UTF-8".into()))?;
    r.read_exact(&mut b4).map_err(trunc)?;
    let p = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b8).map_err(trunc)?;
    let n = u64::from_le_bytes(b8) as usize;
    let mut ids = Vec::with_capacity(n);
    let mut curves = Vec::with_capacity(n);
    let mut f64_at = |r: &mut BufReader<File>| -> Result<f64> {
        r.read_exact(&mut b8).map_err(trunc)?;
        Ok(f64::from_le_bytes(b8))
    };
    for _ in 0..n {
        let mut idb = [0u8; 8];
        r.read_exact(&mut idb).map_err(trunc)?;
        ids.push(ExampleId {
            sequence_index: u32::from_le_bytes(idb[..4].try_into().unwrap()),
            token_position: u32::from_le_bytes(idb[4..].try_into().unwrap()),
        });
        let x_min = f64_at(&mut r)?;
        let x_max = f64_at(&mut r)?;
        let mut coefficients = Vec::with_capacity(p);
        for _ in 0..p {
            coefficients.push(f64_at(&mut r)?);
        }
        let lambda = f64_at(&mut r)?;
        curves.push(FittedCurve {
            x_min,
            x_max,
            coefficients,
            lambda,
            gcv: f64::NAN,
        });
    }
    Ok(FittedRun {
        run_id,
        ids,
        curves,
    })
}
