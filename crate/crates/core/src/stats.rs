//! Small descriptive-statistics kernels shared across modules.
//!
//! All reductions use [`pairwise_sum`], whose summation tree depends only on
//! the input length, so results are reproducible regardless of how the
//! inputs were produced.

use crate::error::{Error, Result};

const PAIRWISE_BLOCK: usize = 64;

/// Sum with a fixed binary-split tree over blocks of 64 values.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_BLOCK {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        s
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Pairwise sum of `f(x)` without materialising a temporary when short.
pub fn pairwise_sum_by<F: Fn(usize) -> f64>(n: usize, f: F) -> f64 {
    fn rec<F: Fn(usize) -> f64>(lo: usize, hi: usize, f: &F) -> f64 {
        if hi - lo <= PAIRWISE_BLOCK {
            let mut s = 0.0;
            for i in lo..hi {
                s += f(i);
            }
            s
        } else {
            let mid = lo + (hi - lo) / 2;
            rec(lo, mid, f) + rec(mid, hi, f)
        }
    }
    rec(0, n, &f)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Sample variance (n - 1 denominator).
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    pairwise_sum_by(xs.len(), |i| (xs[i] - m) * (xs[i] - m)) / (xs.len() - 1) as f64
}

pub fn sample_std(xs: &[f64]) -> f64 {
    sample_variance(xs).sqrt()
}

/// Population standard deviation (n denominator).
pub fn population_std(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let m = mean(xs);
    (pairwise_sum_by(xs.len(), |i| (xs[i] - m) * (xs[i] - m)) / xs.len() as f64).sqrt()
}

/// Sample Pearson correlation. Fails when either input has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    pearson_named(x, y, "x", "y")
}

pub(crate) fn pearson_named(x: &[f64], y: &[f64], x_name: &str, y_name: &str) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Param(format!(
            "pearson: length mismatch ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Param("pearson: need at least two observations".into()));
    }
    let mx = mean(x);
    let my = mean(y);
    let n = x.len();
    let sxx = pairwise_sum_by(n, |i| (x[i] - mx) * (x[i] - mx));
    let syy = pairwise_sum_by(n, |i| (y[i] - my) * (y[i] - my));
    if sxx <= 0.0 || !sxx.is_finite() {
        return Err(Error::ZeroVariance {
            column: x_name.to_string(),
        });
    }
    if syy <= 0.0 || !syy.is_finite() {
        return Err(Error::ZeroVariance {
            column: y_name.to_string(),
        });
    }
    let sxy = pairwise_sum_by(n, |i| (x[i] - mx) * (y[i] - my));
    // sqrt of the product keeps r exactly 1 for identical inputs
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Average ranks (1-based), ties share the mean of their positions.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]).then(a.cmp(&b)));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    pearson(&ranks(x), &ranks(y))
}

/// Quantile with linear interpolation between order statistics
/// (the "type 7" definition). `q` in [0, 1].
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, q)
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let q = q.clamp(0.0, 1.0);
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}
