//! Householder QR for tall least-squares problems.
//!
//! Columns are factored in order without pivoting. A column whose component
//! orthogonal to the already-accepted columns is negligible is marked as
//! aliased and skipped, so callers learn exactly which input column was
//! linearly dependent on its predecessors.

/// Dense column-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Self {
        let rows = columns.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows * columns.len());
        for c in columns {
            assert_eq!(c.len(), rows, "ragged columns");
            data.extend_from_slice(c);
        }
        Self {
            rows,
            cols: columns.len(),
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.rows + i] = v;
    }
}

#[derive(Debug, Clone)]
pub struct Qr {
    rows: usize,
    /// Indices (into the input) of the accepted columns, in order.
    kept: Vec<usize>,
    /// Indices of columns rejected as linearly dependent.
    aliased: Vec<usize>,
    /// Householder vectors; reflector k acts on rows k.. and `vs[k][0]` is row k.
    vs: Vec<Vec<f64>>,
    /// Upper-triangular factor, `r[j]` holds column j (length j + 1).
    r: Vec<Vec<f64>>,
}

impl Qr {
    /// Factor the columns of `a`. A column is aliased when the norm of its
    /// part orthogonal to the accepted columns is at most `rel_tol` times its
    /// original norm (or when it is identically zero).
    pub fn factor(a: &Matrix, rel_tol: f64) -> Self {
        let rows = a.rows();
        let mut kept = Vec::new();
        let mut aliased = Vec::new();
        let mut vs: Vec<Vec<f64>> = Vec::new();
        let mut r: Vec<Vec<f64>> = Vec::new();
        let mut work = vec![0.0; rows];

        for j in 0..a.cols() {
            let k = vs.len();
            if k >= rows {
                aliased.push(j);
                continue;
            }
            work.copy_from_slice(a.col(j));
            let orig_norm = norm(&work);
            for (i, v) in vs.iter().enumerate() {
                reflect(v, &mut work[i..]);
            }
            let tail = norm(&work[k..]);
            if orig_norm == 0.0 || tail <= rel_tol * orig_norm {
                aliased.push(j);
                continue;
            }
            let alpha = if work[k] >= 0.0 { -tail } else { tail };
            let mut v = work[k..].to_vec();
            v[0] -= alpha;
            let vnorm = norm(&v);
            for x in &mut v {
                *x /= vnorm;
            }
            let mut rc = work[..k].to_vec();
            rc.push(alpha);
            vs.push(v);
            r.push(rc);
            kept.push(j);
        }
        Self {
            rows,
            kept,
            aliased,
            vs,
            r,
        }
    }

    pub fn rank(&self) -> usize {
        self.kept.len()
    }

    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    pub fn aliased(&self) -> &[usize] {
        &self.aliased
    }

    /// Overwrite `y` with Qᵀy.
    pub fn apply_qt(&self, y: &mut [f64]) {
        assert_eq!(y.len(), self.rows);
        for (i, v) in self.vs.iter().enumerate() {
            reflect(v, &mut y[i..]);
        }
    }

    /// Overwrite `y` with Qy.
    pub fn apply_q(&self, y: &mut [f64]) {
        assert_eq!(y.len(), self.rows);
        for (i, v) in self.vs.iter().enumerate().rev() {
            reflect(v, &mut y[i..]);
        }
    }

    /// Solve R x = b in place (b has length rank).
    pub fn solve_r(&self, b: &mut [f64]) {
        let k = self.rank();
        assert_eq!(b.len(), k);
        for i in (0..k).rev() {
            let mut s = b[i];
            for j in i + 1..k {
                s -= self.r[j][i] * b[j];
            }
            b[i] = s / self.r[i][i];
        }
    }

    /// Least-squares coefficients for the kept columns.
    pub fn solve_least_squares(&self, y: &[f64]) -> Vec<f64> {
        let mut qty = y.to_vec();
        self.apply_qt(&mut qty);
        qty.truncate(self.rank());
        self.solve_r(&mut qty);
        qty
    }

    /// First `rank` columns of Q, column-major (rows x rank).
    pub fn thin_q(&self) -> Matrix {
        let k = self.rank();
        let mut q = Matrix::zeros(self.rows, k);
        for j in 0..k {
            let col = q.col_mut(j);
            col[j] = 1.0;
            self.apply_q(col);
        }
        q
    }

    /// Smallest |R_ii| relative to the largest; a cheap conditioning signal.
    pub fn diag_ratio(&self) -> f64 {
        let d: Vec<f64> = self.r.iter().enumerate().map(|(i, c)| c[i].abs()).collect();
        let max = d.iter().cloned().fold(0.0, f64::max);
        let min = d.iter().cloned().fold(f64::INFINITY, f64::min);
        if max == 0.0 {
            0.0
        } else {
            min / max
        }
    }
}

#[inline]
fn reflect(v: &[f64], x: &mut [f64]) {
    let mut d = 0.0;
    for (a, b) in v.iter().zip(x.iter()) {
        d += a * b;
    }
    let d = 2.0 * d;
    for (a, b) in v.iter().zip(x.iter_mut()) {
        *b -= d * a;
    }
}

pub fn norm(x: &[f64]) -> f64 {
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let s: f64 = x.iter().map(|v| (v / scale) * (v / scale)).sum();
    scale * s.sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solve a small dense symmetric positive-definite system by Cholesky.
/// Returns `None` when the matrix is not numerically positive definite.
pub fn cholesky_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut z = b.to_vec();
    for i in 0..n {
        let mut s = z[i];
        for k in 0..i {
            s -= l[i][k] * z[k];
        }
        z[i] = s / l[i][i];
    }
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in i + 1..n {
            s -= l[k][i] * z[k];
        }
        z[i] = s / l[i][i];
    }
    Some(z)
}
