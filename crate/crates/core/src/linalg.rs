// SPDX-License-Identifier: MIT OR Apache-2.0

//! Small dense kernels for (r+1)-dimensional least squares.

/// Largest supported basis dimension (`degree + 1`).
pub(crate) const MAX_DIM: usize = 9;

pub(crate) type Square = [[f64; MAX_DIM]; MAX_DIM];

/// In-place Cholesky factorization of the leading `dim x dim` block.
///
/// Returns `false` when a pivot is not comfortably positive, i.e. the matrix
/// is numerically singular relative to its own diagonal.
pub(crate) fn cholesky(a: &mut Square, dim: usize) -> bool {
    for j in 0..dim {
        let mut d = a[j][j];
        for k in 0..j {
            d -= a[j][k] * a[j][k];
        }
        if d.is_nan() || d <= 1e-13 * a[j][j].abs() || d <= 0.0 {
            return false;
        }
        let d = d.sqrt();
        a[j][j] = d;
        for i in (j + 1)..dim {
            let mut s = a[i][j];
            for k in 0..j {
                s -= a[i][k] * a[j][k];
            }
            a[i][j] = s / d;
        }
    }
    true
}

/// Solves `L L^T x = b` given the factor produced by [`cholesky`].
pub(crate) fn cholesky_solve(l: &Square, dim: usize, b: &[f64], x: &mut [f64]) {
    for i in 0..dim {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * x[k];
        }
        x[i] = s / l[i][i];
    }
    for i in (0..dim).rev() {
        let mut s = x[i];
        for k in (i + 1)..dim {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
}

/// Householder QR least squares on a column-major `rows x cols` matrix.
///
/// `a` is overwritten and `y` is replaced by `Q^T y`. Returns the solution of
/// the triangular system and the residual sum of squares (the squared norm
/// of the trailing `rows - cols` entries of `Q^T y`). Columns whose
/// transformed diagonal collapses below `tol` relative to the column norm
/// are treated as dependent and given a zero coefficient.
pub(crate) fn householder_lstsq(
    a: &mut [f64],
    rows: usize,
    cols: usize,
    y: &mut [f64],
) -> (Vec<f64>, f64) {
    debug_assert!(rows >= cols);
    let col = |j: usize| j * rows;
    let mut col_norms = vec![0.0; cols];
    for (j, norm) in col_norms.iter_mut().enumerate() {
        *norm = a[col(j)..col(j) + rows]
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
    }
    let mut diag = vec![0.0; cols];
    for j in 0..cols {
        let base = col(j);
        let norm: f64 = a[base + j..base + rows]
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        if norm == 0.0 {
            diag[j] = 0.0;
            continue;
        }
        let alpha = if a[base + j] > 0.0 { -norm } else { norm };
        a[base + j] -= alpha;
        let vnorm2: f64 = a[base + j..base + rows].iter().map(|v| v * v).sum();
        diag[j] = alpha;
        if vnorm2 == 0.0 {
            continue;
        }
        for k in (j + 1)..cols {
            let kb = col(k);
            let dot: f64 = (j..rows).map(|i| a[base + i] * a[kb + i]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in j..rows {
                a[kb + i] -= f * a[base + i];
            }
        }
        let dot: f64 = (j..rows).map(|i| a[base + i] * y[i]).sum();
        let f = 2.0 * dot / vnorm2;
        for i in j..rows {
            y[i] -= f * a[base + i];
        }
    }
    let rss: f64 = y[cols..rows].iter().map(|v| v * v).sum();
    let mut x = vec![0.0; cols];
    for j in (0..cols).rev() {
        if diag[j].abs() <= 1e-12 * col_norms[j].max(f64::MIN_POSITIVE) {
            x[j] = 0.0;
            continue;
        }
        let mut s = y[j];
        for k in (j + 1)..cols {
            s -= a[col(k) + j] * x[k];
        }
        x[j] = s / diag[j];
    }
    (x, rss)
}

/// Minimum-norm solution of the underdetermined system `A x = y` where
/// `A` is `rows x cols` (row-major, `rows <= cols`) with full row rank.
pub(crate) fn min_norm_solve(a: &[f64], rows: usize, cols: usize, y: &[f64]) -> Option<Vec<f64>> {
    // x = A^T (A A^T)^{-1} y
    let mut g: Square = [[0.0; MAX_DIM]; MAX_DIM];
    for i in 0..rows {
        for j in 0..rows {
            g[i][j] = (0..cols).map(|k| a[i * cols + k] * a[j * cols + k]).sum();
        }
    }
    if !cholesky(&mut g, rows) {
        return None;
    }
    let mut w = vec![0.0; rows];
    cholesky_solve(&g, rows, y, &mut w);
    let x = (0..cols)
        .map(|k| (0..rows).map(|i| a[i * cols + k] * w[i]).sum())
        .collect();
    Some(x)
}

/// Sequential least squares by Givens rotations.
///
/// Rows are absorbed one at a time; after each row the running residual sum
/// of squares of the fit over all rows seen so far is available.
pub(crate) struct GivensAccumulator {
    dim: usize,
    r: Square,
    z: [f64; MAX_DIM],
    rss: f64,
}

impl GivensAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            r: [[0.0; MAX_DIM]; MAX_DIM],
            z: [0.0; MAX_DIM],
            rss: 0.0,
        }
    }

    pub fn push(&mut self, row: &[f64], y: f64) {
        let mut w = [0.0; MAX_DIM];
        w[..self.dim].copy_from_slice(&row[..self.dim]);
        let mut yv = y;
        for j in 0..self.dim {
            if w[j] == 0.0 {
                continue;
            }
            let rjj = self.r[j][j];
            let h = rjj.hypot(w[j]);
            let c = rjj / h;
            let s = w[j] / h;
            self.r[j][j] = h;
            w[j] = 0.0;
            for k in (j + 1)..self.dim {
                let a = self.r[j][k];
                let b = w[k];
                self.r[j][k] = c * a + s * b;
                w[k] = -s * a + c * b;
            }
            let a = self.z[j];
            self.z[j] = c * a + s * yv;
            yv = -s * a + c * yv;
        }
        self.rss += yv * yv;
    }

    pub fn rss(&self) -> f64 {
        self.rss
    }
}
