//! Compressed sparse row matrices, ILU(0) factorisation and right
//! preconditioned BiCGSTAB.
//!
//! Convergence of the iterative solver is declared on the true relative
//! residual `||b - A x|| / ||b||`, which right preconditioning makes
//! available at no extra cost.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SparseError {
    #[error("dimension mismatch: matrix is {rows}x{cols}, vector has length {len}")]
    DimensionMismatch { rows: usize, cols: usize, len: usize },
    #[error("matrix must be square (is {rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("missing diagonal entry in row {0}")]
    MissingDiagonal(usize),
    #[error("zero pivot in row {0}")]
    ZeroPivot(usize),
    #[error("BiCGSTAB breakdown ({what}) at iteration {iteration}, residual {residual:.3e}")]
    Breakdown { what: &'static str, iteration: usize, residual: f64, best: Vec<f64> },
    #[error("BiCGSTAB did not converge in {max_iter} iterations (residual {residual:.3e})")]
    NoConvergence { max_iter: usize, residual: f64, best: Vec<f64> },
}

/// Square or rectangular CSR matrix with sorted column indices per row.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Immutable sparsity pattern shared between repeated assemblies.
#[derive(Debug, Clone)]
pub struct CsrPattern {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl CsrPattern {
    /// Build from per-row column lists (duplicates allowed, will be merged).
    pub fn from_row_cols(n_cols: usize, mut rows: Vec<Vec<usize>>) -> Self {
        let n_rows = rows.len();
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for cols in rows.iter_mut() {
            cols.sort_unstable();
            cols.dedup();
            col_idx.extend_from_slice(cols);
            row_ptr.push(col_idx.len());
        }
        CsrPattern { n_rows, n_cols, row_ptr, col_idx }
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    /// Index into the value array for entry (row, col); the entry must exist.
    pub fn index_of(&self, row: usize, col: usize) -> usize {
        let lo = self.row_ptr[row];
        let hi = self.row_ptr[row + 1];
        let off = self.col_idx[lo..hi]
            .binary_search(&col)
            .unwrap_or_else(|_| panic!("entry ({row}, {col}) not in pattern"));
        lo + off
    }

    pub fn matrix_with_values(&self, values: Vec<f64>) -> CsrMatrix {
        assert_eq!(values.len(), self.nnz());
        CsrMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values,
        }
    }

    pub fn zero_matrix(&self) -> CsrMatrix {
        self.matrix_with_values(vec![0.0; self.nnz()])
    }
}

impl CsrMatrix {
    /// Build directly from raw CSR arrays. The caller guarantees sorted,
    /// duplicate-free column indices per row.
    pub fn from_parts_unchecked(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> CsrMatrix {
        debug_assert_eq!(row_ptr.len(), n_rows + 1);
        debug_assert_eq!(col_idx.len(), values.len());
        CsrMatrix { n_rows, n_cols, row_ptr, col_idx, values }
    }

    /// Assemble from (row, col, value) triplets; duplicate entries add up.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> CsrMatrix {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n_rows];
        for &(r, c, _) in triplets {
            rows[r].push(c);
        }
        let pattern = CsrPattern::from_row_cols(n_cols, rows);
        let mut m = pattern.zero_matrix();
        for &(r, c, v) in triplets {
            let idx = pattern.index_of(r, c);
            m.values[idx] += v;
        }
        m
    }

    pub fn identity(n: usize) -> CsrMatrix {
        CsrMatrix {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n_cols]; self.n_rows];
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                out[r][c] += v;
            }
        }
        out
    }

    /// y = A x.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>, SparseError> {
        if x.len() != self.n_cols {
            return Err(SparseError::DimensionMismatch {
                rows: self.n_rows,
                cols: self.n_cols,
                len: x.len(),
            });
        }
        let mut y = vec![0.0; self.n_rows];
        self.spmv_into(x, &mut y);
        Ok(y)
    }

    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.n_rows {
            let lo = self.row_ptr[r];
            let hi = self.row_ptr[r + 1];
            let mut acc = 0.0;
            for k in lo..hi {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[r] = acc;
        }
    }
}

/// Combined L (unit diagonal, implicit) and U factors on the sparsity
/// pattern of A: zero fill-in.
#[derive(Debug, Clone)]
pub struct IluFactors {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    lu: Vec<f64>,
    diag: Vec<usize>,
    /// Rows where a near-zero pivot was replaced by a scaled fallback.
    pub shifted_pivots: Vec<usize>,
}

/// Standard ILU(0): the factorisation walks rows in order, eliminating with
/// previously factored rows, and only keeps entries inside A's pattern.
pub fn ilu0(a: &CsrMatrix) -> Result<IluFactors, SparseError> {
    if a.n_rows != a.n_cols {
        return Err(SparseError::NotSquare { rows: a.n_rows, cols: a.n_cols });
    }
    let n = a.n_rows;
    let row_ptr = a.row_ptr.clone();
    let col_idx = a.col_idx.clone();
    let mut lu = a.values.clone();
    let mut diag = vec![usize::MAX; n];
    for r in 0..n {
        for k in row_ptr[r]..row_ptr[r + 1] {
            if col_idx[k] == r {
                diag[r] = k;
            }
        }
        if diag[r] == usize::MAX {
            return Err(SparseError::MissingDiagonal(r));
        }
    }

    // Position lookup scratch: pos[c] = index of column c in the current row.
    let mut pos = vec![usize::MAX; n];
    let mut shifted = Vec::new();
    for i in 0..n {
        let (lo, hi) = (row_ptr[i], row_ptr[i + 1]);
        let mut row_max: f64 = 0.0;
        for k in lo..hi {
            pos[col_idx[k]] = k;
            row_max = row_max.max(lu[k].abs());
        }
        for k in lo..hi {
            let c = col_idx[k];
            if c >= i {
                break;
            }
            // Eliminate with row c.
            let piv = lu[diag[c]];
            let factor = lu[k] / piv;
            lu[k] = factor;
            for kk in (diag[c] + 1)..row_ptr[c + 1] {
                let cc = col_idx[kk];
                let p = pos[cc];
                if p != usize::MAX {
                    lu[p] -= factor * lu[kk];
                }
            }
        }
        let d = diag[i];
        let threshold = 1e-14 * row_max.max(1e-300);
        if lu[d].abs() < threshold {
            // Newton matrices can pass through near-singular states; shift
            // the pivot rather than aborting, and record the row.
            lu[d] = if lu[d] >= 0.0 { threshold } else { -threshold };
            if lu[d] == 0.0 {
                return Err(SparseError::ZeroPivot(i));
            }
            shifted.push(i);
        }
        for k in lo..hi {
            pos[col_idx[k]] = usize::MAX;
        }
    }
    Ok(IluFactors { n, row_ptr, col_idx, lu, diag, shifted_pivots: shifted })
}

impl IluFactors {
    /// Solve LU z = r by forward and back substitution.
    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        let mut z = r.to_vec();
        self.apply_into(&mut z);
        z
    }

    pub fn apply_into(&self, z: &mut [f64]) {
        let n = self.n;
        // Forward: L has unit diagonal.
        for i in 0..n {
            let mut acc = z[i];
            for k in self.row_ptr[i]..self.diag[i] {
                acc -= self.lu[k] * z[self.col_idx[k]];
            }
            z[i] = acc;
        }
        // Backward.
        for i in (0..n).rev() {
            let mut acc = z[i];
            for k in (self.diag[i] + 1)..self.row_ptr[i + 1] {
                acc -= self.lu[k] * z[self.col_idx[k]];
            }
            z[i] = acc / self.lu[self.diag[i]];
        }
    }
}

/// Result of an iterative solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    /// Final true relative residual.
    pub residual: f64,
}

/// Right-preconditioned BiCGSTAB. `x0` seeds the iteration when given.
/// The returned residual history holds the true relative residual after each
/// iteration.
pub fn bicgstab(
    a: &CsrMatrix,
    b: &[f64],
    precond: Option<&IluFactors>,
    tol: f64,
    max_iter: usize,
    x0: Option<&[f64]>,
) -> Result<SolveReport, SparseError> {
    if a.n_rows != a.n_cols {
        return Err(SparseError::NotSquare { rows: a.n_rows, cols: a.n_cols });
    }
    if b.len() != a.n_rows {
        return Err(SparseError::DimensionMismatch {
            rows: a.n_rows,
            cols: a.n_cols,
            len: b.len(),
        });
    }
    let n = a.n_rows;
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok(SolveReport { x: vec![0.0; n], iterations: 0, residual_history: vec![], residual: 0.0 });
    }

    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    let mut r = b.to_vec();
    let mut ax = vec![0.0; n];
    a.spmv_into(&x, &mut ax);
    for i in 0..n {
        r[i] -= ax[i];
    }
    let mut history = Vec::new();
    let mut res = norm2(&r) / b_norm;
    if res <= tol {
        return Ok(SolveReport { x, iterations: 0, residual_history: history, residual: res });
    }

    let r0 = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut shat = vec![0.0; n];
    let mut t = vec![0.0; n];

    for it in 1..=max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new.abs() < 1e-300 {
            return Err(SparseError::Breakdown { what: "rho", iteration: it, residual: res, best: x });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        preapply(precond, &p, &mut phat);
        a.spmv_into(&phat, &mut v);
        let r0v = dot(&r0, &v);
        if r0v.abs() < 1e-300 {
            return Err(SparseError::Breakdown { what: "r0.v", iteration: it, residual: res, best: x });
        }
        alpha = rho / r0v;
        // s = r - alpha v (reuse r).
        for i in 0..n {
            r[i] -= alpha * v[i];
        }
        if norm2(&r) / b_norm <= tol {
            let mut x_try = x.clone();
            for i in 0..n {
                x_try[i] += alpha * phat[i];
            }
            res = true_residual(a, b, &x_try, b_norm, &mut ax);
            if res <= tol {
                history.push(res);
                return Ok(SolveReport {
                    x: x_try,
                    iterations: it,
                    residual_history: history,
                    residual: res,
                });
            }
        }
        preapply(precond, &r, &mut shat);
        a.spmv_into(&shat, &mut t);
        let tt = dot(&t, &t);
        if tt.abs() < 1e-300 {
            return Err(SparseError::Breakdown { what: "t.t", iteration: it, residual: res, best: x });
        }
        omega = dot(&t, &r) / tt;
        if omega.abs() < 1e-300 {
            return Err(SparseError::Breakdown { what: "omega", iteration: it, residual: res, best: x });
        }
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] -= omega * t[i];
        }
        res = norm2(&r) / b_norm;
        history.push(res);
        if res <= tol {
            // Recompute the true residual explicitly before reporting.
            res = true_residual(a, b, &x, b_norm, &mut ax);
            if res <= tol {
                return Ok(SolveReport { x, iterations: it, residual_history: history, residual: res });
            }
            // Rounding drift between recursive and true residual; keep going.
            r.copy_from_slice(b);
            a.spmv_into(&x, &mut ax);
            for i in 0..n {
                r[i] -= ax[i];
            }
        }
    }
    Err(SparseError::NoConvergence { max_iter, residual: res, best: x })
}

fn preapply(precond: Option<&IluFactors>, r: &[f64], out: &mut [f64]) {
    out.copy_from_slice(r);
    if let Some(f) = precond {
        f.apply_into(out);
    }
}

fn true_residual(a: &CsrMatrix, b: &[f64], x: &[f64], b_norm: f64, scratch: &mut [f64]) -> f64 {
    a.spmv_into(x, scratch);
    let mut acc = 0.0;
    for i in 0..b.len() {
        let d = b[i] - scratch[i];
        acc += d * d;
    }
    acc.sqrt() / b_norm
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
