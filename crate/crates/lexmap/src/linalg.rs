//! Dense double-precision matrices and the small amount of linear algebra
//! the rest of the crate needs: products, the orthogonalization update,
//! Householder QR (random orthogonal sampling) and a one-sided Jacobi SVD
//! (Procrustes, polar factors).

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Borrowed view of the leading rows of a matrix. Cheap to copy; used to
/// pass frequency-truncated slices around without copying embedding data.
#[derive(Debug, Clone, Copy)]
pub struct MatRef<'a> {
    pub rows: usize,
    pub cols: usize,
    pub data: &'a [f64],
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::Shape("ragged row lengths".into()));
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix { rows: r, cols: c, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_ref(&self) -> MatRef<'_> {
        MatRef {
            rows: self.rows,
            cols: self.cols,
            data: &self.data,
        }
    }

    /// View of rows `0..end` (clamped to the row count); no copy.
    pub fn leading_rows(&self, end: usize) -> MatRef<'_> {
        let end = end.min(self.rows);
        MatRef {
            rows: end,
            cols: self.cols,
            data: &self.data[..end * self.cols],
        }
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        self.as_ref().matmul(other.as_ref())
    }

    /// `self * other^T`.
    pub fn matmul_nt(&self, other: &Matrix) -> Result<Matrix> {
        self.as_ref().matmul_nt(other.as_ref())
    }

    /// `self^T * other`.
    pub fn matmul_tn(&self, other: &Matrix) -> Result<Matrix> {
        self.as_ref().matmul_tn(other.as_ref())
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, other: &Matrix, s: f64) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Shape(format!(
                "add_scaled {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Max-abs entry of `self - other`; matrices must share a shape.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

impl<'a> MatRef<'a> {
    pub fn row(&self, r: usize) -> &'a [f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Sub-view of rows `r0..r1`.
    pub fn rows_range(&self, r0: usize, r1: usize) -> MatRef<'a> {
        debug_assert!(r0 <= r1 && r1 <= self.rows);
        MatRef {
            rows: r1 - r0,
            cols: self.cols,
            data: &self.data[r0 * self.cols..r1 * self.cols],
        }
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.to_vec(),
        }
    }

    pub fn matmul(&self, other: MatRef<'_>) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "matmul {}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let arow = self.row(i);
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &aik) in arow.iter().enumerate() {
                let brow = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += aik * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matmul_nt(&self, other: MatRef<'_>) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::Shape(format!(
                "matmul_nt {}x{} * ({}x{})^T",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let arow = self.row(i);
            let orow = &mut out.data[i * other.rows..(i + 1) * other.rows];
            for (j, o) in orow.iter_mut().enumerate() {
                let brow = other.row(j);
                let mut acc = 0.0;
                for (&a, &b) in arow.iter().zip(brow) {
                    acc += a * b;
                }
                *o = acc;
            }
        }
        Ok(out)
    }

    pub fn matmul_tn(&self, other: MatRef<'_>) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::Shape(format!(
                "matmul_tn ({}x{})^T * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let arow = self.row(k);
            let brow = other.row(k);
            for (i, &a) in arow.iter().enumerate() {
                let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }
}

/// One step of the iterative orthogonalization `(1+beta)*M - beta*M*M^T*M`,
/// pulling a near-orthogonal matrix toward the orthogonal manifold.
/// Orthogonal matrices are exact fixed points.
pub fn orthogonalize_update(m: &Matrix, beta: f64) -> Result<Matrix> {
    if m.rows != m.cols {
        return Err(Error::Shape(format!(
            "orthogonalize_update needs a square matrix, got {}x{}",
            m.rows, m.cols
        )));
    }
    let mmt = m.matmul_nt(m)?;
    let mmtm = mmt.matmul(m)?;
    let mut out = m.clone();
    out.scale(1.0 + beta);
    out.add_scaled(&mmtm, -beta)?;
    Ok(out)
}

/// `max_abs(M^T M - I)`: how far a matrix is from orthogonality.
pub fn orthogonality_residual(m: &Matrix) -> f64 {
    let mut gram = m
        .matmul_tn(m)
        .expect("square product of a matrix with itself");
    let n = gram.rows;
    for i in 0..n {
        gram.data[i * n + i] -= 1.0;
    }
    gram.max_abs()
}

/// d x d matrix with i.i.d. standard normal entries, deterministic per rng.
pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut StdRng) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    Matrix { rows, cols, data }
}

/// Householder QR: `a = Q R`. Returns (Q, R) with Q orthogonal.
pub fn householder_qr(a: &Matrix) -> (Matrix, Matrix) {
    let m = a.rows;
    let n = a.cols;
    let mut r = a.clone();
    let mut q = Matrix::identity(m);

    for k in 0..n.min(m.saturating_sub(1)) {
        // Householder vector for column k below the diagonal.
        let mut norm = 0.0;
        for i in k..m {
            norm += r.get(i, k) * r.get(i, k);
        }
        let norm = norm.sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if r.get(k, k) >= 0.0 { -norm } else { norm };
        let mut v = vec![0.0; m - k];
        v[0] = r.get(k, k) - alpha;
        for i in k + 1..m {
            v[i - k] = r.get(i, k);
        }
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }

        // Apply H = I - 2 v v^T / (v^T v) to R (left) and accumulate into Q (right).
        for j in k..n {
            let mut dot = 0.0;
            for i in k..m {
                dot += v[i - k] * r.get(i, j);
            }
            let f = 2.0 * dot / vnorm2;
            for i in k..m {
                let val = r.get(i, j) - f * v[i - k];
                r.set(i, j, val);
            }
        }
        for i in 0..m {
            let mut dot = 0.0;
            for j in k..m {
                dot += q.get(i, j) * v[j - k];
            }
            let f = 2.0 * dot / vnorm2;
            for j in k..m {
                let val = q.get(i, j) - f * v[j - k];
                q.set(i, j, val);
            }
        }
    }
    (q, r)
}

/// Uniformly-ish random orthogonal d x d matrix: QR of a seeded Gaussian
/// matrix, sign-corrected so R has a positive diagonal. Deterministic per seed.
pub fn random_orthogonal(d: usize, seed: u64) -> Matrix {
    let mut rng = StdRng::seed_from_u64(seed);
    random_orthogonal_from(d, &mut rng)
}

/// As [`random_orthogonal`] but drawing from a caller-owned rng stream.
pub fn random_orthogonal_from(d: usize, rng: &mut StdRng) -> Matrix {
    let g = gaussian_matrix(d, d, rng);
    let (mut q, r) = householder_qr(&g);
    for k in 0..d {
        if r.get(k, k) < 0.0 {
            for i in 0..d {
                let v = -q.get(i, k);
                q.set(i, k, v);
            }
        }
    }
    q
}

/// Thin SVD `a = U diag(s) V^T` of a square matrix via one-sided Jacobi.
/// Singular values are returned in descending order; U is completed to a
/// full orthogonal basis even when `a` is rank-deficient.
pub fn jacobi_svd(a: &Matrix) -> Result<(Matrix, Vec<f64>, Matrix)> {
    if a.rows != a.cols {
        return Err(Error::Shape(format!(
            "jacobi_svd expects a square matrix, got {}x{}",
            a.rows, a.cols
        )));
    }
    let n = a.rows;
    // Work on columns of B; accumulate rotations into V so that B = A V.
    let mut b = a.clone();
    let mut v = Matrix::identity(n);

    let eps = 1e-15;
    let max_sweeps = 60;
    for _ in 0..max_sweeps {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for i in 0..n {
                    let bp = b.get(i, p);
                    let bq = b.get(i, q);
                    alpha += bp * bp;
                    beta += bq * bq;
                    gamma += bp * bq;
                }
                if gamma.abs() <= eps * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt().max(f64::MIN_POSITIVE));
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..n {
                    let bp = b.get(i, p);
                    let bq = b.get(i, q);
                    b.set(i, p, c * bp - s * bq);
                    b.set(i, q, s * bp + c * bq);
                    let vp = v.get(i, p);
                    let vq = v.get(i, q);
                    v.set(i, p, c * vp - s * vq);
                    v.set(i, q, s * vp + c * vq);
                }
            }
        }
        if off < 1e-14 {
            break;
        }
    }

    // Column norms are the singular values; normalized columns form U.
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|i| b.get(i, j).powi(2)).sum::<f64>().sqrt())
        .collect();
    order.sort_by(|&x, &y| norms[y].partial_cmp(&norms[x]).unwrap().then(x.cmp(&y)));

    let scale = norms.iter().cloned().fold(0.0f64, f64::max);
    let rank_tol = scale * 1e-13;
    let mut u = Matrix::zeros(n, n);
    let mut s_out = Vec::with_capacity(n);
    let mut v_out = Matrix::zeros(n, n);
    for (new_j, &old_j) in order.iter().enumerate() {
        s_out.push(norms[old_j]);
        for i in 0..n {
            v_out.set(i, new_j, v.get(i, old_j));
        }
        if norms[old_j] > rank_tol && norms[old_j] > 0.0 {
            for i in 0..n {
                u.set(i, new_j, b.get(i, old_j) / norms[old_j]);
            }
        }
    }
    // Complete U where columns collapsed (rank-deficient input): Gram-Schmidt
    // canonical basis vectors against the columns filled so far.
    for j in 0..n {
        let col_norm: f64 = (0..n).map(|i| u.get(i, j).powi(2)).sum::<f64>().sqrt();
        if col_norm > 0.5 {
            continue;
        }
        let mut filled = false;
        for cand in 0..n {
            let mut col = vec![0.0; n];
            col[cand] = 1.0;
            for jj in 0..n {
                if jj == j {
                    continue;
                }
                let dot: f64 = (0..n).map(|i| u.get(i, jj) * col[i]).sum();
                for (i, c) in col.iter_mut().enumerate() {
                    *c -= dot * u.get(i, jj);
                }
            }
            let nrm: f64 = col.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nrm > 1e-6 {
                for (i, c) in col.iter().enumerate() {
                    u.set(i, j, c / nrm);
                }
                filled = true;
                break;
            }
        }
        if !filled {
            return Err(Error::Shape("SVD basis completion failed".into()));
        }
    }

    Ok((u, s_out, v_out))
}

/// Orthogonal polar factor of a square matrix: `U V^T` from its SVD. For a
/// matrix near the orthogonal manifold this is its closest orthogonal matrix.
pub fn polar_orthogonal(a: &Matrix) -> Result<Matrix> {
    let (u, _, v) = jacobi_svd(a)?;
    u.matmul_nt(&v)
}
