//! Dense and banded real linear algebra.
//!
//! Everything in this crate runs on plain `f64`. Dense matrices are
//! row-major; symmetric banded matrices store the lower band only. The
//! banded Cholesky / selected-inverse pair is the workhorse of the fast
//! estimator paths, the dense routines back the reference paths and the
//! test oracles.

use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// `self * other`, blocked over the middle index so the inner loop
    /// runs contiguously over rows of `other`.
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &aik) in a_row.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                let b_row = other.row(k);
                for (o, &b) in out_row.iter_mut().zip(b_row.iter()) {
                    *o += aik * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "matvec dimension mismatch");
        self.data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `self^T * x` without materializing the transpose.
    pub fn tr_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, x.len(), "tr_matvec dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for (row, &xi) in self.data.chunks_exact(self.cols).zip(x) {
            if xi == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(row) {
                *o += xi * a;
            }
        }
        out
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn add_assign(&mut self, other: &Mat) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols))
            .map(|i| self[(i, i)])
            .collect()
    }

    pub fn max_abs_diff(&self, other: &Mat) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Dense Cholesky factor (lower triangular) of a symmetric positive
/// definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    // lower triangle, row-major full storage
    l: Mat,
}

impl Cholesky {
    pub fn new(a: &Mat) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::InvalidArgument(
                "cholesky of non-square matrix".into(),
            ));
        }
        let mut l = a.clone();
        for j in 0..n {
            for i in 0..j {
                l[(i, j)] = 0.0;
            }
            let mut d = l[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Numerical(format!(
                    "cholesky pivot {d:.3e} at index {j}: matrix not positive definite"
                )));
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in j + 1..n {
                let mut s = l[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Cholesky { n, l })
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut x = b.to_vec();
        // forward
        for i in 0..self.n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.l[(i, k)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        // backward
        for i in (0..self.n).rev() {
            let mut s = x[i];
            for k in i + 1..self.n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    /// Full inverse; used by reference paths and oracles only.
    pub fn inverse(&self) -> Mat {
        let n = self.n;
        // invert L in place, then A^-1 = L^-T L^-1
        let mut linv = Mat::zeros(n, n);
        for j in 0..n {
            linv[(j, j)] = 1.0 / self.l[(j, j)];
            for i in j + 1..n {
                let mut s = 0.0;
                for k in j..i {
                    s -= self.l[(i, k)] * linv[(k, j)];
                }
                linv[(i, j)] = s / self.l[(i, i)];
            }
        }
        let mut inv = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = 0.0;
                for k in i..n {
                    s += linv[(k, i)] * linv[(k, j)];
                }
                inv[(i, j)] = s;
                inv[(j, i)] = s;
            }
        }
        inv
    }
}

/// Symmetric banded matrix, lower band storage.
///
/// `band[d]` holds the d-th sub-diagonal: `band[d][i] = A[i + d, i]` for
/// `i < n - d`, `d = 0..=bw`.
#[derive(Debug, Clone)]
pub struct BandSym {
    n: usize,
    bw: usize,
    band: Vec<Vec<f64>>,
}

impl BandSym {
    pub fn zeros(n: usize, bw: usize) -> Self {
        let bw = bw.min(n.saturating_sub(1));
        let band = (0..=bw).map(|d| vec![0.0; n - d]).collect();
        BandSym { n, bw, band }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        let d = hi - lo;
        if d > self.bw {
            0.0
        } else {
            self.band[d][lo]
        }
    }

    /// Adds `v` at (i, j) and, implicitly, (j, i). Panics outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        let d = hi - lo;
        assert!(d <= self.bw, "entry ({i},{j}) outside band {}", self.bw);
        self.band[d][lo] += v;
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        self.band[hi - lo][lo] = v;
    }

    pub fn to_dense(&self) -> Mat {
        Mat::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let mut s = self.band[0][i] * x[i];
            for d in 1..=self.bw {
                if i >= d {
                    s += self.band[d][i - d] * x[i - d];
                }
                if i + d < self.n {
                    s += self.band[d][i] * x[i + d];
                }
            }
            y[i] = s;
        }
        y
    }

    /// LDL^T factorization preserving the band.
    pub fn ldlt(&self) -> Result<BandLdlt> {
        let n = self.n;
        let bw = self.bw;
        let mut l = self.band.clone(); // l[d][j] = L[j+d, j] for d >= 1
        let mut d = vec![0.0; n];
        for j in 0..n {
            let mut dj = l[0][j];
            let k0 = j.saturating_sub(bw);
            for k in k0..j {
                let ljk = l[j - k][k];
                dj -= ljk * ljk * d[k];
            }
            if !(dj > 0.0) || !dj.is_finite() {
                return Err(Error::Numerical(format!(
                    "banded ldlt pivot {dj:.3e} at index {j}: matrix not positive definite"
                )));
            }
            d[j] = dj;
            let imax = (j + bw).min(n - 1);
            for i in j + 1..=imax {
                let mut s = l[i - j][j];
                let k0 = i.saturating_sub(bw);
                for k in k0..j {
                    s -= l[i - k][k] * l[j - k][k] * d[k];
                }
                l[i - j][j] = s / dj;
            }
        }
        Ok(BandLdlt { n, bw, l, d })
    }
}

/// Banded LDL^T factor (unit lower triangular L within the band).
#[derive(Debug, Clone)]
pub struct BandLdlt {
    n: usize,
    bw: usize,
    // l[d][j] = L[j+d, j], d >= 1; l[0] unused after factorization
    l: Vec<Vec<f64>>,
    d: Vec<f64>,
}

impl BandLdlt {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut x = b.to_vec();
        // L z = b
        for j in 0..self.n {
            let xj = x[j];
            if xj != 0.0 {
                let imax = (j + self.bw).min(self.n - 1);
                for i in j + 1..=imax {
                    x[i] -= self.l[i - j][j] * xj;
                }
            }
        }
        // D w = z
        for (xi, di) in x.iter_mut().zip(&self.d) {
            *xi /= di;
        }
        // L^T x = w
        for j in (0..self.n).rev() {
            let imax = (j + self.bw).min(self.n - 1);
            let mut s = x[j];
            for i in j + 1..=imax {
                s -= self.l[i - j][j] * x[i];
            }
            x[j] = s;
        }
        x
    }

    /// Selected inverse: entries of A^-1 on the band of A, via the
    /// Takahashi recursions. Exact (up to roundoff) for the returned
    /// entries, O(n * bw^2).
    pub fn selected_inverse(&self) -> BandSym {
        let n = self.n;
        let bw = self.bw;
        let mut z = BandSym::zeros(n, bw);
        for i in (0..n).rev() {
            let jmax = (i + bw).min(n - 1);
            // off-diagonal entries Z[i, j], j > i, then the diagonal
            for j in (i..=jmax).rev() {
                let kmax = (i + bw).min(n - 1);
                let mut s = if i == j { 1.0 / self.d[i] } else { 0.0 };
                for k in i + 1..=kmax {
                    let lki = self.l[k - i][i];
                    if lki != 0.0 {
                        s -= lki * z.get(k, j);
                    }
                }
                z.set(j, i, s);
            }
        }
        z
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order with matching eigenvector
/// columns. Intended for the small systems of this crate (target-response
/// design, reference-path checks); cost grows cubically.
pub fn sym_eig(a: &Mat) -> Result<(Vec<f64>, Mat)> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::InvalidArgument(
            "sym_eig of non-square matrix".into(),
        ));
    }
    let mut m = a.clone();
    let mut v = Mat::identity(n);
    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        if off.sqrt() < 1e-14 * (1.0 + frobenius(&m)) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].partial_cmp(&m[(j, j)]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| m[(i, i)]).collect();
    let vecs = Mat::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok((vals, vecs))
}

fn frobenius(m: &Mat) -> f64 {
    m.data.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Rough 2-norm condition estimate of an SPD matrix via power iteration
/// on A and inverse iteration through its factor.
pub fn cond_est_spd(a: &BandSym) -> Result<f64> {
    let n = a.n();
    if n == 0 {
        return Ok(1.0);
    }
    let f = a.ldlt()?;
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.7).sin()).collect();
    let mut lam_max = 0.0;
    for _ in 0..30 {
        let y = a.matvec(&x);
        let norm = vec_norm(&y);
        if norm == 0.0 {
            break;
        }
        lam_max = norm / vec_norm(&x);
        x = y;
        normalize(&mut x);
    }
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 - (i as f64 * 0.3).cos()).collect();
    normalize(&mut x);
    let mut lam_min = f64::INFINITY;
    for _ in 0..30 {
        let y = f.solve(&x);
        let norm = vec_norm(&y);
        if !norm.is_finite() || norm == 0.0 {
            break;
        }
        lam_min = 1.0 / norm;
        x = y;
        normalize(&mut x);
    }
    Ok(lam_max / lam_min)
}

pub fn vec_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn normalize(x: &mut [f64]) {
    let n = vec_norm(x);
    if n > 0.0 {
        for v in x {
            *v /= n;
        }
    }
}

pub fn max_abs_diff_slice(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
