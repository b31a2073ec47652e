//! Target-response design and the MSE-optimal receive filter.
//!
//! The receive filter W = F (HᵀH + N0 I)⁻¹ Hᵀ maps the received frame
//! into the signal space of a target response F with memory nu < L. The
//! memoryless target F = I degenerates to the plain LMMSE equalizer; the
//! full target F = H reproduces the channel itself.
//!
//! All large solves run against the banded system S = N0⁻¹ HᵀH + I in a
//! re/im-interleaved index order, where S is exactly banded because the
//! tall convolution matrix has a Toeplitz Gram matrix. The Takahashi
//! selected inverse of S supplies every entry of B = S⁻¹ the design
//! needs: the steady-state window for the eigen-target, and the
//! band-local quadratic forms behind diag(F B Fᵀ).

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{cond_est_spd, BandLdlt, BandSym, Mat};
use crate::model::{real_toeplitz, RealChannel};

/// Condition-number cap for the pseudo-inverse path.
pub const PINV_COND_CAP: f64 = 1e12;

/// How the target response is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum ShorteningMode {
    /// F = I, nu = 0: plain LMMSE.
    Identity,
    /// Unit-norm minimum eigenvector of the steady-state window of
    /// B = (N0⁻¹HᵀH + I)⁻¹, the classical MMSE target design.
    MmseMinEig,
    /// Caller-supplied taps of length nu + 1.
    FixedTaps(Vec<Complex64>),
    /// F = H, nu = L: the unshortened channel.
    Full,
}

/// Interleaves a block-ordered real vector [re..., im...] by component.
pub fn to_interleaved(block: &[f64]) -> Vec<f64> {
    let n = block.len() / 2;
    let mut out = vec![0.0; 2 * n];
    for i in 0..n {
        out[2 * i] = block[i];
        out[2 * i + 1] = block[n + i];
    }
    out
}

/// Inverse of [`to_interleaved`].
pub fn from_interleaved(il: &[f64]) -> Vec<f64> {
    let n = il.len() / 2;
    let mut out = vec![0.0; 2 * n];
    for i in 0..n {
        out[i] = il[2 * i];
        out[n + i] = il[2 * i + 1];
    }
    out
}

/// Autocorrelation r(d) = sum_j conj(t_j) t_{j+d} for d = 0..=memory.
pub fn autocorrelation(taps: &[Complex64]) -> Vec<Complex64> {
    let l = taps.len() - 1;
    (0..=l)
        .map(|d| {
            taps.iter()
                .take(taps.len() - d)
                .zip(taps.iter().skip(d))
                .map(|(a, b)| a.conj() * b)
                .sum()
        })
        .collect()
}

/// Assembles the real interleaved banded form of
/// `scale * (T^H T) + diag_add * I`, where T is a tall complex Toeplitz
/// convolution matrix with the given autocorrelation. The Gram matrix of
/// a tall convolution is exactly Toeplitz, so the band is exact.
pub fn hermitian_toeplitz_band(
    n: usize,
    autocorr: &[Complex64],
    scale: f64,
    diag_add: f64,
) -> BandSym {
    let l = autocorr.len() - 1;
    let mut s = BandSym::zeros(2 * n, 2 * l + 1);
    for a in 0..n {
        for d in 0..=l.min(n - 1 - a) {
            let b = a + d;
            // Gram entry (a, a+d) of a tall convolution is conj(r(d))
            let k = autocorr[d].conj() * scale;
            if d == 0 {
                s.set(2 * a, 2 * a, k.re + diag_add);
                s.set(2 * a + 1, 2 * a + 1, k.re + diag_add);
                // Hermitian diagonal is real; the cross term is zero
            } else {
                s.set(2 * a, 2 * b, k.re);
                s.set(2 * a + 1, 2 * b + 1, k.re);
                s.set(2 * a, 2 * b + 1, -k.im);
                s.set(2 * a + 1, 2 * b, k.im);
            }
        }
    }
    s
}

/// A designed target response with its receive filter and cached solver
/// state for one (channel, SNR, nu) triple.
#[derive(Debug, Clone)]
pub struct ShorteningDesign {
    pub nu: usize,
    /// Target taps f_0..f_nu.
    pub taps: Vec<Complex64>,
    pub n: usize,
    pub n0: f64,
    /// Banded LDL^T factor of S = N0⁻¹HᵀH + I (interleaved order).
    s_factor: BandLdlt,
    /// Selected inverse of S: the in-band entries of B = S⁻¹.
    s_selinv: BandSym,
    /// Dense receive filter, 2(N+nu) x 2(N+L).
    w: Mat,
    /// diag(F Fᵀ) in block order, length 2(N+nu).
    fft_diag: Vec<f64>,
    /// Channel autocorrelation, for downstream banded assemblies.
    pub autocorr_h: Vec<Complex64>,
}

/// Designs the target response and receive filter.
pub fn design(channel: &RealChannel, nu: usize, mode: &ShorteningMode) -> Result<ShorteningDesign> {
    let l = channel.memory();
    let n = channel.n;
    if nu > l {
        return Err(Error::InvalidArgument(format!(
            "target memory nu={nu} exceeds channel memory L={l}"
        )));
    }
    let autocorr_h = autocorrelation(channel.cir().taps());
    let s = hermitian_toeplitz_band(n, &autocorr_h, 1.0 / channel.n0, 1.0);
    let s_factor = s.ldlt()?;
    let s_selinv = s_factor.selected_inverse();

    let taps: Vec<Complex64> = match mode {
        ShorteningMode::Identity => {
            if nu != 0 {
                return Err(Error::InvalidArgument(format!(
                    "identity mode requires nu=0, got {nu}"
                )));
            }
            vec![Complex64::new(1.0, 0.0)]
        }
        ShorteningMode::Full => {
            if nu != l {
                return Err(Error::InvalidArgument(format!(
                    "full mode requires nu=L={l}, got {nu}"
                )));
            }
            channel.cir().taps().to_vec()
        }
        ShorteningMode::FixedTaps(t) => {
            if t.len() != nu + 1 {
                return Err(Error::InvalidArgument(format!(
                    "fixed taps length {} does not match nu+1={}",
                    t.len(),
                    nu + 1
                )));
            }
            t.clone()
        }
        ShorteningMode::MmseMinEig => min_eig_taps(&s_selinv, n, nu)?,
    };

    let fft_diag = fft_diagonal(&taps, n, nu);
    let w = materialize_w(channel, &taps, &s_factor);
    Ok(ShorteningDesign {
        nu,
        taps,
        n,
        n0: channel.n0,
        s_factor,
        s_selinv,
        w,
        fft_diag,
        autocorr_h,
    })
}

/// Steady-state principal window of B (real part block), rows/cols
/// k..k+nu with k = floor(N/2).
pub fn b_window(selinv: &BandSym, n: usize, nu: usize) -> Mat {
    let k = n / 2;
    assert!(k + nu < n, "window exceeds block length");
    Mat::from_fn(nu + 1, nu + 1, |u, v| selinv.get(2 * (k + u), 2 * (k + v)))
}

fn min_eig_taps(selinv: &BandSym, n: usize, nu: usize) -> Result<Vec<Complex64>> {
    let bw = b_window(selinv, n, nu);
    let (_, vecs) = crate::linalg::sym_eig(&bw)?;
    let mut f: Vec<f64> = (0..=nu).map(|i| vecs[(i, 0)]).collect();
    // sign convention: strongest tap positive
    let strongest = f
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    if f[strongest] < 0.0 {
        for v in &mut f {
            *v = -*v;
        }
    }
    Ok(f.into_iter().map(|v| Complex64::new(v, 0.0)).collect())
}

fn fft_diagonal(taps: &[Complex64], n: usize, nu: usize) -> Vec<f64> {
    let n_out = n + nu;
    let mut diag = vec![0.0; 2 * n_out];
    for i in 0..n_out {
        let mut e = 0.0;
        for (k, t) in taps.iter().enumerate() {
            if i >= k && i - k < n {
                e += t.norm_sqr();
            }
        }
        diag[i] = e;
        diag[n_out + i] = e;
    }
    diag
}

/// Builds W = F (HᵀH + N0 I)⁻¹ Hᵀ row by row through banded solves.
fn materialize_w(channel: &RealChannel, taps: &[Complex64], s_factor: &BandLdlt) -> Mat {
    let n = channel.n;
    let nu = taps.len() - 1;
    let rows_out = 2 * (n + nu);
    let cols = 2 * channel.n_out();
    let mut w = Mat::zeros(rows_out, cols);
    let inv_n0 = 1.0 / channel.n0;
    for row in 0..rows_out {
        let f_row = f_row_block(taps, n, nu, row);
        if f_row.iter().all(|&(_, c)| c == 0.0) {
            continue;
        }
        let mut u = vec![0.0; 2 * n];
        for &(idx, c) in &f_row {
            u[idx] = c;
        }
        let v = from_interleaved(&s_factor.solve(&to_interleaved(&u)));
        let hv = channel.apply_h(&v);
        let out = w.row_mut(row);
        for (o, x) in out.iter_mut().zip(hv) {
            *o = x * inv_n0;
        }
    }
    w
}

/// Nonzero entries of one real row of F in block order:
/// (column, coefficient) pairs.
fn f_row_block(taps: &[Complex64], n: usize, nu: usize, row: usize) -> Vec<(usize, f64)> {
    let n_out = n + nu;
    let (j, imag_row) = if row < n_out {
        (row, false)
    } else {
        (row - n_out, true)
    };
    let mut entries = Vec::with_capacity(2 * (nu + 1));
    for (k, t) in taps.iter().enumerate() {
        if j >= k && j - k < n {
            let col = j - k;
            if imag_row {
                entries.push((col, t.im));
                entries.push((n + col, t.re));
            } else {
                entries.push((col, t.re));
                entries.push((n + col, -t.im));
            }
        }
    }
    entries
}

impl ShorteningDesign {
    /// Dense target matrix, 2(N+nu) x 2N.
    pub fn f_dense(&self) -> Mat {
        real_toeplitz(&self.taps, self.n)
    }

    /// Nonzero (column, coefficient) pairs of one real row of F, block
    /// order.
    pub fn f_row_entries(&self, row: usize) -> Vec<(usize, f64)> {
        f_row_block(&self.taps, self.n, self.nu, row)
    }

    /// Dense receive filter (reference path).
    pub fn w(&self) -> &Mat {
        &self.w
    }

    pub fn fft_diag(&self) -> &[f64] {
        &self.fft_diag
    }

    pub fn s_factor(&self) -> &BandLdlt {
        &self.s_factor
    }

    pub fn s_selinv(&self) -> &BandSym {
        &self.s_selinv
    }

    /// Number of complex components of the transformed observation.
    pub fn n_out(&self) -> usize {
        self.n + self.nu
    }

    /// Applies F to a block-ordered real vector of length 2N.
    pub fn apply_f(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(x.len(), 2 * n);
        let n_out = self.n_out();
        let mut y = vec![0.0; 2 * n_out];
        for (k, t) in self.taps.iter().enumerate() {
            for i in 0..n {
                let xr = x[i];
                let xi = x[n + i];
                y[i + k] += t.re * xr - t.im * xi;
                y[n_out + i + k] += t.im * xr + t.re * xi;
            }
        }
        y
    }

    /// Shortened observation y^F = W y through the banded fast path;
    /// identical (up to roundoff) to `self.w().matvec(y)`.
    pub fn shortened_observation(&self, channel: &RealChannel, y: &[f64]) -> Vec<f64> {
        let hty: Vec<f64> = channel.apply_ht(y).iter().map(|v| v / self.n0).collect();
        let bx = from_interleaved(&self.s_factor.solve(&to_interleaved(&hty)));
        self.apply_f(&bx)
    }

    /// diag(F B Fᵀ) in block order, from the selected inverse of S.
    pub fn sigma0_diag(&self) -> Vec<f64> {
        let n_out = self.n_out();
        let mut diag = vec![0.0; 2 * n_out];
        for row in 0..2 * n_out {
            let entries = f_row_block(&self.taps, self.n, self.nu, row);
            let mut acc = 0.0;
            for &(p, cp) in &entries {
                for &(q, cq) in &entries {
                    acc += cp * cq * self.b_entry(p, q);
                }
            }
            diag[row] = acc;
        }
        diag
    }

    /// Entry of B = S⁻¹ for block-order indices; both must fall inside
    /// the band (true for any pair within one tap span).
    fn b_entry(&self, p: usize, q: usize) -> f64 {
        let n = self.n;
        let ip = if p < n { 2 * p } else { 2 * (p - n) + 1 };
        let iq = if q < n { 2 * q } else { 2 * (q - n) + 1 };
        self.s_selinv.get(ip, iq)
    }

    /// Pseudo-inverse F⁺ = (FᵀF)⁻¹Fᵀ, 2N x 2(N+nu). Fails when the
    /// condition estimate of FᵀF exceeds the cap.
    pub fn pseudo_inverse_f(&self) -> Result<Mat> {
        let n = self.n;
        let autocorr_f = autocorrelation(&self.taps);
        let ftf = hermitian_toeplitz_band(n, &autocorr_f, 1.0, 0.0);
        let cond = cond_est_spd(&ftf)
            .map_err(|e| Error::Numerical(format!("FᵀF singular in pseudo-inverse: {e}")))?;
        if cond > PINV_COND_CAP {
            return Err(Error::Numerical(format!(
                "FᵀF condition estimate {cond:.3e} exceeds cap {PINV_COND_CAP:.0e}"
            )));
        }
        let factor = ftf.ldlt()?;
        let rows_out = 2 * self.n_out();
        let mut fplus = Mat::zeros(2 * n, rows_out);
        for col in 0..rows_out {
            let entries = f_row_block(&self.taps, n, self.nu, col);
            if entries.is_empty() {
                continue;
            }
            let mut u = vec![0.0; 2 * n];
            for &(idx, c) in &entries {
                u[idx] = c;
            }
            let v = from_interleaved(&factor.solve(&to_interleaved(&u)));
            for (r, val) in v.into_iter().enumerate() {
                fplus[(r, col)] = val;
            }
        }
        Ok(fplus)
    }
}
