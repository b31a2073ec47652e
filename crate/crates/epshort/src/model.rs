//! Channel impulse responses, the real-valued system model, and frame
//! transmission.
//!
//! A complex CIR h of memory L maps N transmitted symbols to N+L
//! received samples through a tall lower-triangular Toeplitz convolution
//! matrix. All detection runs on the equivalent real-valued model
//!
//! ```text
//!     y = H x + n,    H = [ Re(Ht) -Im(Ht) ]
//!                         [ Im(Ht)  Re(Ht) ]
//! ```
//!
//! with x = [Re; Im] of length 2N and per-real-dimension noise variance
//! N0. There is no cyclic prefix; frame edges see partial convolution
//! windows.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::modulation::Constellation;
use crate::rng::FrameRng;

/// Complex channel impulse response, energy-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct Cir {
    taps: Vec<Complex64>,
}

impl Cir {
    /// Builds a CIR from raw taps and normalizes it to unit energy.
    pub fn new(taps: Vec<Complex64>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::InvalidArgument(
                "CIR must have at least one tap".into(),
            ));
        }
        if taps.iter().any(|t| !t.re.is_finite() || !t.im.is_finite()) {
            return Err(Error::InvalidArgument("CIR taps must be finite".into()));
        }
        let mut cir = Cir { taps };
        cir.normalize()?;
        Ok(cir)
    }

    pub fn taps(&self) -> &[Complex64] {
        &self.taps
    }

    /// Channel memory L = taps - 1.
    pub fn memory(&self) -> usize {
        self.taps.len() - 1
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t.norm_sqr()).sum()
    }

    /// Scales taps to unit energy. CIR energies are normalized (rather
    /// than the peak tap) so SNR definitions stay constellation-only.
    pub fn normalize(&mut self) -> Result<()> {
        let e = self.energy();
        if !(e > 0.0) || !e.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "CIR energy {e} not normalizable"
            )));
        }
        let s = e.sqrt().recip();
        for t in &mut self.taps {
            *t *= s;
        }
        Ok(())
    }

    /// True when every tap is purely real.
    pub fn is_real(&self) -> bool {
        self.taps.iter().all(|t| t.im == 0.0)
    }

    /// The Proakis-C test channel, a worst-case ISI response.
    pub fn proakis_c() -> Self {
        Cir::new(
            [0.227, 0.460, 0.688, 0.460, 0.227]
                .iter()
                .map(|&t| Complex64::new(t, 0.0))
                .collect(),
        )
        .expect("static taps")
    }

    /// Memoryless single-tap channel.
    pub fn identity() -> Self {
        Cir::new(vec![Complex64::new(1.0, 0.0)]).expect("static taps")
    }

    /// Looks up a named preset.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "proakis-c" => Some(Cir::proakis_c()),
            "identity" => Some(Cir::identity()),
            _ => None,
        }
    }
}

/// Parses CIR text: one tap per line, `re,im` decimal fields.
/// Blank lines and `#` comments are skipped.
pub fn parse_cir_str(text: &str) -> Result<Cir> {
    let mut taps = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(',');
        let (re, im) = match (fields.next(), fields.next(), fields.next()) {
            (Some(re), Some(im), None) => (re.trim(), im.trim()),
            _ => {
                return Err(Error::Parse(format!(
                    "line {}: expected `re,im`, got {line:?}",
                    lineno + 1
                )))
            }
        };
        let re: f64 = re
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: bad real field {re:?}", lineno + 1)))?;
        let im: f64 = im
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: bad imag field {im:?}", lineno + 1)))?;
        if !re.is_finite() || !im.is_finite() {
            return Err(Error::Parse(format!("line {}: non-finite tap", lineno + 1)));
        }
        taps.push(Complex64::new(re, im));
    }
    Cir::new(taps).map_err(|e| Error::Parse(format!("CIR not usable: {e}")))
}

/// Loads a CIR from a file path.
pub fn load_cir(path: &str) -> Result<Cir> {
    let text = std::fs::read_to_string(path)?;
    parse_cir_str(&text)
}

/// Removes weak leading/trailing taps.
///
/// Taps whose gain relative to the strongest tap is strictly below
/// `threshold_db` are stripped from the head and tail; the kept span is
/// the maximal contiguous run containing the strongest tap, re-normalized
/// to unit energy. Taps exactly at the threshold stay.
pub fn prune_taps(cir: &Cir, threshold_db: f64) -> Result<Cir> {
    if !(threshold_db < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "prune threshold {threshold_db} dB must be negative"
        )));
    }
    let taps = cir.taps();
    let peak = taps.iter().map(|t| t.norm_sqr()).fold(0.0, f64::max);
    let keep: Vec<bool> = taps
        .iter()
        .map(|t| {
            let g = t.norm_sqr() / peak;
            !(10.0 * g.log10() < threshold_db)
        })
        .collect();
    let strongest = taps
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm_sqr().partial_cmp(&b.1.norm_sqr()).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let mut lo = strongest;
    while lo > 0 && keep[lo - 1] {
        lo -= 1;
    }
    let mut hi = strongest;
    while hi + 1 < taps.len() && keep[hi + 1] {
        hi += 1;
    }
    Cir::new(taps[lo..=hi].to_vec())
}

/// Real-valued system model for one (CIR, N, SNR) triple.
#[derive(Debug, Clone)]
pub struct RealChannel {
    cir: Cir,
    /// Block-decomposed convolution matrix, 2(N+L) x 2N.
    h: Mat,
    /// Block length in complex symbols.
    pub n: usize,
    /// Noise variance per real dimension.
    pub n0: f64,
    pub esn0_db: f64,
}

impl RealChannel {
    pub fn cir(&self) -> &Cir {
        &self.cir
    }

    pub fn memory(&self) -> usize {
        self.cir.memory()
    }

    pub fn h(&self) -> &Mat {
        &self.h
    }

    /// Number of complex outputs N + L.
    pub fn n_out(&self) -> usize {
        self.n + self.memory()
    }

    /// Applies H to a real vector of length 2N by complex convolution.
    pub fn apply_h(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(x.len(), 2 * n);
        let n_out = self.n_out();
        let mut y = vec![0.0; 2 * n_out];
        for (k, &tap) in self.cir.taps().iter().enumerate() {
            for i in 0..n {
                let xr = x[i];
                let xi = x[n + i];
                y[i + k] += tap.re * xr - tap.im * xi;
                y[n_out + i + k] += tap.im * xr + tap.re * xi;
            }
        }
        y
    }

    /// Applies H^T to a real vector of length 2(N+L).
    pub fn apply_ht(&self, y: &[f64]) -> Vec<f64> {
        let n = self.n;
        let n_out = self.n_out();
        assert_eq!(y.len(), 2 * n_out);
        let mut x = vec![0.0; 2 * n];
        for (k, &tap) in self.cir.taps().iter().enumerate() {
            for i in 0..n {
                let yr = y[i + k];
                let yi = y[n_out + i + k];
                x[i] += tap.re * yr + tap.im * yi;
                x[n + i] += -tap.im * yr + tap.re * yi;
            }
        }
        x
    }
}

/// Real block decomposition of the tall Toeplitz convolution matrix of
/// `taps`, shape 2(n + taps.len() - 1) x 2n.
pub fn real_toeplitz(taps: &[Complex64], n: usize) -> Mat {
    let l = taps.len() - 1;
    let n_out = n + l;
    let mut h = Mat::zeros(2 * n_out, 2 * n);
    for (k, &tap) in taps.iter().enumerate() {
        for j in 0..n {
            let i = j + k;
            h[(i, j)] = tap.re;
            h[(i, n + j)] = -tap.im;
            h[(n_out + i, j)] = tap.im;
            h[(n_out + i, n + j)] = tap.re;
        }
    }
    h
}

/// Builds the real-valued model. `N0 = 10^(-EsN0_dB/10) / 2` under unit
/// symbol energy.
pub fn build_real_channel(cir: &Cir, n: usize, esn0_db: f64) -> Result<RealChannel> {
    if n < 1 {
        return Err(Error::InvalidArgument("block length N must be >= 1".into()));
    }
    if cir.taps().is_empty() {
        return Err(Error::InvalidArgument(
            "CIR must have at least one tap".into(),
        ));
    }
    let h = real_toeplitz(cir.taps(), n);
    let n0 = 10.0f64.powf(-esn0_db / 10.0) / 2.0;
    Ok(RealChannel {
        cir: cir.clone(),
        h,
        n,
        n0,
        esn0_db,
    })
}

/// One transmitted frame.
#[derive(Debug, Clone)]
pub struct Frame {
    /// Real symbol components, length 2N.
    pub x: Vec<f64>,
    /// Received samples, length 2(N+L).
    pub y: Vec<f64>,
    pub seed: u64,
    /// Constellation index of each complex symbol.
    pub symbols: Vec<usize>,
}

/// Draws a uniform i.i.d. frame and pushes it through the channel.
/// Deterministic given `seed`: symbols are drawn first, then one
/// Gaussian pair per complex output.
pub fn transmit(channel: &RealChannel, constellation: &Constellation, seed: u64) -> Frame {
    let n = channel.n;
    let n_out = channel.n_out();
    let mut rng = FrameRng::new(seed);
    let mut x = vec![0.0; 2 * n];
    let mut symbols = Vec::with_capacity(n);
    for i in 0..n {
        let s = rng.symbol_index(constellation.m);
        symbols.push(s);
        let p = constellation.points[s];
        x[i] = p.re;
        x[n + i] = p.im;
    }
    let mut y = channel.apply_h(&x);
    let sigma = channel.n0.sqrt();
    if sigma > 0.0 {
        for i in 0..n_out {
            y[i] += sigma * rng.standard_normal();
            y[n_out + i] += sigma * rng.standard_normal();
        }
    }
    Frame {
        x,
        y,
        seed,
        symbols,
    }
}
