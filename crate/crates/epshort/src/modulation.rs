//! Constellations and the transformed alphabet of shortened-channel
//! outputs.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Hard cap on the transformed-alphabet cardinality M^(nu+1).
pub const ALPHABET_CAP: usize = 1 << 20;

/// Constellation family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstellationKind {
    Pam,
    Qam,
}

/// A unit-energy, Gray-labeled constellation.
///
/// PAM points are purely real; QAM is the Cartesian product of two
/// sqrt(M)-PAM level sets, indexed I-major. Bit labels are carried but
/// all detection metrics operate at symbol level.
#[derive(Debug, Clone)]
pub struct Constellation {
    pub kind: ConstellationKind,
    pub m: usize,
    pub points: Vec<Complex64>,
    /// Scaled amplitude levels per I/Q dimension.
    pub per_dim_levels: Vec<f64>,
    /// Gray bit label per point, aligned with `points`.
    pub labels: Vec<u32>,
}

impl Constellation {
    pub fn bits_per_symbol(&self) -> u32 {
        self.m.trailing_zeros()
    }

    /// True when every point has zero imaginary part.
    pub fn is_real(&self) -> bool {
        matches!(self.kind, ConstellationKind::Pam)
    }

    pub fn mean_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.m as f64
    }
}

fn gray(i: usize) -> u32 {
    (i ^ (i >> 1)) as u32
}

fn pam_levels(m: usize) -> Vec<f64> {
    // odd integers -(m-1)..(m-1), unit mean energy
    let scale = (3.0 / (m as f64 * m as f64 - 1.0)).sqrt();
    (0..m)
        .map(|i| (2.0 * i as f64 - (m as f64 - 1.0)) * scale)
        .collect()
}

/// Builds a unit-energy constellation of order `m`.
pub fn make_constellation(kind: ConstellationKind, m: usize) -> Result<Constellation> {
    if m < 2 || !m.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "constellation order {m} is not a power of two >= 2"
        )));
    }
    match kind {
        ConstellationKind::Pam => {
            let levels = pam_levels(m);
            let points = levels.iter().map(|&l| Complex64::new(l, 0.0)).collect();
            let labels = (0..m).map(gray).collect();
            Ok(Constellation {
                kind,
                m,
                points,
                per_dim_levels: levels,
                labels,
            })
        }
        ConstellationKind::Qam => {
            let md = (m as f64).sqrt().round() as usize;
            if md * md != m || !md.is_power_of_two() {
                return Err(Error::InvalidArgument(format!(
                    "QAM order {m} is not an even power of two"
                )));
            }
            // per-dimension levels carry half the symbol energy each
            let mut levels = pam_levels(md);
            let half = std::f64::consts::FRAC_1_SQRT_2;
            for l in &mut levels {
                *l *= half;
            }
            let bits_q = md.trailing_zeros();
            let mut points = Vec::with_capacity(m);
            let mut labels = Vec::with_capacity(m);
            for i in 0..md {
                for q in 0..md {
                    points.push(Complex64::new(levels[i], levels[q]));
                    labels.push((gray(i) << bits_q) | gray(q));
                }
            }
            Ok(Constellation {
                kind,
                m,
                points,
                per_dim_levels: levels,
                labels,
            })
        }
    }
}

/// All noiseless outputs of a target response of memory `nu`.
///
/// Entry order is lexicographic over the symbol tuple
/// (x_{i-nu}, ..., x_i), oldest symbol first; index arithmetic treats the
/// tuple as a base-M number with the oldest symbol as the most
/// significant digit. This same convention fixes trellis state and
/// branch indexing everywhere in the crate.
#[derive(Debug, Clone)]
pub struct TransformedAlphabet {
    pub nu: usize,
    pub m: usize,
    pub taps: Vec<Complex64>,
    /// Constellation points the tuples draw from.
    pub points: Vec<Complex64>,
    /// Output value per tuple index, length M^(nu+1).
    pub outputs: Vec<Complex64>,
}

impl TransformedAlphabet {
    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    /// Decodes a tuple index into constellation indices, oldest first.
    pub fn tuple(&self, mut index: usize) -> Vec<usize> {
        let mut digits = vec![0usize; self.nu + 1];
        for d in (0..=self.nu).rev() {
            digits[d] = index % self.m;
            index /= self.m;
        }
        digits
    }

    /// True when all outputs share the same imaginary part, i.e. the
    /// imaginary branch-metric term is branch-independent and can be
    /// dropped.
    pub fn imag_is_constant(&self) -> bool {
        let first = self.outputs[0].im;
        self.outputs.iter().all(|o| (o.im - first).abs() < 1e-15)
    }
}

/// Enumerates the transformed alphabet for target taps `taps`
/// (f_0, ..., f_nu).
pub fn enumerate_transformed_alphabet(
    constellation: &Constellation,
    taps: &[Complex64],
) -> Result<TransformedAlphabet> {
    if taps.is_empty() {
        return Err(Error::InvalidArgument("target response has no taps".into()));
    }
    let nu = taps.len() - 1;
    let m = constellation.m;
    let size = m
        .checked_pow((nu + 1) as u32)
        .filter(|&s| s <= ALPHABET_CAP)
        .ok_or_else(|| {
            Error::ResourceLimit(format!(
                "transformed alphabet {m}^{} exceeds cap {ALPHABET_CAP}",
                nu + 1
            ))
        })?;
    let mut outputs = vec![Complex64::new(0.0, 0.0); size];
    // tuple digit d holds x_{i-nu+d}; tap k multiplies x_{i-k} = digit nu-k
    for (index, out) in outputs.iter_mut().enumerate() {
        let mut rem = index;
        let mut acc = Complex64::new(0.0, 0.0);
        for d in (0..=nu).rev() {
            let sym = rem % m;
            rem /= m;
            acc += taps[nu - d] * constellation.points[sym];
        }
        *out = acc;
    }
    Ok(TransformedAlphabet {
        nu,
        m,
        taps: taps.to_vec(),
        points: constellation.points.clone(),
        outputs,
    })
}
