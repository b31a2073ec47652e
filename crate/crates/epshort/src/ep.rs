//! The EP detector in the shortened signal space.
//!
//! One iteration runs LE -> project -> cavity -> NLE (BCJR) -> project ->
//! cavity with momentum, all messages factorized Gaussians over the
//! 2(N+nu) real components of the transformed observation x^F. The first
//! linear estimate may use the full prior covariance F Fᵀ (mismatched
//! initialization) while the message prior itself stays diagonal; with
//! that choice the first pass reproduces the classical channel-shortening
//! receiver, and F = I degenerates to LMMSE plus a symbol-wise demapper.
//!
//! Two linear-estimator backends exist. The default fast path rewrites
//! the prior onto the symbol domain (precision N0⁻¹HᵀH + FᵀV_A⁻¹F, exactly
//! banded) and reads posterior variances from a Takahashi selected
//! inverse. The dense reference path evaluates the transformed-domain
//! normal equations with the explicit pseudo-inverse of F; it is the
//! contract the fast path is tested against and stays practical up to a
//! few hundred symbols.

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Mat};
use crate::model::RealChannel;
use crate::modulation::{enumerate_transformed_alphabet, Constellation};
use crate::shorten::{from_interleaved, hermitian_toeplitz_band, to_interleaved, ShorteningDesign};
use crate::trellis::{run_bcjr, BcjrOptions, GaussianObs, MaxStarMode, Trellis};

/// Per-component Gaussian messages in block order [re..., im...].
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMessageVec {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl GaussianMessageVec {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn assert_valid(&self, floor: f64) {
        debug_assert!(self
            .mean
            .iter()
            .chain(self.var.iter())
            .all(|v| v.is_finite()));
        debug_assert!(self.var.iter().all(|&v| v >= floor));
    }
}

/// Linear-estimator backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LePath {
    /// Banded symbol-domain solve with selected-inverse variances.
    #[default]
    Fast,
    /// Dense evaluation of the transformed-domain normal equations.
    DenseReference,
}

/// Detector configuration.
#[derive(Debug, Clone)]
pub struct EpConfig {
    pub nu: usize,
    /// Message-passing iterations; 0 runs the initialization pass only.
    pub n_it: usize,
    /// Momentum step in (0, 1].
    pub beta: f64,
    pub variance_floor: f64,
    /// Symbol-wise log-probability clip, in nats below the row maximum.
    pub llr_clip: f64,
    pub mismatched_init: bool,
    pub max_log: bool,
    pub le_path: LePath,
    /// Keep per-iteration posteriors for snapshot metrics.
    pub keep_trajectory: bool,
}

impl Default for EpConfig {
    fn default() -> Self {
        EpConfig {
            nu: 0,
            n_it: 4,
            beta: 0.4,
            variance_floor: 1e-7,
            llr_clip: 16.0,
            mismatched_init: true,
            max_log: false,
            le_path: LePath::Fast,
            keep_trajectory: false,
        }
    }
}

impl EpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "momentum beta {} outside (0, 1]",
                self.beta
            )));
        }
        if !(self.variance_floor > 0.0) {
            return Err(Error::InvalidArgument(
                "variance floor must be positive".into(),
            ));
        }
        if !(self.llr_clip > 0.0) {
            return Err(Error::InvalidArgument("llr clip must be positive".into()));
        }
        Ok(())
    }
}

/// Counters for one NLE pass.
#[derive(Debug, Clone, Copy, Default)]
pub struct IterationDiag {
    pub neg_var_rejects: u64,
    pub clamp_events: u64,
}

/// Rollup across a detection run.
#[derive(Debug, Clone, Default)]
pub struct EpDiagnostics {
    pub per_iteration: Vec<IterationDiag>,
}

impl EpDiagnostics {
    pub fn total_neg_var_rejects(&self) -> u64 {
        self.per_iteration.iter().map(|d| d.neg_var_rejects).sum()
    }

    pub fn total_clamp_events(&self) -> u64 {
        self.per_iteration.iter().map(|d| d.clamp_events).sum()
    }
}

/// Soft and hard outputs of a detection run.
#[derive(Debug, Clone)]
pub struct DetectionResult {
    /// Row-stochastic posterior over the constellation, N x M.
    pub posteriors: Vec<f64>,
    pub m: usize,
    /// Argmax decisions, ties to the lower constellation index.
    pub hard: Vec<usize>,
    /// Posteriors after every NLE pass, when requested.
    pub trajectory: Option<Vec<Vec<f64>>>,
}

/// Posterior mean and component variances of one linear estimate.
#[derive(Debug, Clone)]
pub struct LeEstimate {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Runs the linear estimator.
///
/// Iteration 0 with mismatched initialization uses the full prior
/// covariance F Fᵀ, which collapses to mu = F B N0⁻¹ Hᵀ y and
/// Sigma = F B Fᵀ with B = (N0⁻¹HᵀH + I)⁻¹; later iterations (or a
/// diagonal initialization) solve the normal equations with the prior
/// supplied in `prior`.
pub fn le_estimate(
    channel: &RealChannel,
    design: &ShorteningDesign,
    y: &[f64],
    prior: &GaussianMessageVec,
    iteration: usize,
    config: &EpConfig,
    dense_ctx: Option<&LeDenseCtx>,
) -> Result<LeEstimate> {
    if iteration == 0 && config.mismatched_init {
        let mean = design.shortened_observation(channel, y);
        let var = design.sigma0_diag();
        return Ok(LeEstimate { mean, var });
    }
    match config.le_path {
        LePath::Fast => le_fast(channel, design, y, prior),
        LePath::DenseReference => {
            let ctx = dense_ctx.ok_or_else(|| {
                Error::InvalidArgument("dense LE path needs a prepared context".into())
            })?;
            Ok(ctx.estimate(channel, y, prior))
        }
    }
}

/// Symbol-domain banded solve: precision N0⁻¹HᵀH + FᵀV_A⁻¹F, posterior
/// mapped through F. Exactly banded, O(N (L + nu)^2).
fn le_fast(
    channel: &RealChannel,
    design: &ShorteningDesign,
    y: &[f64],
    prior: &GaussianMessageVec,
) -> Result<LeEstimate> {
    let n = channel.n;
    let n_out = design.n_out();
    let mut px = hermitian_toeplitz_band(n, &design.autocorr_h, 1.0 / channel.n0, 0.0);
    // prior term FᵀV_A⁻¹F and information vector FᵀV_A⁻¹m_A
    let mut info = vec![0.0; 2 * n];
    for row in 0..2 * n_out {
        let entries = design.f_row_entries(row);
        if entries.is_empty() {
            continue;
        }
        let w = 1.0 / prior.var[row];
        let t = prior.mean[row] * w;
        for (i, &(p, cp)) in entries.iter().enumerate() {
            let ip = interleave_index(p, n);
            info[p] += cp * t;
            for &(q, cq) in entries.iter().skip(i) {
                let iq = interleave_index(q, n);
                px.add(ip.min(iq), ip.max(iq), w * cp * cq);
            }
        }
    }
    let rhs_block: Vec<f64> = channel
        .apply_ht(y)
        .iter()
        .zip(info.iter())
        .map(|(h, i)| h / channel.n0 + i)
        .collect();
    let factor = px
        .ldlt()
        .map_err(|e| Error::Numerical(format!("linear estimator solve failed: {e}")))?;
    let mu_x = from_interleaved(&factor.solve(&to_interleaved(&rhs_block)));
    let mean = design.apply_f(&mu_x);
    let selinv = factor.selected_inverse();
    let mut var = vec![0.0; 2 * n_out];
    for row in 0..2 * n_out {
        let entries = design.f_row_entries(row);
        let mut acc = 0.0;
        for &(p, cp) in &entries {
            let ip = interleave_index(p, n);
            for &(q, cq) in &entries {
                let iq = interleave_index(q, n);
                acc += cp * cq * selinv.get(ip, iq);
            }
        }
        var[row] = acc;
    }
    Ok(LeEstimate { mean, var })
}

fn interleave_index(block_idx: usize, n: usize) -> usize {
    if block_idx < n {
        2 * block_idx
    } else {
        2 * (block_idx - n) + 1
    }
}

/// Precomputed dense operators for the reference linear estimator.
#[derive(Debug, Clone)]
pub struct LeDenseCtx {
    /// G = H F⁺.
    g: Mat,
    /// GᵀG.
    m0: Mat,
}

impl LeDenseCtx {
    pub fn new(channel: &RealChannel, design: &ShorteningDesign) -> Result<Self> {
        let fplus = design.pseudo_inverse_f()?;
        let g = channel.h().matmul(&fplus);
        let m0 = g.transpose().matmul(&g);
        Ok(LeDenseCtx { g, m0 })
    }

    fn estimate(&self, channel: &RealChannel, y: &[f64], prior: &GaussianMessageVec) -> LeEstimate {
        let dim = self.m0.rows();
        let mut a = self.m0.clone();
        a.scale(1.0 / channel.n0);
        for i in 0..dim {
            a[(i, i)] += 1.0 / prior.var[i];
        }
        let gty = self.g.tr_matvec(y);
        let rhs: Vec<f64> = gty
            .iter()
            .zip(prior.mean.iter().zip(&prior.var))
            .map(|(g, (m, v))| g / channel.n0 + m / v)
            .collect();
        let chol = Cholesky::new(&a).expect("posterior precision is positive definite");
        let mean = chol.solve_vec(&rhs);
        let var = chol.inverse().diag();
        LeEstimate { mean, var }
    }
}

/// Extrinsic division, LE posterior by NLE prior. Components whose
/// cavity precision is nonpositive keep the previous message.
pub fn cavity_le_to_nle(
    posterior: &LeEstimate,
    prior: &GaussianMessageVec,
    previous: &mut GaussianMessageVec,
    floor: f64,
    diag: &mut IterationDiag,
) {
    for i in 0..previous.len() {
        let post_var = posterior.var[i].max(floor);
        let prec = 1.0 / post_var - 1.0 / prior.var[i];
        if !(prec > 0.0) || !prec.is_finite() {
            diag.neg_var_rejects += 1;
            continue;
        }
        let var = 1.0 / prec;
        let mean = var * (posterior.mean[i] / post_var - prior.mean[i] / prior.var[i]);
        if !mean.is_finite() {
            diag.neg_var_rejects += 1;
            continue;
        }
        if var < floor {
            diag.clamp_events += 1;
            previous.var[i] = floor;
        } else {
            previous.var[i] = var;
        }
        previous.mean[i] = mean;
    }
}

/// Extrinsic division of the NLE projection, blended with the previous
/// message in the natural-parameter domain: the precision and the
/// precision-weighted mean are both mixed with step `beta`, which keeps
/// the blended mean and variance consistent when the extrinsic precision
/// changes by orders of magnitude between iterations.
pub fn cavity_nle_to_le_with_momentum(
    nle_mean: &[f64],
    nle_var: &[f64],
    cavity: &GaussianMessageVec,
    message: &mut GaussianMessageVec,
    beta: f64,
    floor: f64,
    diag: &mut IterationDiag,
) {
    for i in 0..message.len() {
        let prec = 1.0 / nle_var[i] - 1.0 / cavity.var[i];
        if !(prec > 0.0) || !prec.is_finite() {
            diag.neg_var_rejects += 1;
            continue;
        }
        let v_new = 1.0 / prec;
        let m_new = v_new * (nle_mean[i] / nle_var[i] - cavity.mean[i] / cavity.var[i]);
        if !m_new.is_finite() {
            diag.neg_var_rejects += 1;
            continue;
        }
        let blended_prec = beta / v_new + (1.0 - beta) / message.var[i];
        let blended_info = beta * m_new / v_new + (1.0 - beta) * message.mean[i] / message.var[i];
        let mut v = 1.0 / blended_prec;
        if v < floor {
            diag.clamp_events += 1;
            v = floor;
        }
        message.var[i] = v;
        message.mean[i] = blended_info / blended_prec;
    }
}

/// Clamps a max-centered log-PMF row to `clip` nats below the maximum
/// and normalizes to a PMF.
fn normalize_row(row: &mut [f64], clip: f64, diag: &mut IterationDiag) {
    let mut z = 0.0;
    for v in row.iter_mut() {
        if *v < -clip {
            *v = -clip;
            diag.clamp_events += 1;
        }
        *v = v.exp();
        z += *v;
    }
    for v in row.iter_mut() {
        *v /= z;
    }
}

/// Converts max-centered log-PMF rows to clipped, normalized PMFs in
/// place, returning the number of clamped entries.
pub fn clip_normalize_rows(logpmf: &mut [f64], m: usize, clip: f64) -> u64 {
    let mut diag = IterationDiag::default();
    for row in logpmf.chunks_exact_mut(m) {
        normalize_row(row, clip, &mut diag);
    }
    diag.clamp_events
}

/// Full detection run: iterates the linear and non-linear estimators and
/// returns symbol posteriors with diagnostics.
pub fn detect(
    channel: &RealChannel,
    design: &ShorteningDesign,
    constellation: &Constellation,
    config: &EpConfig,
    y: &[f64],
) -> Result<(DetectionResult, EpDiagnostics)> {
    config.validate()?;
    if design.nu != config.nu {
        return Err(Error::InvalidArgument(format!(
            "config nu {} does not match design nu {}",
            config.nu, design.nu
        )));
    }
    let n = channel.n;
    let n_out = design.n_out();
    let m = constellation.m;
    let floor = config.variance_floor;

    let alphabet = enumerate_transformed_alphabet(constellation, &design.taps)?;
    let trellis = Trellis::new(&alphabet, n)?;
    let bcjr_opts = BcjrOptions {
        mode: if config.max_log {
            MaxStarMode::MaxLog
        } else {
            MaxStarMode::Exact
        },
        project: true,
        variance_floor: floor,
        keep_branch_posteriors: false,
    };

    let dense_ctx = match config.le_path {
        LePath::DenseReference => Some(LeDenseCtx::new(channel, design)?),
        LePath::Fast => None,
    };

    // message prior m_A = 0, v_A = diag(F Fᵀ), floored
    let mut message = GaussianMessageVec {
        mean: vec![0.0; 2 * n_out],
        var: design.fft_diag().iter().map(|&v| v.max(floor)).collect(),
    };
    // cavity state doubles as the rejection fallback
    let mut cavity = message.clone();

    // pass 0 is the initialization (its NLE output is the N_It = 0
    // baseline); each further pass feeds messages back once
    let n_passes = config.n_it + 1;
    let mut diags = EpDiagnostics::default();
    let mut trajectory = config.keep_trajectory.then(Vec::new);
    let mut posteriors = vec![0.0; n * m];

    for ell in 0..n_passes {
        let mut diag = IterationDiag::default();
        let le = le_estimate(
            channel,
            design,
            y,
            &message,
            ell,
            config,
            dense_ctx.as_ref(),
        )
        .map_err(|e| Error::Numerical(format!("iteration {ell}: {e}")))?;
        cavity_le_to_nle(&le, &message, &mut cavity, floor, &mut diag);
        cavity.assert_valid(floor);

        let obs = GaussianObs {
            mean_re: &cavity.mean[..n_out],
            var_re: &cavity.var[..n_out],
            mean_im: &cavity.mean[n_out..],
            var_im: &cavity.var[n_out..],
        };
        let run = run_bcjr(&trellis, &obs, &bcjr_opts)
            .map_err(|e| Error::Numerical(format!("iteration {ell}: {e}")))?;

        posteriors.copy_from_slice(&run.sym_logpmf);
        for row in posteriors.chunks_exact_mut(m) {
            normalize_row(row, config.llr_clip, &mut diag);
        }
        if let Some(t) = trajectory.as_mut() {
            t.push(posteriors.clone());
        }

        if ell + 1 < n_passes {
            let mo = run.moments.as_ref().expect("projection requested");
            let (nle_mean, nle_var) = block_order_moments(mo, n_out);
            cavity_nle_to_le_with_momentum(
                &nle_mean,
                &nle_var,
                &cavity,
                &mut message,
                config.beta,
                floor,
                &mut diag,
            );
            message.assert_valid(floor);
        }
        diags.per_iteration.push(diag);
    }

    let hard = posteriors
        .chunks_exact(m)
        .map(|row| {
            let mut best = 0;
            for (i, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect();

    Ok((
        DetectionResult {
            posteriors,
            m,
            hard,
            trajectory,
        },
        diags,
    ))
}

fn block_order_moments(mo: &crate::trellis::Moments, n_out: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; 2 * n_out];
    let mut var = vec![0.0; 2 * n_out];
    mean[..n_out].copy_from_slice(&mo.mean_re);
    mean[n_out..].copy_from_slice(&mo.mean_im);
    var[..n_out].copy_from_slice(&mo.var_re);
    var[n_out..].copy_from_slice(&mo.var_im);
    (mean, var)
}
