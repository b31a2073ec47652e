//! Log-domain BCJR over a symbol trellis.
//!
//! The same engine serves two roles: the full-memory optimal baseline
//! (branch outputs from the channel taps, observation means from y with
//! variance N0) and the reduced-memory non-linear estimator inside the
//! EP loop (branch outputs from the transformed alphabet, observation
//! means/variances from the incoming Gaussian messages).
//!
//! State index convention: a state encodes the symbol tuple
//! (x_{i-memory+1}, ..., x_i) as a base-M number, oldest symbol in the
//! most significant digit. A branch b = s' * M + a therefore encodes the
//! (memory+1)-tuple directly, and the successor state is b mod M^memory.
//!
//! Frame edges: symbols before the frame are zero amplitude, so head
//! steps use partially masked branch outputs, and the tail outputs past
//! the last symbol are folded into the backward seed from the final
//! state. After the last observation the backward seed is uniform.

use crate::error::{Error, Result};
use crate::modulation::TransformedAlphabet;

/// Exact Jacobian logarithm log(e^a + e^b).
///
/// Computed as max + log1p(exp(-|a-b|)); the correction is skipped once
/// it falls below f64 resolution, which leaves the result bit-identical
/// for all but denormal-scale corrections.
#[inline]
pub fn maxstar(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    let d = hi - lo;
    if d > 37.0 {
        hi
    } else {
        hi + (-d).exp().ln_1p()
    }
}

/// Max-log approximation of the Jacobian logarithm.
#[inline]
pub fn maxstar_maxlog(a: f64, b: f64) -> f64 {
    if a >= b {
        a
    } else {
        b
    }
}

/// Which sum operator the recursions use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaxStarMode {
    #[default]
    Exact,
    MaxLog,
}

impl MaxStarMode {
    #[inline]
    fn combine(self, a: f64, b: f64) -> f64 {
        match self {
            MaxStarMode::Exact => maxstar(a, b),
            MaxStarMode::MaxLog => maxstar_maxlog(a, b),
        }
    }
}

/// Trellis topology plus precomputed branch outputs.
#[derive(Debug, Clone)]
pub struct Trellis {
    pub m: usize,
    pub memory: usize,
    pub n_steps: usize,
    n_states: usize,
    n_branches: usize,
    /// Steady-state branch outputs, indexed by branch.
    out_re: Vec<f64>,
    out_im: Vec<f64>,
    /// Masked outputs for head steps 0..memory (pre-frame symbols zero).
    head_re: Vec<Vec<f64>>,
    head_im: Vec<Vec<f64>>,
    /// Tail outputs past the last symbol, per offset and final state.
    tail_re: Vec<Vec<f64>>,
    tail_im: Vec<Vec<f64>>,
    /// Imaginary outputs are branch-independent; the imaginary metric
    /// term cancels in every softmax and is skipped.
    imag_constant: bool,
}

impl Trellis {
    /// Builds the trellis for `n_steps` symbols over the given alphabet.
    pub fn new(alphabet: &TransformedAlphabet, n_steps: usize) -> Result<Self> {
        let m = alphabet.m;
        let memory = alphabet.nu;
        if n_steps < memory.max(1) {
            return Err(Error::InvalidArgument(format!(
                "trellis needs at least {} steps, got {n_steps}",
                memory.max(1)
            )));
        }
        let n_states = m.pow(memory as u32);
        let n_branches = n_states * m;
        debug_assert_eq!(n_branches, alphabet.len());
        let out_re: Vec<f64> = alphabet.outputs.iter().map(|o| o.re).collect();
        let out_im: Vec<f64> = alphabet.outputs.iter().map(|o| o.im).collect();

        // head step i < memory: only taps k <= i see in-frame symbols
        let mut head_re = Vec::with_capacity(memory);
        let mut head_im = Vec::with_capacity(memory);
        for i in 0..memory {
            let mut hre = vec![0.0; n_branches];
            let mut him = vec![0.0; n_branches];
            for b in 0..n_branches {
                let tuple = alphabet.tuple(b);
                let mut acc = num_complex::Complex64::new(0.0, 0.0);
                for k in 0..=i.min(memory) {
                    acc += alphabet.taps[k] * alphabet.points[tuple[memory - k]];
                }
                hre[b] = acc.re;
                him[b] = acc.im;
            }
            head_re.push(hre);
            head_im.push(him);
        }

        // tail offset d: output N+d depends on the last memory symbols
        let mut tail_re = Vec::with_capacity(memory);
        let mut tail_im = Vec::with_capacity(memory);
        for d in 0..memory {
            let mut tre = vec![0.0; n_states];
            let mut tim = vec![0.0; n_states];
            for s in 0..n_states {
                let digits = state_tuple(s, m, memory);
                let mut acc = num_complex::Complex64::new(0.0, 0.0);
                for k in d + 1..=memory {
                    acc += alphabet.taps[k] * alphabet.points[digits[memory - k + d]];
                }
                tre[s] = acc.re;
                tim[s] = acc.im;
            }
            tail_re.push(tre);
            tail_im.push(tim);
        }

        let imag_constant = out_im
            .iter()
            .chain(head_im.iter().flatten())
            .chain(tail_im.iter().flatten())
            .all(|&v| v.abs() < 1e-15);

        Ok(Trellis {
            m,
            memory,
            n_steps,
            n_states,
            n_branches,
            out_re,
            out_im,
            head_re,
            head_im,
            tail_re,
            tail_im,
            imag_constant,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_branches(&self) -> usize {
        self.n_branches
    }

    /// Number of complex observation slots: one per symbol step plus the
    /// convolution tail.
    pub fn n_obs(&self) -> usize {
        self.n_steps + self.memory
    }

    fn step_outputs(&self, i: usize) -> (&[f64], &[f64]) {
        if i < self.memory {
            (&self.head_re[i], &self.head_im[i])
        } else {
            (&self.out_re, &self.out_im)
        }
    }

    /// Steady-state branch output, for structural tests.
    pub fn branch_output(&self, b: usize) -> (f64, f64) {
        (self.out_re[b], self.out_im[b])
    }
}

fn state_tuple(mut s: usize, m: usize, memory: usize) -> Vec<usize> {
    let mut digits = vec![0usize; memory];
    for d in (0..memory).rev() {
        digits[d] = s % m;
        s /= m;
    }
    digits
}

/// Per-component Gaussian observation model feeding the branch metrics.
///
/// Slot j < n endpoints the real part mean/variance of complex
/// observation j; the imaginary arrays run parallel. Lengths equal
/// `trellis.n_obs()`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianObs<'a> {
    pub mean_re: &'a [f64],
    pub var_re: &'a [f64],
    pub mean_im: &'a [f64],
    pub var_im: &'a [f64],
}

/// Result of one BCJR pass.
#[derive(Debug, Clone)]
pub struct BcjrRun {
    /// Unnormalized per-symbol log-marginals, row-major n_steps x M,
    /// recentered so each row's maximum is 0.
    pub sym_logpmf: Vec<f64>,
    /// Posterior moments of each complex trellis output component,
    /// length n_obs, present when projection was requested.
    pub moments: Option<Moments>,
    /// Normalized branch posteriors, n_steps x branches, when requested.
    pub branch_posteriors: Option<Vec<f64>>,
}

/// First and second posterior moments of the trellis outputs, split into
/// real and imaginary components.
#[derive(Debug, Clone)]
pub struct Moments {
    pub mean_re: Vec<f64>,
    pub var_re: Vec<f64>,
    pub mean_im: Vec<f64>,
    pub var_im: Vec<f64>,
}

/// Posterior mean/variance of a finite set of weighted outputs; shared
/// by the fused recursion path and by `nle_project`.
#[inline]
fn weighted_moments(weights: &[f64], values: &[f64]) -> (f64, f64) {
    let mut z = 0.0;
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for (&w, &v) in weights.iter().zip(values) {
        z += w;
        m1 += w * v;
        m2 += w * v * v;
    }
    let mean = m1 / z;
    let var = (m2 / z - mean * mean).max(0.0);
    (mean, var)
}

/// Projects one step's branch posterior onto per-component Gaussian
/// moments of the branch outputs. `floor` clamps the variance from
/// below.
pub fn nle_project(
    branch_pmf: &[f64],
    out_re: &[f64],
    out_im: &[f64],
    floor: f64,
) -> (f64, f64, f64, f64) {
    let (mr, vr) = weighted_moments(branch_pmf, out_re);
    let (mi, vi) = weighted_moments(branch_pmf, out_im);
    (mr, vr.max(floor), mi, vi.max(floor))
}

/// Branch metric: -1/2 of the inverse-variance-weighted squared distance
/// between the observation means and the branch output. The imaginary
/// term is dropped when it is branch-independent.
#[inline]
fn metric(mr: f64, wr: f64, mi: f64, wi: f64, ore: f64, oim: f64, use_imag: bool) -> f64 {
    let dr = mr - ore;
    let mut q = dr * dr * wr;
    if use_imag {
        let di = mi - oim;
        q += di * di * wi;
    }
    -0.5 * q
}

/// Branch log-metrics of one trellis step under per-component Gaussian
/// messages: -1/2 sum of inverse-variance-weighted squared distances
/// between the message means and the branch output, the same kernel the
/// recursions use internally.
pub fn gaussian_nle_metric(
    trellis: &Trellis,
    obs: &GaussianObs<'_>,
    step: usize,
) -> Result<Vec<f64>> {
    if step >= trellis.n_steps {
        return Err(Error::InvalidArgument(format!(
            "step {step} outside trellis of {} steps",
            trellis.n_steps
        )));
    }
    if !(obs.var_re[step] > 0.0) || !(obs.var_im[step] > 0.0) {
        return Err(Error::Numerical(format!(
            "nonpositive observation variance at step {step}"
        )));
    }
    let (ore, oim) = trellis.step_outputs(step);
    let (mr, wr) = (obs.mean_re[step], 1.0 / obs.var_re[step]);
    let (mi, wi) = (obs.mean_im[step], 1.0 / obs.var_im[step]);
    let use_imag = !trellis.imag_constant;
    Ok((0..trellis.n_branches)
        .map(|b| metric(mr, wr, mi, wi, ore[b], oim[b], use_imag))
        .collect())
}

/// Options for a BCJR pass.
#[derive(Debug, Clone, Copy)]
pub struct BcjrOptions {
    pub mode: MaxStarMode,
    /// Compute output moments (the EP projection needs them, the
    /// baseline does not).
    pub project: bool,
    /// Variance floor applied to projected moments.
    pub variance_floor: f64,
    /// Keep per-step branch posteriors (test instrumentation; memory
    /// grows as n_steps * branches).
    pub keep_branch_posteriors: bool,
}

impl Default for BcjrOptions {
    fn default() -> Self {
        BcjrOptions {
            mode: MaxStarMode::Exact,
            project: false,
            variance_floor: 1e-7,
            keep_branch_posteriors: false,
        }
    }
}

/// Runs the forward/backward recursions and marginalizes.
///
/// Returns per-symbol log-marginals and, when requested, the posterior
/// moments of every output component. Observation variances must be
/// strictly positive; non-finite means are rejected with the offending
/// step index.
pub fn run_bcjr(trellis: &Trellis, obs: &GaussianObs<'_>, opts: &BcjrOptions) -> Result<BcjrRun> {
    bcjr_core(trellis, obs, opts, None)
}

/// Same recursion with a caller-supplied additive offset per step, for
/// probing softmax shift invariance.
pub fn run_bcjr_with_offsets(
    trellis: &Trellis,
    obs: &GaussianObs<'_>,
    opts: &BcjrOptions,
    offsets: &[f64],
) -> Result<BcjrRun> {
    bcjr_core(trellis, obs, opts, Some(offsets))
}

fn bcjr_core(
    trellis: &Trellis,
    obs: &GaussianObs<'_>,
    opts: &BcjrOptions,
    offsets: Option<&[f64]>,
) -> Result<BcjrRun> {
    let n = trellis.n_steps;
    let mem = trellis.memory;
    let n_obs = trellis.n_obs();
    let s_count = trellis.n_states;
    let b_count = trellis.n_branches;
    let m = trellis.m;
    let mode = opts.mode;
    let use_imag = !trellis.imag_constant;

    if obs.mean_re.len() != n_obs
        || obs.var_re.len() != n_obs
        || obs.mean_im.len() != n_obs
        || obs.var_im.len() != n_obs
    {
        return Err(Error::InvalidArgument(format!(
            "observation length mismatch: expected {n_obs}"
        )));
    }
    let mut w_re = vec![0.0; n_obs];
    let mut w_im = vec![0.0; n_obs];
    for j in 0..n_obs {
        if !obs.mean_re[j].is_finite() || (use_imag && !obs.mean_im[j].is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite observation mean at step {j}"
            )));
        }
        if !(obs.var_re[j] > 0.0) || (use_imag && !(obs.var_im[j] > 0.0)) {
            return Err(Error::Numerical(format!(
                "nonpositive observation variance at step {j}"
            )));
        }
        w_re[j] = 1.0 / obs.var_re[j];
        w_im[j] = 1.0 / obs.var_im[j];
    }

    if let Some(offs) = offsets {
        if offs.len() != n {
            return Err(Error::InvalidArgument(
                "offset length must equal step count".into(),
            ));
        }
    }
    let step_offset = |i: usize| offsets.map_or(0.0, |o| o[i]);

    // constellation orders are powers of two, so the base-M index
    // arithmetic reduces to shifts and masks
    debug_assert!(m.is_power_of_two() && s_count.is_power_of_two());
    let m_bits = m.trailing_zeros();
    let m_mask = m - 1;
    let s_mask = s_count - 1;

    // forward pass, alpha stored per step (recentered)
    let mut alpha = vec![0.0f64; (n + 1) * s_count];
    let a0 = -(s_count as f64).ln();
    for s in 0..s_count {
        alpha[s] = a0;
    }
    let mut next = vec![0.0f64; s_count];
    for i in 0..n {
        let (ore, oim) = trellis.step_outputs(i);
        let (mr, wr, mi, wi) = (obs.mean_re[i], w_re[i], obs.mean_im[i], w_im[i]);
        let off = step_offset(i);
        next.fill(f64::NEG_INFINITY);
        let prev = &alpha[i * s_count..(i + 1) * s_count];
        for b in 0..b_count {
            let g = metric(mr, wr, mi, wi, ore[b], oim[b], use_imag) + off;
            let t = prev[b >> m_bits] + g;
            let s = b & s_mask;
            next[s] = mode.combine(next[s], t);
        }
        let mx = next.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !mx.is_finite() {
            return Err(Error::Numerical(format!(
                "forward recursion degenerated at step {i}"
            )));
        }
        for (dst, &v) in alpha[(i + 1) * s_count..(i + 2) * s_count]
            .iter_mut()
            .zip(next.iter())
        {
            *dst = v - mx;
        }
    }

    // backward seed: tail observations fold into beta_N, then uniform
    let mut beta = vec![0.0f64; s_count];
    for d in 0..mem {
        let j = n + d;
        let (mr, wr, mi, wi) = (obs.mean_re[j], w_re[j], obs.mean_im[j], w_im[j]);
        let tre = &trellis.tail_re[d];
        let tim = &trellis.tail_im[d];
        for s in 0..s_count {
            beta[s] += metric(mr, wr, mi, wi, tre[s], tim[s], use_imag);
        }
    }
    if mem > 0 {
        let mx = beta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !mx.is_finite() {
            return Err(Error::Numerical("tail metric degenerated".into()));
        }
        for v in &mut beta {
            *v -= mx;
        }
    }

    let mut moments = opts.project.then(|| Moments {
        mean_re: vec![0.0; n_obs],
        var_re: vec![0.0; n_obs],
        mean_im: vec![0.0; n_obs],
        var_im: vec![0.0; n_obs],
    });

    // tail component moments from the final-state posterior
    if let Some(mo) = moments.as_mut() {
        if mem > 0 {
            let af = &alpha[n * s_count..(n + 1) * s_count];
            let mx = af
                .iter()
                .zip(beta.iter())
                .map(|(a, b)| a + b)
                .fold(f64::NEG_INFINITY, f64::max);
            let mut w = vec![0.0; s_count];
            for s in 0..s_count {
                let d = af[s] + beta[s] - mx;
                w[s] = if d > -46.0 { d.exp() } else { 0.0 };
            }
            for d in 0..mem {
                let j = n + d;
                let (mre, vre) = weighted_moments(&w, &trellis.tail_re[d]);
                let (mim, vim) = weighted_moments(&w, &trellis.tail_im[d]);
                mo.mean_re[j] = mre;
                mo.var_re[j] = vre.max(opts.variance_floor);
                mo.mean_im[j] = mim;
                mo.var_im[j] = vim.max(opts.variance_floor);
            }
        }
    }

    // backward pass fused with gamma' marginalization and projection
    let mut sym_logpmf = vec![0.0f64; n * m];
    let mut gprime = vec![0.0f64; b_count];
    let mut beta_prev = vec![0.0f64; s_count];
    let mut branch_posteriors = opts
        .keep_branch_posteriors
        .then(|| vec![0.0f64; n * b_count]);
    for i in (0..n).rev() {
        let (ore, oim) = trellis.step_outputs(i);
        let (mr, wr, mi, wi) = (obs.mean_re[i], w_re[i], obs.mean_im[i], w_im[i]);
        let off = step_offset(i);
        let aprev = &alpha[i * s_count..(i + 1) * s_count];
        beta_prev.fill(f64::NEG_INFINITY);
        let mut step_max = f64::NEG_INFINITY;
        let sym_row = &mut sym_logpmf[i * m..(i + 1) * m];
        sym_row.fill(f64::NEG_INFINITY);
        for b in 0..b_count {
            let g = metric(mr, wr, mi, wi, ore[b], oim[b], use_imag) + off;
            let sp = b >> m_bits;
            let bn = beta[b & s_mask] + g;
            beta_prev[sp] = mode.combine(beta_prev[sp], bn);
            let gp = aprev[sp] + bn;
            gprime[b] = gp;
            if gp > step_max {
                step_max = gp;
            }
            let a = b & m_mask;
            sym_row[a] = mode.combine(sym_row[a], gp);
        }
        if !step_max.is_finite() {
            return Err(Error::Numerical(format!(
                "branch posterior degenerated at step {i}"
            )));
        }
        for v in sym_row.iter_mut() {
            *v -= step_max;
        }
        if let Some(bp) = branch_posteriors.as_mut() {
            let row = &mut bp[i * b_count..(i + 1) * b_count];
            let mut z = 0.0;
            for (dst, &gp) in row.iter_mut().zip(gprime.iter()) {
                let w = (gp - step_max).exp();
                *dst = w;
                z += w;
            }
            for v in row.iter_mut() {
                *v /= z;
            }
        }
        if let Some(mo) = moments.as_mut() {
            let mut z = 0.0;
            let mut s1r = 0.0;
            let mut s2r = 0.0;
            let mut s1i = 0.0;
            let mut s2i = 0.0;
            for b in 0..b_count {
                let d = gprime[b] - step_max;
                if d > -46.0 {
                    let w = d.exp();
                    z += w;
                    let vr = ore[b];
                    s1r += w * vr;
                    s2r += w * vr * vr;
                    let vi = oim[b];
                    s1i += w * vi;
                    s2i += w * vi * vi;
                }
            }
            let mre = s1r / z;
            let mim = s1i / z;
            mo.mean_re[i] = mre;
            mo.var_re[i] = (s2r / z - mre * mre).max(opts.variance_floor);
            mo.mean_im[i] = mim;
            mo.var_im[i] = (s2i / z - mim * mim).max(opts.variance_floor);
        }
        // recenter and step back
        let mx = beta_prev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (dst, &v) in beta.iter_mut().zip(beta_prev.iter()) {
            *dst = v - mx;
        }
    }

    Ok(BcjrRun {
        sym_logpmf,
        moments,
        branch_posteriors,
    })
}

/// Full-memory BCJR baseline: optimal symbol-wise detection straight
/// from the received samples.
pub fn full_bcjr_logpmf(
    channel: &crate::model::RealChannel,
    constellation: &crate::modulation::Constellation,
    y: &[f64],
    mode: MaxStarMode,
) -> Result<Vec<f64>> {
    let alphabet =
        crate::modulation::enumerate_transformed_alphabet(constellation, channel.cir().taps())?;
    let trellis = Trellis::new(&alphabet, channel.n)?;
    let n_obs = trellis.n_obs();
    debug_assert_eq!(n_obs, channel.n_out());
    if !(channel.n0 > 0.0) {
        return Err(Error::Numerical(
            "BCJR needs positive noise variance".into(),
        ));
    }
    let vars = vec![channel.n0; n_obs];
    let obs = GaussianObs {
        mean_re: &y[..n_obs],
        var_re: &vars,
        mean_im: &y[n_obs..],
        var_im: &vars,
    };
    let opts = BcjrOptions {
        mode,
        ..BcjrOptions::default()
    };
    Ok(run_bcjr(&trellis, &obs, &opts)?.sym_logpmf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_real_channel, transmit, Cir};
    use crate::modulation::{
        enumerate_transformed_alphabet, make_constellation, ConstellationKind,
    };
    use num_complex::Complex64;

    fn re(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn softmax_rows(logpmf: &[f64], m: usize) -> Vec<f64> {
        logpmf
            .chunks_exact(m)
            .flat_map(|row| {
                let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = row.iter().map(|&v| (v - mx).exp()).collect();
                let z: f64 = w.iter().sum();
                w.into_iter().map(move |v| v / z)
            })
            .collect()
    }

    /// Exhaustive MAP oracle: enumerates every symbol sequence, scores
    /// the exact Gaussian log-likelihood of the full received vector,
    /// and marginalizes with plain log-sum-exp.
    fn brute_force_pmf(
        channel: &crate::model::RealChannel,
        constellation: &crate::modulation::Constellation,
        y: &[f64],
    ) -> Vec<f64> {
        let n = channel.n;
        let m = constellation.m;
        let n_out = channel.n_out();
        let total = m.pow(n as u32);
        let mut logmarg = vec![f64::NEG_INFINITY; n * m];
        let mut x = vec![0.0f64; 2 * n];
        for seq in 0..total {
            let mut rem = seq;
            let mut digits = vec![0usize; n];
            for i in (0..n).rev() {
                digits[i] = rem % m;
                rem /= m;
            }
            for i in 0..n {
                let p = constellation.points[digits[i]];
                x[i] = p.re;
                x[n + i] = p.im;
            }
            let clean = channel.apply_h(&x);
            let mut ll = 0.0;
            for j in 0..2 * n_out {
                let d = y[j] - clean[j];
                ll -= d * d / (2.0 * channel.n0);
            }
            for i in 0..n {
                let e = &mut logmarg[i * m + digits[i]];
                // plain log-sum-exp, independent of the engine's maxstar
                let (hi, lo) = if *e >= ll { (*e, ll) } else { (ll, *e) };
                *e = if lo == f64::NEG_INFINITY {
                    hi
                } else {
                    hi + (lo - hi).exp().ln_1p()
                };
            }
        }
        softmax_rows(&logmarg, m)
    }

    #[test]
    fn gaussian_metric_examples() {
        let c = make_constellation(ConstellationKind::Pam, 2).unwrap();
        let alphabet = enumerate_transformed_alphabet(&c, &[re(1.0)]).unwrap();
        let trellis = Trellis::new(&alphabet, 3).unwrap();
        let vars = vec![0.5; 3];
        let zeros = vec![0.0; 3];
        let ones = vec![1.0; 3];
        // equidistant outputs: equal metrics
        let obs = GaussianObs {
            mean_re: &zeros,
            var_re: &vars,
            mean_im: &zeros,
            var_im: &ones,
        };
        let g = gaussian_nle_metric(&trellis, &obs, 1).unwrap();
        assert!((g[0] - g[1]).abs() < 1e-15);
        // mean sitting on one output: that branch dominates by the
        // expected quadratic gap
        let means = vec![1.0; 3];
        let obs = GaussianObs {
            mean_re: &means,
            var_re: &vars,
            mean_im: &zeros,
            var_im: &ones,
        };
        let g = gaussian_nle_metric(&trellis, &obs, 0).unwrap();
        assert_eq!(g[1], 0.0);
        assert!((g[0] - (-0.5 * 4.0 / 0.5)).abs() < 1e-12);
        // out-of-range step and bad variance are rejected
        assert!(gaussian_nle_metric(&trellis, &obs, 3).is_err());
        let bad = vec![0.0; 3];
        let obs = GaussianObs {
            mean_re: &means,
            var_re: &bad,
            mean_im: &zeros,
            var_im: &ones,
        };
        assert!(gaussian_nle_metric(&trellis, &obs, 0).is_err());
    }

    #[test]
    fn state_degrees_are_m() {
        let c = make_constellation(ConstellationKind::Pam, 2).unwrap();
        let taps = vec![re(0.7), re(0.5), re(0.3)];
        let alphabet = enumerate_transformed_alphabet(&c, &taps).unwrap();
        let trellis = Trellis::new(&alphabet, 5).unwrap();
        let s_count = trellis.n_states();
        let m = trellis.m;
        let mut incoming = vec![0usize; s_count];
        let mut outgoing = vec![0usize; s_count];
        for b in 0..trellis.n_branches() {
            outgoing[b / m] += 1;
            incoming[b % s_count] += 1;
        }
        assert!(incoming.iter().all(|&c| c == m));
        assert!(outgoing.iter().all(|&c| c == m));
    }

    #[test]
    fn maxstar_examples() {
        assert!((maxstar(0.0, 0.0) - 2.0f64.ln()).abs() < 1e-15);
        assert_eq!(maxstar(3.5, f64::NEG_INFINITY), 3.5);
        assert_eq!(
            maxstar(f64::NEG_INFINITY, f64::NEG_INFINITY),
            f64::NEG_INFINITY
        );
        let want = 2.0 + (1.0 + (-1.0f64).exp()).ln();
        assert!((maxstar(1.0, 2.0) - want).abs() < 1e-15);
        assert!((maxstar(1.0, 2.0) - 2.3132616875182228).abs() < 1e-12);
        // symmetry and huge-gap early out
        assert_eq!(maxstar(1.0, 2.0), maxstar(2.0, 1.0));
        assert_eq!(maxstar(0.0, -1e9), 0.0);
    }

    #[test]
    fn memoryless_trellis_is_symbolwise_demapper() {
        let c = make_constellation(ConstellationKind::Pam, 8).unwrap();
        let taps = vec![re(1.0)];
        let alphabet = enumerate_transformed_alphabet(&c, &taps).unwrap();
        let trellis = Trellis::new(&alphabet, 5).unwrap();
        let mean_re = vec![0.3, -0.8, 0.05, 1.1, -0.2];
        let var_re = vec![0.2, 0.5, 0.1, 0.3, 0.25];
        let zeros = vec![0.0; 5];
        let ones = vec![1.0; 5];
        let obs = GaussianObs {
            mean_re: &mean_re,
            var_re: &var_re,
            mean_im: &zeros,
            var_im: &ones,
        };
        let run = run_bcjr(&trellis, &obs, &BcjrOptions::default()).unwrap();
        let pmf = softmax_rows(&run.sym_logpmf, 8);
        for i in 0..5 {
            // closed-form demapper
            let logp: Vec<f64> = c
                .points
                .iter()
                .map(|p| -0.5 * (mean_re[i] - p.re) * (mean_re[i] - p.re) / var_re[i])
                .collect();
            let want = softmax_rows(&logp, 8);
            for a in 0..8 {
                assert!((pmf[i * 8 + a] - want[a]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn equals_brute_force_small_pam() {
        let cir = Cir::new(vec![re(0.8), re(0.6)]).unwrap();
        let channel = build_real_channel(&cir, 4, 6.0).unwrap();
        let c = make_constellation(ConstellationKind::Pam, 2).unwrap();
        let frame = transmit(&channel, &c, 42);
        let logpmf = full_bcjr_logpmf(&channel, &c, &frame.y, MaxStarMode::Exact).unwrap();
        let got = softmax_rows(&logpmf, 2);
        let want = brute_force_pmf(&channel, &c, &frame.y);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-9, "{g} vs {w}");
        }
    }

    #[test]
    fn equals_brute_force_complex_qam() {
        let cir = Cir::new(vec![Complex64::new(0.7, 0.3), Complex64::new(-0.25, 0.45)]).unwrap();
        let channel = build_real_channel(&cir, 3, 8.0).unwrap();
        let c = make_constellation(ConstellationKind::Qam, 4).unwrap();
        let frame = transmit(&channel, &c, 7);
        let logpmf = full_bcjr_logpmf(&channel, &c, &frame.y, MaxStarMode::Exact).unwrap();
        let got = softmax_rows(&logpmf, 4);
        let want = brute_force_pmf(&channel, &c, &frame.y);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-9, "{g} vs {w}");
        }
    }

    #[test]
    fn equidistant_outputs_give_uniform_posteriors() {
        let c = make_constellation(ConstellationKind::Pam, 2).unwrap();
        let alphabet = enumerate_transformed_alphabet(&c, &[re(1.0)]).unwrap();
        let trellis = Trellis::new(&alphabet, 4).unwrap();
        let mean_re = vec![0.0; 4];
        let var_re = vec![0.5; 4];
        let zeros = vec![0.0; 4];
        let ones = vec![1.0; 4];
        let obs = GaussianObs {
            mean_re: &mean_re,
            var_re: &var_re,
            mean_im: &zeros,
            var_im: &ones,
        };
        let run = run_bcjr(&trellis, &obs, &BcjrOptions::default()).unwrap();
        let pmf = softmax_rows(&run.sym_logpmf, 2);
        for p in pmf {
            assert!((p - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_observation_pins_branch() {
        let c = make_constellation(ConstellationKind::Pam, 2).unwrap();
        let alphabet = enumerate_transformed_alphabet(&c, &[re(1.0), re(0.5)]).unwrap();
        let trellis = Trellis::new(&alphabet, 6).unwrap();
        // means sit exactly on the (+1, +1) branch output trail
        let n_obs = trellis.n_obs();
        let mut mean_re = vec![1.5; n_obs];
        mean_re[0] = 1.0; // head step: only tap 0 active
        mean_re[n_obs - 1] = 0.5; // tail: only tap 1 active
        let var_re = vec![1e-6; n_obs];
        let zeros = vec![0.0; n_obs];
        let ones = vec![1.0; n_obs];
        let obs = GaussianObs {
            mean_re: &mean_re,
            var_re: &var_re,
            mean_im: &zeros,
            var_im: &ones,
        };
        let run = run_bcjr(&trellis, &obs, &BcjrOptions::default()).unwrap();
        let pmf = softmax_rows(&run.sym_logpmf, 2);
        for i in 0..6 {
            assert!(pmf[i * 2 + 1] > 1.0 - 1e-9, "step {i}: {}", pmf[i * 2 + 1]);
        }
    }

    #[test]
    fn shift_invariance_per_step() {
        let cir = Cir::new(vec![re(0.9), re(0.4), re(0.15)]).unwrap();
        let channel = build_real_channel(&cir, 8, 10.0).unwrap();
        let c = make_constellation(ConstellationKind::Pam, 2).unwrap();
        let frame = transmit(&channel, &c, 11);
        let alphabet = enumerate_transformed_alphabet(&c, channel.cir().taps()).unwrap();
        let trellis = Trellis::new(&alphabet, 8).unwrap();
        let n_obs = trellis.n_obs();
        let vars = vec![channel.n0; n_obs];
        let obs = GaussianObs {
            mean_re: &frame.y[..n_obs],
            var_re: &vars,
            mean_im: &frame.y[n_obs..],
            var_im: &vars,
        };
        let base = run_bcjr(&trellis, &obs, &BcjrOptions::default()).unwrap();
        let offsets: Vec<f64> = (0..8).map(|i| (i as f64 - 3.0) * 7.5).collect();
        let shifted =
            run_bcjr_with_offsets(&trellis, &obs, &BcjrOptions::default(), &offsets).unwrap();
        let p0 = softmax_rows(&base.sym_logpmf, 2);
        let p1 = softmax_rows(&shifted.sym_logpmf, 2);
        for (a, b) in p0.iter().zip(&p1) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn branch_posteriors_are_stochastic_and_match_alphabet() {
        let c = make_constellation(ConstellationKind::Pam, 2).unwrap();
        let taps = vec![re(0.8), re(0.5), re(0.3)];
        let alphabet = enumerate_transformed_alphabet(&c, &taps).unwrap();
        let trellis = Trellis::new(&alphabet, 6).unwrap();
        for (b, out) in alphabet.outputs.iter().enumerate() {
            let (ore, oim) = trellis.branch_output(b);
            assert!((ore - out.re).abs() < 1e-15 && (oim - out.im).abs() < 1e-15);
        }
        let n_obs = trellis.n_obs();
        let mean_re: Vec<f64> = (0..n_obs).map(|i| (i as f64 * 0.37).sin()).collect();
        let var_re = vec![0.4; n_obs];
        let zeros = vec![0.0; n_obs];
        let ones = vec![1.0; n_obs];
        let obs = GaussianObs {
            mean_re: &mean_re,
            var_re: &var_re,
            mean_im: &zeros,
            var_im: &ones,
        };
        let opts = BcjrOptions {
            keep_branch_posteriors: true,
            ..BcjrOptions::default()
        };
        let run = run_bcjr(&trellis, &obs, &opts).unwrap();
        let bp = run.branch_posteriors.unwrap();
        for row in bp.chunks_exact(trellis.n_branches()) {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn projection_examples() {
        // uniform PMF over identity target: mean 0, var 1
        let pmf = vec![0.5, 0.5];
        let (m1, v1, _, _) = nle_project(&pmf, &[-1.0, 1.0], &[0.0, 0.0], 1e-7);
        assert!((m1 - 0.0).abs() < 1e-15 && (v1 - 1.0).abs() < 1e-12);
        // uniform PMF over two-tap target: var = mean of {2.25,.25,.25,2.25}
        let pmf = vec![0.25; 4];
        let outs = [-1.5, 0.5, -0.5, 1.5];
        let (m2, v2, _, _) = nle_project(&pmf, &outs, &[0.0; 4], 1e-7);
        assert!((m2 - 0.0).abs() < 1e-15 && (v2 - 1.25).abs() < 1e-12);
        // deterministic PMF collapses to the floor
        let pmf = vec![0.0, 1.0, 0.0, 0.0];
        let (m3, v3, _, _) = nle_project(&pmf, &outs, &[0.0; 4], 1e-7);
        assert!((m3 - 0.5).abs() < 1e-15);
        assert_eq!(v3, 1e-7);
    }

    #[test]
    fn rejects_bad_observations() {
        let c = make_constellation(ConstellationKind::Pam, 2).unwrap();
        let alphabet = enumerate_transformed_alphabet(&c, &[re(1.0)]).unwrap();
        let trellis = Trellis::new(&alphabet, 3).unwrap();
        let nan = vec![f64::NAN, 0.0, 0.0];
        let good = vec![0.0; 3];
        let vars = vec![1.0; 3];
        let obs = GaussianObs {
            mean_re: &nan,
            var_re: &vars,
            mean_im: &good,
            var_im: &vars,
        };
        assert!(run_bcjr(&trellis, &obs, &BcjrOptions::default()).is_err());
        let zero_var = vec![0.0; 3];
        let obs = GaussianObs {
            mean_re: &good,
            var_re: &zero_var,
            mean_im: &good,
            var_im: &vars,
        };
        assert!(run_bcjr(&trellis, &obs, &BcjrOptions::default()).is_err());
    }

    #[test]
    fn maxlog_mode_still_valid() {
        let cir = Cir::new(vec![re(0.8), re(0.6)]).unwrap();
        let channel = build_real_channel(&cir, 5, 12.0).unwrap();
        let c = make_constellation(ConstellationKind::Pam, 2).unwrap();
        let frame = transmit(&channel, &c, 3);
        let logpmf = full_bcjr_logpmf(&channel, &c, &frame.y, MaxStarMode::MaxLog).unwrap();
        let pmf = softmax_rows(&logpmf, 2);
        for row in pmf.chunks_exact(2) {
            assert!((row[0] + row[1] - 1.0).abs() < 1e-9);
        }
        // at this SNR hard decisions should match the exact mode
        let exact = full_bcjr_logpmf(&channel, &c, &frame.y, MaxStarMode::Exact).unwrap();
        for (a, b) in logpmf.chunks_exact(2).zip(exact.chunks_exact(2)) {
            assert_eq!(a[0] > a[1], b[0] > b[1]);
        }
    }
}
