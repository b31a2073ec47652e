//! Detection-quality metrics and the complexity ledger.

use crate::model::RealChannel;

/// Symbol error rate of hard decisions.
pub fn ser(hard: &[usize], truth: &[usize]) -> f64 {
    assert_eq!(hard.len(), truth.len());
    if truth.is_empty() {
        return 0.0;
    }
    hard.iter().zip(truth).filter(|(a, b)| a != b).count() as f64 / truth.len() as f64
}

/// Symbol-wise mutual information estimate in bits per complex channel
/// use: the mismatched-decoding rate log2(M) + mean log2 P(truth),
/// clamped to [0, log2 M]. Posteriors must be row-stochastic N x M.
pub fn smi(posteriors: &[f64], m: usize, truth: &[usize]) -> f64 {
    assert_eq!(posteriors.len(), m * truth.len());
    let log2m = (m as f64).log2();
    if truth.is_empty() {
        return 0.0;
    }
    let mut acc = 0.0;
    for (i, &t) in truth.iter().enumerate() {
        // detector outputs are clip-normalized, never exactly zero; the
        // max guards foreign inputs
        acc += posteriors[i * m + t].max(1e-300).log2();
    }
    (log2m + acc / truth.len() as f64).clamp(0.0, log2m)
}

/// Weighted operation counts per detected symbol.
///
/// The complexity number counts additions with weight 1, multiplications
/// with weight 2, and Jacobian logarithms with weight 2. Only online
/// inference work in the linear and non-linear estimators is counted;
/// per-branch trellis costs follow the table in the crate README
/// (channel metric 3a+3m, message metric 3a+4m, forward and backward
/// add+max* each, one gamma' add reusing the forward sum, one
/// marginalization max*). The linear estimator is costed as a sliding
/// filter of window w = 3L+1 plus w^3 operations for its inverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ComplexityLedger {
    pub additions: u64,
    pub multiplications: u64,
    pub jacobian_logs: u64,
}

impl ComplexityLedger {
    pub fn n_c(&self) -> u64 {
        self.additions + 2 * self.multiplications + 2 * self.jacobian_logs
    }

    fn add(&mut self, other: ComplexityLedger) {
        self.additions += other.additions;
        self.multiplications += other.multiplications;
        self.jacobian_logs += other.jacobian_logs;
    }

    fn scaled(&self, k: u64) -> ComplexityLedger {
        ComplexityLedger {
            additions: self.additions * k,
            multiplications: self.multiplications * k,
            jacobian_logs: self.jacobian_logs * k,
        }
    }
}

/// Which detector a ledger describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorKind {
    /// EP in the shortened space with the given iteration count.
    EpShortened { n_it: usize },
    /// Single-pass full-memory BCJR on the raw observation.
    FullBcjr,
}

/// Per-branch trellis cost with the exact channel metric (shared
/// inverse noise scale across both real dimensions).
fn branch_cost_channel_metric() -> ComplexityLedger {
    ComplexityLedger {
        additions: 6,
        multiplications: 3,
        jacobian_logs: 3,
    }
}

/// Per-branch trellis cost with the per-component Gaussian message
/// metric (independent variances per dimension).
fn branch_cost_message_metric() -> ComplexityLedger {
    ComplexityLedger {
        additions: 6,
        multiplications: 4,
        jacobian_logs: 3,
    }
}

/// Linear-estimator cost per symbol: window-w filter plus w^3 for the
/// inverse.
fn le_cost(l: usize) -> ComplexityLedger {
    let w = (3 * l + 1) as u64;
    ComplexityLedger {
        additions: (w - 1) + w * w * w,
        multiplications: w,
        jacobian_logs: 0,
    }
}

/// Per-symbol complexity ledger for a detector configuration.
pub fn count_complexity(
    kind: DetectorKind,
    channel: &RealChannel,
    m: usize,
    nu: usize,
) -> ComplexityLedger {
    let l = channel.memory();
    match kind {
        DetectorKind::FullBcjr => {
            let branches = (m as u64).pow(l as u32 + 1);
            branch_cost_channel_metric().scaled(branches)
        }
        DetectorKind::EpShortened { n_it } => {
            let branches = (m as u64).pow(nu as u32 + 1);
            let mut per_pass = le_cost(l);
            per_pass.add(branch_cost_message_metric().scaled(branches));
            per_pass.scaled(n_it as u64 + 1)
        }
    }
}


/// Schema tag written as the first line of every results file.
pub const CSV_SCHEMA: &str = "epshort-results-v1";

/// Column header of the results CSV.
pub const CSV_COLUMNS: &str =
    "snr_db,nu,beta,iters,frames,ser,smi_final,smi_best,n_c,neg_var_rejects,clamp_events,seed,status";

/// One aggregated sweep cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub snr_db: f64,
    pub nu: usize,
    pub beta: f64,
    pub iters: usize,
    pub frames: u64,
    pub ser: f64,
    pub smi_final: f64,
    pub smi_best: f64,
    pub n_c: u64,
    pub neg_var_rejects: u64,
    pub clamp_events: u64,
    pub seed: u64,
    pub status: String,
}

impl RunRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.snr_db,
            self.nu,
            self.beta,
            self.iters,
            self.frames,
            self.ser,
            self.smi_final,
            self.smi_best,
            self.n_c,
            self.neg_var_rejects,
            self.clamp_events,
            self.seed,
            self.status
        )
    }

    /// Cell identity used by `--append` resumption.
    pub fn cell_key(&self) -> (u64, usize, u64, u64) {
        (
            self.snr_db.to_bits(),
            self.nu,
            self.beta.to_bits(),
            self.seed,
        )
    }
}

/// Parses a results CSV back into records, skipping the schema comment
/// and the header. Tolerates unknown trailing columns.
pub fn parse_results_csv(text: &str) -> crate::error::Result<Vec<RunRecord>> {
    use crate::error::Error;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("snr_db,") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 13 {
            return Err(Error::Parse(format!(
                "line {}: expected 13 fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let bad = |what: &str| Error::Parse(format!("line {}: bad {what}", lineno + 1));
        out.push(RunRecord {
            snr_db: fields[0].parse().map_err(|_| bad("snr_db"))?,
            nu: fields[1].parse().map_err(|_| bad("nu"))?,
            beta: fields[2].parse().map_err(|_| bad("beta"))?,
            iters: fields[3].parse().map_err(|_| bad("iters"))?,
            frames: fields[4].parse().map_err(|_| bad("frames"))?,
            ser: fields[5].parse().map_err(|_| bad("ser"))?,
            smi_final: fields[6].parse().map_err(|_| bad("smi_final"))?,
            smi_best: fields[7].parse().map_err(|_| bad("smi_best"))?,
            n_c: fields[8].parse().map_err(|_| bad("n_c"))?,
            neg_var_rejects: fields[9].parse().map_err(|_| bad("neg_var_rejects"))?,
            clamp_events: fields[10].parse().map_err(|_| bad("clamp_events"))?,
            seed: fields[11].parse().map_err(|_| bad("seed"))?,
            status: fields[12..].join(","),
        });
    }
    Ok(out)
}
