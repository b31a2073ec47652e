//! Monte-Carlo sweep harness: grid of (SNR, nu, beta) cells, frames run
//! on a small worker pool, one CSV row per cell.
//!
//! Reproducibility contract: per-frame seeds derive from the master seed
//! through [`crate::rng::frame_seed`] by frame index alone, so every
//! cell sees the same frame realizations (common random numbers), and
//! rerunning an identical config yields a byte-identical CSV regardless
//! of the thread count. Aggregation folds frames in index order.

use std::collections::HashSet;
use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use crate::config::{DetectorChoice, ShortenModeSpec};
use crate::ep::{detect, EpConfig, LePath};
use crate::error::{Error, Result};
use crate::metrics::{
    count_complexity, parse_results_csv, smi, DetectorKind, RunRecord, CSV_COLUMNS, CSV_SCHEMA,
};
use crate::model::{build_real_channel, load_cir, transmit, Cir};
use crate::modulation::{make_constellation, Constellation, ConstellationKind};
use crate::rng::frame_seed;
use crate::shorten::{design, ShorteningMode};
use crate::trellis::{full_bcjr_logpmf, MaxStarMode};

/// Channel selection: a named preset or a CIR file path.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelSpec {
    Preset(String),
    File(String),
}

/// Full sweep configuration.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub channel: ChannelSpec,
    pub constellation: (ConstellationKind, usize),
    pub n: usize,
    pub snr_db: Vec<f64>,
    pub nu_list: Vec<usize>,
    pub beta_list: Vec<f64>,
    pub n_it: usize,
    pub frames: u64,
    pub master_seed: u64,
    pub out_path: Option<PathBuf>,
    pub threads: usize,
    pub max_log: bool,
    pub mismatched_init: bool,
    pub shorten_mode: ShortenModeSpec,
    pub detector: DetectorChoice,
    pub variance_floor: f64,
    pub llr_clip: f64,
    pub append: bool,
    pub quiet: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            channel: ChannelSpec::Preset("proakis-c".into()),
            constellation: (ConstellationKind::Pam, 8),
            n: 512,
            snr_db: vec![30.0],
            nu_list: vec![0],
            beta_list: vec![0.4],
            n_it: 4,
            frames: 1,
            master_seed: 1,
            out_path: None,
            threads: 1,
            max_log: false,
            mismatched_init: true,
            shorten_mode: ShortenModeSpec::MmseMinEig,
            detector: DetectorChoice::Ep,
            variance_floor: 1e-7,
            llr_clip: 16.0,
            append: false,
            quiet: false,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.snr_db.is_empty() || self.nu_list.is_empty() || self.beta_list.is_empty() {
            return Err(Error::InvalidArgument("empty sweep grid".into()));
        }
        if self.frames < 1 {
            return Err(Error::InvalidArgument("frames must be >= 1".into()));
        }
        if self.n < 1 {
            return Err(Error::InvalidArgument("block length must be >= 1".into()));
        }
        if self.threads < 1 {
            return Err(Error::InvalidArgument("threads must be >= 1".into()));
        }
        Ok(())
    }

    fn resolve_cir(&self) -> Result<Cir> {
        match &self.channel {
            ChannelSpec::Preset(name) => Cir::preset(name)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown channel preset {name:?}"))),
            ChannelSpec::File(path) => load_cir(path),
        }
    }

    fn resolve_mode(&self, nu: usize, channel_memory: usize) -> Result<ShorteningMode> {
        match &self.shorten_mode {
            ShortenModeSpec::Identity => Ok(ShorteningMode::Identity),
            ShortenModeSpec::Full => {
                let _ = channel_memory;
                Ok(ShorteningMode::Full)
            }
            ShortenModeSpec::MmseMinEig => {
                if nu == 0 {
                    Ok(ShorteningMode::Identity)
                } else {
                    Ok(ShorteningMode::MmseMinEig)
                }
            }
            ShortenModeSpec::TapsFile(path) => {
                let text = std::fs::read_to_string(path)?;
                let taps = crate::config::parse_taps_str(&text)?;
                Ok(ShorteningMode::FixedTaps(taps))
            }
        }
    }
}

/// Runs closure `f` over frame indices on `threads` workers, collecting
/// results by frame index.
pub fn parallel_frames<T, F>(frames: u64, threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync,
{
    let results: Mutex<Vec<Option<T>>> = Mutex::new((0..frames).map(|_| None).collect());
    let cursor = AtomicU64::new(0);
    let workers = threads.max(1).min(frames.max(1) as usize);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = cursor.fetch_add(1, Ordering::Relaxed);
                if i >= frames {
                    break;
                }
                let value = f(i);
                results.lock().unwrap()[i as usize] = Some(value);
            });
        }
    });
    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|v| v.expect("worker filled every frame"))
        .collect()
}

struct FrameStats {
    errors: usize,
    symbols: usize,
    smi_final: f64,
    smi_per_iter: Vec<f64>,
    neg_var_rejects: u64,
    clamp_events: u64,
}

fn run_ep_cell(
    cfg: &SweepConfig,
    cir: &Cir,
    constellation: &Constellation,
    snr_db: f64,
    nu: usize,
    beta: f64,
) -> Result<RunRecord> {
    let channel = build_real_channel(cir, cfg.n, snr_db)?;
    let mode = cfg.resolve_mode(nu, channel.memory())?;
    let d = design(&channel, nu, &mode)?;
    let ep_config = EpConfig {
        nu,
        n_it: cfg.n_it,
        beta,
        variance_floor: cfg.variance_floor,
        llr_clip: cfg.llr_clip,
        mismatched_init: cfg.mismatched_init,
        max_log: cfg.max_log,
        le_path: LePath::Fast,
        keep_trajectory: true,
    };
    let m = constellation.m;
    let outcomes = parallel_frames(cfg.frames, cfg.threads, |idx| -> Result<FrameStats> {
        let seed = frame_seed(cfg.master_seed, idx);
        let frame = transmit(&channel, constellation, seed);
        let (res, diag) = detect(&channel, &d, constellation, &ep_config, &frame.y)?;
        let smi_per_iter = res
            .trajectory
            .as_ref()
            .expect("trajectory kept")
            .iter()
            .map(|p| smi(p, m, &frame.symbols))
            .collect();
        Ok(FrameStats {
            errors: res
                .hard
                .iter()
                .zip(&frame.symbols)
                .filter(|(a, b)| a != b)
                .count(),
            symbols: frame.symbols.len(),
            smi_final: smi(&res.posteriors, m, &frame.symbols),
            smi_per_iter,
            neg_var_rejects: diag.total_neg_var_rejects(),
            clamp_events: diag.total_clamp_events(),
        })
    });
    let n_c = count_complexity(
        DetectorKind::EpShortened { n_it: cfg.n_it },
        &channel,
        m,
        nu,
    )
    .n_c();
    aggregate(cfg, snr_db, nu, beta, cfg.n_it, n_c, outcomes)
}

fn run_full_bcjr_cell(
    cfg: &SweepConfig,
    cir: &Cir,
    constellation: &Constellation,
    snr_db: f64,
) -> Result<RunRecord> {
    let channel = build_real_channel(cir, cfg.n, snr_db)?;
    let m = constellation.m;
    let mode = if cfg.max_log {
        MaxStarMode::MaxLog
    } else {
        MaxStarMode::Exact
    };
    let outcomes = parallel_frames(cfg.frames, cfg.threads, |idx| -> Result<FrameStats> {
        let seed = frame_seed(cfg.master_seed, idx);
        let frame = transmit(&channel, constellation, seed);
        let mut logpmf = full_bcjr_logpmf(&channel, constellation, &frame.y, mode)?;
        let clamps = crate::ep::clip_normalize_rows(&mut logpmf, m, cfg.llr_clip);
        let hard: Vec<usize> = logpmf
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
        let s = smi(&logpmf, m, &frame.symbols);
        Ok(FrameStats {
            errors: hard
                .iter()
                .zip(&frame.symbols)
                .filter(|(a, b)| a != b)
                .count(),
            symbols: frame.symbols.len(),
            smi_final: s,
            smi_per_iter: vec![s],
            neg_var_rejects: 0,
            clamp_events: clamps,
        })
    });
    let n_c = count_complexity(DetectorKind::FullBcjr, &channel, m, channel.memory()).n_c();
    aggregate(cfg, snr_db, channel.memory(), 0.0, 0, n_c, outcomes)
}

fn aggregate(
    cfg: &SweepConfig,
    snr_db: f64,
    nu: usize,
    beta: f64,
    iters: usize,
    n_c: u64,
    outcomes: Vec<Result<FrameStats>>,
) -> Result<RunRecord> {
    let mut errors = 0usize;
    let mut symbols = 0usize;
    let mut smi_final = 0.0;
    let mut per_iter: Vec<f64> = Vec::new();
    let mut rejects = 0u64;
    let mut clamps = 0u64;
    for outcome in outcomes {
        let stats = outcome?;
        errors += stats.errors;
        symbols += stats.symbols;
        smi_final += stats.smi_final;
        if per_iter.is_empty() {
            per_iter = vec![0.0; stats.smi_per_iter.len()];
        }
        for (acc, v) in per_iter.iter_mut().zip(&stats.smi_per_iter) {
            *acc += v;
        }
        rejects += stats.neg_var_rejects;
        clamps += stats.clamp_events;
    }
    let frames = cfg.frames as f64;
    let smi_final = smi_final / frames;
    let smi_best = per_iter
        .iter()
        .map(|v| v / frames)
        .fold(f64::NEG_INFINITY, f64::max)
        .max(smi_final);
    Ok(RunRecord {
        snr_db,
        nu,
        beta,
        iters,
        frames: cfg.frames,
        ser: errors as f64 / symbols as f64,
        smi_final,
        smi_best,
        n_c,
        neg_var_rejects: rejects,
        clamp_events: clamps,
        seed: cfg.master_seed,
        status: "ok".into(),
    })
}

fn failed_record(cfg: &SweepConfig, snr_db: f64, nu: usize, beta: f64, err: &Error) -> RunRecord {
    let status = format!("error: {err}").replace(',', ";").replace('\n', " ");
    RunRecord {
        snr_db,
        nu,
        beta,
        iters: cfg.n_it,
        frames: cfg.frames,
        ser: f64::NAN,
        smi_final: f64::NAN,
        smi_best: f64::NAN,
        n_c: 0,
        neg_var_rejects: 0,
        clamp_events: 0,
        seed: cfg.master_seed,
        status,
    }
}

/// Runs the whole sweep, writes the CSV (if an output path is set), and
/// returns the records in grid order. Cell-level numerical failures are
/// recorded in the status column; startup problems fail the whole sweep.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let cir = cfg.resolve_cir()?;
    let (kind, m) = cfg.constellation;
    let constellation = make_constellation(kind, m)?;

    // cells to skip under --append
    let mut done: HashSet<(u64, usize, u64, u64)> = HashSet::new();
    let mut writer: Option<std::fs::File> = None;
    if let Some(path) = &cfg.out_path {
        let exists = path.exists();
        if cfg.append && exists {
            let text = std::fs::read_to_string(path)?;
            for rec in parse_results_csv(&text)? {
                done.insert(rec.cell_key());
            }
            writer = Some(std::fs::OpenOptions::new().append(true).open(path)?);
        } else {
            let mut f = std::fs::File::create(path)?;
            writeln!(f, "# {CSV_SCHEMA}")?;
            writeln!(f, "{CSV_COLUMNS}")?;
            writer = Some(f);
        }
    }

    let cells: Vec<(f64, usize, f64)> = match cfg.detector {
        DetectorChoice::Ep => cfg
            .snr_db
            .iter()
            .flat_map(|&s| {
                cfg.nu_list
                    .iter()
                    .flat_map(move |&nu| cfg.beta_list.iter().map(move |&b| (s, nu, b)))
            })
            .collect(),
        DetectorChoice::FullBcjr => cfg.snr_db.iter().map(|&s| (s, 0, 0.0)).collect(),
    };

    let mut records = Vec::with_capacity(cells.len());
    for (snr_db, cell_nu, beta) in cells {
        // full-BCJR rows carry the channel memory in the nu column
        let nu = match cfg.detector {
            DetectorChoice::Ep => cell_nu,
            DetectorChoice::FullBcjr => cir.memory(),
        };
        let key = (snr_db.to_bits(), nu, beta.to_bits(), cfg.master_seed);
        if done.contains(&key) {
            if !cfg.quiet {
                println!("skip snr={snr_db} nu={nu} beta={beta} (already in output)");
            }
            continue;
        }
        let outcome = match cfg.detector {
            DetectorChoice::Ep => run_ep_cell(cfg, &cir, &constellation, snr_db, nu, beta),
            DetectorChoice::FullBcjr => run_full_bcjr_cell(cfg, &cir, &constellation, snr_db),
        };
        let record = match outcome {
            Ok(rec) => rec,
            Err(e) => failed_record(cfg, snr_db, nu, beta, &e),
        };
        if let Some(f) = writer.as_mut() {
            writeln!(f, "{}", record.csv_row())?;
            f.flush()?;
        }
        if !cfg.quiet {
            println!(
                "snr={} nu={} beta={} iters={}: ser={} smi_final={:.4} smi_best={:.4} n_c={} [{}]",
                record.snr_db,
                record.nu,
                record.beta,
                record.iters,
                record.ser,
                record.smi_final,
                record.smi_best,
                record.n_c,
                record.status
            );
        }
        records.push(record);
    }
    Ok(records)
}
