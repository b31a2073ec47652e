//! Command-line front end.
//!
//! `epshort sweep` maps flags onto a [`SweepConfig`]; a `--config` file
//! supplies defaults with the same keys as the long flags, and explicit
//! flags win.

use std::collections::BTreeMap;

use crate::config::{
    parse_config_file, parse_constellation_name, parse_detector, parse_f64_list,
    parse_shorten_mode, parse_snr_grid, parse_usize_list,
};
use crate::error::{Error, Result};
use crate::model::Cir;
use crate::sweep::{run_sweep, ChannelSpec, SweepConfig};

const USAGE: &str = "\
epshort - symbol detection on ISI channels with EP in a shortened signal space

USAGE:
    epshort sweep [FLAGS]

FLAGS (config-file keys use the same names without dashes):
    --channel <preset|file>   channel: preset name (proakis-c, identity) or CIR file
    --mod <name>              constellation: pam2, pam8, qam16, ...
    --n <int>                 block length in symbols (default 512)
    --snr <a:b:s|list>        Es/N0 grid in dB (range a:b:s or comma list)
    --nu <list>               target memory values, e.g. 0,1,2,3
    --beta <list>             momentum step values, e.g. 0.05,0.1,0.2,0.4,0.6
    --iters <int>             message-passing iterations (0 = initialization only)
    --frames <int>            Monte-Carlo frames per cell
    --seed <int>              master seed
    --out <file>              results CSV path
    --append                  skip (snr, nu, beta, seed) cells already in --out
    --threads <int>           worker threads over frames (default 1)
    --shorten-mode <mode>     identity | mmse-min-eig | full | taps:<file>
    --detector <which>        ep (default) | full-bcjr
    --max-log                 use the max-log approximation in the trellis
    --no-mismatched-init      diagonal prior covariance in the first LE pass
    --variance-floor <x>      message variance floor (default 1e-7)
    --llr-clip <x>            symbol log-probability clip in nats (default 16)
    --config <file>           key-value defaults file
    --quiet                   suppress per-cell summary lines

Exit status: 0 on success, 2 on startup errors.
";

/// Entry point used by the binary.
pub fn run(args: &[String]) -> Result<()> {
    match args.first().map(String::as_str) {
        Some("sweep") => {
            let cfg = parse_sweep_args(&args[1..])?;
            run_sweep(&cfg)?;
            Ok(())
        }
        None | Some("help") | Some("--help") | Some("-h") => {
            print!("{USAGE}");
            Ok(())
        }
        Some(other) => Err(Error::InvalidArgument(format!(
            "unknown command {other:?}; try `epshort help`"
        ))),
    }
}

const VALUE_FLAGS: &[&str] = &[
    "channel",
    "mod",
    "n",
    "snr",
    "nu",
    "beta",
    "iters",
    "frames",
    "seed",
    "out",
    "threads",
    "shorten-mode",
    "detector",
    "variance-floor",
    "llr-clip",
    "config",
];

const BOOL_FLAGS: &[&str] = &["append", "max-log", "no-mismatched-init", "quiet"];

/// Parses `sweep` flags (with optional config-file defaults) into a
/// sweep configuration.
pub fn parse_sweep_args(args: &[String]) -> Result<SweepConfig> {
    let mut cli: BTreeMap<String, String> = BTreeMap::new();
    let mut i = 0;
    while i < args.len() {
        let arg = &args[i];
        let name = arg
            .strip_prefix("--")
            .ok_or_else(|| Error::InvalidArgument(format!("unexpected argument {arg:?}")))?;
        if BOOL_FLAGS.contains(&name) {
            cli.insert(name.to_string(), "true".to_string());
            i += 1;
        } else if VALUE_FLAGS.contains(&name) {
            let value = args
                .get(i + 1)
                .ok_or_else(|| Error::InvalidArgument(format!("flag --{name} needs a value")))?;
            cli.insert(name.to_string(), value.clone());
            i += 2;
        } else {
            return Err(Error::InvalidArgument(format!("unknown flag --{name}")));
        }
    }

    // config file supplies defaults, explicit flags override
    let mut merged: BTreeMap<String, String> = BTreeMap::new();
    if let Some(path) = cli.get("config") {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidArgument(format!("cannot read config {path:?}: {e}")))?;
        for (k, v) in parse_config_file(&text)? {
            if !VALUE_FLAGS.contains(&k.as_str()) && !BOOL_FLAGS.contains(&k.as_str()) {
                return Err(Error::Parse(format!("unknown config key {k:?}")));
            }
            merged.insert(k, v);
        }
    }
    merged.extend(cli);

    let mut cfg = SweepConfig::default();
    for (key, value) in &merged {
        match key.as_str() {
            "channel" => {
                cfg.channel = if Cir::preset(value).is_some() {
                    ChannelSpec::Preset(value.clone())
                } else {
                    ChannelSpec::File(value.clone())
                };
            }
            "mod" => cfg.constellation = parse_constellation_name(value)?,
            "n" => cfg.n = parse_int(key, value)?,
            "snr" => cfg.snr_db = parse_snr_grid(value)?,
            "nu" => cfg.nu_list = parse_usize_list(value)?,
            "beta" => cfg.beta_list = parse_f64_list(value)?,
            "iters" => cfg.n_it = parse_int(key, value)?,
            "frames" => cfg.frames = parse_int(key, value)? as u64,
            "seed" => {
                cfg.master_seed = value
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad seed {value:?}")))?
            }
            "out" => cfg.out_path = Some(value.into()),
            "threads" => cfg.threads = parse_int(key, value)?,
            "shorten-mode" => cfg.shorten_mode = parse_shorten_mode(value)?,
            "detector" => cfg.detector = parse_detector(value)?,
            "variance-floor" => cfg.variance_floor = parse_pos_f64(key, value)?,
            "llr-clip" => cfg.llr_clip = parse_pos_f64(key, value)?,
            "append" => cfg.append = parse_bool(key, value)?,
            "max-log" => cfg.max_log = parse_bool(key, value)?,
            "no-mismatched-init" => cfg.mismatched_init = !parse_bool(key, value)?,
            "quiet" => cfg.quiet = parse_bool(key, value)?,
            "config" => {}
            _ => unreachable!("key set checked above"),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_int(key: &str, value: &str) -> Result<usize> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad integer for {key}: {value:?}")))
}

fn parse_pos_f64(key: &str, value: &str) -> Result<f64> {
    let v: f64 = value
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad number for {key}: {value:?}")))?;
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::Parse(format!("{key} must be positive and finite")));
    }
    Ok(v)
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::Parse(format!("bad boolean for {key}: {other:?}"))),
    }
}
