//! Sweep configuration: CLI flags, key-value config files, and the
//! small grammar of grid strings. Everything here parses untrusted text
//! and must fail cleanly rather than panic.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::modulation::ConstellationKind;

/// SNR grid: a single value `a`, an inclusive range `a:b:s`, or a comma
/// list `a,b,c`, all in dB.
pub fn parse_snr_grid(text: &str) -> Result<Vec<f64>> {
    let text = text.trim();
    if text.is_empty() {
        return Err(Error::Parse("empty SNR grid".into()));
    }
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Parse(format!(
                "SNR range must be a:b:s, got {text:?}"
            )));
        }
        let a: f64 = parse_finite(parts[0], "SNR start")?;
        let b: f64 = parse_finite(parts[1], "SNR stop")?;
        let s: f64 = parse_finite(parts[2], "SNR step")?;
        if !(s > 0.0) {
            return Err(Error::Parse(format!("SNR step must be positive, got {s}")));
        }
        if b < a {
            return Err(Error::Parse(format!("SNR stop {b} below start {a}")));
        }
        let count = ((b - a) / s).floor() as usize + 1;
        if count > 100_000 {
            return Err(Error::Parse(format!("SNR grid has {count} points")));
        }
        return Ok((0..count).map(|i| a + i as f64 * s).collect());
    }
    parse_f64_list(text).and_then(|v| {
        if v.is_empty() {
            Err(Error::Parse("empty SNR grid".into()))
        } else {
            Ok(v)
        }
    })
}

fn parse_finite(text: &str, what: &str) -> Result<f64> {
    let v: f64 = text
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad {what}: {text:?}")))?;
    if !v.is_finite() {
        return Err(Error::Parse(format!("{what} must be finite, got {text:?}")));
    }
    Ok(v)
}

pub fn parse_f64_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| parse_finite(s, "list entry"))
        .collect()
}

pub fn parse_usize_list(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad integer list entry {s:?}")))
        })
        .collect()
}

/// Constellation names: `pam<M>` or `qam<M>`.
pub fn parse_constellation_name(text: &str) -> Result<(ConstellationKind, usize)> {
    let text = text.trim().to_ascii_lowercase();
    let (kind, rest) = if let Some(rest) = text.strip_prefix("pam") {
        (ConstellationKind::Pam, rest)
    } else if let Some(rest) = text.strip_prefix("qam") {
        (ConstellationKind::Qam, rest)
    } else {
        return Err(Error::Parse(format!("unknown constellation {text:?}")));
    };
    let m: usize = rest
        .parse()
        .map_err(|_| Error::Parse(format!("bad constellation order in {text:?}")))?;
    if m < 2 || m > 4096 || !m.is_power_of_two() {
        return Err(Error::Parse(format!("unsupported constellation order {m}")));
    }
    Ok((kind, m))
}

/// Shortening mode names, including `taps:<file>`.
#[derive(Debug, Clone, PartialEq)]
pub enum ShortenModeSpec {
    Identity,
    MmseMinEig,
    Full,
    TapsFile(String),
}

pub fn parse_shorten_mode(text: &str) -> Result<ShortenModeSpec> {
    let text = text.trim();
    match text {
        "identity" => Ok(ShortenModeSpec::Identity),
        "mmse-min-eig" => Ok(ShortenModeSpec::MmseMinEig),
        "full" => Ok(ShortenModeSpec::Full),
        _ => {
            if let Some(path) = text.strip_prefix("taps:") {
                if path.is_empty() {
                    return Err(Error::Parse("taps: needs a file path".into()));
                }
                Ok(ShortenModeSpec::TapsFile(path.to_string()))
            } else {
                Err(Error::Parse(format!(
                    "unknown shorten mode {text:?} (identity|mmse-min-eig|full|taps:<file>)"
                )))
            }
        }
    }
}

/// Target taps file: same `re,im` line format as CIR files, but kept
/// exactly as written (no energy normalization).
pub fn parse_taps_str(text: &str) -> Result<Vec<Complex64>> {
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
        let re: f64 = parse_finite(re, "tap real part")?;
        let im: f64 = parse_finite(im, "tap imag part")?;
        taps.push(Complex64::new(re, im));
    }
    if taps.is_empty() {
        return Err(Error::Parse("taps file has no taps".into()));
    }
    Ok(taps)
}

/// Which detector a sweep runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorChoice {
    Ep,
    FullBcjr,
}

pub fn parse_detector(text: &str) -> Result<DetectorChoice> {
    match text.trim() {
        "ep" => Ok(DetectorChoice::Ep),
        "full-bcjr" => Ok(DetectorChoice::FullBcjr),
        other => Err(Error::Parse(format!(
            "unknown detector {other:?} (ep|full-bcjr)"
        ))),
    }
}

/// Key-value config file: one `key = value` per line, `#` comments.
/// Keys use the CLI flag names without leading dashes.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Parse(format!(
                "line {}: expected `key = value`, got {line:?}",
                lineno + 1
            ))
        })?;
        let key = key.trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') {
            return Err(Error::Parse(format!(
                "line {}: bad key {key:?}",
                lineno + 1
            )));
        }
        map.insert(key.to_string(), value.trim().to_string());
    }
    Ok(map)
}
