//! Text formats for datasets and single observations.
//!
//! Dataset:
//! ```text
//! CPDSET v1 J=<int> MO=<int> NP=<int> TS=<float_s>
//! # split=<int>            (optional metadata comments)
//! <re0> <im0> <re1> <im1> ...   (J rows, chronological, 2(Mo+Np) values)
//! ```
//! Observation:
//! ```text
//! CPOBS v1 MO=<int>
//! <re> <im>                (Mo rows, filter order: newest sample first)
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;

use super::{Dataset, NoisyObservation, Trajectory};
use crate::error::{Error, Result};

const DATASET_MAGIC: &str = "CPDSET";
const OBS_MAGIC: &str = "CPOBS";
const VERSION: &str = "v1";

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_dataset<W: Write>(ds: &Dataset, mut w: W) -> Result<()> {
    let ts = ds.symbol_duration_s().unwrap_or(1.0);
    writeln!(
        w,
        "{DATASET_MAGIC} {VERSION} J={} MO={} NP={} TS={ts}",
        ds.len(),
        ds.obs_len,
        ds.pred_len
    )?;
    writeln!(w, "# normalized={}", ds.normalized)?;
    if let Some(s) = ds.split {
        writeln!(w, "# split={s}")?;
    }
    if let Some(fc) = ds.carrier_hz {
        writeln!(w, "# fc_hz={fc}")?;
    }
    if !ds.is_empty() && ds.trajectories.iter().all(|t| t.velocity_mps.is_some()) {
        write!(w, "# velocity_mps=")?;
        for (j, t) in ds.trajectories.iter().enumerate() {
            let sep = if j == 0 { "" } else { " " };
            write!(w, "{sep}{}", t.velocity_mps.unwrap_or_default())?;
        }
        writeln!(w)?;
    }
    let mut line = String::new();
    for t in &ds.trajectories {
        line.clear();
        for (m, z) in t.coeffs.iter().enumerate() {
            if m > 0 {
                line.push(' ');
            }
            line.push_str(&fmt_f64(z.re));
            line.push(' ');
            line.push_str(&fmt_f64(z.im));
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_dataset(ds, BufWriter::new(File::create(path)?))
}

struct Header {
    count: usize,
    obs_len: usize,
    pred_len: usize,
    ts: f64,
}

fn header_field<T: std::str::FromStr>(tok: Option<&str>, key: &str, line: usize) -> Result<T> {
    let tok = tok.ok_or_else(|| Error::parse(line, format!("missing {key}=")))?;
    let value = tok
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| Error::parse(line, format!("expected {key}=..., found {tok:?}")))?;
    value
        .parse()
        .map_err(|_| Error::parse(line, format!("bad value for {key}: {value:?}")))
}

fn parse_header(line: &str) -> Result<Header> {
    let mut toks = line.split_whitespace();
    if toks.next() != Some(DATASET_MAGIC) {
        return Err(Error::parse(1, "missing CPDSET magic"));
    }
    match toks.next() {
        Some(VERSION) => {}
        other => return Err(Error::parse(1, format!("unsupported version {other:?}"))),
    }
    let count = header_field(toks.next(), "J", 1)?;
    let obs_len = header_field(toks.next(), "MO", 1)?;
    let pred_len = header_field(toks.next(), "NP", 1)?;
    let ts: f64 = header_field(toks.next(), "TS", 1)?;
    if toks.next().is_some() {
        return Err(Error::parse(1, "trailing header fields"));
    }
    if obs_len == 0 || pred_len == 0 || !(ts > 0.0 && ts.is_finite()) {
        return Err(Error::parse(1, "header values out of range"));
    }
    Ok(Header {
        count,
        obs_len,
        pred_len,
        ts,
    })
}

fn parse_finite(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::parse(line, format!("not a number: {tok:?}")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("non-finite value {tok:?}")));
    }
    Ok(v)
}

#[derive(Default)]
struct Meta {
    normalized: bool,
    split: Option<usize>,
    carrier_hz: Option<f64>,
    velocities: Option<Vec<f64>>,
}

fn parse_comment(body: &str, line: usize, meta: &mut Meta) -> Result<()> {
    let Some((key, value)) = body.trim().split_once('=') else {
        return Ok(());
    };
    let bad = || Error::parse(line, format!("bad metadata value for {key}"));
    match key.trim() {
        "normalized" => meta.normalized = value.trim().parse().map_err(|_| bad())?,
        "split" => meta.split = Some(value.trim().parse().map_err(|_| bad())?),
        "fc_hz" => meta.carrier_hz = Some(parse_finite(value.trim(), line)?),
        "velocity_mps" => {
            meta.velocities = Some(
                value
                    .split_whitespace()
                    .map(|t| parse_finite(t, line))
                    .collect::<Result<_>>()?,
            )
        }
        _ => {}
    }
    Ok(())
}

pub fn read_dataset<R: BufRead>(r: R) -> Result<Dataset> {
    let mut lines = r.lines();
    let first = match lines.next() {
        Some(l) => l?,
        None => return Err(Error::parse(1, "empty dataset file")),
    };
    let header = parse_header(first.trim_end())?;
    let dim = header.obs_len + header.pred_len;
    let mut meta = Meta::default();
    let mut rows: Vec<Vec<Complex64>> = Vec::with_capacity(header.count);
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(body) = trimmed.strip_prefix('#') {
            parse_comment(body, line_no, &mut meta)?;
            continue;
        }
        if rows.len() == header.count {
            return Err(Error::parse(line_no, format!("more than J={} rows", header.count)));
        }
        let values = trimmed
            .split_whitespace()
            .map(|t| parse_finite(t, line_no))
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != 2 * dim {
            return Err(Error::parse(
                line_no,
                format!("row has {} values, expected {}", values.len(), 2 * dim),
            ));
        }
        rows.push(values.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect());
    }
    if rows.len() != header.count {
        return Err(Error::parse(
            header.count + 1,
            format!("found {} rows, header says J={}", rows.len(), header.count),
        ));
    }
    if let Some(v) = &meta.velocities {
        if v.len() != rows.len() {
            return Err(Error::parse(1, "velocity metadata count does not match J"));
        }
    }
    let trajectories = rows
        .into_iter()
        .enumerate()
        .map(|(j, coeffs)| {
            let v = meta.velocities.as_ref().map(|v| v[j]);
            Trajectory::new(coeffs, header.ts, v)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ds = Dataset::new(trajectories, header.obs_len, header.pred_len)?;
    ds.normalized = meta.normalized;
    ds.carrier_hz = meta.carrier_hz;
    if let Some(s) = meta.split {
        if s > ds.len() {
            return Err(Error::parse(1, format!("split {s} beyond J={}", ds.len())));
        }
    }
    ds.split = meta.split;
    Ok(ds)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    read_dataset(BufReader::new(File::open(path)?))
}

pub fn save_observation(y: &NoisyObservation, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{OBS_MAGIC} {VERSION} MO={}", y.len())?;
    for z in &y.values {
        writeln!(w, "{} {}", fmt_f64(z.re), fmt_f64(z.im))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an observation file; the noise variance is supplied by the caller.
pub fn load_observation(path: impl AsRef<Path>, noise_var: f64) -> Result<NoisyObservation> {
    let r = BufReader::new(File::open(path)?);
    let mut lines = r.lines();
    let first = match lines.next() {
        Some(l) => l?,
        None => return Err(Error::parse(1, "empty observation file")),
    };
    let mut toks = first.split_whitespace();
    if toks.next() != Some(OBS_MAGIC) || toks.next() != Some(VERSION) {
        return Err(Error::parse(1, "missing CPOBS v1 header"));
    }
    let mo: usize = header_field(toks.next(), "MO", 1)?;
    let mut values = Vec::with_capacity(mo);
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parts: Vec<f64> = trimmed
            .split_whitespace()
            .map(|t| parse_finite(t, idx + 2))
            .collect::<Result<_>>()?;
        if parts.len() != 2 {
            return Err(Error::parse(idx + 2, "expected `re im`"));
        }
        values.push(Complex64::new(parts[0], parts[1]));
    }
    if values.len() != mo {
        return Err(Error::parse(1, format!("found {} values, header says MO={mo}", values.len())));
    }
    NoisyObservation::new(values, noise_var)
}
