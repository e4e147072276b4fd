//! Waveform and table serialization.
//!
//! Binary waveform layout (all little-endian): `f64` sample rate, `u64`
//! sample count, then `count` `f64` samples.

use std::io::{Read, Write};

use crate::error::{Result, SicError};
use crate::signal::RealSignal;

pub fn write_waveform_bin<W: Write>(sig: &RealSignal, mut w: W) -> Result<()> {
    w.write_all(&sig.sample_rate_hz.to_le_bytes())?;
    w.write_all(&(sig.samples.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(sig.samples.len() * 8);
    for v in &sig.samples {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_waveform_bin<R: Read>(mut r: R) -> Result<RealSignal> {
    let mut word = [0u8; 8];
    r.read_exact(&mut word)?;
    let fs = f64::from_le_bytes(word);
    r.read_exact(&mut word)?;
    let count = u64::from_le_bytes(word);
    let count = usize::try_from(count)
        .map_err(|_| SicError::InvalidInput(format!("sample count {count} too large")))?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() != count * 8 {
        return Err(SicError::InvalidInput(format!(
            "header declares {count} samples but payload holds {} bytes",
            payload.len()
        )));
    }
    let samples = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    RealSignal::new(fs, samples)
}

/// CSV with header `time_s,amplitude`.
pub fn write_waveform_csv<W: Write>(sig: &RealSignal, mut w: W) -> Result<()> {
    writeln!(w, "time_s,amplitude")?;
    for (n, v) in sig.samples.iter().enumerate() {
        writeln!(w, "{:e},{:e}", n as f64 / sig.sample_rate_hz, v)?;
    }
    Ok(())
}

pub fn read_waveform_csv<R: Read>(mut r: R) -> Result<RealSignal> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "time_s,amplitude" => {}
        other => {
            return Err(SicError::InvalidInput(format!(
                "expected header time_s,amplitude, got {other:?}"
            )))
        }
    }
    let mut times = Vec::new();
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let parse = |s: Option<&str>| -> Result<f64> {
            s.and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| SicError::InvalidInput(format!("bad CSV row {}: {line}", i + 2)))
        };
        times.push(parse(parts.next())?);
        samples.push(parse(parts.next())?);
    }
    if samples.len() < 2 {
        return Err(SicError::InvalidInput("need at least two rows to infer the sample rate".into()));
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    RealSignal::new(1.0 / dt, samples)
}

/// Writes a CSV table: one header row then rows of numbers.
pub fn write_table_csv<W: Write>(header: &[&str], rows: &[Vec<f64>], mut w: W) -> Result<()> {
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        if row.len() != header.len() {
            return Err(SicError::InvalidInput(format!(
                "row has {} columns, header has {}",
                row.len(),
                header.len()
            )));
        }
        let cells: Vec<String> = row.iter().map(|v| format_cell(*v)).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Shortest round-trip representation; integers print without a fraction.
fn format_cell(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}
