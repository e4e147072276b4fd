//! Cancellation depth, spectra and EVM.
//!
//! PSD estimates use Welch averaging: Hann window, 50% overlap, segments of
//! 2^14 samples (or the whole frame when shorter), one-sided scaling so that
//! integrating over frequency returns mean-square power.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::{self, bin_freq, SincInterpolator};
use crate::error::{Result, SicError};
use crate::signal::{check_same_rate, RealSignal};

pub const WELCH_SEGMENT: usize = 1 << 14;
pub const DEPTH_CAP_DB: f64 = 80.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandSpec {
    pub center_hz: f64,
    pub width_hz: f64,
}

impl BandSpec {
    /// Default in-band definition for a signal of the given baud rate.
    pub fn for_signal(center_hz: f64, baud_hz: f64) -> Self {
        Self {
            center_hz,
            width_hz: baud_hz * 1.05,
        }
    }

    pub fn validate(&self, sample_rate_hz: f64) -> Result<()> {
        if !(self.width_hz > 0.0) {
            return Err(SicError::Config(format!("band width must be positive, got {}", self.width_hz)));
        }
        let lo = self.center_hz - self.width_hz / 2.0;
        let hi = self.center_hz + self.width_hz / 2.0;
        if lo < 0.0 || hi > sample_rate_hz / 2.0 {
            return Err(SicError::Config(format!(
                "band [{lo:.4e}, {hi:.4e}] Hz outside [0, {:.4e}] Hz",
                sample_rate_hz / 2.0
            )));
        }
        Ok(())
    }

    fn contains(&self, f: f64) -> bool {
        (f - self.center_hz).abs() <= self.width_hz / 2.0
    }
}

/// One-sided power spectral density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Psd {
    pub freqs_hz: Vec<f64>,
    /// Power per Hz.
    pub values: Vec<f64>,
    pub resolution_hz: f64,
}

impl Psd {
    /// Rows of (freq_hz, psd_db) for CSV output; dB relative to 1 unit^2/Hz.
    pub fn rows_db(&self) -> Vec<Vec<f64>> {
        self.freqs_hz
            .iter()
            .zip(&self.values)
            .map(|(&f, &p)| vec![f, 10.0 * p.max(1e-300).log10()])
            .collect()
    }
}

fn hann(n: usize) -> Vec<f64> {
    // periodic Hann, exact 50% overlap-add
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Welch PSD with the crate's fixed estimator settings.
pub fn welch_psd(sig: &RealSignal) -> Result<Psd> {
    let n = sig.len();
    if n < 2 {
        return Err(SicError::InvalidInput("signal too short for a PSD".into()));
    }
    let seg = WELCH_SEGMENT.min(n);
    let step = seg / 2;
    let w = hann(seg);
    let w_energy: f64 = w.iter().map(|v| v * v).sum();
    let fs = sig.sample_rate_hz;
    let half = seg / 2;
    let mut acc = vec![0.0; half + 1];
    let mut count = 0usize;
    let mut start = 0;
    while start + seg <= n {
        let frame: Vec<f64> = sig.samples[start..start + seg]
            .iter()
            .zip(&w)
            .map(|(x, w)| x * w)
            .collect();
        let spec = dsp::fft_real(&frame);
        for (a, c) in acc.iter_mut().zip(&spec) {
            *a += c.norm_sqr();
        }
        count += 1;
        start += step;
    }
    let norm = 1.0 / (fs * w_energy * count as f64);
    let values = acc
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let one_sided = if k == 0 || (seg % 2 == 0 && k == half) { 1.0 } else { 2.0 };
            p * norm * one_sided
        })
        .collect();
    let freqs_hz = (0..=half).map(|k| bin_freq(k, seg, fs)).map(f64::abs).collect();
    Ok(Psd {
        freqs_hz,
        values,
        resolution_hz: fs / seg as f64,
    })
}

/// Mean-square power inside `band`, from the Welch PSD.
pub fn band_power(sig: &RealSignal, band: &BandSpec) -> Result<f64> {
    band.validate(sig.sample_rate_hz)?;
    let psd = welch_psd(sig)?;
    Ok(psd_band_power(&psd, band))
}

pub fn psd_band_power(psd: &Psd, band: &BandSpec) -> f64 {
    psd.freqs_hz
        .iter()
        .zip(&psd.values)
        .filter(|(f, _)| band.contains(**f))
        .map(|(_, p)| p * psd.resolution_hz)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthReport {
    /// In-band power before cancellation, dB relative to 1 unit^2.
    pub power_before_db: f64,
    pub power_after_db: f64,
    pub depth_db: f64,
    /// True when the depth hit the cap (after-power vanished or was tiny).
    pub capped: bool,
}

impl DepthReport {
    pub fn from_powers(before: f64, after: f64) -> Result<Self> {
        if !(before > 0.0) {
            return Err(SicError::InvalidInput("reference power is zero".into()));
        }
        let raw = if after > 0.0 {
            10.0 * (before / after).log10()
        } else {
            f64::INFINITY
        };
        let capped = raw > DEPTH_CAP_DB;
        let depth_db = raw.min(DEPTH_CAP_DB);
        Ok(Self {
            power_before_db: 10.0 * before.log10(),
            power_after_db: 10.0 * before.log10() - depth_db,
            depth_db,
            capped,
        })
    }
}

/// In-band cancellation depth between two captures.
pub fn sic_depth(before: &RealSignal, after: &RealSignal, band: &BandSpec) -> Result<DepthReport> {
    check_same_rate(before.sample_rate_hz, after.sample_rate_hz)?;
    DepthReport::from_powers(band_power(before, band)?, band_power(after, band)?)
}

/// Closed-form depth `-10 log10(1 + rho^2 - 2 rho cos(2 pi f dtau))`, capped.
pub fn mismatch_depth_curve(f_hz: f64, delta_tau_s: &[f64], rho: f64) -> Result<Vec<f64>> {
    if !(rho >= 0.0) {
        return Err(SicError::Config(format!("rho must be >= 0, got {rho}")));
    }
    Ok(delta_tau_s
        .iter()
        .map(|&dt| {
            let r = 1.0 + rho * rho - 2.0 * rho * (2.0 * PI * f_hz * dt).cos();
            if r <= 0.0 {
                DEPTH_CAP_DB
            } else {
                (-10.0 * r.log10()).min(DEPTH_CAP_DB)
            }
        })
        .collect())
}

/// What a genie receiver knows about the SOI.
#[derive(Debug, Clone)]
pub struct Genie<'a> {
    pub carrier_hz: f64,
    pub symbol_period_s: f64,
    pub rolloff: f64,
    /// Time of symbol 0 within the capture.
    pub timing_s: f64,
    pub symbols: &'a [Complex64],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvmResult {
    /// Matched-filter outputs after complex gain normalization.
    pub symbols: Vec<Complex64>,
    pub evm_percent: f64,
    pub symbol_errors: usize,
}

/// 100 * RMS(received - ideal) / RMS(ideal).
pub fn evm_percent(received: &[Complex64], ideal: &[Complex64]) -> Result<f64> {
    if received.len() != ideal.len() || ideal.is_empty() {
        return Err(SicError::InvalidInput("EVM needs equal, non-empty sequences".into()));
    }
    let err: f64 = received.iter().zip(ideal).map(|(r, i)| (r - i).norm_sqr()).sum();
    let refp: f64 = ideal.iter().map(|i| i.norm_sqr()).sum();
    if refp <= 0.0 {
        return Err(SicError::InvalidInput("ideal constellation has zero power".into()));
    }
    Ok(100.0 * (err / refp).sqrt())
}

fn rrc_response(f: f64, t: f64, beta: f64) -> f64 {
    let f = f.abs();
    let f1 = (1.0 - beta) / (2.0 * t);
    let f2 = (1.0 + beta) / (2.0 * t);
    if f <= f1 {
        1.0
    } else if f >= f2 {
        0.0
    } else {
        (0.5 * (1.0 + (PI * t / beta * (f - f1)).cos())).sqrt()
    }
}

/// Coherent matched-filter demodulation of a real IF capture at known
/// carrier and timing, followed by a data-aided complex gain fit.
pub fn demod_and_evm(if_sig: &RealSignal, genie: &Genie<'_>) -> Result<EvmResult> {
    let n = if_sig.len();
    let fs = if_sig.sample_rate_hz;
    if n == 0 || genie.symbols.is_empty() {
        return Err(SicError::InvalidInput("nothing to demodulate".into()));
    }
    let top = genie.carrier_hz + (1.0 + genie.rolloff) / (2.0 * genie.symbol_period_s);
    if top >= fs / 2.0 {
        return Err(SicError::Nyquist {
            what: "SOI band at capture rate",
            needed_hz: top,
            nyquist_hz: fs / 2.0,
        });
    }
    // analytic signal shifted to DC and matched filtered, all in one spectrum
    let spec = dsp::fft_real(&if_sig.samples);
    let shift = (genie.carrier_hz * n as f64 / fs).round() as i64;
    let resid = genie.carrier_hz - shift as f64 * fs / n as f64;
    let mut bb = vec![Complex64::new(0.0, 0.0); n];
    for (k, v) in spec.iter().enumerate() {
        let f = bin_freq(k, n, fs);
        if f <= 0.0 {
            continue;
        }
        let g = rrc_response(f - genie.carrier_hz, genie.symbol_period_s, genie.rolloff);
        if g > 0.0 {
            let idx = (k as i64 - shift).rem_euclid(n as i64) as usize;
            bb[idx] += v * (2.0 * g);
        }
    }
    dsp::ifft_in_place(&mut bb);
    if resid != 0.0 {
        for (i, v) in bb.iter_mut().enumerate() {
            *v *= Complex64::from_polar(1.0, -2.0 * PI * resid * i as f64 / fs);
        }
    }
    let re: Vec<f64> = bb.iter().map(|c| c.re).collect();
    let im: Vec<f64> = bb.iter().map(|c| c.im).collect();
    let interp = SincInterpolator::default();
    let mut y = Vec::with_capacity(genie.symbols.len());
    for k in 0..genie.symbols.len() {
        let t = (genie.timing_s + k as f64 * genie.symbol_period_s) * fs;
        let pos = t.rem_euclid(n as f64);
        let i0 = pos.floor() as usize;
        let frac = pos - i0 as f64;
        if frac.abs() < 1e-9 {
            y.push(bb[i0 % n]);
            continue;
        }
        // sample at pos == output of a delay by -frac evaluated at i0
        let mut out = vec![0.0; n];
        let mut outi = vec![0.0; n];
        interp.accumulate_delayed(&re, -frac, 1.0, i0..i0 + 1, &mut out);
        interp.accumulate_delayed(&im, -frac, 1.0, i0..i0 + 1, &mut outi);
        y.push(Complex64::new(out[i0], outi[i0]));
    }
    let num: Complex64 = y.iter().zip(genie.symbols).map(|(r, a)| r * a.conj()).sum();
    let den: f64 = genie.symbols.iter().map(|a| a.norm_sqr()).sum();
    let gain = num / den;
    if gain.norm() == 0.0 {
        return Err(SicError::EstimationFailed("SOI not present in capture".into()));
    }
    let norm: Vec<Complex64> = y.iter().map(|r| r / gain).collect();
    let evm = evm_percent(&norm, genie.symbols)?;
    let symbol_errors = norm
        .iter()
        .zip(genie.symbols)
        .filter(|(r, a)| r.re.signum() != a.re.signum() || r.im.signum() != a.im.signum())
        .count();
    Ok(EvmResult {
        symbols: norm,
        evm_percent: evm,
        symbol_errors,
    })
}

/// Constellation rows (symbol_i, symbol_q) for CSV output.
pub fn constellation_rows(symbols: &[Complex64]) -> Vec<Vec<f64>> {
    symbols.iter().map(|c| vec![c.re, c.im]).collect()
}
