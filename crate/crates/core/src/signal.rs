//! Waveform synthesis and band-limited signal manipulation.
//!
//! Frames are treated as periodic: delays, resampling and filtering all work
//! on the circular frame, and generated frames carry a short silent guard at
//! both edges so wrap-around is harmless.
//!
//! Passband convention: `upconvert` returns `Re{bb * exp(j 2 pi fc t)}`, so a
//! unit-RMS complex envelope becomes a real signal of power 0.5.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{self, bin_freq};
use crate::error::{Result, SicError};

/// Uniformly sampled real waveform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealSignal {
    pub sample_rate_hz: f64,
    pub samples: Vec<f64>,
}

impl RealSignal {
    pub fn new(sample_rate_hz: f64, samples: Vec<f64>) -> Result<Self> {
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(SicError::Config(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(SicError::InvalidInput("non-finite sample".into()));
        }
        Ok(Self {
            sample_rate_hz,
            samples,
        })
    }

    /// All-zero frame.
    pub fn zeros(sample_rate_hz: f64, len: usize) -> Self {
        Self {
            sample_rate_hz,
            samples: vec![0.0; len],
        }
    }

    /// `amplitude * cos(2 pi f t + phase)` sampled over `len` samples.
    pub fn tone(sample_rate_hz: f64, len: usize, freq_hz: f64, amplitude: f64, phase: f64) -> Self {
        let samples = (0..len)
            .map(|n| amplitude * (2.0 * PI * freq_hz * n as f64 / sample_rate_hz + phase).cos())
            .collect();
        Self {
            sample_rate_hz,
            samples,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    /// Mean-square value.
    pub fn power(&self) -> f64 {
        dsp::mean_square(&self.samples)
    }

    pub fn rms(&self) -> f64 {
        self.power().sqrt()
    }

    pub fn peak_to_peak(&self) -> f64 {
        let (lo, hi) = self
            .samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if self.samples.is_empty() {
            0.0
        } else {
            hi - lo
        }
    }

    /// Elementwise sum; both signals must share rate and length.
    pub fn add(&self, other: &RealSignal) -> Result<RealSignal> {
        check_same_rate(self.sample_rate_hz, other.sample_rate_hz)?;
        if self.len() != other.len() {
            return Err(SicError::InvalidInput(format!(
                "length mismatch: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        Ok(RealSignal {
            sample_rate_hz: self.sample_rate_hz,
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &RealSignal) -> Result<RealSignal> {
        self.add(&scale(other, -1.0))
    }
}

pub(crate) fn check_same_rate(a: f64, b: f64) -> Result<()> {
    if (a - b).abs() > 1e-9 * a.abs().max(b.abs()) {
        Err(SicError::RateMismatch(a, b))
    } else {
        Ok(())
    }
}

/// Complex baseband waveform with its nominal occupied bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexBaseband {
    pub sample_rate_hz: f64,
    pub samples: Vec<Complex64>,
    /// Two-sided occupied bandwidth in Hz (0 for a pure DC envelope).
    pub occupied_bw_hz: f64,
}

impl ComplexBaseband {
    pub fn new(sample_rate_hz: f64, samples: Vec<Complex64>, occupied_bw_hz: f64) -> Result<Self> {
        if !(sample_rate_hz > 0.0) {
            return Err(SicError::Config("sample rate must be positive".into()));
        }
        if samples.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(SicError::InvalidInput("non-finite sample".into()));
        }
        Ok(Self {
            sample_rate_hz,
            samples,
            occupied_bw_hz,
        })
    }

    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|c| c.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// OFDM waveform parameters. "Baud rate" is the occupied RF bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OfdmConfig {
    pub fft_size: usize,
    pub occupied_subcarriers: usize,
    pub cp_fraction: f64,
    pub qam_order: usize,
    pub baud_rate_hz: f64,
    /// Silent fraction of each OFDM symbol slot (zero-padded OFDM).
    pub zero_padding_fraction: f64,
    pub frame_duration_s: f64,
    /// Silent fraction of the frame, split between both edges.
    pub guard_fraction: f64,
    pub seed: u64,
}

impl Default for OfdmConfig {
    fn default() -> Self {
        Self {
            fft_size: 256,
            occupied_subcarriers: 200,
            cp_fraction: 1.0 / 16.0,
            qam_order: 16,
            baud_rate_hz: 1e9,
            zero_padding_fraction: 0.0,
            frame_duration_s: 4e-6,
            guard_fraction: 0.02,
            seed: 1,
        }
    }
}

impl OfdmConfig {
    pub fn subcarrier_spacing_hz(&self) -> f64 {
        self.baud_rate_hz / self.occupied_subcarriers as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.occupied_subcarriers == 0 || self.occupied_subcarriers + 2 > self.fft_size {
            return Err(SicError::Config(format!(
                "occupied_subcarriers ({}) must be in 1..=fft_size-2 ({})",
                self.occupied_subcarriers,
                self.fft_size.saturating_sub(2)
            )));
        }
        if !matches!(self.qam_order, 4 | 16 | 64) {
            return Err(SicError::Config(format!(
                "qam_order must be 4, 16 or 64, got {}",
                self.qam_order
            )));
        }
        if !(self.baud_rate_hz > 0.0) {
            return Err(SicError::Config("baud_rate_hz must be positive".into()));
        }
        if !(self.frame_duration_s > 0.0) {
            return Err(SicError::Config("frame_duration_s must be positive".into()));
        }
        for (name, v) in [
            ("cp_fraction", self.cp_fraction),
            ("zero_padding_fraction", self.zero_padding_fraction),
            ("guard_fraction", self.guard_fraction),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(SicError::Config(format!("{name} must be in [0, 1), got {v}")));
            }
        }
        Ok(())
    }
}

/// QPSK signal-of-interest parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SoiConfig {
    pub baud_rate_hz: f64,
    pub rolloff: f64,
    pub frame_duration_s: f64,
    pub seed: u64,
}

impl Default for SoiConfig {
    fn default() -> Self {
        Self {
            baud_rate_hz: 0.5e9,
            rolloff: 0.35,
            frame_duration_s: 4e-6,
            seed: 7,
        }
    }
}

/// Generated QPSK waveform plus what a genie receiver needs to know.
#[derive(Debug, Clone)]
pub struct QpskWaveform {
    pub baseband: ComplexBaseband,
    pub symbols: Vec<Complex64>,
    pub symbol_period_s: f64,
    /// Factor applied to the raw pulse train to reach unit RMS.
    pub normalization: f64,
}

fn qam_constellation(order: usize) -> Vec<Complex64> {
    let side = (order as f64).sqrt().round() as usize;
    let levels: Vec<f64> = (0..side).map(|i| 2.0 * i as f64 - (side as f64 - 1.0)).collect();
    let mut pts = Vec::with_capacity(order);
    for &i in &levels {
        for &q in &levels {
            pts.push(Complex64::new(i, q));
        }
    }
    let e = pts.iter().map(|c| c.norm_sqr()).sum::<f64>() / pts.len() as f64;
    let s = 1.0 / e.sqrt();
    pts.into_iter().map(|c| c * s).collect()
}

/// Subcarrier indices (relative to DC) of the occupied carriers; DC is left empty.
fn occupied_indices(count: usize) -> Vec<i64> {
    let lower = (count / 2) as i64;
    let upper = count as i64 - lower;
    (-lower..0).chain(1..=upper).collect()
}

/// Synthesizes a QAM OFDM complex envelope with unit RMS power.
///
/// Symbols are laid out back to back (cyclic prefix, body, optional silent
/// zero-pad) between the frame guards, then the whole frame is confined to
/// `+-(baud/2 + one subcarrier spacing)` by a frequency-domain brickwall.
pub fn gen_ofdm(cfg: &OfdmConfig, sample_rate_hz: f64) -> Result<ComplexBaseband> {
    cfg.validate()?;
    if sample_rate_hz < 2.0 * cfg.baud_rate_hz {
        return Err(SicError::Nyquist {
            what: "OFDM occupied bandwidth",
            needed_hz: cfg.baud_rate_hz,
            nyquist_hz: sample_rate_hz / 2.0,
        });
    }
    let n_total = (cfg.frame_duration_s * sample_rate_hz).round() as usize;
    if n_total == 0 {
        return Err(SicError::Config("frame shorter than one sample".into()));
    }
    let df = cfg.subcarrier_spacing_hz();
    let t_body = 1.0 / df;
    let t_cp = cfg.cp_fraction * t_body;
    let t_slot = (t_body + t_cp) / (1.0 - cfg.zero_padding_fraction);
    let t_guard = cfg.guard_fraction * cfg.frame_duration_s / 2.0;
    let t_end = cfg.frame_duration_s - t_guard;

    let constellation = qam_constellation(cfg.qam_order);
    let carriers = occupied_indices(cfg.occupied_subcarriers);
    let rotations: Vec<Complex64> = carriers
        .iter()
        .map(|&k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 * df / sample_rate_hz))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut samples = vec![Complex64::new(0.0, 0.0); n_total];

    let mut slot_start = t_guard;
    while slot_start < t_end {
        let data: Vec<Complex64> = carriers
            .iter()
            .map(|_| constellation[rng.random_range(0..constellation.len())])
            .collect();
        let active_end = (slot_start + t_cp + t_body).min(t_end);
        let n0 = (slot_start * sample_rate_hz).ceil() as usize;
        let n1 = ((active_end * sample_rate_hz).ceil() as usize).min(n_total);
        if n0 < n1 {
            // phase origin at the end of the cyclic prefix
            let t_ref = slot_start + t_cp;
            let t0 = n0 as f64 / sample_rate_hz - t_ref;
            let mut phasors: Vec<Complex64> = carriers
                .iter()
                .zip(&data)
                .map(|(&k, &d)| d * Complex64::from_polar(1.0, 2.0 * PI * k as f64 * df * t0))
                .collect();
            for (count, out) in samples[n0..n1].iter_mut().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for p in phasors.iter() {
                    acc += p;
                }
                *out = acc;
                for (p, r) in phasors.iter_mut().zip(&rotations) {
                    *p *= r;
                }
                // renormalize occasionally against rounding drift
                if count % 4096 == 4095 {
                    for (p, d) in phasors.iter_mut().zip(&data) {
                        *p *= d.norm() / p.norm();
                    }
                }
            }
        }
        slot_start += t_slot;
    }

    let edge = cfg.baud_rate_hz / 2.0 + df;
    let mut spec = samples;
    dsp::fft_in_place(&mut spec);
    let n = spec.len();
    for (k, v) in spec.iter_mut().enumerate() {
        if bin_freq(k, n, sample_rate_hz).abs() > edge {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    dsp::ifft_in_place(&mut spec);
    let mut bb = ComplexBaseband::new(sample_rate_hz, spec, cfg.baud_rate_hz)?;
    normalize_unit_rms(&mut bb)?;
    Ok(bb)
}

fn normalize_unit_rms(bb: &mut ComplexBaseband) -> Result<f64> {
    let p = bb.power();
    if p <= 0.0 {
        return Err(SicError::Config("generated waveform has zero power".into()));
    }
    let s = 1.0 / p.sqrt();
    for v in bb.samples.iter_mut() {
        *v *= s;
    }
    Ok(s)
}

/// Root-raised-cosine impulse response with unit energy per symbol period
/// (`sum_n p(nT)^2 * T = 1` in the continuous sense), evaluated at time `t`.
pub fn rrc_pulse(t: f64, symbol_period: f64, rolloff: f64) -> f64 {
    let x = t / symbol_period;
    let b = rolloff;
    if x.abs() < 1e-12 {
        return (1.0 - b + 4.0 * b / PI) / symbol_period.sqrt();
    }
    if b > 0.0 && ((4.0 * b * x).abs() - 1.0).abs() < 1e-9 {
        let a = PI / (4.0 * b);
        return b / (2.0f64).sqrt()
            * ((1.0 + 2.0 / PI) * a.sin() + (1.0 - 2.0 / PI) * a.cos())
            / symbol_period.sqrt();
    }
    let num = (PI * x * (1.0 - b)).sin() + 4.0 * b * x * (PI * x * (1.0 + b)).cos();
    let den = PI * x * (1.0 - (4.0 * b * x).powi(2));
    num / den / symbol_period.sqrt()
}

/// Pulse span on each side, in symbols.
pub const RRC_SPAN_SYMBOLS: usize = 12;

/// Wraps `t` into `[-period/2, period/2)`.
pub(crate) fn wrap_time(t: f64, period: f64) -> f64 {
    let mut w = t.rem_euclid(period);
    if w >= period / 2.0 {
        w -= period;
    }
    w
}

/// Root-raised-cosine shaped QPSK with unit RMS power; periodic over the frame.
pub fn gen_qpsk(cfg: &SoiConfig, sample_rate_hz: f64) -> Result<QpskWaveform> {
    if !(cfg.baud_rate_hz > 0.0) {
        return Err(SicError::Config("SOI baud_rate_hz must be positive".into()));
    }
    if !(0.0..=1.0).contains(&cfg.rolloff) {
        return Err(SicError::Config(format!("rolloff must be in [0, 1], got {}", cfg.rolloff)));
    }
    let needed = 2.0 * cfg.baud_rate_hz * (1.0 + cfg.rolloff);
    if sample_rate_hz < needed {
        return Err(SicError::Nyquist {
            what: "QPSK occupied bandwidth",
            needed_hz: needed / 2.0,
            nyquist_hz: sample_rate_hz / 2.0,
        });
    }
    let n_total = (cfg.frame_duration_s * sample_rate_hz).round() as usize;
    let period = n_total as f64 / sample_rate_hz;
    let t_sym = 1.0 / cfg.baud_rate_hz;
    let n_sym = (period / t_sym).floor() as usize;
    if n_sym == 0 {
        return Err(SicError::Config("frame shorter than one SOI symbol".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let symbols: Vec<Complex64> = (0..n_sym)
        .map(|_| {
            let i = if rng.random::<bool>() { h } else { -h };
            let q = if rng.random::<bool>() { h } else { -h };
            Complex64::new(i, q)
        })
        .collect();

    let span = RRC_SPAN_SYMBOLS as i64;
    let mut samples = vec![Complex64::new(0.0, 0.0); n_total];
    for (n, out) in samples.iter_mut().enumerate() {
        let t = n as f64 / sample_rate_hz;
        let centre = (t / t_sym).round() as i64;
        let mut acc = Complex64::new(0.0, 0.0);
        for k in centre - span..=centre + span {
            let idx = k.rem_euclid(n_sym as i64) as usize;
            let dt = wrap_time(t - idx as f64 * t_sym, period);
            if dt.abs() <= span as f64 * t_sym {
                acc += symbols[idx] * rrc_pulse(dt, t_sym, cfg.rolloff);
            }
        }
        *out = acc;
    }
    let occupied = cfg.baud_rate_hz * (1.0 + cfg.rolloff);
    let mut baseband = ComplexBaseband::new(sample_rate_hz, samples, occupied)?;
    let normalization = normalize_unit_rms(&mut baseband)?;
    Ok(QpskWaveform {
        baseband,
        symbols,
        symbol_period_s: t_sym,
        normalization,
    })
}

/// Real passband `Re{bb * exp(j 2 pi fc t)}`.
pub fn upconvert(bb: &ComplexBaseband, carrier_hz: f64) -> Result<RealSignal> {
    let top = carrier_hz + bb.occupied_bw_hz / 2.0;
    if top >= bb.sample_rate_hz / 2.0 {
        return Err(SicError::Nyquist {
            what: "upconverted band edge",
            needed_hz: top,
            nyquist_hz: bb.sample_rate_hz / 2.0,
        });
    }
    if carrier_hz < bb.occupied_bw_hz / 2.0 {
        return Err(SicError::Config(format!(
            "carrier {carrier_hz} Hz is below half the occupied bandwidth"
        )));
    }
    let w = 2.0 * PI * carrier_hz / bb.sample_rate_hz;
    let samples = bb
        .samples
        .iter()
        .enumerate()
        .map(|(n, c)| {
            let ph = w * n as f64;
            c.re * ph.cos() - c.im * ph.sin()
        })
        .collect();
    RealSignal::new(bb.sample_rate_hz, samples)
}

/// Coherent downconversion: keeps positive-frequency content within
/// `carrier +- bandwidth/2`, shifts it to DC and doubles it, so that
/// `downconvert(upconvert(bb, fc), fc, bw)` returns `bb`.
pub fn downconvert(sig: &RealSignal, carrier_hz: f64, bandwidth_hz: f64) -> Result<ComplexBaseband> {
    let n = sig.len();
    if n == 0 {
        return Err(SicError::InvalidInput("empty signal".into()));
    }
    let fs = sig.sample_rate_hz;
    let spec = dsp::fft_real(&sig.samples);
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (k, v) in spec.iter().enumerate() {
        let f = bin_freq(k, n, fs);
        if f > 0.0 && (f - carrier_hz).abs() <= bandwidth_hz / 2.0 {
            let shifted = f - carrier_hz;
            let kk = ((shifted * n as f64 / fs).round() as i64).rem_euclid(n as i64) as usize;
            out[kk] += v * 2.0;
        }
    }
    dsp::ifft_in_place(&mut out);
    // carrier may not sit on a bin; apply the residual rotation in time
    let bin_shift = (carrier_hz * n as f64 / fs).round() * fs / n as f64;
    let resid = carrier_hz - bin_shift;
    if resid.abs() > 0.0 {
        for (i, v) in out.iter_mut().enumerate() {
            *v *= Complex64::from_polar(1.0, -2.0 * PI * resid * i as f64 / fs);
        }
    }
    ComplexBaseband::new(fs, out, bandwidth_hz)
}

/// Band-limited circular delay by a linear phase ramp in frequency.
///
/// The Nyquist bin (even lengths) is scaled by `cos(pi d)`, so integer
/// delays are exact circular shifts and outputs stay real.
pub fn fractional_delay(sig: &RealSignal, delay_s: f64) -> Result<RealSignal> {
    let n = sig.len();
    if n == 0 {
        return Err(SicError::InvalidInput("cannot delay an empty signal".into()));
    }
    if !(delay_s.abs() < sig.duration_s()) {
        return Err(SicError::InvalidInput(format!(
            "delay {delay_s} s exceeds the frame duration"
        )));
    }
    if delay_s == 0.0 {
        return Ok(sig.clone());
    }
    let mut spec = dsp::fft_real(&sig.samples);
    apply_delay_ramp(&mut spec, delay_s * sig.sample_rate_hz);
    RealSignal::new(sig.sample_rate_hz, dsp::ifft_real(spec))
}

/// Multiplies a full spectrum by `exp(-j 2 pi k d / N)` for a delay of `d` samples.
pub(crate) fn apply_delay_ramp(spec: &mut [Complex64], delay_samples: f64) {
    let n = spec.len();
    for (k, v) in spec.iter_mut().enumerate() {
        if n % 2 == 0 && k == n / 2 {
            *v *= (PI * delay_samples).cos();
            continue;
        }
        let signed = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        *v *= Complex64::from_polar(1.0, -2.0 * PI * signed * delay_samples / n as f64);
    }
}

/// Fraction of total power above `cutoff_hz` that a downsample would discard.
const ALIAS_POWER_TOLERANCE: f64 = 1e-9;

/// FFT-based band-limited resampling of a periodic frame.
///
/// Output length is `round(len * new_rate / old_rate)`. Downsampling a signal
/// with content above the new Nyquist fails unless `allow_alias` is set, in
/// which case that content is discarded (ideal anti-alias lowpass).
pub fn resample(sig: &RealSignal, new_rate_hz: f64, allow_alias: bool) -> Result<RealSignal> {
    if !(new_rate_hz > 0.0 && new_rate_hz.is_finite()) {
        return Err(SicError::Config(format!("new rate must be positive, got {new_rate_hz}")));
    }
    let n_in = sig.len();
    if n_in == 0 {
        return Err(SicError::InvalidInput("cannot resample an empty signal".into()));
    }
    let n_out = (n_in as f64 * new_rate_hz / sig.sample_rate_hz).round() as usize;
    if n_out == 0 {
        return Err(SicError::Config("resampled frame would be empty".into()));
    }
    if n_out == n_in {
        return RealSignal::new(new_rate_hz, sig.samples.clone());
    }
    let spec = dsp::fft_real(&sig.samples);
    let mut out = vec![Complex64::new(0.0, 0.0); n_out];
    let half_in = n_in / 2;
    let half_out = n_out / 2;
    let keep = half_in.min(half_out);
    let total: f64 = spec.iter().map(|c| c.norm_sqr()).sum();
    let mut dropped = 0.0;
    for (k, v) in spec.iter().enumerate() {
        let signed = if k <= half_in { k as i64 } else { k as i64 - n_in as i64 };
        let mag = signed.unsigned_abs() as usize;
        if mag < keep || (mag == keep && keep < half_out && keep < half_in) {
            let idx = signed.rem_euclid(n_out as i64) as usize;
            out[idx] += v;
        } else if mag == keep {
            // shared Nyquist bin: split or fold so the output stays real
            if n_out > n_in {
                let idx_pos = keep;
                let idx_neg = n_out - keep;
                if n_in % 2 == 0 && mag == half_in {
                    out[idx_pos] += v * 0.5;
                    out[idx_neg] += v * 0.5;
                } else {
                    let idx = signed.rem_euclid(n_out as i64) as usize;
                    out[idx] += v;
                }
            } else if n_out % 2 == 0 {
                out[keep] += Complex64::new(v.re, 0.0);
                dropped += v.im * v.im;
            } else {
                let idx = signed.rem_euclid(n_out as i64) as usize;
                out[idx] += v;
            }
        } else {
            dropped += v.norm_sqr();
        }
    }
    if !allow_alias && total > 0.0 && dropped / total > ALIAS_POWER_TOLERANCE {
        return Err(SicError::Nyquist {
            what: "content discarded by downsampling",
            needed_hz: sig.sample_rate_hz / 2.0,
            nyquist_hz: new_rate_hz / 2.0,
        });
    }
    let scale = n_out as f64 / n_in as f64;
    for v in out.iter_mut() {
        *v *= scale;
    }
    RealSignal::new(new_rate_hz, dsp::ifft_real(out))
}

/// Multiplies every sample by `factor`.
pub fn scale(sig: &RealSignal, factor: f64) -> RealSignal {
    RealSignal {
        sample_rate_hz: sig.sample_rate_hz,
        samples: sig.samples.iter().map(|v| v * factor).collect(),
    }
}

/// Rescales to a given peak-to-peak amplitude (the DAC output boundary).
pub fn to_peak_to_peak(sig: &RealSignal, vpp: f64) -> Result<RealSignal> {
    let pp = sig.peak_to_peak();
    if pp <= 0.0 {
        return Err(SicError::InvalidInput("constant signal has no peak-to-peak swing".into()));
    }
    Ok(scale(sig, vpp / pp))
}

/// Delay by upsampling to `fine_rate_hz`, shifting a whole number of fine
/// samples, and resampling back. Returns the signal and the delay actually
/// applied (quantized to the fine sample period).
pub fn delay_via_upsampling(
    sig: &RealSignal,
    fine_rate_hz: f64,
    delay_s: f64,
) -> Result<(RealSignal, f64)> {
    let up = resample(sig, fine_rate_hz, false)?;
    let n = up.len() as i64;
    let actual_fine_rate = up.len() as f64 / sig.duration_s();
    let shift = (delay_s * actual_fine_rate).round() as i64;
    let mut shifted = vec![0.0; up.len()];
    for (i, v) in up.samples.iter().enumerate() {
        let j = (i as i64 + shift).rem_euclid(n) as usize;
        shifted[j] = *v;
    }
    let up_shifted = RealSignal::new(actual_fine_rate, shifted)?;
    let back = resample(&up_shifted, sig.sample_rate_hz, true)?;
    Ok((back, shift as f64 / actual_fine_rate))
}
