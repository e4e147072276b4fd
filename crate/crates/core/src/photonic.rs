//! Dual-parallel Mach-Zehnder modulator, photodetection and IF extraction.
//!
//! Field convention: the unmodulated laser field is 1. A dual-drive MZM
//! splits it equally between two phase-modulated arms,
//!
//! `E = 1/2 exp(j pi a / Vpi) + 1/2 exp(j (pi b / Vpi + bias))`,
//!
//! and the DP-MZM output is `1/2 (E_upper + E_lower)` with the upper child
//! driven by (received, reference) and the lower one by (LO, nothing). At
//! the minimum transmission point identical drives on the two arms cancel,
//! which is how the reference removes the self-interference optically.
//!
//! With this convention, an RF tone of index `m3` and an LO of index `m4`
//! produce an IF photocurrent of amplitude `(R/4) J1(m3) J1(m4)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::FiberSpec;
use crate::dsp::{self, bessel_j, bin_freq};
use crate::error::{Result, SicError};
use crate::signal::{check_same_rate, RealSignal};

/// Complex optical field envelope relative to the laser carrier.
#[derive(Debug, Clone, PartialEq)]
pub struct OpticalEnvelope {
    pub sample_rate_hz: f64,
    pub samples: Vec<Complex64>,
}

impl OpticalEnvelope {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean optical power `|E|^2`.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|c| c.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Bias {
    /// Minimum transmission point, pi between arms.
    Mitp,
    /// Quadrature, pi/2 between arms.
    Quad,
    /// Maximum transmission point, arms in phase.
    Matp,
}

impl Bias {
    pub fn phase(self) -> f64 {
        match self {
            Bias::Mitp => PI,
            Bias::Quad => PI / 2.0,
            Bias::Matp => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModulatorConfig {
    pub v_pi_volts: f64,
    pub bias_upper: Bias,
    pub bias_lower: Bias,
    /// Static error added to both bias phases, in radians.
    pub bias_offset_rad: f64,
}

impl Default for ModulatorConfig {
    fn default() -> Self {
        Self {
            v_pi_volts: 3.5,
            bias_upper: Bias::Mitp,
            bias_lower: Bias::Mitp,
            bias_offset_rad: 0.0,
        }
    }
}

impl ModulatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_pi_volts > 0.0 && self.v_pi_volts.is_finite()) {
            return Err(SicError::Config(format!(
                "v_pi_volts must be positive, got {}",
                self.v_pi_volts
            )));
        }
        if !self.bias_offset_rad.is_finite() {
            return Err(SicError::Config("bias offset must be finite".into()));
        }
        Ok(())
    }

    /// Modulation index `pi A / Vpi` for a drive of amplitude `A`.
    pub fn modulation_index(&self, amplitude_volts: f64) -> f64 {
        PI * amplitude_volts / self.v_pi_volts
    }
}

/// Photodetector and IF capture settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdConfig {
    pub responsivity: f64,
    pub if_center_hz: f64,
    /// Flat passband width; a raised-cosine skirt of 20% of this is added per side.
    pub if_width_hz: f64,
    pub capture_rate_hz: f64,
}

impl Default for PdConfig {
    fn default() -> Self {
        Self {
            responsivity: 1.0,
            if_center_hz: 1e9,
            if_width_hz: 1.1e9,
            capture_rate_hz: 10e9,
        }
    }
}

impl PdConfig {
    pub fn transition_hz(&self) -> f64 {
        0.2 * self.if_width_hz
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.responsivity > 0.0) {
            return Err(SicError::Config("responsivity must be positive".into()));
        }
        if !(self.if_width_hz > 0.0) {
            return Err(SicError::Config("IF width must be positive".into()));
        }
        if !(self.capture_rate_hz > 0.0) {
            return Err(SicError::Config("capture rate must be positive".into()));
        }
        let top = self.if_center_hz + self.if_width_hz / 2.0 + self.transition_hz();
        if top >= self.capture_rate_hz / 2.0 {
            return Err(SicError::Nyquist {
                what: "IF band edge at capture rate",
                needed_hz: top,
                nyquist_hz: self.capture_rate_hz / 2.0,
            });
        }
        if self.if_center_hz - self.if_width_hz / 2.0 - self.transition_hz() <= 0.0 {
            return Err(SicError::Config("IF band reaches DC".into()));
        }
        Ok(())
    }
}

/// Exact dual-drive MZM field, no Bessel truncation.
pub fn ddmzm_full(
    drive_a: &RealSignal,
    drive_b: &RealSignal,
    cfg: &ModulatorConfig,
) -> Result<OpticalEnvelope> {
    ddmzm_with_bias(drive_a, drive_b, cfg, cfg.bias_upper)
}

fn ddmzm_with_bias(
    drive_a: &RealSignal,
    drive_b: &RealSignal,
    cfg: &ModulatorConfig,
    bias: Bias,
) -> Result<OpticalEnvelope> {
    cfg.validate()?;
    check_same_rate(drive_a.sample_rate_hz, drive_b.sample_rate_hz)?;
    if drive_a.len() != drive_b.len() {
        return Err(SicError::InvalidInput("drive lengths differ".into()));
    }
    let k = PI / cfg.v_pi_volts;
    let phi = bias.phase() + cfg.bias_offset_rad;
    let samples = drive_a
        .samples
        .iter()
        .zip(&drive_b.samples)
        .map(|(&a, &b)| {
            0.5 * Complex64::from_polar(1.0, k * a) + 0.5 * Complex64::from_polar(1.0, k * b + phi)
        })
        .collect();
    Ok(OpticalEnvelope {
        sample_rate_hz: drive_a.sample_rate_hz,
        samples,
    })
}

/// DP-MZM: upper child cancels `received` against `reference`, lower child
/// carries the LO; the two outputs are combined with equal weight.
pub fn dpmzm(
    received: &RealSignal,
    reference: &RealSignal,
    lo: &RealSignal,
    cfg: &ModulatorConfig,
) -> Result<OpticalEnvelope> {
    check_same_rate(received.sample_rate_hz, lo.sample_rate_hz)?;
    if lo.len() != received.len() {
        return Err(SicError::InvalidInput("LO length differs from received".into()));
    }
    let upper = ddmzm_with_bias(received, reference, cfg, cfg.bias_upper)?;
    let idle = RealSignal::zeros(lo.sample_rate_hz, lo.len());
    let lower = ddmzm_with_bias(lo, &idle, cfg, cfg.bias_lower)?;
    let samples = upper
        .samples
        .iter()
        .zip(&lower.samples)
        .map(|(u, l)| 0.5 * (u + l))
        .collect();
    Ok(OpticalEnvelope {
        sample_rate_hz: received.sample_rate_hz,
        samples,
    })
}

/// Square-law detection: `R |E|^2`, full beat spectrum retained.
pub fn photodetect(env: &OpticalEnvelope, cfg: &PdConfig) -> Result<RealSignal> {
    if !(cfg.responsivity > 0.0) {
        return Err(SicError::Config("responsivity must be positive".into()));
    }
    let samples = env.samples.iter().map(|c| cfg.responsivity * c.norm_sqr()).collect();
    RealSignal::new(env.sample_rate_hz, samples)
}

/// Zero-phase frequency-domain band-pass around the IF followed by
/// resampling to the capture rate. Whole-frame (periodic) operation, so no
/// group delay is introduced and none needs compensating.
pub fn extract_if(pd_out: &RealSignal, cfg: &PdConfig) -> Result<RealSignal> {
    cfg.validate()?;
    let n_in = pd_out.len();
    if n_in == 0 {
        return Err(SicError::InvalidInput("empty photocurrent".into()));
    }
    let fs = pd_out.sample_rate_hz;
    let top = cfg.if_center_hz + cfg.if_width_hz / 2.0 + cfg.transition_hz();
    if top >= fs / 2.0 {
        return Err(SicError::Nyquist {
            what: "IF band edge at detector rate",
            needed_hz: top,
            nyquist_hz: fs / 2.0,
        });
    }
    let n_out = (n_in as f64 * cfg.capture_rate_hz / fs).round() as usize;
    let spec = dsp::fft_real(&pd_out.samples);
    let mut out = vec![Complex64::new(0.0, 0.0); n_out];
    let scale = n_out as f64 / n_in as f64;
    for (k, v) in spec.iter().enumerate() {
        let f = bin_freq(k, n_in, fs);
        let g = dsp::band_mask(f.abs(), cfg.if_center_hz, cfg.if_width_hz / 2.0, cfg.transition_hz());
        if g > 0.0 {
            let signed = if k <= n_in / 2 { k as i64 } else { k as i64 - n_in as i64 };
            let idx = signed.rem_euclid(n_out as i64) as usize;
            out[idx] += v * (g * scale);
        }
    }
    RealSignal::new(n_out as f64 / pd_out.duration_s(), dsp::ifft_real(out))
}

/// Zero-phase band-pass with the same mask shape as `extract_if`, keeping
/// the sample rate.
pub fn bandpass(sig: &RealSignal, center_hz: f64, width_hz: f64) -> Result<RealSignal> {
    let n = sig.len();
    let fs = sig.sample_rate_hz;
    let mut spec = dsp::fft_real(&sig.samples);
    for (k, v) in spec.iter_mut().enumerate() {
        *v *= dsp::band_mask(bin_freq(k, n, fs).abs(), center_hz, width_hz / 2.0, 0.2 * width_hz);
    }
    RealSignal::new(fs, dsp::ifft_real(spec))
}

/// IF photocurrent amplitude from first-order sidebands with exact Bessel
/// weights: `(R/4) J1(m3) J1(m4)`.
pub fn if_amplitude_bessel(responsivity: f64, m_rf: f64, m_lo: f64) -> f64 {
    responsivity / 4.0 * bessel_j(1, m_rf) * bessel_j(1, m_lo)
}

/// Small-signal predictor with `J1(m) ~ m/2`: `R m3 m4 / 16`.
pub fn if_amplitude_small_signal(responsivity: f64, m_rf: f64, m_lo: f64) -> f64 {
    responsivity * m_rf * m_lo / 16.0
}

/// Fiber span acting on the optical field: folded delay plus attenuation.
pub fn fiber_link_optical(env: &OpticalEnvelope, fiber: &FiberSpec) -> Result<OpticalEnvelope> {
    fiber.validate()?;
    let n = env.len();
    if n == 0 || fiber.length_km == 0.0 {
        return Ok(env.clone());
    }
    let fs = env.sample_rate_hz;
    let d = fiber.folded_delay_s(n as f64 / fs) * fs;
    let mut spec = env.samples.clone();
    dsp::fft_in_place(&mut spec);
    let g = fiber.field_factor();
    for (k, v) in spec.iter_mut().enumerate() {
        let signed = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        *v *= Complex64::from_polar(g, -2.0 * PI * signed * d / n as f64);
    }
    dsp::ifft_in_place(&mut spec);
    Ok(OpticalEnvelope {
        sample_rate_hz: fs,
        samples: spec,
    })
}

/// Amplitude of the spectral line nearest `freq_hz` in a real periodic frame.
pub fn tone_amplitude(sig: &RealSignal, freq_hz: f64) -> f64 {
    let n = sig.len();
    let k = (freq_hz * n as f64 / sig.sample_rate_hz).round() as usize;
    let spec = dsp::fft_real(&sig.samples);
    let scale = if k == 0 || (n % 2 == 0 && k == n / 2) { 1.0 } else { 2.0 };
    scale * spec[k % n].norm() / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{fractional_delay, gen_ofdm, scale, upconvert, OfdmConfig};

    const FS: f64 = 64e9;
    const N: usize = 6400; // 100 ns, integer cycles for every tone used

    fn cfg() -> ModulatorConfig {
        ModulatorConfig::default()
    }

    fn tone_for_index(m: f64, f: f64) -> RealSignal {
        let amp = m * cfg().v_pi_volts / PI;
        RealSignal::tone(FS, N, f, amp, 0.0)
    }

    fn env_line(env: &OpticalEnvelope, freq_hz: f64) -> Complex64 {
        let n = env.len();
        let mut spec = env.samples.clone();
        dsp::fft_in_place(&mut spec);
        let k = (freq_hz * n as f64 / env.sample_rate_hz).round() as i64;
        spec[k.rem_euclid(n as i64) as usize] / n as f64
    }

    #[test]
    fn bias_points() {
        let z = RealSignal::zeros(FS, 64);
        let e = ddmzm_full(&z, &z, &cfg()).unwrap();
        assert!(e.samples.iter().all(|c| c.norm() < 1e-12));
        let matp = ModulatorConfig {
            bias_upper: Bias::Matp,
            ..cfg()
        };
        let e = ddmzm_full(&z, &z, &matp).unwrap();
        assert!(e.samples.iter().all(|c| (c - 1.0).norm() < 1e-15));
        assert!(ddmzm_full(&z, &z, &ModulatorConfig { v_pi_volts: 0.0, ..cfg() }).is_err());
    }

    #[test]
    fn single_tone_sidebands_follow_bessel() {
        let m = 0.1;
        let z = RealSignal::zeros(FS, N);
        let matp = ModulatorConfig {
            bias_upper: Bias::Matp,
            ..cfg()
        };
        // arm b idle at MATP: E = 1/2 exp(j m cos) + 1/2
        let e = ddmzm_full(&tone_for_index(m, 9e9), &z, &matp).unwrap();
        let carrier = env_line(&e, 0.0) - 0.5;
        let side = env_line(&e, 9e9);
        let ratio = side.norm() / carrier.norm();
        let want = bessel_j(1, m) / bessel_j(0, m);
        assert!((ratio / want - 1.0).abs() < 1e-3, "{ratio} vs {want}");
    }

    #[test]
    fn lo_only_gives_suppressed_carrier_sidebands() {
        let m = 1.8;
        // high rate so the 8th LO harmonic does not fold onto DC
        let (fs, n) = (256e9, 25_600);
        let z = RealSignal::zeros(fs, n);
        let lo = RealSignal::tone(fs, n, 8e9, m * cfg().v_pi_volts / PI, 0.0);
        let e = dpmzm(&z, &z, &lo, &cfg()).unwrap();
        // lower child at MITP: 1/2 (exp(j m cos) - 1), then halved again
        let dc = env_line(&e, 0.0);
        assert!((dc - Complex64::new(0.25 * (bessel_j(0, m) - 1.0), 0.0)).norm() < 1e-12);
        for (h, f) in [(1u32, 8e9), (2, 16e9), (3, 24e9)] {
            let want = 0.25 * bessel_j(h, m);
            assert!((env_line(&e, f).norm() - want).abs() < 1e-12, "harmonic {h}");
            assert!((env_line(&e, -f).norm() - want).abs() < 1e-12);
        }
        // nothing between the LO harmonics
        assert!(env_line(&e, 9e9).norm() < 1e-14);
    }

    #[test]
    fn identical_reference_cancels_in_band_sideband() {
        let si = upconvert(
            &gen_ofdm(&OfdmConfig { frame_duration_s: 0.25e-6, ..OfdmConfig::default() }, FS).unwrap(),
            9e9,
        )
        .unwrap();
        let si = scale(&si, 0.5);
        let z = RealSignal::zeros(FS, si.len());
        let uncancelled = dpmzm(&si, &z, &z, &cfg()).unwrap();
        let cancelled = dpmzm(&si, &si, &z, &cfg()).unwrap();
        let p0 = uncancelled.power();
        let p1 = cancelled.power();
        assert!(p1 < 1e-6 * p0, "residual {}", p1 / p0);
    }

    #[test]
    fn photodetect_is_square_law() {
        let env = OpticalEnvelope {
            sample_rate_hz: FS,
            samples: vec![Complex64::from_polar(1.0, 0.3); 16],
        };
        let pd = PdConfig {
            responsivity: 0.8,
            ..PdConfig::default()
        };
        let i = photodetect(&env, &pd).unwrap();
        assert!(i.samples.iter().all(|v| (v - 0.8).abs() < 1e-15));

        let a = Complex64::new(0.3, 0.1);
        let sum = OpticalEnvelope { sample_rate_hz: FS, samples: vec![a + a] };
        let one = OpticalEnvelope { sample_rate_hz: FS, samples: vec![a] };
        let p_sum = photodetect(&sum, &pd).unwrap().samples[0];
        let p_one = photodetect(&one, &pd).unwrap().samples[0];
        assert!((p_sum - 4.0 * p_one).abs() < 1e-15);
        assert!((p_sum - 2.0 * p_one).abs() > 1e-3);
    }

    #[test]
    fn if_tone_matches_bessel_and_small_signal() {
        let z = RealSignal::zeros(FS, N);
        let pd = PdConfig::default();
        for (m3, m4, small_ok) in [(0.1, 0.2, true), (0.05, 0.1, true), (0.1, 0.1, true), (0.5, 0.5, false)] {
            let env = dpmzm(&tone_for_index(m3, 9e9), &z, &tone_for_index(m4, 8e9), &cfg()).unwrap();
            let i = photodetect(&env, &pd).unwrap();
            let amp = tone_amplitude(&i, 1e9);
            let exact = if_amplitude_bessel(pd.responsivity, m3, m4);
            assert!((amp / exact - 1.0).abs() < 1e-6, "m=({m3},{m4}) {amp} vs {exact}");
            let approx = if_amplitude_small_signal(pd.responsivity, m3, m4);
            let dev = (approx / amp - 1.0).abs();
            assert_eq!(dev < 0.01, small_ok, "m=({m3},{m4}) deviation {dev}");
        }
    }

    #[test]
    fn closed_form_mismatch_residual() {
        let z = RealSignal::zeros(FS, N);
        let f = 10e9;
        let m = 0.05;
        let si = tone_for_index(m, f);
        let lo = tone_for_index(1.8, 9e9);
        let pd = PdConfig::default();
        let if_power = |reference: &RealSignal| {
            let env = dpmzm(&si, reference, &lo, &cfg()).unwrap();
            tone_amplitude(&photodetect(&env, &pd).unwrap(), 1e9).powi(2)
        };
        let p0 = if_power(&z);
        for (rho, dtau) in [(1.0, 10e-12), (0.9, 3e-12), (1.0, 2e-12), (0.7, 0.0)] {
            let r = scale(&fractional_delay(&si, dtau).unwrap(), rho);
            let p = if_power(&r);
            let got = 10.0 * (p / p0).log10();
            let want = 10.0 * (1.0 + rho * rho - 2.0 * rho * (2.0 * PI * f * dtau).cos()).log10();
            assert!((got - want).abs() < 0.2, "rho {rho} dtau {dtau}: {got} vs {want}");
        }
    }

    #[test]
    fn extract_if_passband_and_stopband() {
        let pd = PdConfig::default();
        let pass = RealSignal::tone(FS, N, 1e9, 1.0, 0.4);
        let out = extract_if(&pass, &pd).unwrap();
        assert_eq!(out.len(), 1000);
        assert!((out.sample_rate_hz - 10e9).abs() < 1e-3);
        let loss_db = -20.0 * tone_amplitude(&out, 1e9).log10();
        assert!(loss_db.abs() < 0.1);
        let want = RealSignal::tone(10e9, 1000, 1e9, 1.0, 0.4);
        assert!(out.sub(&want).unwrap().rms() < 1e-12);

        let stop = RealSignal::tone(FS, N, 2e9, 1.0, 0.0);
        let out = extract_if(&stop, &pd).unwrap();
        assert!(10.0 * (out.power() / stop.power()).log10() < -60.0);
    }

    #[test]
    fn extract_if_rejects_band_beyond_nyquist() {
        let pd = PdConfig {
            if_center_hz: 4.8e9,
            ..PdConfig::default()
        };
        let s = RealSignal::tone(FS, N, 1e9, 1.0, 0.0);
        assert!(matches!(extract_if(&s, &pd), Err(SicError::Nyquist { .. })));
    }

    #[test]
    fn downconversion_lands_at_difference_frequency() {
        let si = upconvert(
            &gen_ofdm(&OfdmConfig { frame_duration_s: 0.5e-6, ..OfdmConfig::default() }, FS).unwrap(),
            9e9,
        )
        .unwrap();
        let si = scale(&si, 0.1);
        let z = RealSignal::zeros(FS, si.len());
        let lo = RealSignal::tone(FS, si.len(), 8e9, 2.0, 0.0);
        let env = dpmzm(&si, &z, &lo, &cfg()).unwrap();
        let pd = PdConfig::default();
        let ifs = extract_if(&photodetect(&env, &pd).unwrap(), &pd).unwrap();
        // power-weighted centroid of the captured spectrum
        let spec = dsp::fft_real(&ifs.samples);
        let n = spec.len();
        let (mut num, mut den) = (0.0, 0.0);
        for (k, c) in spec.iter().enumerate().take(n / 2) {
            let f = bin_freq(k, n, ifs.sample_rate_hz);
            num += f * c.norm_sqr();
            den += c.norm_sqr();
        }
        assert!((num / den - 1e9).abs() < 2e7, "centroid {}", num / den);
    }

    #[test]
    fn fiber_drops_detected_if_power_twice_in_db() {
        let z = RealSignal::zeros(FS, N);
        let env = dpmzm(&tone_for_index(0.1, 9e9), &z, &tone_for_index(1.8, 8e9), &cfg()).unwrap();
        let fiber = FiberSpec {
            length_km: 25.2,
            ..FiberSpec::default()
        };
        let out = fiber_link_optical(&env, &fiber).unwrap();
        assert!((10.0 * (out.power() / env.power()).log10() + 4.6).abs() < 1e-9);
        let pd = PdConfig::default();
        let a0 = tone_amplitude(&photodetect(&env, &pd).unwrap(), 1e9);
        let a1 = tone_amplitude(&photodetect(&out, &pd).unwrap(), 1e9);
        let drop = 20.0 * (a0 / a1).log10();
        assert!((drop - 9.2).abs() < 1e-6);
        assert!((drop - 8.8).abs() < 0.5);
    }
}
