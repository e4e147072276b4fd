//! Self-interference channel: per-antenna direct and multipath taps, SOI
//! mixing at a target SIR, receiver noise and fiber remoting.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dsp::{self, bin_freq};
use crate::error::{Result, SicError};
use crate::signal::{check_same_rate, scale, RealSignal};

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tap {
    pub delay_s: f64,
    pub gain_db: f64,
}

impl Tap {
    pub fn new(delay_s: f64, gain_db: f64) -> Self {
        Self { delay_s, gain_db }
    }

    pub fn linear_gain(&self) -> f64 {
        10f64.powf(self.gain_db / 20.0)
    }

    fn validate(&self) -> Result<()> {
        if !(self.delay_s >= 0.0 && self.delay_s.is_finite()) {
            return Err(SicError::Config(format!("tap delay must be >= 0, got {}", self.delay_s)));
        }
        if !self.gain_db.is_finite() {
            return Err(SicError::Config("tap gain must be finite".into()));
        }
        Ok(())
    }
}

/// Paths from one transmit antenna. Multipath delays and gains are relative
/// to the direct path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AntennaPaths {
    pub direct: Tap,
    #[serde(default)]
    pub multipaths: Vec<Tap>,
}

impl AntennaPaths {
    /// Absolute (delay, linear gain) pairs for every path.
    pub fn absolute_taps(&self) -> Vec<(f64, f64)> {
        let g0 = self.direct.linear_gain();
        std::iter::once((self.direct.delay_s, g0))
            .chain(
                self.multipaths
                    .iter()
                    .map(|m| (self.direct.delay_s + m.delay_s, g0 * m.linear_gain())),
            )
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PathSet {
    pub antennas: Vec<AntennaPaths>,
}

impl PathSet {
    pub fn direct_only(taps: &[Tap]) -> Self {
        Self {
            antennas: taps
                .iter()
                .map(|&direct| AntennaPaths {
                    direct,
                    multipaths: Vec::new(),
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.antennas.is_empty() {
            return Err(SicError::Config("path set has no antennas".into()));
        }
        for a in &self.antennas {
            a.direct.validate()?;
            for m in &a.multipaths {
                m.validate()?;
            }
        }
        Ok(())
    }

    /// The multipath settings used for the two-antenna experiments, attached
    /// to the given direct paths.
    pub fn table_multipath(direct1: Tap, direct2: Tap) -> Self {
        let gains = [-10.0, -12.0, -15.0];
        let mk = |delays_ns: [f64; 3]| -> Vec<Tap> {
            delays_ns
                .iter()
                .zip(gains)
                .map(|(&d, g)| Tap::new(d * 1e-9, g))
                .collect()
        };
        Self {
            antennas: vec![
                AntennaPaths {
                    direct: direct1,
                    multipaths: mk([8.0, 13.0, 15.0]),
                },
                AntennaPaths {
                    direct: direct2,
                    multipaths: mk([7.0, 15.0, 17.0]),
                },
            ],
        }
    }
}

/// Signal-to-interference ratio, SOI power over total SI power, in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SirSpec {
    pub sir_db: f64,
}

/// Sum over antennas and taps of delayed, scaled copies of each transmit
/// waveform. Delays are circular band-limited phase ramps.
pub fn apply_paths(tx: &[RealSignal], paths: &PathSet) -> Result<RealSignal> {
    paths.validate()?;
    if tx.len() != paths.antennas.len() {
        return Err(SicError::InvalidInput(format!(
            "{} transmit signals for {} antennas",
            tx.len(),
            paths.antennas.len()
        )));
    }
    let fs = tx[0].sample_rate_hz;
    let n = tx[0].len();
    for t in tx {
        check_same_rate(fs, t.sample_rate_hz)?;
        if t.len() != n {
            return Err(SicError::InvalidInput("transmit frames differ in length".into()));
        }
    }
    if n == 0 {
        return Err(SicError::InvalidInput("empty transmit frame".into()));
    }
    let mut acc = vec![Complex64::new(0.0, 0.0); n];
    for (x, ant) in tx.iter().zip(&paths.antennas) {
        let spec = dsp::fft_real(&x.samples);
        let taps = ant.absolute_taps();
        for (k, (a, v)) in acc.iter_mut().zip(&spec).enumerate() {
            *a += v * channel_response(&taps, k, n, fs);
        }
    }
    RealSignal::new(fs, dsp::ifft_real(acc))
}

/// Frequency response of a tap set at FFT bin `k`, with the Nyquist bin
/// handled so that integer delays stay exact circular shifts.
fn channel_response(taps: &[(f64, f64)], k: usize, n: usize, fs: f64) -> Complex64 {
    let mut h = Complex64::new(0.0, 0.0);
    if n % 2 == 0 && k == n / 2 {
        for &(d, g) in taps {
            h += g * (std::f64::consts::PI * d * fs).cos();
        }
        return h;
    }
    let f = bin_freq(k, n, fs);
    for &(d, g) in taps {
        h += Complex64::from_polar(g, -2.0 * std::f64::consts::PI * f * d);
    }
    h
}

/// Scales `soi` so its power sits `sir_db` relative to `rx`.
pub fn scale_soi(rx: &RealSignal, soi: &RealSignal, sir: SirSpec) -> Result<RealSignal> {
    check_same_rate(rx.sample_rate_hz, soi.sample_rate_hz)?;
    let p_soi = soi.power();
    if p_soi <= 0.0 {
        return Err(SicError::InvalidInput("SOI has zero power".into()));
    }
    if !sir.sir_db.is_finite() {
        return Err(SicError::Config("SIR must be finite".into()));
    }
    let target = rx.power() * 10f64.powf(sir.sir_db / 10.0);
    Ok(scale(soi, (target / p_soi).sqrt()))
}

/// Adds the SOI at the requested SIR.
pub fn add_soi(rx: &RealSignal, soi: &RealSignal, sir: SirSpec) -> Result<RealSignal> {
    rx.add(&scale_soi(rx, soi, sir)?)
}

/// Adds white Gaussian noise at `snr_db` relative to the signal's full-band
/// power. `f64::INFINITY` means noiseless.
pub fn add_noise(sig: &RealSignal, snr_db: f64, seed: u64) -> Result<RealSignal> {
    if snr_db == f64::INFINITY {
        return Ok(sig.clone());
    }
    if !snr_db.is_finite() {
        return Err(SicError::Config(format!("invalid SNR {snr_db}")));
    }
    let sigma = (sig.power() / 10f64.powf(snr_db / 10.0)).sqrt();
    let noise = white_noise(sig.len(), sigma, seed)?;
    let samples = sig.samples.iter().zip(noise).map(|(s, w)| s + w).collect();
    RealSignal::new(sig.sample_rate_hz, samples)
}

/// Seeded zero-mean Gaussian samples of standard deviation `sigma`.
pub fn white_noise(len: usize, sigma: f64, seed: u64) -> Result<Vec<f64>> {
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| SicError::Config(format!("noise level: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..len).map(|_| normal.sample(&mut rng)).collect())
}

/// Fiber attenuation and delay for a given length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiberSpec {
    pub length_km: f64,
    pub atten_db_per_km: f64,
    pub delay_per_km_s: f64,
}

impl Default for FiberSpec {
    fn default() -> Self {
        Self {
            length_km: 0.0,
            atten_db_per_km: 4.6 / 25.2,
            delay_per_km_s: 4.9e-6,
        }
    }
}

impl FiberSpec {
    pub fn optical_loss_db(&self) -> f64 {
        self.length_km * self.atten_db_per_km
    }

    /// Field amplitude factor `10^(-loss/20)`.
    pub fn field_factor(&self) -> f64 {
        10f64.powf(-self.optical_loss_db() / 20.0)
    }

    pub fn delay_s(&self) -> f64 {
        self.length_km * self.delay_per_km_s
    }

    /// Propagation delay folded into one frame period; frames are periodic
    /// so only the remainder is observable.
    pub fn folded_delay_s(&self, frame_duration_s: f64) -> f64 {
        self.delay_s().rem_euclid(frame_duration_s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length_km >= 0.0) {
            return Err(SicError::Config("fiber length must be >= 0".into()));
        }
        Ok(())
    }
}

/// Delays and attenuates a field-like signal by a fiber span.
pub fn fiber_link(
    sig: &RealSignal,
    length_km: f64,
    atten_db_per_km: f64,
    delay_per_km_s: f64,
) -> Result<RealSignal> {
    let spec = FiberSpec {
        length_km,
        atten_db_per_km,
        delay_per_km_s,
    };
    spec.validate()?;
    if length_km == 0.0 {
        return Ok(sig.clone());
    }
    let delayed = crate::signal::fractional_delay(sig, spec.folded_delay_s(sig.duration_s()))?;
    Ok(scale(&delayed, spec.field_factor()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{fractional_delay, gen_ofdm, upconvert, OfdmConfig};

    fn si(seed: u64) -> RealSignal {
        let cfg = OfdmConfig {
            frame_duration_s: 0.5e-6,
            seed,
            ..OfdmConfig::default()
        };
        upconvert(&gen_ofdm(&cfg, 64e9).unwrap(), 9e9).unwrap()
    }

    fn rel_rms(a: &RealSignal, b: &RealSignal) -> f64 {
        a.sub(b).unwrap().rms() / b.rms()
    }

    #[test]
    fn unit_tap_is_identity() {
        let x = si(1);
        let y = apply_paths(&[x.clone()], &PathSet::direct_only(&[Tap::new(0.0, 0.0)])).unwrap();
        assert!(rel_rms(&y, &x) < 1e-12);
        let paths = PathSet {
            antennas: vec![AntennaPaths {
                direct: Tap::new(0.0, 0.0),
                multipaths: vec![Tap::new(0.0, -300.0)],
            }],
        };
        let y = apply_paths(&[x.clone()], &paths).unwrap();
        assert!(rel_rms(&y, &x) < 1e-12);
    }

    #[test]
    fn single_tap_equals_fractional_delay() {
        let x = si(1);
        let tau = 4768e-12;
        let y = apply_paths(&[x.clone()], &PathSet::direct_only(&[Tap::new(tau, 0.0)])).unwrap();
        let z = fractional_delay(&x, tau).unwrap();
        assert!(rel_rms(&y, &z) < 1e-12);
    }

    #[test]
    fn multipath_matches_sparse_convolution() {
        // integer-sample delays so the time-domain oracle is exact
        let fs = 64e9;
        let x1 = si(1);
        let x2 = si(2);
        let d1 = Tap::new(300.0 / fs, -6.0);
        let d2 = Tap::new(250.0 / fs, -5.5);
        let paths = PathSet::table_multipath(d1, d2);
        let y = apply_paths(&[x1.clone(), x2.clone()], &paths).unwrap();

        let n = x1.len();
        let mut oracle = vec![0.0; n];
        for (x, ant) in [&x1, &x2].iter().zip(&paths.antennas) {
            for (d, g) in ant.absolute_taps() {
                let k = (d * fs).round() as usize;
                assert!(((d * fs) - k as f64).abs() < 1e-9);
                for i in 0..n {
                    oracle[i] += g * x.samples[(i + n - k % n) % n];
                }
            }
        }
        let oracle = RealSignal::new(fs, oracle).unwrap();
        assert!((y.power() / oracle.power() - 1.0).abs() < 1e-9);
        assert!(rel_rms(&y, &oracle) < 1e-9);
    }

    #[test]
    fn superposition_over_antennas() {
        let (x1, x2) = (si(1), si(2));
        let a = Tap::new(4.9e-9, -6.0);
        let b = Tap::new(4.0e-9, -5.0);
        let both = apply_paths(&[x1.clone(), x2.clone()], &PathSet::direct_only(&[a, b])).unwrap();
        let one = apply_paths(&[x1], &PathSet::direct_only(&[a])).unwrap();
        let two = apply_paths(&[x2], &PathSet::direct_only(&[b])).unwrap();
        assert!(rel_rms(&both, &one.add(&two).unwrap()) < 1e-12);
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let x = si(1);
        let other = RealSignal::zeros(10e9, x.len());
        let p = PathSet::direct_only(&[Tap::new(0.0, 0.0), Tap::new(0.0, 0.0)]);
        assert!(matches!(apply_paths(&[x.clone(), other], &p), Err(SicError::RateMismatch(..))));
        assert!(apply_paths(&[x], &p).is_err());
    }

    #[test]
    fn sir_calibration() {
        let rx = si(1);
        let soi = scale(&si(9), 3.0);
        for sir in [0.0, -8.5, -18.4] {
            let s = scale_soi(&rx, &soi, SirSpec { sir_db: sir }).unwrap();
            let measured = 10.0 * (s.power() / rx.power()).log10();
            assert!((measured - sir).abs() < 0.05, "sir {sir}: {measured}");
            let mixed = add_soi(&rx, &soi, SirSpec { sir_db: sir }).unwrap();
            assert!(rel_rms(&mixed.sub(&s).unwrap(), &rx) < 1e-12);
        }
        let zero = RealSignal::zeros(64e9, rx.len());
        assert!(add_soi(&rx, &zero, SirSpec { sir_db: 0.0 }).is_err());
    }

    #[test]
    fn noise_power_and_determinism() {
        let x = RealSignal::tone(10e9, 200_000, 1e9, 2f64.sqrt(), 0.0);
        assert_eq!(add_noise(&x, f64::INFINITY, 1).unwrap(), x);
        let a = add_noise(&x, 20.0, 1).unwrap().sub(&x).unwrap();
        let b = add_noise(&x, 20.0, 2).unwrap().sub(&x).unwrap();
        assert!((a.power() / 0.01 - 1.0).abs() < 0.02);
        assert!((b.power() / a.power() - 1.0).abs() < 0.02);
        assert_ne!(a.samples, b.samples);
        assert_eq!(add_noise(&x, 20.0, 1).unwrap(), add_noise(&x, 20.0, 1).unwrap());
    }

    #[test]
    fn fiber_attenuation() {
        let x = si(1);
        assert_eq!(fiber_link(&x, 0.0, 0.2, 4.9e-6).unwrap(), x);
        let spec = FiberSpec {
            length_km: 25.2,
            ..FiberSpec::default()
        };
        assert!((spec.optical_loss_db() - 4.6).abs() < 1e-12);
        let y = fiber_link(&x, 25.2, spec.atten_db_per_km, spec.delay_per_km_s).unwrap();
        let field_db = 10.0 * (y.power() / x.power()).log10();
        assert!((field_db + 4.6).abs() < 1e-6);
        assert!(fiber_link(&x, -1.0, 0.2, 4.9e-6).is_err());
    }
}
