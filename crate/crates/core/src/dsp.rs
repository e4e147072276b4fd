//! FFT plumbing, band-limited interpolation kernels and special functions
//! shared by the signal, photonic and metric modules.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

/// Forward FFT of a real sequence (full complex spectrum, unnormalized).
pub fn fft_real(x: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_in_place(&mut buf);
    buf
}

pub fn fft_in_place(buf: &mut [Complex64]) {
    if buf.is_empty() {
        return;
    }
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(buf.len()).process(buf);
}

/// Inverse FFT normalized by `1/N`.
pub fn ifft_in_place(buf: &mut [Complex64]) {
    if buf.is_empty() {
        return;
    }
    let n = buf.len();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_inverse(n).process(buf);
    let inv = 1.0 / n as f64;
    for v in buf.iter_mut() {
        *v *= inv;
    }
}

/// Inverse FFT returning the real part.
pub fn ifft_real(mut spec: Vec<Complex64>) -> Vec<f64> {
    ifft_in_place(&mut spec);
    spec.into_iter().map(|c| c.re).collect()
}

/// Signed frequency of bin `k` in an `n`-point FFT at rate `fs`.
#[inline]
pub fn bin_freq(k: usize, n: usize, fs: f64) -> f64 {
    let k = k as i64;
    let n_i = n as i64;
    let signed = if k <= n_i / 2 { k } else { k - n_i };
    signed as f64 * fs / n as f64
}

/// Analytic signal via FFT (negative frequencies removed, positive doubled).
pub fn analytic(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    let mut spec = fft_real(x);
    for (k, v) in spec.iter_mut().enumerate() {
        if k == 0 || (n % 2 == 0 && k == n / 2) {
            continue;
        }
        if k < n.div_ceil(2) {
            *v *= 2.0;
        } else {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    ifft_in_place(&mut spec);
    spec
}

/// Modified Bessel function of the first kind, order zero (power series).
pub fn bessel_i0(x: f64) -> f64 {
    let y = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= y / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Bessel function of the first kind `J_n(x)` by its power series.
///
/// Accurate to machine precision for the modulation indices this crate
/// deals with (|x| below about 10).
pub fn bessel_j(n: u32, x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = half.powi(n as i32);
    for k in 1..=n {
        term /= k as f64;
    }
    let mut sum = term;
    let y = -half * half;
    for k in 1..200u32 {
        term *= y / (k as f64 * (k + n) as f64);
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

#[inline]
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

/// Kaiser-windowed sinc fractional-delay interpolator.
///
/// Operates on circular (periodic) frames. Accurate to better than -120 dB
/// for content below about 0.35 of the sample rate.
#[derive(Debug, Clone, Copy)]
pub struct SincInterpolator {
    half_taps: usize,
    beta: f64,
}

impl Default for SincInterpolator {
    fn default() -> Self {
        Self {
            half_taps: 32,
            beta: 12.0,
        }
    }
}

impl SincInterpolator {
    pub fn new(half_taps: usize, beta: f64) -> Self {
        Self { half_taps, beta }
    }

    /// Taps for a fractional offset `mu` in `[0, 1)`; tap `i` multiplies
    /// `x[n - i0 - k]` with `k = i - half_taps + 1`.
    fn taps(&self, mu: f64) -> Vec<f64> {
        let h = self.half_taps as f64;
        let norm = bessel_i0(self.beta);
        (0..2 * self.half_taps)
            .map(|i| {
                let k = i as f64 - h + 1.0;
                let t = k - mu;
                let r = t / h;
                let w = if r.abs() >= 1.0 {
                    0.0
                } else {
                    bessel_i0(self.beta * (1.0 - r * r).sqrt()) / norm
                };
                sinc(t) * w
            })
            .collect()
    }

    /// Adds `gain * x(n - delay_samples)` into `out[n]` for `n` in `range`,
    /// treating `x` as periodic.
    pub fn accumulate_delayed(
        &self,
        x: &[f64],
        delay_samples: f64,
        gain: f64,
        range: std::ops::Range<usize>,
        out: &mut [f64],
    ) {
        let len = x.len() as i64;
        if len == 0 || gain == 0.0 {
            return;
        }
        let i0 = delay_samples.floor();
        let mu = delay_samples - i0;
        let i0 = i0 as i64;
        let taps = self.taps(mu);
        let k_first = 1 - self.half_taps as i64;
        for n in range {
            // x index for tap i: n - i0 - (k_first + i)
            let base = n as i64 - i0 - k_first;
            let mut acc = 0.0;
            let start = base.rem_euclid(len);
            if start >= taps.len() as i64 - 1 {
                // contiguous descending run without wrap
                let s = start as usize;
                for (i, &t) in taps.iter().enumerate() {
                    acc += t * x[s - i];
                }
            } else {
                for (i, &t) in taps.iter().enumerate() {
                    let idx = (base - i as i64).rem_euclid(len) as usize;
                    acc += t * x[idx];
                }
            }
            out[n] += gain * acc;
        }
    }
}

/// Raised-cosine taper used for smooth frequency-domain band edges.
/// Returns 1 inside `|f - center| <= half_pass`, 0 beyond `half_pass + transition`.
pub fn band_mask(f: f64, center: f64, half_pass: f64, transition: f64) -> f64 {
    let d = (f - center).abs();
    if d <= half_pass {
        1.0
    } else if transition <= 0.0 || d >= half_pass + transition {
        0.0
    } else {
        let x = (d - half_pass) / transition;
        0.5 * (1.0 + (PI * x).cos())
    }
}

pub fn mean_square(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bessel_j_matches_tabulated_values() {
        // Abramowitz & Stegun Table 9.1
        assert!((bessel_j(0, 1.0) - 0.765_197_686_557_966_6).abs() < 1e-15);
        assert!((bessel_j(1, 1.0) - 0.440_050_585_744_933_5).abs() < 1e-15);
        assert!((bessel_j(1, 0.1) - 0.049_937_526_036_242).abs() < 1e-14);
        assert!((bessel_j(2, 2.0) - 0.352_834_028_615_637_8).abs() < 1e-14);
    }

    #[test]
    fn bessel_i0_known_value() {
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-14);
    }

    #[test]
    fn interpolator_integer_delay_is_shift() {
        let x: Vec<f64> = (0..64).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let mut out = vec![0.0; 64];
        SincInterpolator::default().accumulate_delayed(&x, 3.0, 1.0, 0..64, &mut out);
        for n in 0..64 {
            let want = x[(n + 64 - 3) % 64];
            assert!((out[n] - want).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn interpolator_tracks_bandlimited_tone() {
        let n = 4096;
        // 1200 cycles per frame, about 0.29 of the sample rate
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * PI * 1200.0 * i as f64 / n as f64).cos())
            .collect();
        let d = 7.37;
        let mut out = vec![0.0; n];
        SincInterpolator::default().accumulate_delayed(&x, d, 1.0, 0..n, &mut out);
        let err: f64 = (0..n)
            .map(|i| {
                let want = (2.0 * PI * 1200.0 * (i as f64 - d) / n as f64).cos();
                (out[i] - want).powi(2)
            })
            .sum::<f64>()
            / n as f64;
        assert!(err.sqrt() < 1e-6, "rms err {}", err.sqrt());
    }

    #[test]
    fn analytic_of_cosine_is_phasor() {
        let n = 256;
        let x: Vec<f64> = (0..n).map(|i| (2.0 * PI * 10.0 * i as f64 / n as f64).cos()).collect();
        let a = analytic(&x);
        for (i, v) in a.iter().enumerate() {
            let ph = 2.0 * PI * 10.0 * i as f64 / n as f64;
            assert!((v - Complex64::from_polar(1.0, ph)).norm() < 1e-12);
        }
    }
}
