//! Least-squares SI channel estimation on captured IF data and construction
//! of the composite reference covering every direct and multipath component.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp;
use crate::error::{Result, SicError};
use crate::photonic::{extract_if, PdConfig};
use crate::signal::{check_same_rate, RealSignal};

/// Condition estimate above which the ridge path engages.
pub const CONDITION_LIMIT: f64 = 1e10;
/// Ridge weight relative to `trace(Psi^T Psi) / cols`.
pub const RIDGE_SCALE: f64 = 1e-8;

/// Row window of the data matrix: rows `i = 0..n_samples` use samples
/// `x_j(start_index + i - k)` for `k = 0..=order`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataMatrixSpec {
    pub n_samples: usize,
    pub start_index: usize,
    pub order: usize,
}

impl DataMatrixSpec {
    pub fn columns(&self, nt: usize) -> usize {
        nt * (self.order + 1)
    }

    fn check(&self, tx_if: &[RealSignal]) -> Result<()> {
        if tx_if.is_empty() {
            return Err(SicError::InvalidInput("no transmit records".into()));
        }
        for x in tx_if {
            check_same_rate(tx_if[0].sample_rate_hz, x.sample_rate_hz)?;
        }
        if self.start_index < self.order {
            return Err(SicError::InvalidInput(format!(
                "start index {} leaves no room for {} past samples",
                self.start_index, self.order
            )));
        }
        let need = self.start_index + self.n_samples;
        if let Some(x) = tx_if.iter().find(|x| x.len() < need) {
            return Err(SicError::InvalidInput(format!(
                "transmit record has {} samples, {} needed",
                x.len(),
                need
            )));
        }
        Ok(())
    }
}

/// `[Psi_1 Psi_2 ... Psi_NT]`, each block Toeplitz with element
/// `x_j(n + i - k)` at row `i`, column `k`.
pub fn build_data_matrix(tx_if: &[RealSignal], spec: &DataMatrixSpec) -> Result<DMatrix<f64>> {
    spec.check(tx_if)?;
    let m1 = spec.order + 1;
    let mut psi = DMatrix::zeros(spec.n_samples, tx_if.len() * m1);
    for (j, x) in tx_if.iter().enumerate() {
        for k in 0..m1 {
            let s = spec.start_index - k;
            psi.column_mut(j * m1 + k)
                .copy_from_slice(&x.samples[s..s + spec.n_samples]);
        }
    }
    Ok(psi)
}

/// Prepends the last `m` samples so a periodic frame can feed a data
/// matrix with `start_index = m` covering the whole frame.
pub fn periodic_prefix(sig: &RealSignal, m: usize) -> Result<RealSignal> {
    let n = sig.len();
    if m > n {
        return Err(SicError::InvalidInput(format!("prefix {m} longer than frame {n}")));
    }
    let mut samples = Vec::with_capacity(n + m);
    samples.extend_from_slice(&sig.samples[n - m..]);
    samples.extend_from_slice(&sig.samples);
    RealSignal::new(sig.sample_rate_hz, samples)
}

/// FIR channel estimate: `order + 1` real taps per transmit antenna.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsModel {
    pub nt: usize,
    pub order: usize,
    pub capture_rate_hz: f64,
    pub coefficients: Vec<f64>,
}

impl LsModel {
    pub fn validate(&self) -> Result<()> {
        if self.nt == 0 {
            return Err(SicError::Config("LS model needs at least one antenna".into()));
        }
        if self.coefficients.len() != self.nt * (self.order + 1) {
            return Err(SicError::Config(format!(
                "{} coefficients for nt = {}, order = {}",
                self.coefficients.len(),
                self.nt,
                self.order
            )));
        }
        if !(self.capture_rate_hz > 0.0) {
            return Err(SicError::Config("capture rate must be positive".into()));
        }
        Ok(())
    }

    /// Taps of antenna `j`.
    pub fn taps(&self, j: usize) -> &[f64] {
        let m1 = self.order + 1;
        &self.coefficients[j * m1..(j + 1) * m1]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsOptions {
    /// Engage ridge regularization when the condition estimate exceeds
    /// `CONDITION_LIMIT`; otherwise such systems are rejected.
    pub ridge: bool,
}

impl Default for LsOptions {
    fn default() -> Self {
        Self { ridge: true }
    }
}

#[derive(Debug, Clone)]
pub struct LsFit {
    pub model: LsModel,
    /// `max |R_ii| / min |R_ii|` of the QR factor.
    pub condition_estimate: f64,
    pub ridge_lambda: Option<f64>,
    /// `||y - Psi h||^2 / ||y||^2` over the fitted rows.
    pub relative_residual: f64,
}

/// Order used when none is configured: covers a 17 ns path at 10 GS/s with
/// margin.
pub const DEFAULT_ORDER: usize = 216;

/// Order for a custom path set: the longest path delay at the capture rate plus 25%.
pub fn default_order(max_delay_s: f64, capture_rate_hz: f64) -> usize {
    (max_delay_s * capture_rate_hz * 1.25).ceil() as usize
}

/// `h = argmin ||Psi h - y||^2` with `y` sampled at `order + i`, the data
/// matrix starting at `start_index = order`.
pub fn ls_estimate(y: &RealSignal, tx_if: &[RealSignal], order: usize, n_samples: usize) -> Result<LsModel> {
    let spec = DataMatrixSpec {
        n_samples,
        start_index: order,
        order,
    };
    Ok(ls_fit(y, tx_if, &spec, LsOptions::default())?.model)
}

/// Estimate over one whole periodic frame: both `y` and the records are
/// extended circularly so every frame sample gives a row.
pub fn ls_estimate_periodic(y: &RealSignal, tx_if: &[RealSignal], order: usize) -> Result<LsFit> {
    let n = y.len();
    if let Some(x) = tx_if.iter().find(|x| x.len() != n) {
        return Err(SicError::InvalidInput(format!(
            "record length {} differs from capture length {n}",
            x.len()
        )));
    }
    let y_ext = periodic_prefix(y, order)?;
    let tx_ext = tx_if.iter().map(|x| periodic_prefix(x, order)).collect::<Result<Vec<_>>>()?;
    let spec = DataMatrixSpec {
        n_samples: n,
        start_index: order,
        order,
    };
    ls_fit(&y_ext, &tx_ext, &spec, LsOptions::default())
}

/// Householder QR solve with condition check and optional ridge.
pub fn ls_fit(y: &RealSignal, tx_if: &[RealSignal], spec: &DataMatrixSpec, opts: LsOptions) -> Result<LsFit> {
    spec.check(tx_if)?;
    check_same_rate(y.sample_rate_hz, tx_if[0].sample_rate_hz)?;
    let cols = spec.columns(tx_if.len());
    if spec.n_samples <= cols {
        return Err(SicError::InvalidInput(format!(
            "{} rows for {cols} unknowns: system not overdetermined",
            spec.n_samples
        )));
    }
    if y.len() < spec.start_index + spec.n_samples {
        return Err(SicError::InvalidInput(format!(
            "observation has {} samples, {} needed",
            y.len(),
            spec.start_index + spec.n_samples
        )));
    }
    let rows = &y.samples[spec.start_index..spec.start_index + spec.n_samples];
    let psi = build_data_matrix(tx_if, spec)?;
    let rhs = DVector::from_column_slice(rows);

    let (h, cond, lambda) = {
        let (h, cond) = qr_solve(psi.clone(), rhs.clone())?;
        if cond <= CONDITION_LIMIT {
            (h, cond, None)
        } else if !opts.ridge {
            return Err(SicError::Conditioning { condition: cond });
        } else {
            let lambda = RIDGE_SCALE * psi.norm_squared() / cols as f64;
            let mut aug = DMatrix::zeros(spec.n_samples + cols, cols);
            aug.view_mut((0, 0), (spec.n_samples, cols)).copy_from(&psi);
            for c in 0..cols {
                aug[(spec.n_samples + c, c)] = lambda.sqrt();
            }
            let mut aug_rhs = DVector::zeros(spec.n_samples + cols);
            aug_rhs.rows_mut(0, spec.n_samples).copy_from(&rhs);
            let (h, _) = qr_solve(aug, aug_rhs)?;
            (h, cond, Some(lambda))
        }
    };
    if h.iter().any(|v| !v.is_finite()) {
        return Err(SicError::EstimationFailed("non-finite LS coefficients".into()));
    }
    let resid = &rhs - &psi * &h;
    let yn = rhs.norm_squared();
    let relative_residual = if yn > 0.0 { resid.norm_squared() / yn } else { 0.0 };
    Ok(LsFit {
        model: LsModel {
            nt: tx_if.len(),
            order: spec.order,
            capture_rate_hz: y.sample_rate_hz,
            coefficients: h.iter().copied().collect(),
        },
        condition_estimate: cond,
        ridge_lambda: lambda,
        relative_residual,
    })
}

fn qr_solve(a: DMatrix<f64>, mut b: DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let cols = a.ncols();
    let qr = a.qr();
    qr.q_tr_mul(&mut b);
    let r = qr.r();
    let diag: Vec<f64> = (0..cols).map(|i| r[(i, i)].abs()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let cond = if min > 0.0 { max / min } else { f64::INFINITY };
    if !cond.is_finite() {
        return Ok((DVector::zeros(cols), cond));
    }
    let h = r
        .solve_upper_triangular(&b.rows(0, cols).into_owned())
        .ok_or_else(|| SicError::Conditioning { condition: cond })?;
    Ok((h, cond))
}

/// `r = Psi h` over the whole (periodic) frame: circular FIR of each record
/// with its taps, summed over antennas.
pub fn construct_reference(model: &LsModel, tx_if: &[RealSignal]) -> Result<RealSignal> {
    model.validate()?;
    if tx_if.len() != model.nt {
        return Err(SicError::InvalidInput(format!(
            "{} records for a model with nt = {}",
            tx_if.len(),
            model.nt
        )));
    }
    let n = tx_if[0].len();
    for x in tx_if {
        check_same_rate(model.capture_rate_hz, x.sample_rate_hz)?;
        if x.len() != n {
            return Err(SicError::InvalidInput("records differ in length".into()));
        }
    }
    let mut out = vec![0.0; n];
    for (j, x) in tx_if.iter().enumerate() {
        for (k, &h) in model.taps(j).iter().enumerate() {
            if h == 0.0 {
                continue;
            }
            for (i, o) in out.iter_mut().enumerate() {
                *o += h * x.samples[(i + n * (k / n + 1) - k) % n];
            }
        }
    }
    RealSignal::new(model.capture_rate_hz, out)
}

/// Digital image of what the link makes of a transmit waveform: mix with
/// `2 cos(2 pi f_lo t)` and keep the IF band at the capture rate.
pub fn tx_to_if(tx_rf: &RealSignal, lo_hz: f64, pd: &PdConfig) -> Result<RealSignal> {
    let fs = tx_rf.sample_rate_hz;
    let w = 2.0 * PI * lo_hz / fs;
    let mixed: Vec<f64> = tx_rf
        .samples
        .iter()
        .enumerate()
        .map(|(n, &v)| 2.0 * v * (w * n as f64).cos())
        .collect();
    extract_if(&RealSignal::new(fs, mixed)?, pd)
}

/// Moves an IF frame up by `lo_hz` onto a generator-rate grid of `len`
/// samples (upper sideband only). Frame durations must match and the LO
/// must sit on a bin of the frame.
pub fn if_to_rf(if_sig: &RealSignal, lo_hz: f64, gen_rate_hz: f64, len: usize) -> Result<RealSignal> {
    let n_c = if_sig.len();
    if n_c == 0 || len == 0 {
        return Err(SicError::InvalidInput("empty frame".into()));
    }
    let dur_out = len as f64 / gen_rate_hz;
    if ((if_sig.duration_s() - dur_out) / dur_out).abs() > 1e-9 {
        return Err(SicError::InvalidInput("IF and RF frame durations differ".into()));
    }
    let df = 1.0 / dur_out;
    let shift = lo_hz / df;
    if (shift - shift.round()).abs() > 1e-6 {
        return Err(SicError::InvalidInput(format!("LO {lo_hz} Hz is not on the {df} Hz frame grid")));
    }
    let shift = shift.round() as usize;
    let spec = dsp::fft_real(&if_sig.samples);
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    let scale = len as f64 / n_c as f64;
    for (k, v) in spec.iter().enumerate().take(n_c.div_ceil(2)).skip(1) {
        let t = k + shift;
        if 2 * t >= len {
            return Err(SicError::Nyquist {
                what: "translated IF",
                needed_hz: t as f64 * df,
                nyquist_hz: gen_rate_hz / 2.0,
            });
        }
        out[t] = v * scale;
        out[len - t] = v.conj() * scale;
    }
    RealSignal::new(gen_rate_hz, dsp::ifft_real(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::white_noise;

    fn sig(v: &[f64]) -> RealSignal {
        RealSignal::new(1.0, v.to_vec()).unwrap()
    }

    fn noise(n: usize, seed: u64) -> RealSignal {
        RealSignal::new(10e9, white_noise(n, 1.0, seed).unwrap()).unwrap()
    }

    fn fir(x: &RealSignal, taps: &[(usize, f64)]) -> Vec<f64> {
        (0..x.len())
            .map(|n| taps.iter().filter(|(d, _)| *d <= n).map(|&(d, g)| g * x.samples[n - d]).sum())
            .collect()
    }

    #[test]
    fn single_column_is_the_record() {
        let x = sig(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let spec = DataMatrixSpec { n_samples: 3, start_index: 1, order: 0 };
        let psi = build_data_matrix(&[x], &spec).unwrap();
        assert_eq!(psi.as_slice(), &[2.0, 3.0, 4.0]);
    }

    #[test]
    fn toeplitz_blocks_match_index_formula() {
        let x1 = sig(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        let x2 = sig(&[10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0]);
        let spec = DataMatrixSpec { n_samples: 4, start_index: 2, order: 2 };
        let psi = build_data_matrix(&[x1, x2], &spec).unwrap();
        #[rustfmt::skip]
        let expected = [
            [3.0, 2.0, 1.0, 30.0, 20.0, 10.0],
            [4.0, 3.0, 2.0, 40.0, 30.0, 20.0],
            [5.0, 4.0, 3.0, 50.0, 40.0, 30.0],
            [6.0, 5.0, 4.0, 60.0, 50.0, 40.0],
        ];
        for (i, row) in expected.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                assert_eq!(psi[(i, c)], *v);
            }
        }
        // shifting the start shifts every block by the same amount
        let shifted = build_data_matrix(
            &[sig(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0])],
            &DataMatrixSpec { n_samples: 4, start_index: 3, order: 2 },
        )
        .unwrap();
        for i in 0..3 {
            for c in 0..3 {
                assert_eq!(shifted[(i, c)], psi[(i + 1, c)]);
            }
        }
    }

    #[test]
    fn short_records_are_rejected() {
        let x = sig(&[1.0; 10]);
        assert!(build_data_matrix(&[x.clone()], &DataMatrixSpec { n_samples: 8, start_index: 3, order: 3 }).is_err());
        assert!(build_data_matrix(&[x], &DataMatrixSpec { n_samples: 4, start_index: 1, order: 3 }).is_err());
    }

    #[test]
    fn recovers_sparse_fir_exactly() {
        let x1 = noise(3000, 1);
        let x2 = noise(3000, 2);
        let t1 = [(0, 0.51), (8, 0.16), (13, -0.12)];
        let t2 = [(2, 0.53), (17, 0.09)];
        let y1 = fir(&x1, &t1);
        let y2 = fir(&x2, &t2);
        let y = RealSignal::new(10e9, y1.iter().zip(&y2).map(|(a, b)| a + b).collect()).unwrap();
        let model = ls_estimate(&y, &[x1, x2], 20, 2500).unwrap();
        let mut truth = vec![0.0; 42];
        for &(d, g) in &t1 {
            truth[d] = g;
        }
        for &(d, g) in &t2 {
            truth[21 + d] = g;
        }
        let err: f64 = model.coefficients.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = truth.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err / norm < 1e-9, "relative error {}", err / norm);
    }

    #[test]
    fn zero_observation_gives_zero_taps() {
        let x = noise(500, 3);
        let y = RealSignal::zeros(10e9, 500);
        let model = ls_estimate(&y, &[x], 10, 400).unwrap();
        assert!(model.coefficients.iter().all(|&h| h == 0.0));
    }

    #[test]
    fn residual_is_orthogonal_to_columns() {
        let x = noise(1200, 4);
        let y = noise(1200, 5);
        let spec = DataMatrixSpec { n_samples: 1000, start_index: 15, order: 15 };
        let fit = ls_fit(&y, &[x.clone()], &spec, LsOptions::default()).unwrap();
        let psi = build_data_matrix(&[x], &spec).unwrap();
        let h = DVector::from_column_slice(&fit.model.coefficients);
        let yv = DVector::from_column_slice(&y.samples[15..1015]);
        let r = &yv - &psi * h;
        for c in 0..psi.ncols() {
            let col = psi.column(c);
            assert!(col.dot(&r).abs() < 1e-8 * col.norm() * r.norm());
        }
    }

    #[test]
    fn duplicate_antennas_need_regularization() {
        let x = noise(600, 6);
        let y = RealSignal::new(10e9, fir(&x, &[(1, 0.5)])).unwrap();
        let spec = DataMatrixSpec { n_samples: 500, start_index: 4, order: 4 };
        let recs = [x.clone(), x];
        match ls_fit(&y, &recs, &spec, LsOptions { ridge: false }) {
            Err(SicError::Conditioning { condition }) => assert!(condition > CONDITION_LIMIT),
            other => panic!("expected conditioning error, got {other:?}"),
        }
        let fit = ls_fit(&y, &recs, &spec, LsOptions::default()).unwrap();
        assert!(fit.ridge_lambda.is_some());
        let h = &fit.model.coefficients;
        assert!((h[1] + h[6] - 0.5).abs() < 1e-6);
        assert!(fit.relative_residual < 1e-10);
    }

    #[test]
    fn underdetermined_is_rejected() {
        let x = noise(100, 7);
        assert!(ls_estimate(&x.clone(), &[x], 50, 40).is_err());
    }

    #[test]
    fn impulse_model_reproduces_record() {
        let x = noise(256, 8);
        let mut coefficients = vec![0.0; 8];
        coefficients[0] = 1.0;
        let model = LsModel { nt: 2, order: 3, capture_rate_hz: 10e9, coefficients };
        let r = construct_reference(&model, &[x.clone(), noise(256, 9)]).unwrap();
        assert_eq!(r.samples, x.samples);
        let json = model.to_json().unwrap();
        assert_eq!(LsModel::from_json(&json).unwrap(), model);
        assert!(LsModel::from_json(&json.replace("\"nt\": 2", "\"nt\": 3")).is_err());
    }

    #[test]
    fn periodic_estimate_matches_circular_reference() {
        let x = noise(2000, 10);
        let taps = [(0usize, 0.4), (7, -0.2)];
        let y: Vec<f64> = (0..2000)
            .map(|n| taps.iter().map(|&(d, g)| g * x.samples[(n + 2000 - d) % 2000]).sum())
            .collect();
        let y = RealSignal::new(10e9, y).unwrap();
        let fit = ls_estimate_periodic(&y, &[x.clone()], 12).unwrap();
        let r = construct_reference(&fit.model, &[x]).unwrap();
        let err: f64 = r.samples.iter().zip(&y.samples).map(|(a, b)| (a - b).powi(2)).sum();
        assert!(err / y.power() / 2000.0 < 1e-20);
        assert!(fit.relative_residual < 1e-20);
    }

    #[test]
    fn if_translation_moves_tone_up() {
        let fs_c = 10e9;
        let n_c = 40_000;
        let tone = RealSignal::tone(fs_c, n_c, 1e9, 0.7, 0.3);
        let rf = if_to_rf(&tone, 8e9, 64e9, 256_000).unwrap();
        let expect = RealSignal::tone(64e9, 256_000, 9e9, 0.7, 0.3);
        let err = rf.sub(&expect).unwrap().rms();
        assert!(err < 1e-9, "{err}");
        assert!(if_to_rf(&tone, 8.0001e9 + 1.0, 64e9, 256_000).is_err());
        assert!(if_to_rf(&tone, 8e9, 64e9, 128_000).is_err());
    }

    #[test]
    fn tx_to_if_round_trips_with_translation() {
        let rf = RealSignal::tone(64e9, 256_000, 9.2e9, 1.0, 0.1);
        let if_sig = tx_to_if(&rf, 8e9, &PdConfig::default()).unwrap();
        let back = if_to_rf(&if_sig, 8e9, 64e9, 256_000).unwrap();
        assert!(back.sub(&rf).unwrap().rms() < 1e-9);
    }

    #[test]
    fn default_order_covers_longest_path() {
        assert_eq!(default_order(17e-9, 10e9), 213);
    }
}
