//! Browser demo bindings: the delay-mismatch depth curve, a single-path
//! cross-correlation delay estimate, and a genetic search on a synthetic
//! two-path objective. Each operation has a plain Rust form (used by the
//! native tests) and a `wasm_bindgen` wrapper returning JSON text.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use sic_core::delay::Candidate;
use sic_core::error::{Result, SicError};
use sic_core::ga::{ga_run, FnFitness, GaConfig, SearchSpace};
use sic_core::metrics::mismatch_depth_curve;
use sic_core::pipeline::{xcorr_resolution, LinkConfig};
use sic_core::signal::OfdmConfig;

#[derive(Debug, Clone, Serialize)]
pub struct MismatchCurve {
    pub delta_tau_ps: Vec<f64>,
    pub depth_db: Vec<f64>,
}

/// Closed-form depth against delay mismatch from 0 to `max_ps` in `points`
/// steps; the zero-mismatch point is skipped when `rho` is 1.
pub fn mismatch_curve(carrier_ghz: f64, rho: f64, max_ps: f64, points: usize) -> Result<MismatchCurve> {
    if points < 2 || !(max_ps > 0.0) {
        return Err(SicError::Config("need points >= 2 and max_ps > 0".into()));
    }
    let step = max_ps / (points - 1) as f64;
    let delta_tau_ps: Vec<f64> = (0..points)
        .map(|i| i as f64 * step)
        .filter(|&d| d > 0.0 || rho < 1.0)
        .collect();
    let taus: Vec<f64> = delta_tau_ps.iter().map(|d| d * 1e-12).collect();
    let depth_db = mismatch_depth_curve(carrier_ghz * 1e9, &taus, rho)?;
    Ok(MismatchCurve { delta_tau_ps, depth_db })
}

#[derive(Debug, Clone, Serialize)]
pub struct XcorrDemo {
    pub true_delay_ps: f64,
    pub estimated_delay_ps: f64,
    pub peaks: usize,
    pub lag_ns: Vec<f64>,
    pub correlation: Vec<f64>,
}

/// One path of `delay_ps` through the full link at IF `if_ghz` and
/// `baud_ghz`, then the cross-correlation rough delay estimate. Frames are
/// shortened to `frame_us` to keep the browser responsive.
pub fn xcorr_demo(if_ghz: f64, baud_ghz: f64, delay_ps: f64, frame_us: f64) -> Result<XcorrDemo> {
    let ofdm = OfdmConfig {
        frame_duration_s: frame_us * 1e-6,
        ..OfdmConfig::default()
    };
    let (points, curves) = xcorr_resolution(
        &LinkConfig::default(),
        &ofdm,
        &[(if_ghz * 1e9, baud_ghz * 1e9)],
        delay_ps * 1e-12,
        0.51,
    )?;
    let (p, c) = (&points[0], &curves[0]);
    let window = 2.0 * delay_ps.abs() * 1e-12 + 2e-9;
    let (lag_ns, correlation) = c
        .lags_s
        .iter()
        .zip(&c.values)
        .filter(|(l, _)| l.abs() <= window)
        .map(|(l, v)| (l * 1e9, *v))
        .unzip();
    Ok(XcorrDemo {
        true_delay_ps: delay_ps,
        estimated_delay_ps: p.estimated_delay_s * 1e12,
        peaks: p.peaks,
        lag_ns,
        correlation,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GaDemo {
    pub optimum: [f64; 4],
    pub best: [f64; 4],
    pub best_score_db: Vec<f64>,
}

/// Genetic search over two delays (ps) and two amplitudes on a synthetic
/// objective: the depth of a two-path cancellation with a carrier-period
/// ripple, so the landscape has the sidelobes of the real one.
pub fn ga_synthetic(seed: u64, population: usize, iterations: usize, mutation_rate: f64) -> Result<GaDemo> {
    let optimum = [4768.0, 3828.0, 0.51, 0.53];
    let space = SearchSpace {
        delay_ranges_s: vec![(4700e-12, 5100e-12), (3800e-12, 4200e-12)],
        amplitude_ranges: vec![(0.24, 0.74), (0.24, 0.74)],
        delay_resolution_s: 1e-12,
        amplitude_resolution: 0.01,
    };
    let cfg = GaConfig {
        seed,
        population,
        iterations,
        mutation_rate,
        ..GaConfig::default()
    };
    let mut fitness = FnFitness::new(|c: &Candidate| synthetic_depth(c, &optimum));
    let out = ga_run(&mut fitness, &space, &cfg)?;
    Ok(GaDemo {
        optimum,
        best: [
            out.best.delays_s[0] * 1e12,
            out.best.delays_s[1] * 1e12,
            out.best.amplitudes[0],
            out.best.amplitudes[1],
        ],
        best_score_db: out.history.best_depths(),
    })
}

/// Depth of cancelling two unit paths at 9 GHz with the candidate's delays
/// and amplitudes, each path contributing its residual power.
fn synthetic_depth(c: &Candidate, opt: &[f64; 4]) -> f64 {
    let w = 2.0 * std::f64::consts::PI * 9e9;
    let mut residual = 0.0;
    for k in 0..2 {
        let dt = c.delays_s[k] - opt[k] * 1e-12;
        let rho = c.amplitudes[k] / opt[2 + k];
        residual += 1.0 + rho * rho - 2.0 * rho * (w * dt).cos() * (-(dt * 1e9).powi(2)).exp();
    }
    -10.0 * (residual / 2.0).max(1e-12).log10()
}

fn to_json<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = mismatchCurve)]
pub fn mismatch_curve_js(carrier_ghz: f64, rho: f64, max_ps: f64, points: usize) -> std::result::Result<String, JsError> {
    to_json(mismatch_curve(carrier_ghz, rho, max_ps, points))
}

#[wasm_bindgen(js_name = xcorrDemo)]
pub fn xcorr_demo_js(if_ghz: f64, baud_ghz: f64, delay_ps: f64, frame_us: f64) -> std::result::Result<String, JsError> {
    to_json(xcorr_demo(if_ghz, baud_ghz, delay_ps, frame_us))
}

#[wasm_bindgen(js_name = gaSynthetic)]
pub fn ga_synthetic_js(
    seed: u64,
    population: usize,
    iterations: usize,
    mutation_rate: f64,
) -> std::result::Result<String, JsError> {
    to_json(ga_synthetic(seed, population, iterations, mutation_rate))
}
