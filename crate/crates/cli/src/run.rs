//! Scenario execution and artifact writing.
//!
//! Every run writes `scenario.json` (the resolved configuration),
//! `summary.json` (deterministic results and the file manifest),
//! `run_info.json` (timestamp and wall clock) and the experiment's CSV and
//! JSON data files into one output directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};

use sic_core::io::write_table_csv;
use sic_core::metrics::{constellation_rows, Psd};
use sic_core::pipeline::{
    fiber_remoting, ga_two_path, ls_run, mismatch_sweep, single_path_segmented, two_path_fixed, xcorr_resolution,
    zero_padding_study, LsParams, LsRun, SoiParams,
};

use crate::error::CliError;
use crate::scenario::{Experiment, Scenario};
use crate::validate::{has_errors, retuned, validate, Diagnostic};

/// Deterministic part of a run, written as `summary.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub kind: &'static str,
    pub seeds: Seeds,
    /// Headline numbers, flat.
    pub metrics: BTreeMap<String, f64>,
    /// Full structured results of the flow.
    pub results: Value,
    /// Files written next to the summary, in write order.
    pub files: Vec<String>,
    #[serde(skip)]
    pub wall_clock_s: f64,
    #[serde(skip)]
    pub warnings: Vec<Diagnostic>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Seeds {
    pub master: Option<u64>,
    pub ofdm: u64,
    pub noise: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ga: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub soi: Option<u64>,
}

struct Out {
    dir: PathBuf,
    files: Vec<String>,
}

impl Out {
    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<(), CliError> {
        let mut buf = Vec::new();
        write_table_csv(header, rows, &mut buf).map_err(|e| CliError::numerical("metrics", e))?;
        fs::write(self.path(name), buf)?;
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(v).map_err(|e| CliError::numerical("experiment-cli", e.into()))?;
        fs::write(self.path(name), text + "\n")?;
        Ok(())
    }

    fn psd(&mut self, suffix: &str, before: &Psd, after: &Psd) -> Result<(), CliError> {
        self.csv(&format!("psd_before{suffix}.csv"), &["freq_hz", "psd_db"], &before.rows_db())?;
        self.csv(&format!("psd_after{suffix}.csv"), &["freq_hz", "psd_db"], &after.rows_db())
    }

    fn search(&mut self, name: &str, delays: &[f64], residuals: &[f64]) -> Result<(), CliError> {
        let rows: Vec<Vec<f64>> = delays
            .iter()
            .zip(residuals)
            .map(|(d, r)| vec![d * 1e12, db(*r)])
            .collect();
        self.csv(name, &["delay_ps", "residual_db"], &rows)
    }
}

fn db(ratio: f64) -> f64 {
    10.0 * ratio.max(1e-30).log10()
}

fn to_value<T: Serialize>(v: &T) -> Value {
    let mut v = serde_json::to_value(v).expect("results serialize");
    strip(&mut v);
    v
}

/// Drops bulky per-symbol arrays from summaries; they go to CSV files.
fn strip(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.remove("symbols");
            map.values_mut().for_each(strip);
        }
        Value::Array(items) => items.iter_mut().for_each(strip),
        _ => {}
    }
}

/// Default output directory: `$SIC_SIM_OUT/<name>` or `sic-out/<name>`.
pub fn default_out_dir(name: &str) -> PathBuf {
    let base = std::env::var_os(crate::OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("sic-out"));
    base.join(name)
}

/// Validates then runs `scenario`, writing artifacts into `out_dir`.
pub fn run_scenario(scenario: &Scenario, out_dir: &Path) -> Result<RunReport, CliError> {
    let diagnostics = validate(scenario);
    if has_errors(&diagnostics) {
        return Err(CliError::Invalid(diagnostics));
    }
    let s = scenario.seeded();
    fs::create_dir_all(out_dir)?;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let t0 = Instant::now();
    let mut out = Out {
        dir: out_dir.to_path_buf(),
        files: Vec::new(),
    };
    out.json("scenario.json", &s)?;
    let mut metrics = BTreeMap::new();
    let results = execute(&s, &mut out, &mut metrics)?;
    for (k, v) in &metrics {
        if !v.is_finite() {
            return Err(CliError::Numerical {
                module: "metrics",
                message: format!("{k} is not finite"),
            });
        }
    }
    let wall_clock_s = t0.elapsed().as_secs_f64();
    out.json(
        "run_info.json",
        &json!({
            "scenario": s.name,
            "started_unix_s": started,
            "wall_clock_s": wall_clock_s,
            "version": env!("CARGO_PKG_VERSION"),
        }),
    )?;
    let report = RunReport {
        scenario: s.name.clone(),
        kind: s.experiment.kind(),
        seeds: seeds(&s),
        metrics,
        results,
        files: out.files.clone(),
        wall_clock_s,
        warnings: diagnostics,
    };
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::numerical("experiment-cli", e.into()))?;
    fs::write(out_dir.join("summary.json"), text + "\n")?;
    for f in &report.files {
        let len = fs::metadata(out_dir.join(f))?.len();
        if len == 0 {
            return Err(CliError::Numerical {
                module: "experiment-cli",
                message: format!("{f} was written empty"),
            });
        }
    }
    Ok(report)
}

fn seeds(s: &Scenario) -> Seeds {
    let (ga, soi) = match &s.experiment {
        Experiment::Ga { params } => (Some(params.ga.seed), None),
        Experiment::Ls { params, .. } => (None, params.soi.as_ref().map(|p| p.config.seed)),
        _ => (None, None),
    };
    Seeds {
        master: s.seed,
        ofdm: s.ofdm.seed,
        noise: s.link.noise_seed,
        ga,
        soi,
    }
}

fn put(m: &mut BTreeMap<String, f64>, k: &str, v: f64) {
    m.insert(k.to_string(), v);
}

fn execute(s: &Scenario, out: &mut Out, m: &mut BTreeMap<String, f64>) -> Result<Value, CliError> {
    let (link, ofdm) = (&s.link, &s.ofdm);
    match &s.experiment {
        Experiment::MismatchSweep {
            carriers_hz,
            delta_taus_s,
            rho,
            bauds_hz,
        } => {
            let bauds = if bauds_hz.is_empty() { vec![ofdm.baud_rate_hz] } else { bauds_hz.clone() };
            let mut points = Vec::new();
            for &b in &bauds {
                let o = sic_core::signal::OfdmConfig {
                    baud_rate_hz: b,
                    ..ofdm.clone()
                };
                let pts = mismatch_sweep(&link.sized_for_baud(b), &o, carriers_hz, delta_taus_s, *rho)
                    .map_err(|e| CliError::numerical("metrics", e))?;
                points.extend(pts);
            }
            let rows: Vec<Vec<f64>> = points
                .iter()
                .map(|p| vec![p.carrier_hz, p.baud_hz, p.delta_tau_s * 1e12, p.closed_form_db, p.simulated_db])
                .collect();
            out.csv(
                "mismatch.csv",
                &["carrier_hz", "baud_hz", "delta_tau_ps", "closed_form_db", "depth_db"],
                &rows,
            )?;
            put(m, "points", points.len() as f64);
            put(m, "max_depth_db", points.iter().map(|p| p.simulated_db).fold(f64::MIN, f64::max));
            Ok(json!({ "points": points.len() }))
        }
        Experiment::Segmented { params } => {
            let r = single_path_segmented(link, ofdm, params).map_err(|e| CliError::numerical("delay-estimation", e))?;
            out.psd("", &r.psd_before, &r.psd_after)?;
            out.search("search.csv", &r.grid_delays_s, &r.outcome.residuals)?;
            put(m, "best_delay_ps", r.outcome.best.delays_s[0] * 1e12);
            put(m, "amplitude", r.amplitude);
            put(m, "depth_db", r.depth.depth_db);
            put(m, "captures", r.outcome.captures as f64);
            Ok(to_value(&r))
        }
        Experiment::TwoPath { params } => {
            let r = two_path_fixed(link, ofdm, params).map_err(|e| CliError::numerical("delay-estimation", e))?;
            out.psd("", &r.psd_before, &r.psd_after)?;
            put(m, "depth_db", r.depth.depth_db);
            Ok(to_value(&r))
        }
        Experiment::Ga { params } => {
            let r = ga_two_path(link, ofdm, params).map_err(|e| CliError::numerical("ga-optimizer", e))?;
            out.psd("", &r.psd_before, &r.psd_after)?;
            let mut history = serde_json::Map::new();
            history.insert("stage2".into(), serde_json::to_value(&r.stage2.outcome.history).expect("history"));
            if let Some(s3) = &r.stage3 {
                history.insert("stage3".into(), serde_json::to_value(&s3.outcome.history).expect("history"));
            }
            out.json("ga_history.json", &history)?;
            let mut rows = Vec::new();
            for (stage, st) in [(2.0, Some(&r.stage2)), (3.0, r.stage3.as_ref())] {
                let Some(st) = st else { continue };
                for it in &st.outcome.history.iterations {
                    let mut row = vec![stage, it.iteration as f64, it.depth_db];
                    row.extend(&it.best_delays_ps);
                    row.extend(&it.best_amplitudes);
                    rows.push(row);
                }
            }
            let k = params.true_delays_s.len();
            let mut header = vec!["stage".to_string(), "iteration".into(), "depth_db".into()];
            header.extend((1..=k).map(|i| format!("delay{i}_ps")));
            header.extend((1..=k).map(|i| format!("amplitude{i}")));
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            out.csv("ga_progress.csv", &header, &rows)?;
            put(m, "stage2_depth_db", r.stage2.depth.depth_db);
            if let Some(s3) = &r.stage3 {
                put(m, "stage3_depth_db", s3.depth.depth_db);
            }
            put(m, "depth_db", r.final_stage().depth.depth_db);
            put(
                m,
                "captures",
                (r.stage2.captures + r.stage3.as_ref().map_or(0, |s| s.captures)) as f64,
            );
            Ok(to_value(&r))
        }
        Experiment::Ls {
            params,
            carriers_hz,
            sirs_db,
        } => ls(s, params, carriers_hz, sirs_db, out, m),
        Experiment::Fiber { fiber, params } => {
            let r = fiber_remoting(link, ofdm, fiber, params).map_err(|e| CliError::numerical("channel-sim", e))?;
            out.psd("", &r.with_fiber.psd_before, &r.with_fiber.psd_after)?;
            out.psd("_no_fiber", &r.without_fiber.psd_before, &r.without_fiber.psd_after)?;
            put(m, "depth_no_fiber_db", r.without_fiber.depth.depth_db);
            put(m, "depth_db", r.with_fiber.depth.depth_db);
            put(m, "depth_change_db", r.depth_change_db);
            put(m, "optical_loss_db", r.optical_loss_db);
            put(m, "if_power_drop_db", r.if_power_drop_db);
            Ok(to_value(&r))
        }
        Experiment::Xcorr {
            settings,
            true_delay_s,
            amplitude,
        } => {
            let pairs: Vec<(f64, f64)> = settings.iter().map(|s| (s.if_center_hz, s.baud_hz)).collect();
            let (points, curves) = xcorr_resolution(link, ofdm, &pairs, *true_delay_s, *amplitude)
                .map_err(|e| CliError::numerical("delay-estimation", e))?;
            let rows: Vec<Vec<f64>> = points
                .iter()
                .map(|p| {
                    vec![
                        p.if_center_hz,
                        p.baud_hz,
                        p.true_delay_s * 1e12,
                        p.estimated_delay_s * 1e12,
                        (p.estimated_delay_s - p.true_delay_s) * 1e12,
                        p.peaks as f64,
                    ]
                })
                .collect();
            out.csv(
                "xcorr.csv",
                &["if_center_hz", "baud_hz", "true_delay_ps", "estimated_delay_ps", "error_ps", "peaks"],
                &rows,
            )?;
            let window = 2.0 * true_delay_s.abs() + 2e-9;
            let mut curve_rows = Vec::new();
            for (i, c) in curves.iter().enumerate() {
                for (lag, v) in c.lags_s.iter().zip(&c.values) {
                    if lag.abs() <= window {
                        curve_rows.push(vec![i as f64, lag * 1e9, *v]);
                    }
                }
            }
            out.csv("xcorr_curves.csv", &["setting", "lag_ns", "correlation"], &curve_rows)?;
            let worst = points
                .iter()
                .map(|p| (p.estimated_delay_s - p.true_delay_s).abs() * 1e12)
                .fold(0.0, f64::max);
            put(m, "max_error_ps", worst);
            Ok(to_value(&points))
        }
        Experiment::ZeroPadding {
            params,
            fractions,
            segment_counts,
            probe_offset_s,
        } => {
            let (delays, points) = zero_padding_study(link, ofdm, params, fractions, segment_counts, *probe_offset_s)
                .map_err(|e| CliError::numerical("delay-estimation", e))?;
            let rows: Vec<Vec<f64>> = points
                .iter()
                .map(|p| {
                    vec![
                        p.zero_padding_fraction,
                        p.segments as f64,
                        p.best_delay_s * 1e12,
                        p.depth_db,
                        p.residual_cv,
                    ]
                })
                .collect();
            out.csv(
                "zero_padding.csv",
                &["zero_padding_fraction", "segments", "best_delay_ps", "depth_db", "residual_cv"],
                &rows,
            )?;
            let mut curve_rows = Vec::new();
            for p in &points {
                for (d, r) in delays.iter().zip(&p.curve_db) {
                    curve_rows.push(vec![p.zero_padding_fraction, p.segments as f64, d * 1e12, *r]);
                }
            }
            out.csv(
                "zero_padding_curves.csv",
                &["zero_padding_fraction", "segments", "delay_ps", "residual_db"],
                &curve_rows,
            )?;
            put(m, "points", points.len() as f64);
            put(m, "min_depth_db", points.iter().map(|p| p.depth_db).fold(f64::MAX, f64::min));
            let summary: Vec<Value> = points
                .iter()
                .map(|p| {
                    json!({
                        "zero_padding_fraction": p.zero_padding_fraction,
                        "segments": p.segments,
                        "best_delay_s": p.best_delay_s,
                        "depth_db": p.depth_db,
                        "residual_cv": p.residual_cv,
                    })
                })
                .collect();
            Ok(Value::Array(summary))
        }
    }
}

fn ls_outputs(out: &mut Out, suffix: &str, r: &LsRun) -> Result<(), CliError> {
    out.psd(suffix, &r.psd_before, &r.psd_after)?;
    out.search(&format!("search{suffix}.csv"), &r.grid_delays_s, &r.search.residuals)?;
    if let Some(soi) = &r.soi {
        let header = ["symbol_i", "symbol_q"];
        out.csv(
            &format!("constellation_before{suffix}.csv"),
            &header,
            &constellation_rows(&soi.evm_before.symbols),
        )?;
        out.csv(
            &format!("constellation_after{suffix}.csv"),
            &header,
            &constellation_rows(&soi.evm_after.symbols),
        )?;
    }
    Ok(())
}

fn ls(
    s: &Scenario,
    params: &LsParams,
    carriers_hz: &[f64],
    sirs_db: &[f64],
    out: &mut Out,
    m: &mut BTreeMap<String, f64>,
) -> Result<Value, CliError> {
    let run = |link: &sic_core::pipeline::LinkConfig, p: &LsParams| {
        ls_run(link, &s.ofdm, p).map_err(|e| CliError::numerical("ls-estimator", e))
    };
    if carriers_hz.is_empty() && sirs_db.is_empty() {
        let r = run(&s.link, params)?;
        ls_outputs(out, "", &r)?;
        put(m, "depth_db", r.depth.depth_db);
        put(m, "fit_residual_db", r.fit_residual_db);
        put(m, "best_delay_ps", r.best_delay_s * 1e12);
        if let Some(soi) = &r.soi {
            put(m, "sir_db", soi.sir_db);
            put(m, "depth_with_soi_db", soi.depth_with_soi.depth_db);
            put(m, "evm_before_percent", soi.evm_before.evm_percent);
            put(m, "evm_after_percent", soi.evm_after.evm_percent);
            put(m, "symbol_errors_after", soi.evm_after.symbol_errors as f64);
        }
        return Ok(to_value(&r));
    }
    let carriers = if carriers_hz.is_empty() { vec![s.link.carrier_hz] } else { carriers_hz.to_vec() };
    let sirs: Vec<Option<f64>> = if sirs_db.is_empty() {
        vec![params.soi.as_ref().map(|p| p.sir_db)]
    } else {
        sirs_db.iter().map(|&v| Some(v)).collect()
    };
    let mut rows = Vec::new();
    let mut results = Vec::new();
    let mut worst = f64::MAX;
    for &fc in &carriers {
        let link = retuned(&s.link, fc);
        for &sir in &sirs {
            let p = LsParams {
                soi: sir.map(|sir_db| SoiParams {
                    sir_db,
                    ..params.soi.clone().unwrap_or_default()
                }),
                ..params.clone()
            };
            let r = run(&link, &p)?;
            let i = rows.len();
            ls_outputs(out, &format!("_{i}"), &r)?;
            let (ds, eb, ea, xb, xa) = r.soi.as_ref().map_or((f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN), |x| {
                (
                    x.depth_with_soi.depth_db,
                    x.evm_before.evm_percent,
                    x.evm_after.evm_percent,
                    x.evm_before.symbol_errors as f64,
                    x.evm_after.symbol_errors as f64,
                )
            });
            rows.push(vec![
                i as f64,
                fc,
                link.lo_hz,
                sir.unwrap_or(f64::NAN),
                r.depth.depth_db,
                ds,
                eb,
                ea,
                xb,
                xa,
            ]);
            worst = worst.min(r.depth.depth_db);
            results.push(json!({
                "point": i,
                "carrier_hz": fc,
                "lo_hz": link.lo_hz,
                "run": to_value(&r),
            }));
        }
    }
    out.csv(
        "sweep.csv",
        &[
            "point",
            "carrier_hz",
            "lo_hz",
            "sir_db",
            "depth_db",
            "depth_with_soi_db",
            "evm_before_percent",
            "evm_after_percent",
            "symbol_errors_before",
            "symbol_errors_after",
        ],
        &rows,
    )?;
    put(m, "points", rows.len() as f64);
    put(m, "min_depth_db", worst);
    Ok(Value::Array(results))
}
