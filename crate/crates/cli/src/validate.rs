//! Schema and physics checks on a parsed scenario. Every finding names the
//! key it is about.

use std::fmt;

use serde::Serialize;

use sic_core::delay::SegmentPlan;
use sic_core::error::SicError;
use sic_core::pipeline::LinkConfig;

use crate::scenario::{Experiment, Scenario};

/// Largest LS data matrix accepted (elements; 8 bytes each).
pub const MAX_LS_ELEMENTS: f64 = 6e7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub key: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}: {}", self.key, self.message)
    }
}

#[derive(Default)]
struct Findings(Vec<Diagnostic>);

impl Findings {
    fn error(&mut self, key: impl Into<String>, message: impl Into<String>) {
        self.0.push(Diagnostic {
            severity: Severity::Error,
            key: key.into(),
            message: message.into(),
        });
    }

    fn warning(&mut self, key: impl Into<String>, message: impl Into<String>) {
        self.0.push(Diagnostic {
            severity: Severity::Warning,
            key: key.into(),
            message: message.into(),
        });
    }

    fn check(&mut self, key: &str, r: sic_core::error::Result<()>) {
        if let Err(e) = r {
            self.error(key, e.to_string());
        }
    }

    fn link(&mut self, key: &str, link: &LinkConfig, occupied_bw_hz: f64) {
        match link.validate(occupied_bw_hz) {
            Ok(ws) => {
                for w in ws {
                    self.warning(w.key, w.message);
                }
            }
            Err(e) => {
                let sub = match &e {
                    SicError::Nyquist { what, .. } if what.starts_with("LO") => ".lo_hz",
                    SicError::Nyquist { what, .. } if what.starts_with("carrier") => ".carrier_hz",
                    SicError::Nyquist { .. } => ".pd",
                    _ => "",
                };
                self.error(format!("{key}{sub}"), e.to_string());
            }
        }
    }

    fn plan(&mut self, key: &str, plan: &SegmentPlan) {
        self.check(key, plan.validate());
    }

    fn unit_amplitude(&mut self, key: &str, a: f64) {
        if !(0.0..=1.0).contains(&a) {
            self.error(key, format!("amplitude {a} must lie within [0, 1]"));
        }
    }

    /// Path amplitudes become tap gains in dB, so zero is excluded.
    fn path_amplitude(&mut self, key: &str, a: f64) {
        if !(a > 0.0 && a <= 1.0) {
            self.error(key, format!("path amplitude {a} must lie within (0, 1]"));
        }
    }

    fn grid(&mut self, key: &str, start: f64, stop: f64, step: f64) {
        if !(step > 0.0) {
            self.error(format!("{key}.grid_step_s"), "grid step must be positive");
        } else if !(start <= stop) {
            self.error(format!("{key}.grid_stop_s"), format!("grid stop {stop:e} is below start {start:e}"));
        }
    }

    fn non_empty<T>(&mut self, key: &str, v: &[T]) {
        if v.is_empty() {
            self.error(key, "list must not be empty");
        }
    }
}

/// Link with the carrier moved and the LO following so the IF is unchanged.
pub fn retuned(link: &LinkConfig, carrier_hz: f64) -> LinkConfig {
    LinkConfig {
        carrier_hz,
        lo_hz: carrier_hz - (link.carrier_hz - link.lo_hz),
        ..link.clone()
    }
}

/// All findings for a scenario, errors and warnings, in key order of
/// discovery.
pub fn validate(s: &Scenario) -> Vec<Diagnostic> {
    let s = s.seeded();
    let mut f = Findings::default();
    if s.name.trim().is_empty() {
        f.error("name", "name must not be empty");
    }
    f.check("ofdm", s.ofdm.validate());
    let baud = s.ofdm.baud_rate_hz;
    match &s.experiment {
        Experiment::MismatchSweep {
            carriers_hz,
            delta_taus_s,
            rho,
            bauds_hz,
        } => {
            f.non_empty("experiment.carriers_hz", carriers_hz);
            f.non_empty("experiment.delta_taus_s", delta_taus_s);
            if !(*rho > 0.0 && *rho <= 1.0) {
                f.error("experiment.rho", format!("rho {rho} must be in (0, 1]"));
            }
            let bauds: Vec<f64> = if bauds_hz.is_empty() { vec![baud] } else { bauds_hz.clone() };
            for (j, &b) in bauds.iter().enumerate() {
                if !(b > 0.0) {
                    f.error(format!("experiment.bauds_hz.{j}"), "baud rate must be positive");
                    continue;
                }
                for (i, &fc) in carriers_hz.iter().enumerate() {
                    let link = retuned(&s.link, fc).sized_for_baud(b);
                    f.link(&format!("experiment.carriers_hz.{i}"), &link, b);
                }
            }
        }
        Experiment::Segmented { params } => {
            f.link("link", &s.link, baud);
            segmented(&mut f, "experiment.params", params);
        }
        Experiment::Fiber { fiber, params } => {
            f.link("link", &s.link, baud);
            f.check("experiment.fiber", fiber.validate());
            segmented(&mut f, "experiment.params", params);
        }
        Experiment::TwoPath { params } => {
            f.link("link", &s.link, baud);
            truths(&mut f, "experiment.params", &params.true_delays_s, &params.true_amplitudes);
            f.plan("experiment.params.plan", &params.plan);
            if !(params.grid_step_s > 0.0) {
                f.error("experiment.params.grid_step_s", "grid step must be positive");
            }
            if !(params.search_half_width_s >= 0.0) {
                f.error("experiment.params.search_half_width_s", "half width must be >= 0");
            }
        }
        Experiment::Ga { params } => {
            f.link("link", &s.link, baud);
            truths(&mut f, "experiment.params", &params.true_delays_s, &params.true_amplitudes);
            f.check("experiment.params.ga", params.ga.validate());
            f.plan("experiment.params.plan", &params.plan);
            if let Some(space) = &params.stage1_override {
                f.check("experiment.params.stage1_override", space.validate());
                if space.components() != params.true_delays_s.len() {
                    f.error(
                        "experiment.params.stage1_override",
                        format!("{} components for {} paths", space.components(), params.true_delays_s.len()),
                    );
                }
            }
            if params.plan.validate().is_ok() && params.plan.usable() < params.ga.population {
                f.error(
                    "experiment.params.ga.population",
                    format!(
                        "population {} exceeds the {} scored segments ({} segments - {} guard); one capture per iteration needs population <= segments - guard",
                        params.ga.population,
                        params.plan.usable(),
                        params.plan.segments,
                        params.plan.guard_segments
                    ),
                );
            }
        }
        Experiment::Ls {
            params,
            carriers_hz,
            sirs_db,
        } => {
            if carriers_hz.is_empty() {
                f.link("link", &s.link, baud);
            }
            for (i, &fc) in carriers_hz.iter().enumerate() {
                f.link(&format!("experiment.carriers_hz.{i}"), &retuned(&s.link, fc), baud);
            }
            f.check("experiment.params.paths", params.paths.validate());
            f.plan("experiment.params.plan", &params.plan);
            let rows = (s.ofdm.frame_duration_s * s.link.pd.capture_rate_hz).round();
            let cols = (params.paths.antennas.len() * (params.order + 1)) as f64;
            if params.order == 0 {
                f.error("experiment.params.order", "order must be >= 1");
            } else if rows <= cols {
                f.error(
                    "experiment.params.order",
                    format!("{cols} unknowns need more than the {rows} captured samples per frame"),
                );
            } else if rows * cols > MAX_LS_ELEMENTS {
                f.error(
                    "experiment.params.order",
                    format!(
                        "data matrix {rows} x {cols} exceeds the {MAX_LS_ELEMENTS:e}-element limit ({:.1} GB)",
                        rows * cols * 8.0 / 1e9
                    ),
                );
            }
            if !(params.grid_step_s > 0.0) {
                f.error("experiment.params.grid_step_s", "grid step must be positive");
            }
            if let Some(soi) = &params.soi {
                if !soi.sir_db.is_finite() {
                    f.error("experiment.params.soi.sir_db", "SIR must be finite");
                }
            }
            for (i, v) in sirs_db.iter().enumerate() {
                if !v.is_finite() {
                    f.error(format!("experiment.sirs_db.{i}"), "SIR must be finite");
                }
            }
        }
        Experiment::Xcorr {
            settings,
            true_delay_s,
            amplitude,
        } => {
            f.non_empty("experiment.settings", settings);
            for (i, st) in settings.iter().enumerate() {
                let link = s.link.with_if(st.if_center_hz, st.baud_hz);
                f.link(&format!("experiment.settings.{i}"), &link, st.baud_hz);
            }
            f.path_amplitude("experiment.amplitude", *amplitude);
            if !(*true_delay_s >= 0.0) {
                f.error("experiment.true_delay_s", "delay must be >= 0");
            }
        }
        Experiment::ZeroPadding {
            params,
            fractions,
            segment_counts,
            probe_offset_s,
        } => {
            f.link("link", &s.link, baud);
            segmented(&mut f, "experiment.params", params);
            f.non_empty("experiment.fractions", fractions);
            f.non_empty("experiment.segment_counts", segment_counts);
            for (i, &z) in fractions.iter().enumerate() {
                if !(0.0..1.0).contains(&z) {
                    f.error(format!("experiment.fractions.{i}"), format!("fraction {z} must be in [0, 1)"));
                }
            }
            for (i, &n) in segment_counts.iter().enumerate() {
                let plan = SegmentPlan {
                    segments: n,
                    ..params.plan
                };
                f.plan(&format!("experiment.segment_counts.{i}"), &plan);
            }
            if !probe_offset_s.is_finite() {
                f.error("experiment.probe_offset_s", "offset must be finite");
            }
        }
    }
    f.0
}

fn segmented(f: &mut Findings, key: &str, p: &sic_core::pipeline::SegmentedParams) {
    f.grid(key, p.grid_start_s, p.grid_stop_s, p.grid_step_s);
    f.plan(&format!("{key}.plan"), &p.plan);
    f.path_amplitude(&format!("{key}.true_amplitude"), p.true_amplitude);
    if let Some(a) = p.amplitude {
        f.unit_amplitude(&format!("{key}.amplitude"), a);
    }
    if !(p.delay_step_s > 0.0) {
        f.error(format!("{key}.delay_step_s"), "delay step must be positive");
    }
}

fn truths(f: &mut Findings, key: &str, delays: &[f64], amplitudes: &[f64]) {
    f.non_empty(&format!("{key}.true_delays_s"), delays);
    if delays.len() != amplitudes.len() {
        f.error(
            format!("{key}.true_amplitudes"),
            format!("{} amplitudes for {} delays", amplitudes.len(), delays.len()),
        );
    }
    for (i, &a) in amplitudes.iter().enumerate() {
        f.path_amplitude(&format!("{key}.true_amplitudes.{i}"), a);
    }
}

pub fn has_errors(d: &[Diagnostic]) -> bool {
    d.iter().any(|d| d.severity == Severity::Error)
}
