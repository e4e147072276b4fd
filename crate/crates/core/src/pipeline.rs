//! Simulated testbed: SI channel into the photonic front end, plus the
//! experiment flows (mismatch sweeps, segmented search, GA, LS) run against
//! it through the `ResidualEvaluator` seam.

use serde::{Deserialize, Serialize};

use crate::channel::{apply_paths, scale_soi, white_noise, FiberSpec, PathSet, SirSpec, Tap};
use crate::delay::{
    amplitude_from_power, baseline_powers, delay_grid, parabolic_vertex, segment_powers, segmented_search, xcorr_rough_delay,
    Candidate, CorrelationResult, ReferenceRenderer, ResidualEvaluator, SearchOutcome, SegmentPlan, XcorrConfig,
};
use crate::error::{Result, SicError};
use crate::ga::{ga_run_seeded, stage1_ranges, stage3_refine, GaConfig, GaOutcome, SearchSpace, SegmentedFitness};
use crate::ls::{construct_reference, if_to_rf, ls_estimate_periodic, tx_to_if, LsModel, DEFAULT_ORDER};
use crate::metrics::{demod_and_evm, sic_depth, welch_psd, BandSpec, DepthReport, EvmResult, Genie, Psd};
use crate::photonic::{dpmzm, extract_if, fiber_link_optical, photodetect, ModulatorConfig, PdConfig};
use crate::signal::{
    fractional_delay, gen_ofdm, gen_qpsk, scale, upconvert, OfdmConfig, QpskWaveform, RealSignal, SoiConfig,
};

/// Front-end settings shared by every experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub generator_rate_hz: f64,
    /// SI and SOI carrier.
    pub carrier_hz: f64,
    pub lo_hz: f64,
    pub lo_amplitude_v: f64,
    /// Volts per unit of waveform on the received and reference electrodes.
    pub drive_scale_v: f64,
    pub modulator: ModulatorConfig,
    pub pd: PdConfig,
    pub fiber: Option<FiberSpec>,
    /// Capture noise relative to the uncancelled SI IF power; `None` is noiseless.
    pub snr_db: Option<f64>,
    pub noise_seed: u64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            generator_rate_hz: 64e9,
            carrier_hz: 9e9,
            lo_hz: 8e9,
            lo_amplitude_v: 2.0,
            drive_scale_v: 0.15,
            modulator: ModulatorConfig::default(),
            pd: PdConfig::default(),
            fiber: None,
            snr_db: None,
            noise_seed: 99,
        }
    }
}

/// Outcome of a configuration check that is not fatal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Warning {
    pub key: String,
    pub message: String,
}

impl LinkConfig {
    /// Physics checks; returns non-fatal warnings.
    pub fn validate(&self, occupied_bw_hz: f64) -> Result<Vec<Warning>> {
        let mut warnings = Vec::new();
        let nyq = self.generator_rate_hz / 2.0;
        if !(self.generator_rate_hz > 0.0) {
            return Err(SicError::Config("generator_rate_hz must be positive".into()));
        }
        let top = self.carrier_hz + occupied_bw_hz / 2.0;
        if top >= nyq {
            return Err(SicError::Nyquist {
                what: "carrier band at generator rate",
                needed_hz: top,
                nyquist_hz: nyq,
            });
        }
        if top > 0.8 * nyq {
            warnings.push(Warning {
                key: "link.carrier_hz".into(),
                message: format!("carrier band edge {top:e} Hz is within 20% of Nyquist {nyq:e} Hz"),
            });
        }
        if !(self.lo_hz > 0.0 && self.lo_hz < nyq) {
            return Err(SicError::Nyquist {
                what: "LO at generator rate",
                needed_hz: self.lo_hz,
                nyquist_hz: nyq,
            });
        }
        if !(self.drive_scale_v > 0.0) || !(self.lo_amplitude_v > 0.0) {
            return Err(SicError::Config("drive_scale_v and lo_amplitude_v must be positive".into()));
        }
        self.modulator.validate()?;
        self.pd.validate()?;
        let f_if = (self.carrier_hz - self.lo_hz).abs();
        let lo_edge = self.pd.if_center_hz - self.pd.if_width_hz / 2.0;
        let hi_edge = self.pd.if_center_hz + self.pd.if_width_hz / 2.0;
        if f_if - occupied_bw_hz / 2.0 < lo_edge - 1.0 || f_if + occupied_bw_hz / 2.0 > hi_edge + 1.0 {
            return Err(SicError::Config(format!(
                "IF band {f_if:e} +- {:e} Hz falls outside the IF filter [{lo_edge:e}, {hi_edge:e}] Hz",
                occupied_bw_hz / 2.0
            )));
        }
        if let Some(f) = &self.fiber {
            f.validate()?;
        }
        if let Some(s) = self.snr_db {
            if !s.is_finite() {
                return Err(SicError::Config("snr_db must be finite (omit it for noiseless)".into()));
            }
        }
        Ok(warnings)
    }

    pub fn if_hz(&self) -> f64 {
        (self.carrier_hz - self.lo_hz).abs()
    }

    /// Same link moved to IF `f_if_hz` with the filter sized for `baud_hz`
    /// (1.1 x baud, kept clear of DC); the LO follows.
    pub fn with_if(&self, f_if_hz: f64, baud_hz: f64) -> Self {
        Self {
            lo_hz: self.carrier_hz - f_if_hz,
            pd: PdConfig {
                if_center_hz: f_if_hz,
                if_width_hz: (1.1 * baud_hz).min(2.0 * f_if_hz * 0.7),
                ..self.pd
            },
            ..self.clone()
        }
    }

    /// Same link with the IF filter sized for a signal of `baud_hz`: passband
    /// 1.1 x baud, centre raised to `baud_hz` when the band would reach DC.
    /// The LO follows so the carrier keeps landing on the IF centre.
    pub fn sized_for_baud(&self, baud_hz: f64) -> Self {
        let if_center_hz = self.pd.if_center_hz.max(baud_hz);
        let mut out = self.clone();
        out.pd.if_center_hz = if_center_hz;
        out.pd.if_width_hz = self.pd.if_width_hz.max(1.1 * baud_hz);
        out.lo_hz = self.carrier_hz - if_center_hz;
        out
    }
}

/// The simulated front end: fixed received SI (and optional SOI), one
/// captured IF frame per submitted reference frame.
#[derive(Debug, Clone)]
pub struct SimLink {
    pub cfg: LinkConfig,
    si: RealSignal,
    soi: Option<RealSignal>,
    /// Simulation privilege: the SOI can be switched off to measure depth.
    pub soi_enabled: bool,
    lo: RealSignal,
    noise_sigma: f64,
    captures: usize,
    noise_draws: u64,
}

impl SimLink {
    pub fn new(cfg: LinkConfig, si: RealSignal, soi: Option<RealSignal>) -> Result<Self> {
        let fs = cfg.generator_rate_hz;
        if (si.sample_rate_hz - fs).abs() > 1e-6 * fs {
            return Err(SicError::RateMismatch(si.sample_rate_hz, fs));
        }
        if let Some(s) = &soi {
            if s.len() != si.len() {
                return Err(SicError::InvalidInput("SOI and SI frames differ in length".into()));
            }
        }
        let lo = RealSignal::tone(fs, si.len(), cfg.lo_hz, cfg.lo_amplitude_v, 0.0);
        let mut link = Self {
            cfg,
            si,
            soi,
            soi_enabled: true,
            lo,
            noise_sigma: 0.0,
            captures: 0,
            noise_draws: 0,
        };
        if let Some(snr) = link.cfg.snr_db {
            // receiver noise fixed against the SI level seen without fiber
            let mut clean = link.cfg.clone();
            clean.fiber = None;
            let probe = Self { cfg: clean, ..link.clone() };
            let zero = RealSignal::zeros(fs, probe.si.len());
            let p = probe.front_end(&probe.si, &zero)?.power();
            link.noise_sigma = (p / 10f64.powf(snr / 10.0)).sqrt();
        }
        Ok(link)
    }

    pub fn len(&self) -> usize {
        self.si.len()
    }

    pub fn is_empty(&self) -> bool {
        self.si.is_empty()
    }

    pub fn frame_duration_s(&self) -> f64 {
        self.si.duration_s()
    }

    pub fn si(&self) -> &RealSignal {
        &self.si
    }

    fn received(&self) -> Result<RealSignal> {
        match (&self.soi, self.soi_enabled) {
            (Some(s), true) => self.si.add(s),
            _ => Ok(self.si.clone()),
        }
    }

    /// Modulator, optional fiber, detector and IF capture; the capture
    /// trigger is aligned to the fiber delay.
    fn front_end(&self, received: &RealSignal, reference: &RealSignal) -> Result<RealSignal> {
        let k = self.cfg.drive_scale_v;
        let env = dpmzm(&scale(received, k), &scale(reference, k), &self.lo, &self.cfg.modulator)?;
        let (env, fold) = match &self.cfg.fiber {
            Some(f) if f.length_km > 0.0 => {
                (fiber_link_optical(&env, f)?, f.folded_delay_s(self.frame_duration_s()))
            }
            _ => (env, 0.0),
        };
        let cap = extract_if(&photodetect(&env, &self.cfg.pd)?, &self.cfg.pd)?;
        if fold != 0.0 {
            fractional_delay(&cap, -fold)
        } else {
            Ok(cap)
        }
    }

    fn add_capture_noise(&mut self, cap: RealSignal) -> Result<RealSignal> {
        if self.noise_sigma == 0.0 {
            return Ok(cap);
        }
        self.noise_draws += 1;
        let seed = self.cfg.noise_seed.wrapping_mul(1_000_003).wrapping_add(self.noise_draws);
        let w = white_noise(cap.len(), self.noise_sigma, seed)?;
        cap.add(&RealSignal::new(cap.sample_rate_hz, w)?)
    }

    /// Capture with the SI (and SOI) switched off: only the reference arm.
    /// Not counted as a search capture.
    pub fn capture_reference_only(&mut self, reference: &RealSignal) -> Result<RealSignal> {
        let silent = RealSignal::zeros(self.cfg.generator_rate_hz, self.len());
        let cap = self.front_end(&silent, reference)?;
        self.add_capture_noise(cap)
    }

    /// Capture with the reference muted. Not counted as a search capture.
    pub fn capture_uncancelled(&mut self) -> Result<RealSignal> {
        let silent = RealSignal::zeros(self.cfg.generator_rate_hz, self.len());
        let cap = self.front_end(&self.received()?, &silent)?;
        self.add_capture_noise(cap)
    }

    /// Full-frame capture with one reference, not counted.
    pub fn capture_with(&mut self, reference: &RealSignal) -> Result<RealSignal> {
        let cap = self.front_end(&self.received()?, reference)?;
        self.add_capture_noise(cap)
    }
}

impl ResidualEvaluator for SimLink {
    fn submit(&mut self, reference: &RealSignal) -> Result<RealSignal> {
        self.captures += 1;
        self.capture_with(reference)
    }

    fn captures(&self) -> usize {
        self.captures
    }
}

/// One independent OFDM transmit waveform per antenna at the carrier.
pub fn make_tx(ofdm: &OfdmConfig, antennas: usize, carrier_hz: f64, rate_hz: f64) -> Result<Vec<RealSignal>> {
    (0..antennas)
        .map(|j| {
            let cfg = OfdmConfig {
                seed: ofdm.seed.wrapping_add(1000 * j as u64),
                ..ofdm.clone()
            };
            upconvert(&gen_ofdm(&cfg, rate_hz)?, carrier_hz)
        })
        .collect()
}

/// SOI at the carrier plus the genie data needed to demodulate it.
pub fn make_soi(cfg: &SoiConfig, carrier_hz: f64, rate_hz: f64) -> Result<(RealSignal, QpskWaveform)> {
    let q = gen_qpsk(cfg, rate_hz)?;
    Ok((upconvert(&q.baseband, carrier_hz)?, q))
}

fn depth_band(link: &LinkConfig, baud_hz: f64) -> BandSpec {
    BandSpec::for_signal(link.if_hz(), baud_hz)
}

pub fn tap_for(delay_s: f64, amplitude: f64) -> Tap {
    Tap::new(delay_s, 20.0 * amplitude.log10())
}

fn frame_len(link: &LinkConfig, ofdm: &OfdmConfig) -> usize {
    (ofdm.frame_duration_s * link.generator_rate_hz).round() as usize
}

// ---------------------------------------------------------------- mismatch

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MismatchPoint {
    pub carrier_hz: f64,
    pub baud_hz: f64,
    pub delta_tau_s: f64,
    pub closed_form_db: f64,
    pub simulated_db: f64,
}

/// Depth against a reference that is off by `delta_tau` in delay and `rho`
/// in amplitude, through the whole front end. The LO follows the carrier so
/// the IF stays at the configured IF center.
pub fn mismatch_sweep(
    link: &LinkConfig,
    ofdm: &OfdmConfig,
    carriers_hz: &[f64],
    delta_taus_s: &[f64],
    rho: f64,
) -> Result<Vec<MismatchPoint>> {
    let mut out = Vec::new();
    for &fc in carriers_hz {
        let cfg = LinkConfig {
            carrier_hz: fc,
            lo_hz: fc - link.pd.if_center_hz,
            ..link.clone()
        };
        cfg.validate(ofdm.baud_rate_hz)?;
        let tx = make_tx(ofdm, 1, fc, cfg.generator_rate_hz)?.remove(0);
        let mut sim = SimLink::new(cfg.clone(), tx.clone(), None)?;
        let band = depth_band(&cfg, ofdm.baud_rate_hz);
        let before = sim.capture_uncancelled()?;
        let closed = crate::metrics::mismatch_depth_curve(fc, delta_taus_s, rho)?;
        for (&dt, &cf) in delta_taus_s.iter().zip(&closed) {
            let reference = scale(&fractional_delay(&tx, dt)?, rho);
            let after = sim.capture_with(&reference)?;
            out.push(MismatchPoint {
                carrier_hz: fc,
                baud_hz: ofdm.baud_rate_hz,
                delta_tau_s: dt,
                closed_form_db: cf,
                simulated_db: sic_depth(&before, &after, &band)?.depth_db,
            });
        }
    }
    Ok(out)
}

// --------------------------------------------------------------- segmented

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentedParams {
    pub true_delay_s: f64,
    pub true_amplitude: f64,
    pub grid_start_s: f64,
    pub grid_stop_s: f64,
    pub grid_step_s: f64,
    /// Amplitude applied to every grid entry; `None` estimates it from power.
    pub amplitude: Option<f64>,
    pub plan: SegmentPlan,
    pub delay_step_s: f64,
}

impl Default for SegmentedParams {
    fn default() -> Self {
        Self {
            true_delay_s: 4768e-12,
            true_amplitude: 0.51,
            grid_start_s: 4700e-12,
            grid_stop_s: 5099e-12,
            grid_step_s: 1e-12,
            amplitude: None,
            plan: SegmentPlan::default(),
            delay_step_s: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SegmentedRun {
    pub amplitude: f64,
    pub grid_delays_s: Vec<f64>,
    pub outcome: SearchOutcome,
    pub depth: DepthReport,
    #[serde(skip)]
    pub psd_before: Psd,
    #[serde(skip)]
    pub psd_after: Psd,
}

/// Power-ratio amplitude of one reference source against the current SI.
fn amplitude_estimate(sim: &mut SimLink, source: &RealSignal) -> Result<f64> {
    let si = sim.capture_uncancelled()?.power();
    let re = sim.capture_reference_only(source)?.power();
    amplitude_from_power(si, re)
}

/// Single direct path searched over a delay grid with one candidate per
/// reference segment, then verified with a full-frame capture.
pub fn single_path_segmented(link: &LinkConfig, ofdm: &OfdmConfig, p: &SegmentedParams) -> Result<SegmentedRun> {
    link.validate(ofdm.baud_rate_hz)?;
    let tx = make_tx(ofdm, 1, link.carrier_hz, link.generator_rate_hz)?;
    let paths = PathSet::direct_only(&[tap_for(p.true_delay_s, p.true_amplitude)]);
    let si = apply_paths(&tx, &paths)?;
    let mut sim = SimLink::new(link.clone(), si, None)?;
    let plan = SegmentPlan {
        total_duration_s: ofdm.frame_duration_s,
        ..p.plan
    };
    let amplitude = match p.amplitude {
        Some(a) => a,
        None => amplitude_estimate(&mut sim, &tx[0])?,
    };
    let mut renderer = ReferenceRenderer::new(tx)?;
    renderer.delay_step_s = p.delay_step_s;
    let grid = delay_grid(p.grid_start_s, p.grid_stop_s, p.grid_step_s, amplitude);
    let outcome = segmented_search(&mut sim, &renderer, &grid, &plan)?;
    let band = depth_band(link, ofdm.baud_rate_hz);
    let before = sim.capture_uncancelled()?;
    let after = sim.capture_with(&renderer.render(&outcome.best)?)?;
    Ok(SegmentedRun {
        amplitude,
        grid_delays_s: grid.iter().map(|c| c.delays_s[0]).collect(),
        depth: sic_depth(&before, &after, &band)?,
        psd_before: welch_psd(&before)?,
        psd_after: welch_psd(&after)?,
        outcome,
    })
}

// ------------------------------------------------------------------ fiber

#[derive(Debug, Clone, Serialize)]
pub struct FiberRun {
    pub fiber: FiberSpec,
    pub optical_loss_db: f64,
    pub without_fiber: SegmentedRun,
    pub with_fiber: SegmentedRun,
    /// Depth with fiber minus depth without.
    pub depth_change_db: f64,
    /// Uncancelled IF power without fiber minus with fiber.
    pub if_power_drop_db: f64,
}

/// The single-path segmented scenario run back to back without and with a
/// fiber span between modulator and detector.
pub fn fiber_remoting(link: &LinkConfig, ofdm: &OfdmConfig, fiber: &FiberSpec, p: &SegmentedParams) -> Result<FiberRun> {
    let bare = LinkConfig {
        fiber: None,
        ..link.clone()
    };
    let remote = LinkConfig {
        fiber: Some(fiber.clone()),
        ..link.clone()
    };
    let without_fiber = single_path_segmented(&bare, ofdm, p)?;
    let with_fiber = single_path_segmented(&remote, ofdm, p)?;
    Ok(FiberRun {
        fiber: fiber.clone(),
        optical_loss_db: fiber.optical_loss_db(),
        depth_change_db: with_fiber.depth.depth_db - without_fiber.depth.depth_db,
        if_power_drop_db: without_fiber.depth.power_before_db - with_fiber.depth.power_before_db,
        without_fiber,
        with_fiber,
    })
}

// -------------------------------------------------------- two fixed paths

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoPathParams {
    pub true_delays_s: Vec<f64>,
    pub true_amplitudes: Vec<f64>,
    /// Segmented grid half-width around each cross-correlation estimate.
    pub search_half_width_s: f64,
    pub grid_step_s: f64,
    pub plan: SegmentPlan,
}

impl Default for TwoPathParams {
    fn default() -> Self {
        Self {
            true_delays_s: vec![4768e-12, 3828e-12],
            true_amplitudes: vec![0.51, 0.53],
            search_half_width_s: 200e-12,
            grid_step_s: 1e-12,
            plan: SegmentPlan::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PathEstimate {
    pub rough_delay_s: f64,
    pub delay_s: f64,
    pub amplitude: f64,
    /// Depth for this path alone (only its antenna transmitting).
    pub depth: DepthReport,
    pub captures: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TwoPathRun {
    pub paths: Vec<PathEstimate>,
    /// Both antennas transmitting, both references applied.
    pub depth: DepthReport,
    #[serde(skip)]
    pub psd_before: Psd,
    #[serde(skip)]
    pub psd_after: Psd,
}

/// Cross-correlation of the known transmit IF against a capture holding
/// the SI and the unadjusted (zero-delay, full-scale) reference.
fn rough_delay(sim: &mut SimLink, source: &RealSignal, baud_hz: f64) -> Result<CorrelationResult> {
    let cap = sim.capture_with(source)?;
    let known = tx_to_if(source, sim.cfg.lo_hz, &sim.cfg.pd)?;
    xcorr_rough_delay(&known, &cap, &XcorrConfig::for_baud(baud_hz))
}

/// Each direct path is measured alone (one antenna transmitting at a time),
/// then both references are applied while both antennas transmit.
pub fn two_path_fixed(link: &LinkConfig, ofdm: &OfdmConfig, p: &TwoPathParams) -> Result<TwoPathRun> {
    link.validate(ofdm.baud_rate_hz)?;
    if p.true_delays_s.len() != p.true_amplitudes.len() || p.true_delays_s.is_empty() {
        return Err(SicError::Config("need one amplitude per path delay".into()));
    }
    let nt = p.true_delays_s.len();
    let tx = make_tx(ofdm, nt, link.carrier_hz, link.generator_rate_hz)?;
    let taps: Vec<Tap> = p
        .true_delays_s
        .iter()
        .zip(&p.true_amplitudes)
        .map(|(&d, &a)| tap_for(d, a))
        .collect();
    let plan = SegmentPlan {
        total_duration_s: ofdm.frame_duration_s,
        ..p.plan
    };
    let band = depth_band(link, ofdm.baud_rate_hz);
    let mut estimates = Vec::new();
    for j in 0..nt {
        let si = apply_paths(&tx[j..=j], &PathSet::direct_only(&taps[j..=j]))?;
        let mut sim = SimLink::new(link.clone(), si, None)?;
        let corr = rough_delay(&mut sim, &tx[j], ofdm.baud_rate_hz)?;
        let amplitude = amplitude_estimate(&mut sim, &tx[j])?;
        let renderer = ReferenceRenderer::new(vec![tx[j].clone()])?;
        let centre = renderer.quantize(corr.rough_delay_s);
        let grid = delay_grid(
            (centre - p.search_half_width_s).max(0.0),
            centre + p.search_half_width_s,
            p.grid_step_s,
            amplitude,
        );
        let outcome = segmented_search(&mut sim, &renderer, &grid, &plan)?;
        let before = sim.capture_uncancelled()?;
        let after = sim.capture_with(&renderer.render(&outcome.best)?)?;
        estimates.push(PathEstimate {
            rough_delay_s: corr.rough_delay_s,
            delay_s: outcome.best.delays_s[0],
            amplitude,
            depth: sic_depth(&before, &after, &band)?,
            captures: outcome.captures,
        });
    }
    let si = apply_paths(&tx, &PathSet::direct_only(&taps))?;
    let mut sim = SimLink::new(link.clone(), si, None)?;
    let renderer = ReferenceRenderer::new(tx)?;
    let joint = Candidate::new(
        estimates.iter().map(|e| e.delay_s).collect(),
        estimates.iter().map(|e| e.amplitude).collect(),
    )?;
    let before = sim.capture_uncancelled()?;
    let after = sim.capture_with(&renderer.render(&joint)?)?;
    Ok(TwoPathRun {
        paths: estimates,
        depth: sic_depth(&before, &after, &band)?,
        psd_before: welch_psd(&before)?,
        psd_after: welch_psd(&after)?,
    })
}

// ---------------------------------------------------------------------- GA

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaParams {
    pub true_delays_s: Vec<f64>,
    pub true_amplitudes: Vec<f64>,
    /// Fixed Stage-1 box; `None` derives it from cross-correlation and power.
    pub stage1_override: Option<SearchSpace>,
    pub ga: GaConfig,
    pub plan: SegmentPlan,
    pub stage3: bool,
    /// Place the Stage-2 best in the Stage-3 initial population.
    pub stage3_keep_best: bool,
}

impl Default for GaParams {
    fn default() -> Self {
        Self {
            true_delays_s: vec![4768e-12, 3828e-12],
            true_amplitudes: vec![0.51, 0.53],
            stage1_override: None,
            ga: GaConfig::default(),
            plan: SegmentPlan {
                segments: 160,
                ..SegmentPlan::default()
            },
            stage3: true,
            stage3_keep_best: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GaStage {
    pub space: SearchSpace,
    pub outcome_depth_db: f64,
    pub best: Candidate,
    /// Search captures used by this stage (baseline excluded).
    pub captures: usize,
    /// Full-frame depth with this stage's best candidate.
    pub depth: DepthReport,
    #[serde(skip)]
    pub outcome: GaOutcome,
}

#[derive(Debug, Clone, Serialize)]
pub struct GaRun {
    pub rough_delays_s: Vec<f64>,
    pub pooled_amplitude: Option<f64>,
    pub stage2: GaStage,
    pub stage3: Option<GaStage>,
    #[serde(skip)]
    pub psd_before: Psd,
    #[serde(skip)]
    pub psd_after: Psd,
}

impl GaRun {
    pub fn final_stage(&self) -> &GaStage {
        self.stage3.as_ref().unwrap_or(&self.stage2)
    }
}

fn ga_stage(
    sim: &mut SimLink,
    renderer: &ReferenceRenderer,
    plan: SegmentPlan,
    space: SearchSpace,
    cfg: &GaConfig,
    seeds: &[Candidate],
    band: &BandSpec,
    before: &RealSignal,
) -> Result<GaStage> {
    let baseline = baseline_powers(sim, renderer, &plan)?;
    let start = sim.captures();
    let outcome = {
        let mut fit = SegmentedFitness::with_baseline(sim, renderer, plan, baseline)?;
        ga_run_seeded(&mut fit, &space, cfg, seeds)?
    };
    let captures = sim.captures() - start;
    let after = sim.capture_with(&renderer.render(&outcome.best)?)?;
    Ok(GaStage {
        space,
        outcome_depth_db: outcome.best_depth_db,
        best: outcome.best.clone(),
        captures,
        depth: sic_depth(before, &after, band)?,
        outcome,
    })
}

/// Stage 1 (ranges), Stage 2 (GA over the ranges) and optionally Stage 3
/// (GA over the halved box at half the delay step).
pub fn ga_two_path(link: &LinkConfig, ofdm: &OfdmConfig, p: &GaParams) -> Result<GaRun> {
    link.validate(ofdm.baud_rate_hz)?;
    if p.true_delays_s.len() != p.true_amplitudes.len() || p.true_delays_s.is_empty() {
        return Err(SicError::Config("need one amplitude per path delay".into()));
    }
    let nt = p.true_delays_s.len();
    let tx = make_tx(ofdm, nt, link.carrier_hz, link.generator_rate_hz)?;
    let taps: Vec<Tap> = p
        .true_delays_s
        .iter()
        .zip(&p.true_amplitudes)
        .map(|(&d, &a)| tap_for(d, a))
        .collect();
    let si = apply_paths(&tx, &PathSet::direct_only(&taps))?;
    let mut sim = SimLink::new(link.clone(), si, None)?;
    let plan = SegmentPlan {
        total_duration_s: ofdm.frame_duration_s,
        ..p.plan
    };
    if plan.usable() < p.ga.population {
        return Err(SicError::Config(format!(
            "{} usable segments cannot hold a population of {}",
            plan.usable(),
            p.ga.population
        )));
    }

    let mut rough_delays_s = Vec::new();
    let mut pooled_amplitude = None;
    let space = match &p.stage1_override {
        Some(s) => s.clone(),
        None => {
            let corrs = tx
                .iter()
                .map(|t| rough_delay(&mut sim, t, ofdm.baud_rate_hz))
                .collect::<Result<Vec<_>>>()?;
            rough_delays_s = corrs.iter().map(|c| c.rough_delay_s).collect();
            let mut all = tx[0].clone();
            for t in &tx[1..] {
                all = all.add(t)?;
            }
            let si_p = sim.capture_uncancelled()?.power();
            let ref_p = sim.capture_reference_only(&all)?.power();
            pooled_amplitude = Some(amplitude_from_power(si_p, ref_p)?);
            stage1_ranges(&corrs, si_p, ref_p)?
        }
    };

    let band = depth_band(link, ofdm.baud_rate_hz);
    let before = sim.capture_uncancelled()?;
    let mut renderer = ReferenceRenderer::new(tx)?;
    renderer.delay_step_s = space.delay_resolution_s;
    let stage2 = ga_stage(&mut sim, &renderer, plan, space, &p.ga, &[], &band, &before)?;
    let stage3 = if p.stage3 {
        let refined = stage3_refine(&stage2.space, &stage2.outcome.history)?;
        renderer.delay_step_s = refined.delay_resolution_s;
        let cfg = GaConfig {
            seed: p.ga.seed.wrapping_add(1),
            ..p.ga.clone()
        };
        let seeds = if p.stage3_keep_best { vec![stage2.best.clone()] } else { Vec::new() };
        Some(ga_stage(&mut sim, &renderer, plan, refined, &cfg, &seeds, &band, &before)?)
    } else {
        None
    };
    let best = stage3.as_ref().unwrap_or(&stage2).best.clone();
    let after = sim.capture_with(&renderer.render(&best)?)?;
    Ok(GaRun {
        rough_delays_s,
        pooled_amplitude,
        stage2,
        stage3,
        psd_before: welch_psd(&before)?,
        psd_after: welch_psd(&after)?,
    })
}

// ---------------------------------------------------------------------- LS

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SoiParams {
    pub config: SoiConfig,
    pub sir_db: f64,
}

impl Default for SoiParams {
    fn default() -> Self {
        Self {
            config: SoiConfig::default(),
            sir_db: -18.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LsParams {
    pub paths: PathSet,
    pub order: usize,
    /// Advance applied to the constructed reference before the DAC, so the
    /// global delay search works on positive delays around this value.
    pub bulk_delay_s: f64,
    pub search_half_width_s: f64,
    pub grid_step_s: f64,
    /// Grid points on each side of the discrete optimum used to fit the
    /// residual parabola whose vertex sets the final delay; 0 keeps the
    /// discrete optimum.
    pub refine_half_window: usize,
    pub plan: SegmentPlan,
    pub soi: Option<SoiParams>,
}

impl Default for LsParams {
    fn default() -> Self {
        Self {
            paths: PathSet::table_multipath(tap_for(4768e-12, 0.51), tap_for(3828e-12, 0.53)),
            order: DEFAULT_ORDER,
            bulk_delay_s: 3.8e-9,
            search_half_width_s: 100e-12,
            grid_step_s: 1e-12,
            refine_half_window: 10,
            plan: SegmentPlan::default(),
            soi: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SoiReport {
    pub sir_db: f64,
    /// Residual with the SOI present (SOI counts as residual power).
    pub depth_with_soi: DepthReport,
    pub evm_before: EvmResult,
    pub evm_after: EvmResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct LsRun {
    #[serde(skip)]
    pub model: LsModel,
    pub condition_estimate: f64,
    pub ridge_lambda: Option<f64>,
    /// Per-sample fit residual `||y - Psi h||^2 / ||y||^2`.
    pub fit_residual_db: f64,
    pub rough_delay_s: f64,
    pub amplitude: f64,
    /// Delay used for the final reference (parabola vertex when refined).
    pub best_delay_s: f64,
    pub search: SearchOutcome,
    pub grid_delays_s: Vec<f64>,
    /// Depth with the SOI muted.
    pub depth: DepthReport,
    pub soi: Option<SoiReport>,
    /// IF power of the uncancelled SI capture, dB.
    pub si_if_power_db: f64,
    #[serde(skip)]
    pub psd_before: Psd,
    #[serde(skip)]
    pub psd_after: Psd,
}

/// LS channel estimate from a reference-muted capture, reference
/// construction, single global (delay, amplitude) fit, then measurement.
pub fn ls_run(link: &LinkConfig, ofdm: &OfdmConfig, p: &LsParams) -> Result<LsRun> {
    link.validate(ofdm.baud_rate_hz)?;
    p.paths.validate()?;
    let nt = p.paths.antennas.len();
    let fs = link.generator_rate_hz;
    let n = frame_len(link, ofdm);
    let tx = make_tx(ofdm, nt, link.carrier_hz, fs)?;
    let si = apply_paths(&tx, &p.paths)?;
    let soi = match &p.soi {
        Some(s) => {
            let cfg = SoiConfig {
                frame_duration_s: ofdm.frame_duration_s,
                ..s.config.clone()
            };
            let (wave, q) = make_soi(&cfg, link.carrier_hz, fs)?;
            Some((scale_soi(&si, &wave, SirSpec { sir_db: s.sir_db })?, q, s.sir_db))
        }
        None => None,
    };
    let mut sim = SimLink::new(link.clone(), si, soi.as_ref().map(|s| s.0.clone()))?;
    let plan = SegmentPlan {
        total_duration_s: ofdm.frame_duration_s,
        ..p.plan
    };

    // estimation capture with the reference arm muted
    let y = sim.capture_uncancelled()?;
    let tx_if = tx
        .iter()
        .map(|t| tx_to_if(t, link.lo_hz, &link.pd))
        .collect::<Result<Vec<_>>>()?;
    let fit = ls_estimate_periodic(&y, &tx_if, p.order)?;
    let r_if = construct_reference(&fit.model, &tx_if)?;

    // DAC frame: translated to RF, advanced by the bulk delay, full scale
    let rf = fractional_delay(&if_to_rf(&r_if, link.lo_hz, fs, n)?, -p.bulk_delay_s)?;
    let full_scale = tx.iter().map(|t| t.peak_to_peak()).fold(0.0, f64::max);
    let source = scale(&rf, full_scale / rf.peak_to_peak());
    let amplitude = amplitude_from_power(r_if.power(), sim.capture_reference_only(&source)?.power())?;

    let corr = {
        let cap = sim.capture_with(&source)?;
        let known = tx_to_if(&source, link.lo_hz, &link.pd)?;
        xcorr_rough_delay(&known, &cap, &XcorrConfig::for_baud(ofdm.baud_rate_hz))?
    };
    let renderer = ReferenceRenderer::new(vec![source])?;
    let centre = renderer.quantize(corr.rough_delay_s);
    let grid = delay_grid(
        (centre - p.search_half_width_s).max(0.0),
        centre + p.search_half_width_s,
        p.grid_step_s,
        amplitude,
    );
    let search = segmented_search(&mut sim, &renderer, &grid, &plan)?;
    let delays: Vec<f64> = grid.iter().map(|c| c.delays_s[0]).collect();
    let best_i = grid.iter().position(|c| *c == search.best).unwrap_or(0);
    let best_delay_s = if p.refine_half_window > 0 {
        parabolic_vertex(&delays, &search.residuals, best_i, p.refine_half_window)
            .map(|v| renderer.quantize(v))
            .unwrap_or(search.best.delays_s[0])
    } else {
        search.best.delays_s[0]
    };
    let reference = renderer.render(&Candidate::single(best_delay_s, amplitude))?;

    let band = depth_band(link, ofdm.baud_rate_hz);
    sim.soi_enabled = false;
    let before = sim.capture_uncancelled()?;
    let after = sim.capture_with(&reference)?;
    let depth = sic_depth(&before, &after, &band)?;
    let si_if_power_db = 10.0 * before.power().log10();
    let soi_report = match &soi {
        Some((_, q, sir_db)) => {
            sim.soi_enabled = true;
            let before_soi = sim.capture_uncancelled()?;
            let after_soi = sim.capture_with(&reference)?;
            let genie = Genie {
                carrier_hz: link.if_hz(),
                symbol_period_s: q.symbol_period_s,
                rolloff: p.soi.as_ref().map(|s| s.config.rolloff).unwrap_or(0.35),
                // capture trigger is aligned, fiber included
                timing_s: 0.0,
                symbols: &q.symbols,
            };
            Some(SoiReport {
                sir_db: *sir_db,
                depth_with_soi: sic_depth(&before_soi, &after_soi, &band)?,
                evm_before: demod_and_evm(&before_soi, &genie)?,
                evm_after: demod_and_evm(&after_soi, &genie)?,
            })
        }
        None => None,
    };
    Ok(LsRun {
        model: fit.model,
        condition_estimate: fit.condition_estimate,
        ridge_lambda: fit.ridge_lambda,
        fit_residual_db: 10.0 * fit.relative_residual.max(1e-30).log10(),
        rough_delay_s: corr.rough_delay_s,
        amplitude,
        best_delay_s,
        grid_delays_s: delays,
        search,
        depth,
        soi: soi_report,
        si_if_power_db,
        psd_before: welch_psd(&before)?,
        psd_after: welch_psd(&after)?,
    })
}

// ------------------------------------------------------- xcorr resolution

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct XcorrPoint {
    pub if_center_hz: f64,
    pub baud_hz: f64,
    pub true_delay_s: f64,
    pub estimated_delay_s: f64,
    pub peaks: usize,
}

/// Rough-delay accuracy across IF centers and baud rates for one path.
pub fn xcorr_resolution(
    link: &LinkConfig,
    ofdm: &OfdmConfig,
    settings: &[(f64, f64)],
    true_delay_s: f64,
    amplitude: f64,
) -> Result<(Vec<XcorrPoint>, Vec<CorrelationResult>)> {
    let mut points = Vec::new();
    let mut curves = Vec::new();
    for &(f_if, baud) in settings {
        let cfg = link.with_if(f_if, baud);
        let o = OfdmConfig {
            baud_rate_hz: baud,
            ..ofdm.clone()
        };
        let tx = make_tx(&o, 1, cfg.carrier_hz, cfg.generator_rate_hz)?;
        let si = apply_paths(&tx, &PathSet::direct_only(&[tap_for(true_delay_s, amplitude)]))?;
        let mut sim = SimLink::new(cfg, si, None)?;
        let corr = rough_delay(&mut sim, &tx[0], baud)?;
        points.push(XcorrPoint {
            if_center_hz: f_if,
            baud_hz: baud,
            true_delay_s,
            estimated_delay_s: corr.rough_delay_s,
            peaks: corr.peak_lags_s.len(),
        });
        curves.push(corr);
    }
    Ok((points, curves))
}

// ----------------------------------------------------------- zero padding

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZeroPaddingPoint {
    pub zero_padding_fraction: f64,
    pub segments: usize,
    pub best_delay_s: f64,
    pub depth_db: f64,
    /// Coefficient of variation (std / mean) of the per-segment residual
    /// power when every segment carries the same candidate.
    pub residual_cv: f64,
    /// Segmented-search curve: residual (dB) per grid delay.
    pub curve_db: Vec<f64>,
}

/// Segmented search on zero-padded OFDM at several padding fractions and
/// segment counts.
pub fn zero_padding_study(
    link: &LinkConfig,
    ofdm: &OfdmConfig,
    p: &SegmentedParams,
    fractions: &[f64],
    segment_counts: &[usize],
    probe_offset_s: f64,
) -> Result<(Vec<f64>, Vec<ZeroPaddingPoint>)> {
    let mut out = Vec::new();
    let mut grid_delays = Vec::new();
    for &zp in fractions {
        let o = OfdmConfig {
            zero_padding_fraction: zp,
            ..ofdm.clone()
        };
        for &segments in segment_counts {
            let params = SegmentedParams {
                plan: SegmentPlan { segments, ..p.plan },
                amplitude: Some(p.amplitude.unwrap_or(p.true_amplitude)),
                ..p.clone()
            };
            let run = single_path_segmented(link, &o, &params)?;
            grid_delays = run.grid_delays_s.clone();
            let residual_cv = residual_cv(link, &o, &params, probe_offset_s)?;
            out.push(ZeroPaddingPoint {
                zero_padding_fraction: zp,
                segments,
                best_delay_s: run.outcome.best.delays_s[0],
                depth_db: run.depth.depth_db,
                residual_cv,
                curve_db: run.outcome.residuals.iter().map(|r| 10.0 * r.max(1e-30).log10()).collect(),
            });
        }
    }
    Ok((grid_delays, out))
}

/// Standard deviation across scored segments of the per-segment depth when
/// all segments carry the same, slightly mistuned, candidate.
fn residual_cv(link: &LinkConfig, ofdm: &OfdmConfig, p: &SegmentedParams, offset_s: f64) -> Result<f64> {
    let tx = make_tx(ofdm, 1, link.carrier_hz, link.generator_rate_hz)?;
    let si = apply_paths(&tx, &PathSet::direct_only(&[tap_for(p.true_delay_s, p.true_amplitude)]))?;
    let mut sim = SimLink::new(link.clone(), si, None)?;
    let plan = SegmentPlan {
        total_duration_s: ofdm.frame_duration_s,
        ..p.plan
    };
    let renderer = ReferenceRenderer::new(tx)?;
    let c = Candidate::single(p.true_delay_s + offset_s, p.true_amplitude);
    let cap = sim.capture_with(&renderer.render(&c)?)?;
    let pw = segment_powers(&plan, &cap);
    let d: Vec<f64> = plan.scored_segments().map(|u| pw[u]).collect();
    let m = d.iter().sum::<f64>() / d.len() as f64;
    if d.len() < 2 || !(m > 0.0) {
        return Err(SicError::EstimationFailed("too few measurable segments".into()));
    }
    let var = d.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (d.len() - 1) as f64;
    Ok(var.sqrt() / m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short_ofdm() -> OfdmConfig {
        OfdmConfig {
            frame_duration_s: 1e-6,
            ..OfdmConfig::default()
        }
    }

    #[test]
    fn link_validation() {
        let l = LinkConfig::default();
        assert!(l.validate(1e9).unwrap().is_empty());
        let near = LinkConfig {
            carrier_hz: 30e9,
            lo_hz: 29e9,
            ..LinkConfig::default()
        };
        assert_eq!(near.validate(1e9).unwrap().len(), 1);
        let over = LinkConfig {
            generator_rate_hz: 60e9,
            carrier_hz: 40e9,
            lo_hz: 39e9,
            ..LinkConfig::default()
        };
        assert!(matches!(over.validate(1e9), Err(SicError::Nyquist { .. })));
        let off_if = LinkConfig {
            lo_hz: 6e9,
            ..LinkConfig::default()
        };
        assert!(off_if.validate(1e9).is_err());
    }

    #[test]
    fn exact_reference_cancels() {
        let link = LinkConfig::default();
        let o = short_ofdm();
        let tx = make_tx(&o, 1, 9e9, 64e9).unwrap();
        let si = apply_paths(&tx, &PathSet::direct_only(&[tap_for(100e-12, 0.5)])).unwrap();
        let mut sim = SimLink::new(link.clone(), si.clone(), None).unwrap();
        let before = sim.capture_uncancelled().unwrap();
        let after = sim.capture_with(&si).unwrap();
        let d = sic_depth(&before, &after, &depth_band(&link, 1e9)).unwrap();
        assert!(d.depth_db > 75.0, "{:?}", d);
        assert_eq!(sim.captures(), 0);
        sim.submit(&si).unwrap();
        assert_eq!(sim.captures(), 1);
    }

    #[test]
    fn mismatch_follows_closed_form() {
        let link = LinkConfig::default();
        let pts = mismatch_sweep(&link, &short_ofdm(), &[10e9], &[0.5e-12, 10e-12], 1.0).unwrap();
        for p in &pts {
            assert!((p.simulated_db - p.closed_form_db).abs() < 0.3, "{p:?}");
        }
    }

    #[test]
    fn capture_noise_sets_snr() {
        let link = LinkConfig {
            snr_db: Some(20.0),
            ..LinkConfig::default()
        };
        let o = short_ofdm();
        let tx = make_tx(&o, 1, 9e9, 64e9).unwrap();
        let mut noisy = SimLink::new(link.clone(), tx[0].clone(), None).unwrap();
        let mut clean = SimLink::new(LinkConfig::default(), tx[0].clone(), None).unwrap();
        let a = noisy.capture_uncancelled().unwrap();
        let b = clean.capture_uncancelled().unwrap();
        let n = a.sub(&b).unwrap().power();
        let snr = 10.0 * (b.power() / n).log10();
        assert!((snr - 20.0).abs() < 0.2, "{snr}");
        // fresh noise per capture
        let c = noisy.capture_uncancelled().unwrap();
        assert!(c.sub(&a).unwrap().power() > 0.0);
    }

    #[test]
    fn fiber_scales_if_power_by_twice_the_optical_loss() {
        let o = short_ofdm();
        let tx = make_tx(&o, 1, 9e9, 64e9).unwrap();
        let with = LinkConfig {
            fiber: Some(FiberSpec {
                length_km: 25.2,
                ..FiberSpec::default()
            }),
            ..LinkConfig::default()
        };
        let p0 = SimLink::new(LinkConfig::default(), tx[0].clone(), None)
            .unwrap()
            .capture_uncancelled()
            .unwrap()
            .power();
        let p1 = SimLink::new(with, tx[0].clone(), None).unwrap().capture_uncancelled().unwrap().power();
        let drop = 10.0 * (p0 / p1).log10();
        assert!((drop - 9.2).abs() < 0.05, "{drop}");
    }
}
