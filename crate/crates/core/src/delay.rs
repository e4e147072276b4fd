//! Rough delay by cross-correlation, fine delay and amplitude by segmented
//! search.
//!
//! A segmented search packs many candidate (delay, amplitude) settings into
//! a single reference frame, one candidate per time segment, and scores each
//! from the residual power in the matching segment of one captured IF frame.

use std::ops::Range;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::{self, SincInterpolator};
use crate::error::{Result, SicError};
use crate::signal::{check_same_rate, RealSignal};

/// Normalized envelope cross-correlation and its detected peaks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    /// Signed circular lags, ascending.
    pub lags_s: Vec<f64>,
    /// Magnitude of the normalized complex correlation, in [0, 1].
    pub values: Vec<f64>,
    /// Peak lags (parabolic sub-sample refinement) in descending order of
    /// peak height.
    pub peak_lags_s: Vec<f64>,
    /// Lag separation of the two strongest peaks (0 when they merge).
    pub rough_delay_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct XcorrConfig {
    /// Peaks below this fraction of the maximum are ignored.
    pub threshold: f64,
    /// Minimum spacing between accepted peaks.
    pub min_separation_s: f64,
}

impl Default for XcorrConfig {
    fn default() -> Self {
        Self {
            threshold: 0.3,
            min_separation_s: 0.5e-9,
        }
    }
}

impl XcorrConfig {
    /// Half a symbol period of a signal at `baud_hz`.
    pub fn for_baud(baud_hz: f64) -> Self {
        Self {
            min_separation_s: 0.5 / baud_hz,
            ..Self::default()
        }
    }
}

/// Correlates the known transmitted waveform against a capture that holds
/// both the received SI and the unadjusted reference. The two strongest
/// peaks mark the two arrivals; their separation is the rough delay the
/// reference needs.
pub fn xcorr_rough_delay(
    known_tx: &RealSignal,
    captured: &RealSignal,
    cfg: &XcorrConfig,
) -> Result<CorrelationResult> {
    check_same_rate(known_tx.sample_rate_hz, captured.sample_rate_hz)?;
    let n = known_tx.len();
    if n == 0 || captured.len() != n {
        return Err(SicError::InvalidInput("correlation inputs must share a non-zero length".into()));
    }
    let fs = known_tx.sample_rate_hz;
    let mut a = dsp::analytic(&known_tx.samples);
    let mut b = dsp::analytic(&captured.samples);
    dsp::fft_in_place(&mut a);
    dsp::fft_in_place(&mut b);
    // Hann taper over the occupied band of the known waveform: a flat
    // spectrum gives sinc-shaped lobes whose slow tails pull neighbouring
    // peaks off their true lags.
    let w = band_taper(&a);
    let ea: f64 = a.iter().zip(&w).map(|(c, w)| w * c.norm_sqr()).sum();
    let eb: f64 = b.iter().zip(&w).map(|(c, w)| w * c.norm_sqr()).sum();
    if ea <= 0.0 || eb <= 0.0 {
        return Err(SicError::EstimationFailed("correlation input has no energy in band".into()));
    }
    // R(k) = conj(A) B w, so r(l) = sum_n conj(a(n)) b(n + l), weighted in frequency;
    // one arrival g a(n - tau) contributes g |A|^2 w e^{-j w tau}
    let cross: Vec<Complex64> = a.iter().zip(&b).zip(&w).map(|((x, y), w)| x.conj() * y * *w).collect();
    let model: Vec<f64> = a.iter().zip(&w).map(|(c, w)| w * c.norm_sqr()).collect();
    let scale = n as f64 / (ea * eb).sqrt();
    let circ = magnitude(&cross, scale);
    let half = n / 2;
    let lags_s: Vec<f64> = (0..n).map(|i| (i as i64 - half as i64) as f64 / fs).collect();
    let values: Vec<f64> = (0..n).map(|i| circ[(i + n - half) % n]).collect();
    let min_sep = (cfg.min_separation_s * fs).round() as usize;
    let peaks = detect_peaks(&values, cfg.threshold, min_sep);
    if peaks.is_empty() {
        return Err(SicError::EstimationFailed("no correlation peak above threshold".into()));
    }
    let refined = |i: usize| (i as f64 - half as f64) + parabolic_offset(&values, i);
    let floor = cfg.threshold * values[peaks[0]];
    let (first, second) = separate_arrivals(&cross, &model, scale, refined(peaks[0]), min_sep, floor);
    let mut peak_lags = vec![first];
    peak_lags.extend(second);
    for &i in &peaks[1..] {
        let l = refined(i);
        if peak_lags.iter().all(|p| (p - l).abs() >= min_sep.max(1) as f64) {
            peak_lags.push(l);
        }
    }
    let peak_lags_s: Vec<f64> = peak_lags.iter().map(|l| l / fs).collect();
    let rough_delay_s = second.map_or(0.0, |s| (first - s).abs() / fs);
    Ok(CorrelationResult {
        lags_s,
        values,
        peak_lags_s,
        rough_delay_s,
    })
}

/// Hann weight spanning the bins where the spectrum is within 30 dB of its
/// peak (first to last such bin).
fn band_taper(spec: &[Complex64]) -> Vec<f64> {
    let p: Vec<f64> = spec.iter().map(|c| c.norm_sqr()).collect();
    let max = p.iter().cloned().fold(0.0, f64::max);
    let mut w = vec![0.0; p.len()];
    if max <= 0.0 {
        return w;
    }
    let occupied: Vec<usize> = (0..p.len()).filter(|&k| p[k] >= 1e-3 * max).collect();
    let (lo, hi) = (occupied[0], occupied[occupied.len() - 1]);
    let span = (hi - lo + 2) as f64;
    for (k, v) in w.iter_mut().enumerate().take(hi + 1).skip(lo) {
        *v = (std::f64::consts::PI * (k - lo + 1) as f64 / span).sin().powi(2);
    }
    w
}

/// `|ifft(spec)| * scale` at circular lags `0..n`; the Cauchy-Schwarz bound
/// of 1 is enforced so `min()` only absorbs rounding.
fn magnitude(spec: &[Complex64], scale: f64) -> Vec<f64> {
    let mut r = spec.to_vec();
    dsp::ifft_in_place(&mut r);
    r.iter().map(|c| (c.norm() * scale).min(1.0)).collect()
}

/// Signed angular frequency of bin `k` in radians per sample.
fn bin_omega(k: usize, n: usize) -> f64 {
    let signed = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
    2.0 * std::f64::consts::PI * signed / n as f64
}

/// `cross` minus the least-squares single arrival at fractional lag `tau`
/// (samples).
fn remove_arrival(cross: &[Complex64], model: &[f64], tau: f64) -> Vec<Complex64> {
    let n = cross.len();
    let num: Complex64 = cross
        .iter()
        .enumerate()
        .map(|(k, r)| r * Complex64::from_polar(1.0, bin_omega(k, n) * tau))
        .sum();
    let den: f64 = model.iter().sum();
    let g = num / den;
    cross
        .iter()
        .zip(model)
        .enumerate()
        .map(|(k, (r, p))| r - g * *p * Complex64::from_polar(1.0, -bin_omega(k, n) * tau))
        .collect()
}

/// Strongest refined peak (signed samples) of `mag` whose circular distance
/// from `around` is inside (`near`) or outside (`!near`) `radius`.
fn best_peak(mag: &[f64], around: f64, radius: usize, near: bool) -> Option<(f64, f64)> {
    let n = mag.len();
    let mut best: Option<(usize, f64)> = None;
    for i in 0..n {
        let v = mag[i];
        if v < mag[(i + n - 1) % n] || v < mag[(i + 1) % n] {
            continue;
        }
        let d = (i as f64 - around).rem_euclid(n as f64);
        let d = d.min(n as f64 - d);
        if (d <= radius as f64) != near {
            continue;
        }
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, v)| {
        let signed = if i > n / 2 { i as f64 - n as f64 } else { i as f64 };
        (signed + parabolic_offset(mag, i), v)
    })
}

/// Successive cancellation of the two strongest arrivals: each lag is
/// re-estimated with the other arrival's modelled contribution removed, so
/// overlapping lobes no longer pull the peaks together. Returns the lag of
/// the strongest arrival and, when it clears `floor`, of the second one.
fn separate_arrivals(
    cross: &[Complex64],
    model: &[f64],
    scale: f64,
    start: f64,
    min_sep: usize,
    floor: f64,
) -> (f64, Option<f64>) {
    let radius = min_sep.max(1);
    let mut first = start;
    let mut second = None;
    for _ in 0..4 {
        let without_first = magnitude(&remove_arrival(cross, model, first), scale);
        match best_peak(&without_first, first, radius, false) {
            Some((lag, v)) if v >= floor => second = Some(lag),
            _ => return (first, None),
        }
        let lag2 = second.expect("set above");
        let without_second = magnitude(&remove_arrival(cross, model, lag2), scale);
        if let Some((lag, _)) = best_peak(&without_second, first, radius, true) {
            first = lag;
        }
    }
    (first, second)
}

/// Sub-sample peak position from a parabola through the peak and its
/// neighbours, in samples relative to `i`.
fn parabolic_offset(values: &[f64], i: usize) -> f64 {
    let n = values.len();
    let (a, b, c) = (values[(i + n - 1) % n], values[i], values[(i + 1) % n]);
    let den = a - 2.0 * b + c;
    if den.abs() < 1e-15 {
        0.0
    } else {
        (0.5 * (a - c) / den).clamp(-0.5, 0.5)
    }
}

/// Local maxima above `threshold * max`, strongest first, greedily thinned
/// so no two are closer than `min_sep` samples (circularly).
fn detect_peaks(values: &[f64], threshold: f64, min_sep: usize) -> Vec<usize> {
    let n = values.len();
    let max = values.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let floor = threshold * max;
    let mut cand: Vec<usize> = (0..n)
        .filter(|&i| {
            let v = values[i];
            v >= floor && v >= values[(i + n - 1) % n] && v >= values[(i + 1) % n]
        })
        .collect();
    cand.sort_by(|&x, &y| values[y].total_cmp(&values[x]).then(x.cmp(&y)));
    let mut kept: Vec<usize> = Vec::new();
    for i in cand {
        let far = kept.iter().all(|&k| {
            let d = i.abs_diff(k);
            d.min(n - d) >= min_sep.max(1)
        });
        if far {
            kept.push(i);
        }
    }
    kept
}

/// `sqrt(si_power / ref_power)` clamped to [0, 1].
pub fn amplitude_from_power(si_power: f64, ref_power_unattenuated: f64) -> Result<f64> {
    if !(si_power >= 0.0) || !si_power.is_finite() {
        return Err(SicError::InvalidInput(format!("SI power must be >= 0, got {si_power}")));
    }
    if !(ref_power_unattenuated > 0.0) || !ref_power_unattenuated.is_finite() {
        return Err(SicError::InvalidInput(format!(
            "reference power must be > 0, got {ref_power_unattenuated}"
        )));
    }
    Ok((si_power / ref_power_unattenuated).sqrt().clamp(0.0, 1.0))
}

/// One setting of every reference component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub delays_s: Vec<f64>,
    pub amplitudes: Vec<f64>,
}

impl Candidate {
    pub fn new(delays_s: Vec<f64>, amplitudes: Vec<f64>) -> Result<Self> {
        let c = Self {
            delays_s,
            amplitudes,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn single(delay_s: f64, amplitude: f64) -> Self {
        Self {
            delays_s: vec![delay_s],
            amplitudes: vec![amplitude],
        }
    }

    pub fn components(&self) -> usize {
        self.delays_s.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.delays_s.len() != self.amplitudes.len() || self.delays_s.is_empty() {
            return Err(SicError::InvalidInput(
                "candidate needs equal, non-empty delay and amplitude lists".into(),
            ));
        }
        if self.amplitudes.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(SicError::InvalidInput("candidate amplitudes must lie in [0, 1]".into()));
        }
        if self.delays_s.iter().any(|d| !d.is_finite()) {
            return Err(SicError::InvalidInput("candidate delays must be finite".into()));
        }
        Ok(())
    }
}

/// Single-component delay grid `start, start + step, ... <= stop`.
pub fn delay_grid(start_s: f64, stop_s: f64, step_s: f64, amplitude: f64) -> Vec<Candidate> {
    let count = ((stop_s - start_s) / step_s + 1e-6).floor() as usize + 1;
    (0..count)
        .map(|i| Candidate::single(start_s + i as f64 * step_s, amplitude))
        .collect()
}

/// Layout of one reference frame into scored and guard segments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentPlan {
    pub total_duration_s: f64,
    pub segments: usize,
    /// Unscored segments, half at each frame edge.
    pub guard_segments: usize,
    /// Fraction of each segment dropped at both ends before measuring.
    pub edge_discard: f64,
}

impl Default for SegmentPlan {
    fn default() -> Self {
        Self {
            total_duration_s: 4e-6,
            segments: 400,
            guard_segments: 8,
            edge_discard: 0.1,
        }
    }
}

impl SegmentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.segments == 0 || self.guard_segments >= self.segments {
            return Err(SicError::Config(format!(
                "need segments ({}) > guard_segments ({})",
                self.segments, self.guard_segments
            )));
        }
        if !(0.0..0.5).contains(&self.edge_discard) {
            return Err(SicError::Config("edge_discard must be in [0, 0.5)".into()));
        }
        Ok(())
    }

    pub fn usable(&self) -> usize {
        self.segments - self.guard_segments
    }

    /// Capture events needed to score `grid_len` candidates.
    pub fn captures_for(&self, grid_len: usize) -> usize {
        grid_len.div_ceil(self.usable())
    }

    /// Indices of the scored segments, in frame order.
    pub fn scored_segments(&self) -> Range<usize> {
        let lead = self.guard_segments / 2;
        lead..lead + self.usable()
    }

    /// Sample range of segment `u` in a frame of `len` samples.
    pub fn bounds(&self, u: usize, len: usize) -> Range<usize> {
        (u * len / self.segments)..((u + 1) * len / self.segments)
    }

    /// Measurement window of segment `u` after dropping the edges.
    pub fn measure_bounds(&self, u: usize, len: usize) -> Range<usize> {
        let r = self.bounds(u, len);
        let drop = ((r.len() as f64) * self.edge_discard).ceil() as usize;
        let drop = drop.min(r.len().saturating_sub(1) / 2);
        (r.start + drop)..(r.end - drop)
    }

    /// Candidate per segment for one batch: guard segments repeat their
    /// neighbour and unused scored slots repeat the last candidate.
    pub fn assign<'a>(&self, batch: &'a [Candidate]) -> Vec<&'a Candidate> {
        assert!(!batch.is_empty() && batch.len() <= self.usable());
        let scored = self.scored_segments();
        (0..self.segments)
            .map(|u| {
                let slot = u.clamp(scored.start, scored.end - 1) - scored.start;
                &batch[slot.min(batch.len() - 1)]
            })
            .collect()
    }
}

/// Injected front end: takes a reference frame, returns one captured IF frame.
pub trait ResidualEvaluator {
    fn submit(&mut self, reference: &RealSignal) -> Result<RealSignal>;
    /// Number of counted capture events so far.
    fn captures(&self) -> usize;
}

/// Renders reference frames from the unattenuated source waveforms.
#[derive(Debug, Clone)]
pub struct ReferenceRenderer {
    pub sources: Vec<RealSignal>,
    pub interpolator: SincInterpolator,
    /// Delays are quantized to this step, mirroring the upsampled DSP rate
    /// (1 ps at 1000 GS/s, i.e. 0.5 ps worst-case error). Zero disables
    /// quantization.
    pub delay_step_s: f64,
}

impl ReferenceRenderer {
    pub fn new(sources: Vec<RealSignal>) -> Result<Self> {
        if sources.is_empty() {
            return Err(SicError::InvalidInput("no reference sources".into()));
        }
        let fs = sources[0].sample_rate_hz;
        let n = sources[0].len();
        for s in &sources {
            check_same_rate(fs, s.sample_rate_hz)?;
            if s.len() != n {
                return Err(SicError::InvalidInput("reference sources differ in length".into()));
            }
        }
        Ok(Self {
            sources,
            interpolator: SincInterpolator::default(),
            delay_step_s: 1e-12,
        })
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sources[0].sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.sources[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources[0].is_empty()
    }

    pub fn quantize(&self, delay_s: f64) -> f64 {
        if self.delay_step_s > 0.0 {
            (delay_s / self.delay_step_s).round() * self.delay_step_s
        } else {
            delay_s
        }
    }

    fn check(&self, c: &Candidate) -> Result<()> {
        c.validate()?;
        if c.components() != self.sources.len() {
            return Err(SicError::InvalidInput(format!(
                "candidate has {} components, renderer has {} sources",
                c.components(),
                self.sources.len()
            )));
        }
        Ok(())
    }

    fn accumulate(&self, c: &Candidate, range: Range<usize>, out: &mut [f64]) {
        let fs = self.sample_rate_hz();
        for ((src, &d), &a) in self.sources.iter().zip(&c.delays_s).zip(&c.amplitudes) {
            self.interpolator.accumulate_delayed(
                &src.samples,
                self.quantize(d) * fs,
                a,
                range.clone(),
                out,
            );
        }
    }

    /// Whole frame with a single candidate.
    pub fn render(&self, c: &Candidate) -> Result<RealSignal> {
        self.check(c)?;
        let mut out = vec![0.0; self.len()];
        self.accumulate(c, 0..self.len(), &mut out);
        RealSignal::new(self.sample_rate_hz(), out)
    }

    /// One candidate per segment.
    pub fn render_segmented(&self, plan: &SegmentPlan, per_segment: &[&Candidate]) -> Result<RealSignal> {
        plan.validate()?;
        if per_segment.len() != plan.segments {
            return Err(SicError::InvalidInput("one candidate per segment required".into()));
        }
        let n = self.len();
        let mut out = vec![0.0; n];
        for (u, c) in per_segment.iter().enumerate() {
            self.check(c)?;
            self.accumulate(c, plan.bounds(u, n), &mut out);
        }
        RealSignal::new(self.sample_rate_hz(), out)
    }
}

/// Per-segment mean-square power of a captured frame.
pub fn segment_powers(plan: &SegmentPlan, capture: &RealSignal) -> Vec<f64> {
    let n = capture.len();
    (0..plan.segments)
        .map(|u| dsp::mean_square(&capture.samples[plan.measure_bounds(u, n)]))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: Candidate,
    pub best_residual: f64,
    /// Residual (after / before power ratio) for every grid entry, in grid order.
    pub residuals: Vec<f64>,
    /// Capture events used, excluding the baseline.
    pub captures: usize,
}

/// Baseline capture with the reference muted; its per-segment powers
/// normalize the residuals. Not counted in the search budget.
pub fn baseline_powers<E: ResidualEvaluator + ?Sized>(
    evaluator: &mut E,
    renderer: &ReferenceRenderer,
    plan: &SegmentPlan,
) -> Result<Vec<f64>> {
    let silent = RealSignal::zeros(renderer.sample_rate_hz(), renderer.len());
    let cap = evaluator.submit(&silent)?;
    Ok(segment_powers(plan, &cap))
}

/// Scores a batch of at most `plan.usable()` candidates in one capture.
pub fn score_batch<E: ResidualEvaluator + ?Sized>(
    evaluator: &mut E,
    renderer: &ReferenceRenderer,
    plan: &SegmentPlan,
    baseline: &[f64],
    batch: &[Candidate],
) -> Result<Vec<f64>> {
    let frame = renderer.render_segmented(plan, &plan.assign(batch))?;
    let cap = evaluator.submit(&frame)?;
    let powers = segment_powers(plan, &cap);
    let start = plan.scored_segments().start;
    Ok((0..batch.len())
        .map(|i| {
            let u = start + i;
            if baseline[u] > 0.0 {
                powers[u] / baseline[u]
            } else {
                f64::INFINITY
            }
        })
        .collect())
}

/// Exhaustive segmented search over `grid`.
pub fn segmented_search<E: ResidualEvaluator + ?Sized>(
    evaluator: &mut E,
    renderer: &ReferenceRenderer,
    grid: &[Candidate],
    plan: &SegmentPlan,
) -> Result<SearchOutcome> {
    plan.validate()?;
    if grid.is_empty() {
        return Err(SicError::InvalidInput("empty search grid".into()));
    }
    let baseline = baseline_powers(evaluator, renderer, plan)?;
    let before = evaluator.captures();
    let mut residuals = Vec::with_capacity(grid.len());
    for batch in grid.chunks(plan.usable()) {
        residuals.extend(score_batch(evaluator, renderer, plan, &baseline, batch)?);
    }
    let (best_i, best_residual) = residuals
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &r)| if r < acc.1 { (i, r) } else { acc });
    Ok(SearchOutcome {
        best: grid[best_i].clone(),
        best_residual,
        residuals,
        captures: evaluator.captures() - before,
    })
}

/// Vertex of the least-squares parabola through `(xs[i], ys[i])` for `i`
/// within `half_window` of `centre`. `None` when the window has fewer than
/// three points, the fit opens downwards, or the vertex leaves the window.
pub fn parabolic_vertex(xs: &[f64], ys: &[f64], centre: usize, half_window: usize) -> Option<f64> {
    if xs.len() != ys.len() || centre >= xs.len() {
        return None;
    }
    let lo = centre.saturating_sub(half_window);
    let hi = (centre + half_window + 1).min(xs.len());
    if hi - lo < 3 {
        return None;
    }
    let x0 = xs[centre];
    let mut s = [0.0f64; 5];
    let mut t = [0.0f64; 3];
    for i in lo..hi {
        let x = xs[i] - x0;
        let y = ys[i];
        if !y.is_finite() {
            return None;
        }
        let mut p = 1.0;
        for (k, sk) in s.iter_mut().enumerate() {
            *sk += p;
            if k < 3 {
                t[k] += p * y;
            }
            p *= x;
        }
    }
    let m = nalgebra::Matrix3::new(s[4], s[3], s[2], s[3], s[2], s[1], s[2], s[1], s[0]);
    let v = m.lu().solve(&nalgebra::Vector3::new(t[2], t[1], t[0]))?;
    let (a, b) = (v[0], v[1]);
    if !(a > 0.0) {
        return None;
    }
    let vertex = x0 - b / (2.0 * a);
    (vertex >= xs[lo] && vertex <= xs[hi - 1]).then_some(vertex)
}
