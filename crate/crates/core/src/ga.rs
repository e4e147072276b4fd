//! Three-stage genetic search over reference delays and amplitudes.
//!
//! Stage 1 derives search ranges from cross-correlation and power ratios,
//! Stage 2 runs the GA over those ranges, and Stage 3 reruns it over a
//! narrowed box at finer delay resolution. Fitness is SIC depth in dB
//! (higher is better), evaluated one population per call so a segmented
//! capture can score the whole population at once.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::delay::{
    baseline_powers, score_batch, Candidate, CorrelationResult, ReferenceRenderer,
    ResidualEvaluator, SegmentPlan,
};
use crate::error::{Result, SicError};

/// Box of quantized genes: delays first, then amplitudes, per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpace {
    pub delay_ranges_s: Vec<(f64, f64)>,
    pub amplitude_ranges: Vec<(f64, f64)>,
    pub delay_resolution_s: f64,
    pub amplitude_resolution: f64,
}

impl SearchSpace {
    pub fn components(&self) -> usize {
        self.delay_ranges_s.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.delay_ranges_s.is_empty() || self.delay_ranges_s.len() != self.amplitude_ranges.len() {
            return Err(SicError::Config(
                "search space needs one delay and one amplitude range per component".into(),
            ));
        }
        if !(self.delay_resolution_s > 0.0) || !(self.amplitude_resolution > 0.0) {
            return Err(SicError::Config("search resolutions must be positive".into()));
        }
        for &(lo, hi) in self.delay_ranges_s.iter().chain(&self.amplitude_ranges) {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(SicError::Config(format!("empty or invalid range [{lo}, {hi}]")));
            }
        }
        for &(lo, hi) in &self.amplitude_ranges {
            if lo < 0.0 || hi > 1.0 + 1e-12 {
                return Err(SicError::Config(format!(
                    "amplitude range [{lo}, {hi}] must lie within [0, 1]"
                )));
            }
        }
        Ok(())
    }

    fn gene_range(&self, g: usize) -> ((f64, f64), f64) {
        let c = self.components();
        if g < c {
            (self.delay_ranges_s[g], self.delay_resolution_s)
        } else {
            (self.amplitude_ranges[g - c], self.amplitude_resolution)
        }
    }

    /// Number of quantized levels of gene `g`.
    pub fn levels(&self, g: usize) -> usize {
        let ((lo, hi), res) = self.gene_range(g);
        ((hi - lo) / res + 1e-9).floor() as usize + 1
    }

    /// Value of level `k` of gene `g`.
    pub fn level_value(&self, g: usize, k: usize) -> f64 {
        let ((lo, _), res) = self.gene_range(g);
        lo + k as f64 * res
    }

    /// Nearest level index for a value.
    pub fn level_of(&self, g: usize, v: f64) -> usize {
        let ((lo, _), res) = self.gene_range(g);
        (((v - lo) / res).round().max(0.0) as usize).min(self.levels(g) - 1)
    }

    pub fn genes(&self) -> usize {
        2 * self.components()
    }

    fn decode(&self, levels: &[usize]) -> Candidate {
        let c = self.components();
        let vals: Vec<f64> = levels.iter().enumerate().map(|(g, &k)| self.level_value(g, k)).collect();
        Candidate {
            delays_s: vals[..c].to_vec(),
            amplitudes: vals[c..].iter().map(|a| a.clamp(0.0, 1.0)).collect(),
        }
    }

    fn encode(&self, c: &Candidate) -> Vec<usize> {
        c.delays_s
            .iter()
            .chain(&c.amplitudes)
            .enumerate()
            .map(|(g, &v)| self.level_of(g, v))
            .collect()
    }
}

fn snap(v: f64, res: f64) -> f64 {
    (v / res).round() * res
}

/// Stage 1: delay range = rough delay +- 200 ps per component; amplitude
/// range = pooled power-ratio estimate +- 0.25, clamped to [0, 1].
pub fn stage1_ranges(
    xcorr_results: &[CorrelationResult],
    si_total_power: f64,
    ref_power: f64,
) -> Result<SearchSpace> {
    if xcorr_results.is_empty() {
        return Err(SicError::InvalidInput("need one correlation result per component".into()));
    }
    if xcorr_results.iter().any(|r| r.peak_lags_s.is_empty()) {
        return Err(SicError::EstimationFailed("correlation result has no peaks".into()));
    }
    let rough: Vec<f64> = xcorr_results.iter().map(|r| r.rough_delay_s).collect();
    let amp = crate::delay::amplitude_from_power(si_total_power, ref_power)?;
    stage1_from_estimates(&rough, amp)
}

/// Stage 1 from already-extracted rough delays and a pooled amplitude.
pub fn stage1_from_estimates(rough_delays_s: &[f64], amplitude: f64) -> Result<SearchSpace> {
    let delay_res = 1e-12;
    let amp_res = 0.01;
    let delay_ranges_s = rough_delays_s
        .iter()
        .map(|&d| (snap(d - 200e-12, delay_res), snap(d + 200e-12, delay_res)))
        .collect();
    let lo = snap((amplitude - 0.25).max(0.0), amp_res);
    let hi = snap((amplitude + 0.25).min(1.0), amp_res);
    let space = SearchSpace {
        delay_ranges_s,
        amplitude_ranges: vec![(lo, hi); rough_delays_s.len()],
        delay_resolution_s: delay_res,
        amplitude_resolution: amp_res,
    };
    space.validate()?;
    Ok(space)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub population: usize,
    pub mutation_rate: f64,
    pub iterations: usize,
    pub elite_fraction: f64,
    pub seed: u64,
    /// Stop early once the best depth reaches this many dB.
    pub target_depth_db: Option<f64>,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 152,
            mutation_rate: 0.1,
            iterations: 11,
            elite_fraction: 0.5,
            seed: 2024,
            target_depth_db: None,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(SicError::Config("population must be > 1".into()));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(SicError::Config("mutation_rate must be in [0, 1]".into()));
        }
        if self.iterations == 0 {
            return Err(SicError::Config("iterations must be >= 1".into()));
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction <= 1.0) {
            return Err(SicError::Config("elite_fraction must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Scores a whole population; higher is better (SIC depth in dB).
pub trait BatchFitness {
    fn evaluate(&mut self, population: &[Candidate]) -> Result<Vec<f64>>;
}

/// Fitness from segmented captures: one candidate per segment, depth from
/// the per-segment residual ratio against a muted-reference baseline.
pub struct SegmentedFitness<'a, E: ResidualEvaluator + ?Sized> {
    pub evaluator: &'a mut E,
    pub renderer: &'a ReferenceRenderer,
    pub plan: SegmentPlan,
    baseline: Option<Vec<f64>>,
}

impl<'a, E: ResidualEvaluator + ?Sized> SegmentedFitness<'a, E> {
    pub fn new(evaluator: &'a mut E, renderer: &'a ReferenceRenderer, plan: SegmentPlan) -> Result<Self> {
        plan.validate()?;
        Ok(Self {
            evaluator,
            renderer,
            plan,
            baseline: None,
        })
    }

    /// Reuses per-segment powers of an earlier reference-muted capture.
    pub fn with_baseline(
        evaluator: &'a mut E,
        renderer: &'a ReferenceRenderer,
        plan: SegmentPlan,
        baseline: Vec<f64>,
    ) -> Result<Self> {
        plan.validate()?;
        if baseline.len() != plan.segments {
            return Err(SicError::InvalidInput("baseline must have one power per segment".into()));
        }
        Ok(Self {
            evaluator,
            renderer,
            plan,
            baseline: Some(baseline),
        })
    }
}

impl<E: ResidualEvaluator + ?Sized> BatchFitness for SegmentedFitness<'_, E> {
    fn evaluate(&mut self, population: &[Candidate]) -> Result<Vec<f64>> {
        if self.baseline.is_none() {
            self.baseline = Some(baseline_powers(self.evaluator, self.renderer, &self.plan)?);
        }
        let baseline = self.baseline.as_ref().expect("baseline set");
        let mut out = Vec::with_capacity(population.len());
        for batch in population.chunks(self.plan.usable()) {
            let r = score_batch(self.evaluator, self.renderer, &self.plan, baseline, batch)?;
            out.extend(r.into_iter().map(|ratio| -10.0 * ratio.max(1e-300).log10()));
        }
        Ok(out)
    }
}

/// Fitness given by a plain function, for tests and demos.
pub struct FnFitness<F: FnMut(&Candidate) -> f64> {
    pub f: F,
    pub calls: usize,
}

impl<F: FnMut(&Candidate) -> f64> FnFitness<F> {
    pub fn new(f: F) -> Self {
        Self { f, calls: 0 }
    }
}

impl<F: FnMut(&Candidate) -> f64> BatchFitness for FnFitness<F> {
    fn evaluate(&mut self, population: &[Candidate]) -> Result<Vec<f64>> {
        self.calls += 1;
        Ok(population.iter().map(|c| (self.f)(c)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub delays_ps: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub depth_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaIteration {
    pub iteration: usize,
    pub best_delays_ps: Vec<f64>,
    pub best_amplitudes: Vec<f64>,
    pub depth_db: f64,
    pub population: Vec<Member>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GaHistory {
    pub iterations: Vec<GaIteration>,
}

impl GaHistory {
    pub fn best_depths(&self) -> Vec<f64> {
        self.iterations.iter().map(|i| i.depth_db).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn best(&self) -> Option<Candidate> {
        self.iterations.last().map(|it| Candidate {
            delays_s: it.best_delays_ps.iter().map(|d| d * 1e-12).collect(),
            amplitudes: it.best_amplitudes.clone(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct GaOutcome {
    pub best: Candidate,
    pub best_depth_db: f64,
    pub history: GaHistory,
    /// Fitness calls made (one per iteration).
    pub evaluations: usize,
}

fn to_member(c: &Candidate, depth_db: f64) -> Member {
    Member {
        delays_ps: c.delays_s.iter().map(|d| (d * 1e12 * 1e6).round() / 1e6).collect(),
        amplitudes: c.amplitudes.iter().map(|a| (a * 1e9).round() / 1e9).collect(),
        depth_db,
    }
}

fn record(iteration: usize, pop: &[(Vec<usize>, f64)], space: &SearchSpace) -> GaIteration {
    let best = space.decode(&pop[0].0);
    let m = to_member(&best, pop[0].1);
    GaIteration {
        iteration,
        best_delays_ps: m.delays_ps,
        best_amplitudes: m.amplitudes,
        depth_db: pop[0].1,
        population: pop.iter().map(|(g, f)| to_member(&space.decode(g), *f)).collect(),
    }
}

/// Stable descending sort by fitness; NaN ranks last.
fn rank(pop: &mut [(Vec<usize>, f64)]) {
    pop.sort_by(|a, b| {
        let fa = if a.1.is_nan() { f64::NEG_INFINITY } else { a.1 };
        let fb = if b.1.is_nan() { f64::NEG_INFINITY } else { b.1 };
        fb.total_cmp(&fa)
    });
}

/// Runs the GA. Iteration 1 evaluates a uniform random population; every
/// later iteration breeds and evaluates one offspring population and keeps
/// the best `population` of parents and offspring.
pub fn ga_run<F: BatchFitness + ?Sized>(
    fitness: &mut F,
    space: &SearchSpace,
    cfg: &GaConfig,
) -> Result<GaOutcome> {
    ga_run_seeded(fitness, space, cfg, &[])
}

/// As [`ga_run`], with the first individuals of the initial population
/// replaced by `seeds` (snapped to the space). The random draws are the same
/// as an unseeded run, so only the replaced slots differ.
pub fn ga_run_seeded<F: BatchFitness + ?Sized>(
    fitness: &mut F,
    space: &SearchSpace,
    cfg: &GaConfig,
    seeds: &[Candidate],
) -> Result<GaOutcome> {
    space.validate()?;
    cfg.validate()?;
    if seeds.len() > cfg.population {
        return Err(SicError::Config(format!(
            "{} seeds for a population of {}",
            seeds.len(),
            cfg.population
        )));
    }
    if let Some(c) = seeds.iter().find(|c| c.components() != space.components()) {
        return Err(SicError::InvalidInput(format!(
            "seed has {} components, space has {}",
            c.components(),
            space.components()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let genes = space.genes();
    let levels: Vec<usize> = (0..genes).map(|g| space.levels(g)).collect();

    let evaluate = |fitness: &mut F, pop: &[Vec<usize>]| -> Result<Vec<f64>> {
        let cands: Vec<Candidate> = pop.iter().map(|g| space.decode(g)).collect();
        let f = fitness.evaluate(&cands)?;
        if f.len() != cands.len() {
            return Err(SicError::Evaluator(format!(
                "fitness returned {} values for {} candidates",
                f.len(),
                cands.len()
            )));
        }
        Ok(f)
    };

    let mut init: Vec<Vec<usize>> = (0..cfg.population)
        .map(|_| levels.iter().map(|&l| rng.random_range(0..l)).collect())
        .collect();
    for (slot, c) in init.iter_mut().zip(seeds) {
        *slot = space.encode(c);
    }
    let f = evaluate(fitness, &init)?;
    let mut pop: Vec<(Vec<usize>, f64)> = init.into_iter().zip(f).collect();
    rank(&mut pop);
    let mut history = GaHistory::default();
    history.iterations.push(record(1, &pop, space));
    let mut evaluations = 1;

    let elite = ((cfg.population as f64 * cfg.elite_fraction).ceil() as usize).clamp(1, cfg.population);
    for it in 2..=cfg.iterations {
        if let Some(t) = cfg.target_depth_db {
            if pop[0].1 >= t {
                break;
            }
        }
        let offspring: Vec<Vec<usize>> = (0..cfg.population)
            .map(|_| {
                let a = if rng.random_bool(0.5) { 0 } else { rng.random_range(0..elite) };
                let b = rng.random_range(0..elite);
                (0..genes)
                    .map(|g| {
                        let mut v = if rng.random_bool(0.5) { pop[a].0[g] } else { pop[b].0[g] };
                        if rng.random::<f64>() < cfg.mutation_rate {
                            v = rng.random_range(0..levels[g]);
                        }
                        v
                    })
                    .collect()
            })
            .collect();
        let f = evaluate(fitness, &offspring)?;
        evaluations += 1;
        pop.extend(offspring.into_iter().zip(f));
        rank(&mut pop);
        pop.truncate(cfg.population);
        history.iterations.push(record(it, &pop, space));
    }
    Ok(GaOutcome {
        best: space.decode(&pop[0].0),
        best_depth_db: pop[0].1,
        history,
        evaluations,
    })
}

/// Stage 3: box centred on the converged best with half the widths, delay
/// resolution halved, amplitude resolution kept; amplitudes clamped to [0, 1].
pub fn stage3_refine(space: &SearchSpace, converged: &GaHistory) -> Result<SearchSpace> {
    let best = converged
        .best()
        .ok_or_else(|| SicError::InvalidInput("empty GA history".into()))?;
    if best.components() != space.components() {
        return Err(SicError::InvalidInput("history does not match the search space".into()));
    }
    let delay_resolution_s = space.delay_resolution_s / 2.0;
    let amp_res = space.amplitude_resolution;
    let delay_ranges_s = space
        .delay_ranges_s
        .iter()
        .zip(&best.delays_s)
        .map(|(&(lo, hi), &c)| {
            let half = (hi - lo) / 4.0;
            (snap(c - half, delay_resolution_s), snap(c + half, delay_resolution_s))
        })
        .collect();
    let amplitude_ranges = space
        .amplitude_ranges
        .iter()
        .zip(&best.amplitudes)
        .map(|(&(lo, hi), &c)| {
            let half = (hi - lo) / 4.0;
            let (mut l, mut h) = (c - half, c + half);
            if l < 0.0 {
                h -= l;
                l = 0.0;
            }
            if h > 1.0 {
                l -= h - 1.0;
                h = 1.0;
            }
            (snap(l.max(0.0), amp_res), snap(h, amp_res))
        })
        .collect();
    let out = SearchSpace {
        delay_ranges_s,
        amplitude_ranges,
        delay_resolution_s,
        amplitude_resolution: amp_res,
    };
    out.validate()?;
    Ok(out)
}

/// Re-expresses a candidate on a space's grid (used to seed refinements).
pub fn quantize(space: &SearchSpace, c: &Candidate) -> Candidate {
    space.decode(&space.encode(c))
}
