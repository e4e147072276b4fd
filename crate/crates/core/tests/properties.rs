//! Property tests for the invariants the simulator relies on.

use num_complex::Complex64;
use proptest::prelude::*;

use sic_core::delay::{amplitude_from_power, Candidate, SegmentPlan};
use sic_core::dsp;
use sic_core::ga::{ga_run, FnFitness, GaConfig, SearchSpace};
use sic_core::ls::{build_data_matrix, ls_fit, DataMatrixSpec, LsOptions};
use sic_core::metrics::{mismatch_depth_curve, DepthReport};
use sic_core::photonic::{ddmzm_full, Bias, ModulatorConfig};
use sic_core::signal::{fractional_delay, scale, RealSignal};

const FS: f64 = 64e9;

/// Periodic band-limited signal: random complex bins below 40% of Nyquist.
fn band_limited(n: usize, seed: u64) -> RealSignal {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut spec = vec![Complex64::new(0.0, 0.0); n];
    for k in 1..(n * 2 / 10) {
        let v = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        spec[k] = v;
        spec[n - k] = v.conj();
    }
    RealSignal::new(FS, dsp::ifft_real(spec)).unwrap()
}

fn max_abs_diff(a: &RealSignal, b: &RealSignal) -> f64 {
    a.samples.iter().zip(&b.samples).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn noise(n: usize, seed: u64) -> RealSignal {
    RealSignal::new(10e9, sic_core::channel::white_noise(n, 1.0, seed).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn delays_compose(seed in 0u64..1000, d1 in -50.0f64..50.0, d2 in -50.0f64..50.0) {
        let x = band_limited(512, seed);
        let (d1, d2) = (d1 * 1e-12, d2 * 1e-12);
        let two = fractional_delay(&fractional_delay(&x, d1).unwrap(), d2).unwrap();
        let one = fractional_delay(&x, d1 + d2).unwrap();
        prop_assert!(max_abs_diff(&two, &one) < 1e-9 * x.rms().max(1e-12));
    }

    #[test]
    fn delay_is_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0, d in -200.0f64..200.0) {
        let x = band_limited(256, seed);
        let y = band_limited(256, seed + 7);
        let d = d * 1e-12;
        let lhs = fractional_delay(&scale(&x, a).add(&scale(&y, b)).unwrap(), d).unwrap();
        let rhs = scale(&fractional_delay(&x, d).unwrap(), a).add(&scale(&fractional_delay(&y, d).unwrap(), b)).unwrap();
        prop_assert!(max_abs_diff(&lhs, &rhs) < 1e-9 * (a.abs() + b.abs() + 1.0));
    }

    #[test]
    fn delay_preserves_power_of_band_limited_frames(seed in 0u64..1000, d in -1000.0f64..1000.0) {
        let x = band_limited(400, seed);
        let y = fractional_delay(&x, d * 1e-12).unwrap();
        prop_assert!((y.power() / x.power() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn parseval_holds(v in prop::collection::vec(-10.0f64..10.0, 1..300)) {
        let time: f64 = v.iter().map(|x| x * x).sum();
        let freq: f64 = dsp::fft_real(&v).iter().map(|c| c.norm_sqr()).sum::<f64>() / v.len() as f64;
        prop_assert!((time - freq).abs() <= 1e-9 * time.max(1e-12));
    }

    #[test]
    fn depth_is_invariant_to_common_scale(before in 1e-9f64..1e3, ratio in 1e-6f64..1.0, c in 1e-3f64..1e3) {
        let a = DepthReport::from_powers(before, before * ratio).unwrap();
        let b = DepthReport::from_powers(before * c, before * ratio * c).unwrap();
        prop_assert!((a.depth_db - b.depth_db).abs() < 1e-9);
        prop_assert!((a.depth_db + 10.0 * ratio.log10()).abs() < 1e-9);
    }

    #[test]
    fn amplitude_scaling_of_residual_shifts_depth(before in 1e-6f64..1e3, after in 1e-6f64..1.0, g in 0.01f64..10.0) {
        let a = DepthReport::from_powers(before, after * before).unwrap();
        let b = DepthReport::from_powers(before, after * before * g * g).unwrap();
        prop_assert!((a.depth_db - b.depth_db - 20.0 * g.log10()).abs() < 1e-9);
    }

    #[test]
    fn mismatch_curve_is_even_in_delay(f in 1e9f64..30e9, dt in 0.1f64..40.0, rho in 0.3f64..1.0) {
        let v = mismatch_depth_curve(f, &[dt * 1e-12, -dt * 1e-12], rho).unwrap();
        prop_assert!((v[0] - v[1]).abs() < 1e-9);
    }

    #[test]
    fn identical_drives_null_the_carrier(seed in 0u64..1000, amp in 0.01f64..2.0) {
        let a = scale(&band_limited(128, seed), amp);
        let cfg = ModulatorConfig { bias_upper: Bias::Mitp, ..ModulatorConfig::default() };
        let env = ddmzm_full(&a, &a, &cfg).unwrap();
        prop_assert!(env.samples.iter().all(|e| e.norm() < 1e-12));
    }

    #[test]
    fn amplitude_estimate_is_bounded(si in 0.0f64..1e3, re in 1e-9f64..1e3) {
        let a = amplitude_from_power(si, re).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn segments_partition_the_frame(segments in 2usize..500, guard in 0usize..8, len in 1000usize..50_000) {
        prop_assume!(guard < segments);
        let plan = SegmentPlan { segments, guard_segments: guard, ..SegmentPlan::default() };
        let mut next = 0;
        for u in 0..segments {
            let r = plan.bounds(u, len);
            prop_assert_eq!(r.start, next);
            let m = plan.measure_bounds(u, len);
            prop_assert!(m.start >= r.start && m.end <= r.end);
            next = r.end;
        }
        prop_assert_eq!(next, len);
        prop_assert_eq!(plan.scored_segments().len(), segments - guard);
    }

    #[test]
    fn ls_residual_is_orthogonal_to_data_columns(seed in 0u64..500, order in 0usize..12) {
        let x1 = noise(700, seed);
        let x2 = noise(700, seed + 1000);
        let y = noise(700, seed + 2000);
        let spec = DataMatrixSpec { n_samples: 600, start_index: order, order };
        let fit = ls_fit(&y, &[x1.clone(), x2.clone()], &spec, LsOptions::default()).unwrap();
        let psi = build_data_matrix(&[x1, x2], &spec).unwrap();
        let h = nalgebra::DVector::from_column_slice(&fit.model.coefficients);
        let yv = nalgebra::DVector::from_column_slice(&y.samples[order..order + 600]);
        let r = &yv - &psi * h;
        for c in 0..psi.ncols() {
            let col = psi.column(c);
            prop_assert!(col.dot(&r).abs() < 1e-8 * col.norm() * r.norm().max(1e-12));
        }
    }
}

fn bowl_space() -> SearchSpace {
    SearchSpace {
        delay_ranges_s: vec![(4700e-12, 5100e-12), (3800e-12, 4200e-12)],
        amplitude_ranges: vec![(0.24, 0.74), (0.24, 0.74)],
        delay_resolution_s: 1e-12,
        amplitude_resolution: 0.01,
    }
}

fn bowl(opt: [f64; 4]) -> impl FnMut(&Candidate) -> f64 {
    move |c: &Candidate| {
        let d0 = (c.delays_s[0] - opt[0]) / 1e-12;
        let d1 = (c.delays_s[1] - opt[1]) / 1e-12;
        let a0 = (c.amplitudes[0] - opt[2]) / 0.01;
        let a1 = (c.amplitudes[1] - opt[3]) / 0.01;
        -(d0 * d0 + d1 * d1 + a0 * a0 + a1 * a1)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn ga_best_never_regresses_and_is_reproducible(
        seed in 0u64..10_000,
        o0 in 4750.0f64..5050.0,
        o1 in 3850.0f64..4150.0,
        a0 in 0.3f64..0.7,
        a1 in 0.3f64..0.7,
    ) {
        let opt = [o0 * 1e-12, o1 * 1e-12, a0, a1];
        let cfg = GaConfig { seed, population: 40, iterations: 8, ..GaConfig::default() };
        let space = bowl_space();
        let first = ga_run(&mut FnFitness::new(bowl(opt)), &space, &cfg).unwrap();
        let depths = first.history.best_depths();
        prop_assert!(depths.windows(2).all(|w| w[1] >= w[0]));
        // elitism: the previous best is still in the next population
        for w in first.history.iterations.windows(2) {
            let prev = (&w[0].best_delays_ps, &w[0].best_amplitudes);
            prop_assert!(w[1].population.iter().any(|m| (&m.delays_ps, &m.amplitudes) == prev));
        }
        let again = ga_run(&mut FnFitness::new(bowl(opt)), &space, &cfg).unwrap();
        prop_assert_eq!(first.history, again.history);
        prop_assert_eq!(first.evaluations, cfg.iterations);
    }
}
