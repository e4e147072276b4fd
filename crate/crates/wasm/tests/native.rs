//! The demo operations exercised natively.

use sic_wasm::{ga_synthetic, mismatch_curve, mismatch_curve_js, xcorr_demo};

#[test]
fn mismatch_curve_hits_the_anchor_and_falls_with_mismatch() {
    let c = mismatch_curve(10.0, 1.0, 50.0, 101).unwrap();
    assert_eq!(c.delta_tau_ps.len(), 100);
    assert!((c.delta_tau_ps[0] - 0.5).abs() < 1e-12);
    assert!((c.depth_db[0] - 30.1).abs() < 0.1, "{}", c.depth_db[0]);
    assert!(c.depth_db.windows(2).take(40).all(|w| w[1] < w[0]));
}

#[test]
fn mismatch_curve_rejects_degenerate_grids() {
    assert!(mismatch_curve(10.0, 1.0, 50.0, 1).is_err());
    assert!(mismatch_curve(10.0, 1.0, 0.0, 10).is_err());
}

#[test]
fn json_wrapper_emits_both_series() {
    let text = mismatch_curve_js(9.0, 0.9, 20.0, 5).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["delta_tau_ps"].as_array().unwrap().len(), 5);
    assert_eq!(v["depth_db"].as_array().unwrap().len(), 5);
}

#[test]
fn xcorr_demo_finds_the_path_delay() {
    let d = xcorr_demo(1.0, 1.0, 4768.0, 1.0).unwrap();
    assert!((d.estimated_delay_ps - 4768.0).abs() < 100.0, "{}", d.estimated_delay_ps);
    assert_eq!(d.lag_ns.len(), d.correlation.len());
    assert!(!d.lag_ns.is_empty());
}

#[test]
fn ga_demo_is_monotone_and_reproducible() {
    let a = ga_synthetic(7, 60, 11, 0.1).unwrap();
    let b = ga_synthetic(7, 60, 11, 0.1).unwrap();
    assert_eq!(a.best, b.best);
    assert_eq!(a.best_score_db.len(), 11);
    assert!(a.best_score_db.windows(2).all(|w| w[1] >= w[0]));
}
