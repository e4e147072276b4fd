//! Built-in scenarios, one per reproduced experiment.

use sic_core::channel::{FiberSpec, PathSet};
use sic_core::ga::stage1_from_estimates;
use sic_core::pipeline::{tap_for, GaParams, LinkConfig, LsParams, SegmentedParams, SoiParams, TwoPathParams};
use sic_core::signal::OfdmConfig;

use crate::scenario::{Experiment, Scenario, XcorrSetting};

/// Preset names and one-line descriptions, in listing order.
pub const PRESETS: &[(&str, &str)] = &[
    ("mismatch-sweep", "closed-form and simulated depth vs delay mismatch for several carriers and baud rates"),
    ("single-path-segmented", "one direct path, 400-segment delay search over 4700-5099 ps"),
    ("two-path-fixed", "two direct paths located one at a time and cancelled jointly"),
    ("ga-two-path", "two direct paths, genetic search stages 2 and 3 at 1 Gbaud"),
    ("ga-500mbaud", "two direct paths, genetic search at 500 Mbaud with ranges from cross-correlation"),
    ("ls-direct", "LS reference construction for two direct paths without multipath"),
    ("ls-multipath", "LS reference construction for two antennas with three multipaths each"),
    ("ls-with-soi", "LS multipath cancellation with a QPSK signal of interest at -18.4 dB SIR"),
    ("sir-sweep", "LS multipath cancellation at SIR -8.5, -12.3, -15.4 and -18.4 dB"),
    ("freq-tunability", "LS multipath cancellation with the carrier and LO moved together"),
    ("fiber-remoting", "single-path segmented search without and with 25.2 km of fiber"),
    ("xcorr-resolution", "cross-correlation rough delay across IF centres and baud rates"),
    ("zero-padding", "segmented search on zero-padded OFDM for several padding fractions"),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

fn scenario(name: &str, link: LinkConfig, ofdm: OfdmConfig, experiment: Experiment) -> Scenario {
    let description = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, d)| d.to_string())
        .unwrap_or_default();
    Scenario {
        name: name.to_string(),
        description,
        seed: None,
        link,
        ofdm,
        experiment,
    }
}

fn ps(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x * 1e-12).collect()
}

fn ghz(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x * 1e9).collect()
}

fn fixed_stage1() -> GaParams {
    GaParams {
        stage1_override: Some(stage1_from_estimates(&[4.9e-9, 4.0e-9], 0.49).expect("valid stage-1 estimates")),
        ..GaParams::default()
    }
}

/// Looks a preset up by name.
pub fn preset(name: &str) -> Option<Scenario> {
    let link = LinkConfig::default();
    let ofdm = OfdmConfig::default();
    let s = match name {
        "mismatch-sweep" => scenario(
            name,
            link,
            ofdm,
            Experiment::MismatchSweep {
                carriers_hz: ghz(&[6.0, 8.0, 10.0, 14.0, 20.0]),
                delta_taus_s: ps(&[0.5, 1.0, 2.0, 3.0, 5.0, 7.0, 10.0, 15.0, 20.0, 30.0, 40.0, 50.0]),
                rho: 1.0,
                bauds_hz: ghz(&[0.5, 1.0, 2.0]),
            },
        ),
        "single-path-segmented" => scenario(
            name,
            link,
            ofdm,
            Experiment::Segmented {
                params: SegmentedParams::default(),
            },
        ),
        "two-path-fixed" => scenario(
            name,
            link,
            ofdm,
            Experiment::TwoPath {
                params: TwoPathParams::default(),
            },
        ),
        "ga-two-path" => scenario(name, link, ofdm, Experiment::Ga { params: fixed_stage1() }),
        "ga-500mbaud" => scenario(
            name,
            link,
            OfdmConfig {
                baud_rate_hz: 0.5e9,
                ..ofdm
            },
            Experiment::Ga {
                params: GaParams::default(),
            },
        ),
        "ls-direct" => scenario(
            name,
            link,
            ofdm,
            Experiment::Ls {
                params: LsParams {
                    paths: PathSet::direct_only(&[tap_for(4768e-12, 0.51), tap_for(3828e-12, 0.53)]),
                    ..LsParams::default()
                },
                carriers_hz: vec![],
                sirs_db: vec![],
            },
        ),
        "ls-multipath" => scenario(
            name,
            link,
            ofdm,
            Experiment::Ls {
                params: LsParams::default(),
                carriers_hz: vec![],
                sirs_db: vec![],
            },
        ),
        "ls-with-soi" => scenario(
            name,
            link,
            ofdm,
            Experiment::Ls {
                params: LsParams {
                    soi: Some(SoiParams::default()),
                    ..LsParams::default()
                },
                carriers_hz: vec![],
                sirs_db: vec![],
            },
        ),
        "sir-sweep" => scenario(
            name,
            link,
            ofdm,
            Experiment::Ls {
                params: LsParams {
                    soi: Some(SoiParams::default()),
                    ..LsParams::default()
                },
                carriers_hz: vec![],
                sirs_db: vec![-8.5, -12.3, -15.4, -18.4],
            },
        ),
        "freq-tunability" => scenario(
            name,
            link,
            ofdm,
            Experiment::Ls {
                params: LsParams {
                    soi: Some(SoiParams::default()),
                    ..LsParams::default()
                },
                carriers_hz: ghz(&[9.0, 10.0, 11.0]),
                sirs_db: vec![],
            },
        ),
        "fiber-remoting" => scenario(
            name,
            link,
            ofdm,
            Experiment::Fiber {
                fiber: FiberSpec {
                    length_km: 25.2,
                    ..FiberSpec::default()
                },
                params: SegmentedParams::default(),
            },
        ),
        "xcorr-resolution" => scenario(
            name,
            link,
            ofdm,
            Experiment::Xcorr {
                settings: [(1.0, 1.0), (1.0, 0.5), (1.0, 0.25), (1.0, 0.1), (0.5, 0.5), (0.25, 0.25)]
                    .iter()
                    .map(|&(f, b)| XcorrSetting {
                        if_center_hz: f * 1e9,
                        baud_hz: b * 1e9,
                    })
                    .collect(),
                true_delay_s: 4768e-12,
                amplitude: 0.51,
            },
        ),
        "zero-padding" => scenario(
            name,
            link,
            ofdm,
            Experiment::ZeroPadding {
                params: SegmentedParams::default(),
                fractions: vec![0.0, 0.25, 0.5],
                segment_counts: vec![400, 160],
                probe_offset_s: 5e-12,
            },
        ),
        _ => return None,
    };
    Some(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::validate::{has_errors, validate};

    #[test]
    fn thirteen_presets_all_resolve_and_validate() {
        assert_eq!(PRESETS.len(), 13);
        for name in preset_names() {
            let s = preset(name).unwrap_or_else(|| panic!("{name} missing"));
            assert_eq!(s.name, name);
            let d = validate(&s);
            assert!(!has_errors(&d), "{name}: {d:?}");
        }
    }

    #[test]
    fn unknown_preset_is_none() {
        assert!(preset("fig99").is_none());
    }
}
