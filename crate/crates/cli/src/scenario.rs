//! Scenario file format: one JSON object naming the link, the SI waveform
//! and the experiment to run. Unknown keys are rejected everywhere.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use sic_core::channel::FiberSpec;
use sic_core::pipeline::{GaParams, LinkConfig, LsParams, SegmentedParams, TwoPathParams};
use sic_core::signal::OfdmConfig;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    /// Master seed. When set it replaces every component seed (see
    /// [`Scenario::seeded`]); when absent the component seeds are used as
    /// written.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub link: LinkConfig,
    #[serde(default)]
    pub ofdm: OfdmConfig,
    pub experiment: Experiment,
}

/// One (IF centre, baud rate) setting of the cross-correlation study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XcorrSetting {
    pub if_center_hz: f64,
    pub baud_hz: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Experiment {
    /// Depth against a reference misaligned by each `delta_taus_s`, per
    /// carrier and per baud rate (an empty `bauds_hz` uses `ofdm`).
    MismatchSweep {
        carriers_hz: Vec<f64>,
        delta_taus_s: Vec<f64>,
        #[serde(default = "one")]
        rho: f64,
        #[serde(default)]
        bauds_hz: Vec<f64>,
    },
    /// One direct path, segmented delay search.
    Segmented {
        #[serde(default)]
        params: SegmentedParams,
    },
    /// Two direct paths measured one at a time, then cancelled jointly.
    TwoPath {
        #[serde(default)]
        params: TwoPathParams,
    },
    /// Two-stage genetic search for two direct paths.
    Ga {
        #[serde(default)]
        params: GaParams,
    },
    /// LS reference construction. Non-empty `carriers_hz` or `sirs_db`
    /// turn the run into a sweep over every (carrier, SIR) pair; the LO
    /// follows the carrier.
    Ls {
        #[serde(default)]
        params: LsParams,
        #[serde(default)]
        carriers_hz: Vec<f64>,
        #[serde(default)]
        sirs_db: Vec<f64>,
    },
    /// Segmented single-path run without and with a fiber span.
    Fiber {
        #[serde(default)]
        fiber: FiberSpec,
        #[serde(default)]
        params: SegmentedParams,
    },
    /// Cross-correlation rough-delay accuracy per IF setting.
    Xcorr {
        settings: Vec<XcorrSetting>,
        true_delay_s: f64,
        amplitude: f64,
    },
    /// Segmented search on zero-padded OFDM.
    ZeroPadding {
        #[serde(default)]
        params: SegmentedParams,
        fractions: Vec<f64>,
        segment_counts: Vec<usize>,
        probe_offset_s: f64,
    },
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::MismatchSweep { .. } => "mismatch-sweep",
            Experiment::Segmented { .. } => "segmented",
            Experiment::TwoPath { .. } => "two-path",
            Experiment::Ga { .. } => "ga",
            Experiment::Ls { .. } => "ls",
            Experiment::Fiber { .. } => "fiber",
            Experiment::Xcorr { .. } => "xcorr",
            Experiment::ZeroPadding { .. } => "zero-padding",
        }
    }
}

impl Scenario {
    /// Copy with the master seed pushed into the component seeds:
    /// OFDM data `seed`, capture noise `seed + 1`, SOI data `seed + 2`,
    /// GA `seed`.
    pub fn seeded(&self) -> Scenario {
        let mut s = self.clone();
        let Some(seed) = s.seed else { return s };
        s.ofdm.seed = seed;
        s.link.noise_seed = seed.wrapping_add(1);
        match &mut s.experiment {
            Experiment::Ga { params } => params.ga.seed = seed,
            Experiment::Ls { params, .. } => {
                if let Some(soi) = &mut params.soi {
                    soi.config.seed = seed.wrapping_add(2);
                }
            }
            _ => {}
        }
        s
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

/// Parses scenario text. Errors carry the line, column and key path.
pub fn parse_scenario(text: &str, origin: &str) -> Result<Scenario, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let msg = inner.to_string();
        let (line, column) = unknown_field_position(text, &msg).unwrap_or((inner.line(), inner.column()));
        CliError::Schema(format!("{origin}:{line}:{column}: {} (at key `{path}`)", strip_position(&msg)))
    })
}

/// Tagged objects are buffered before their fields are checked, so the
/// parser reports the end of the object; point at the offending key instead.
fn unknown_field_position(text: &str, msg: &str) -> Option<(usize, usize)> {
    let rest = msg.strip_prefix("unknown field `")?;
    let name = &rest[..rest.find('`')?];
    let needle = format!("\"{name}\"");
    let offset = text.find(&needle)?;
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = offset - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    Some((line, column))
}

/// Same as [`parse_scenario`] for an already parsed value (after overrides),
/// where only the key path is meaningful.
pub fn scenario_from_value(v: Value, origin: &str) -> Result<Scenario, CliError> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let path = e.path().to_string();
        CliError::Schema(format!("{origin}: {} (at key `{path}`)", strip_position(&e.into_inner().to_string())))
    })
}

fn strip_position(msg: &str) -> &str {
    msg.find(" at line ").map_or(msg, |i| &msg[..i])
}

/// Applies `key=value` overrides to a scenario value. Keys are dotted paths
/// (`link.carrier_hz`, `experiment.params.ga.seed`); list elements are
/// addressed by index. Values are parsed as JSON, falling back to a string.
pub fn apply_overrides(v: &mut Value, sets: &[String]) -> Result<(), CliError> {
    for set in sets {
        let (key, raw) = set
            .split_once('=')
            .ok_or_else(|| CliError::Schema(format!("--set `{set}`: expected key=value")))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut cur = &mut *v;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let last = i + 1 == parts.len();
            cur = match cur {
                Value::Object(map) => {
                    if last {
                        map.insert(part.to_string(), value.clone());
                        break;
                    }
                    let entry = map.entry(part.to_string()).or_insert(Value::Null);
                    if entry.is_null() {
                        *entry = Value::Object(Default::default());
                    }
                    entry
                }
                Value::Array(items) => {
                    let idx: usize = part
                        .parse()
                        .map_err(|_| CliError::Schema(format!("--set `{key}`: `{part}` is not a list index")))?;
                    let len = items.len();
                    let slot = items
                        .get_mut(idx)
                        .ok_or_else(|| CliError::Schema(format!("--set `{key}`: index {idx} out of range ({len})")))?;
                    if last {
                        *slot = value.clone();
                        break;
                    }
                    slot
                }
                _ => {
                    return Err(CliError::Schema(format!(
                        "--set `{key}`: `{}` is not an object or list",
                        parts[..i].join(".")
                    )))
                }
            };
        }
    }
    Ok(())
}
