//! Experiment runner: scenario files, built-in presets, validation and
//! artifact writing for the self-interference cancellation simulator.

pub mod error;
pub mod presets;
pub mod run;
pub mod scenario;
pub mod validate;

pub use error::CliError;
pub use presets::{preset, preset_names, PRESETS};
pub use run::{default_out_dir, run_scenario, RunReport};
pub use scenario::{apply_overrides, parse_scenario, scenario_from_value, Experiment, Scenario};
pub use validate::{validate, Diagnostic, Severity};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "SIC_SIM_OUT";

/// Loads a scenario from a preset name or a JSON file path, applying
/// `--seed` and `--set` overrides.
pub fn load(target: &str, seed: Option<u64>, sets: &[String]) -> Result<Scenario, CliError> {
    let (mut value, origin) = match preset(target) {
        Some(s) if !std::path::Path::new(target).exists() => {
            (serde_json::to_value(&s).expect("preset serializes"), format!("preset {target}"))
        }
        _ => {
            let text = std::fs::read_to_string(target)
                .map_err(|e| CliError::Schema(format!("{target}: cannot read scenario: {e}")))?;
            // parse once with positions so syntax and schema errors are line-anchored
            parse_scenario(&text, target)?;
            let value = serde_json::from_str(&text).expect("parsed above");
            (value, target.to_string())
        }
    };
    apply_overrides(&mut value, sets)?;
    let mut s = scenario_from_value(value, &origin)?;
    if seed.is_some() {
        s.seed = seed;
    }
    Ok(s)
}
