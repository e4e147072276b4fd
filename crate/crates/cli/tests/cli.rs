//! End-to-end tests of the `sic-sim` binary: presets, exit codes, output
//! layout and reproducibility. Output layouts (CSV headers, JSON key paths)
//! and the preset list are compared against files in `tests/golden/`; set
//! `UPDATE_GOLDEN=1` to rewrite them.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Mutex;
use std::time::Instant;

use serde_json::Value;

/// Preset runs are timed, so they must not share the CPU with each other.
static SERIAL: Mutex<()> = Mutex::new(());

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sic-sim"))
        .args(args)
        .env_remove("SIC_SIM_OUT")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn golden_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn check_golden(name: &str, actual: &str) {
    let path = golden_path(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, actual).unwrap();
        return;
    }
    let expected = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "output differs from {}", path.display());
}

fn key_paths(v: &Value, prefix: &str, out: &mut BTreeSet<String>) {
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                out.insert(p.clone());
                key_paths(v, &p, out);
            }
        }
        Value::Array(items) => {
            for item in items {
                key_paths(item, &format!("{prefix}[]"), out);
            }
        }
        _ => {}
    }
}

/// One line per file: CSV header, or the sorted key paths of a JSON file.
fn layout(dir: &Path, files: &[String]) -> String {
    let mut text = String::new();
    for f in files {
        let body = fs::read_to_string(dir.join(f)).unwrap();
        if f.ends_with(".csv") {
            text += &format!("{f}: {}\n", body.lines().next().unwrap_or(""));
        } else {
            let v: Value = serde_json::from_str(&body).unwrap();
            let mut keys = BTreeSet::new();
            key_paths(&v, "", &mut keys);
            text += &format!("{f}:\n");
            for k in keys {
                text += &format!("  {k}\n");
            }
        }
    }
    text
}

struct Run {
    dir: tempfile::TempDir,
    summary: Value,
    seconds: f64,
}

impl Run {
    fn path(&self, f: &str) -> PathBuf {
        self.dir.path().join(f)
    }

    fn metric(&self, k: &str) -> f64 {
        self.summary["metrics"][k].as_f64().unwrap_or_else(|| panic!("metric {k}"))
    }

    fn csv(&self, f: &str) -> Vec<Vec<f64>> {
        fs::read_to_string(self.path(f))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
            .collect()
    }
}

/// Runs a preset, then checks exit status, manifest, layout golden and the
/// 120 s budget.
fn run_preset(name: &str, extra: &[&str]) -> Run {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap().to_string();
    let t = Instant::now();
    let mut args = vec!["run", name, "--out", &out];
    args.extend(extra);
    let o = sim(&args);
    let seconds = t.elapsed().as_secs_f64();
    assert!(o.status.success(), "{name}: {}", stderr(&o));
    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    let files: Vec<String> = summary["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f.as_str().unwrap().to_string())
        .collect();
    for f in &files {
        let len = fs::metadata(dir.path().join(f)).map(|m| m.len()).unwrap_or(0);
        assert!(len > 0, "{name}: manifest file {f} missing or empty");
    }
    let mut all = files.clone();
    all.push("summary.json".into());
    if extra.is_empty() {
        check_golden(&format!("{name}.layout"), &layout(dir.path(), &all));
        assert!(seconds < 120.0, "{name} took {seconds:.1} s");
    }
    Run { dir, summary, seconds }
}

#[test]
fn preset_list_is_stable() {
    let o = sim(&["list-presets"]);
    assert!(o.status.success());
    let names: String = String::from_utf8(o.stdout)
        .unwrap()
        .lines()
        .map(|l| l.split_whitespace().next().unwrap().to_string() + "\n")
        .collect();
    assert_eq!(names.lines().count(), 13);
    check_golden("presets.txt", &names);
}

#[test]
fn every_preset_validates() {
    for name in sic_cli::preset_names() {
        let o = sim(&["validate", name]);
        assert!(o.status.success(), "{name}: {}", stderr(&o));
    }
}

#[test]
fn schema_errors_exit_2_with_line_and_key() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(
        &path,
        "{\n  \"name\": \"bad\",\n  \"link\": {\n    \"carrier_hz\": \"nine\"\n  },\n  \"experiment\": {\"kind\": \"segmented\"}\n}\n",
    )
    .unwrap();
    let o = sim(&["validate", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("bad.json:4:"), "{err}");
    assert!(err.contains("link.carrier_hz"), "{err}");

    fs::write(&path, "{\"name\": \"bad\", \"experiment\": {\"kind\": \"segmented\"},}").unwrap();
    assert_eq!(sim(&["run", path.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn physics_errors_exit_2_with_key_path() {
    let o = sim(&["validate", "ga-two-path", "--set", "experiment.params.ga.population=153"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("experiment.params.ga.population"));

    let o = sim(&["validate", "ga-two-path", "--set", "link.carrier_hz=40e9", "--set", "link.lo_hz=39e9", "--set", "link.generator_rate_hz=60e9"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("link.carrier_hz"), "{}", stderr(&o));

    let o = sim(&["run", "ga-two-path", "--set", "experiment.params.stage1_override.amplitude_ranges.0=[0.5, 1.2]"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("experiment.params.stage1_override"));
}

#[test]
fn unknown_target_and_bad_override_exit_2() {
    assert_eq!(sim(&["run", "no-such-preset"]).status.code(), Some(2));
    assert_eq!(sim(&["validate", "mismatch-sweep", "--set", "novalue"]).status.code(), Some(2));
    assert_eq!(sim(&["validate", "mismatch-sweep", "--set", "link.bogus_key=1"]).status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_3_with_module_tag() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let dir = tempfile::tempdir().unwrap();
    // the fiber loss drives the captured reference power to zero
    let o = sim(&[
        "run",
        "fiber-remoting",
        "--out",
        dir.path().to_str().unwrap(),
        "--set",
        "experiment.fiber.length_km=100000",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("[channel-sim]"), "{}", stderr(&o));
}

#[test]
fn default_output_directory_comes_from_the_environment() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let root = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_sic-sim"))
        .args(["run", "single-path-segmented"])
        .env("SIC_SIM_OUT", root.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(root.path().join("single-path-segmented/summary.json").exists());
}

#[test]
fn summaries_are_reproducible_and_seeded() {
    let a = run_preset("ga-two-path", &["--seed", "11"]);
    let b = run_preset("ga-two-path", &["--seed", "11"]);
    let c = run_preset("ga-two-path", &["--seed", "12"]);
    let text = |r: &Run| fs::read_to_string(r.path("summary.json")).unwrap();
    assert_eq!(text(&a), text(&b));
    assert_ne!(text(&a), text(&c));
    assert_eq!(
        fs::read_to_string(a.path("ga_history.json")).unwrap(),
        fs::read_to_string(b.path("ga_history.json")).unwrap()
    );
    assert_eq!(a.summary["seeds"]["ga"], 11);
    assert_eq!(a.summary["seeds"]["ofdm"], 11);
    assert_eq!(a.summary["seeds"]["noise"], 12);
    let info: Value = serde_json::from_str(&fs::read_to_string(a.path("run_info.json")).unwrap()).unwrap();
    assert!(info["wall_clock_s"].as_f64().unwrap() >= 0.0);
    assert!(!text(&a).contains("wall_clock"));
}

#[test]
fn overrides_land_in_the_resolved_scenario() {
    let r = run_preset("single-path-segmented", &["--set", "experiment.params.grid_stop_s=4.9e-9"]);
    let s: Value = serde_json::from_str(&fs::read_to_string(r.path("scenario.json")).unwrap()).unwrap();
    assert_eq!(s["experiment"]["params"]["grid_stop_s"], 4.9e-9);
    assert_eq!(r.csv("search.csv").last().unwrap()[0], 4900.0);
}

#[test]
fn preset_mismatch_sweep() {
    let r = run_preset("mismatch-sweep", &[]);
    let rows = r.csv("mismatch.csv");
    assert_eq!(rows.len(), 5 * 12 * 3);
    let anchor = rows
        .iter()
        .find(|row| row[0] == 10e9 && row[1] == 1e9 && row[2] == 0.5)
        .expect("10 GHz / 0.5 ps point");
    assert!((anchor[4] - 30.1).abs() < 0.3, "{anchor:?}");
}

#[test]
fn preset_single_path_segmented() {
    let r = run_preset("single-path-segmented", &[]);
    assert_eq!(r.metric("best_delay_ps"), 4768.0);
    assert!(r.metric("depth_db") >= 27.3);
    check_golden("single-path-segmented.summary.json", &fs::read_to_string(r.path("summary.json")).unwrap());
    check_golden("single-path-segmented.search.csv", &fs::read_to_string(r.path("search.csv")).unwrap());
}

#[test]
fn preset_two_path_fixed() {
    let r = run_preset("two-path-fixed", &[]);
    assert!(r.metric("depth_db") >= 23.5);
}

#[test]
fn preset_ga_two_path() {
    let r = run_preset("ga-two-path", &[]);
    let h: Value = serde_json::from_str(&fs::read_to_string(r.path("ga_history.json")).unwrap()).unwrap();
    for stage in ["stage2", "stage3"] {
        assert_eq!(h[stage]["iterations"].as_array().unwrap().len(), 11, "{stage}");
    }
    assert_eq!(r.metric("captures"), 22.0);
    assert!(r.metric("depth_db") >= 20.0);
}

#[test]
fn preset_ga_500mbaud() {
    let r = run_preset("ga-500mbaud", &[]);
    assert_eq!(r.metric("captures"), 22.0);
    assert!(r.metric("stage3_depth_db").is_finite());
}

#[test]
fn preset_ls_direct() {
    let r = run_preset("ls-direct", &[]);
    assert!(r.metric("depth_db") >= 25.0);
}

#[test]
fn preset_ls_multipath() {
    let r = run_preset("ls-multipath", &[]);
    assert!(r.metric("depth_db") >= 25.0);
}

#[test]
fn preset_ls_with_soi() {
    let r = run_preset("ls-with-soi", &[]);
    assert!(r.metric("depth_db") >= 19.0);
    assert_eq!(r.metric("symbol_errors_after"), 0.0);
    let after = r.csv("constellation_after.csv");
    assert!(!after.is_empty() && after.iter().all(|row| row.len() == 2));
}

#[test]
fn preset_sir_sweep() {
    let r = run_preset("sir-sweep", &[]);
    let rows = r.csv("sweep.csv");
    let sirs: Vec<f64> = rows.iter().map(|row| row[3]).collect();
    assert_eq!(sirs, vec![-8.5, -12.3, -15.4, -18.4]);
    assert!(rows.iter().all(|row| row[4] >= 19.0 && row[9] == 0.0), "{rows:?}");
}

#[test]
fn preset_freq_tunability() {
    let r = run_preset("freq-tunability", &[]);
    let rows = r.csv("sweep.csv");
    assert_eq!(rows.len(), 3);
    for row in &rows {
        assert_eq!(row[1] - row[2], 1e9, "LO follows the carrier");
    }
    let depths: Vec<f64> = rows.iter().map(|row| row[4]).collect();
    let spread = depths.iter().cloned().fold(f64::MIN, f64::max) - depths.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread < 3.0, "{depths:?}");
}

#[test]
fn preset_fiber_remoting() {
    let r = run_preset("fiber-remoting", &[]);
    assert!(r.metric("depth_change_db").abs() < 1.0);
    assert!((r.metric("if_power_drop_db") - 2.0 * r.metric("optical_loss_db")).abs() < 0.5);
}

#[test]
fn preset_xcorr_resolution() {
    let r = run_preset("xcorr-resolution", &[]);
    let rows = r.csv("xcorr.csv");
    assert_eq!(rows.len(), 6);
    // 1 GHz IF at 1 Gbaud resolves the delay to well under a symbol
    assert!(rows[0][4].abs() < 100.0, "{:?}", rows[0]);
    assert!(!r.csv("xcorr_curves.csv").is_empty());
}

#[test]
fn preset_zero_padding() {
    let r = run_preset("zero-padding", &[]);
    let rows = r.csv("zero_padding.csv");
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|row| row[2] == 4768.0), "{rows:?}");
    assert!(r.seconds < 120.0);
}
