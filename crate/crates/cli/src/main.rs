use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sic_cli::{default_out_dir, load, run_scenario, validate, CliError, Severity, OUT_ENV, PRESETS};

#[derive(Parser)]
#[command(name = "sic-sim", version, about = "Photonic self-interference cancellation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or a preset by name.
    Run {
        /// Path to a scenario JSON file, or a preset name.
        target: String,
        /// Master seed; replaces every component seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory [default: $SIC_SIM_OUT/<name> or sic-out/<name>].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override a scenario key, e.g. `--set link.carrier_hz=1e10`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
    /// List the built-in presets.
    ListPresets,
    /// Check a scenario file (or preset) without running it.
    Validate {
        target: String,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::ListPresets => {
            for (name, description) in PRESETS {
                println!("{name:<24}{description}");
            }
            ExitCode::SUCCESS
        }
        Command::Validate { target, sets } => {
            let s = match load(&target, None, &sets) {
                Ok(s) => s,
                Err(e) => return fail(e),
            };
            let diagnostics = validate(&s);
            if diagnostics.iter().any(|d| d.severity == Severity::Error) {
                return fail(CliError::Invalid(diagnostics));
            }
            for d in &diagnostics {
                println!("{d}");
            }
            println!("{target}: ok ({} experiment)", s.experiment.kind());
            ExitCode::SUCCESS
        }
        Command::Run { target, seed, out, sets } => {
            let s = match load(&target, seed, &sets) {
                Ok(s) => s,
                Err(e) => return fail(e),
            };
            let dir = out.unwrap_or_else(|| default_out_dir(&s.name));
            match run_scenario(&s, &dir) {
                Ok(report) => {
                    for w in &report.warnings {
                        eprintln!("{w}");
                    }
                    for (k, v) in &report.metrics {
                        println!("{k} = {v}");
                    }
                    println!(
                        "wrote {} files to {} in {:.1} s (default root from ${OUT_ENV})",
                        report.files.len() + 1,
                        dir.display(),
                        report.wall_clock_s
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
    }
}
