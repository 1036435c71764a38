use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use maglab::geometry::{validate_assumptions, SampleSpec};
use maglab::lab::{compare_spectra, emit_report, run_pipeline, ExperimentConfig, RunManifest};
use maglab::spectrum::SpectrumResult;
use maglab::{Error, Result};

#[derive(Parser)]
#[command(name = "maglab", version, about = "Spectral laboratory for magnetic Laplacians with fields vanishing on a curve")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config and the model's standing assumptions.
    Validate { config: PathBuf },
    /// Run the full pipeline; artifacts go under `<outputs>/run-<hash>/`.
    Run {
        config: PathBuf,
        /// Also emit the report once the run completes.
        #[arg(long)]
        report: bool,
    },
    /// Compare two spectra (JSON artifacts or spectrum CSV files).
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
        window: Vec<f64>,
        /// Defaults to 10 × the larger residual found in either file.
        #[arg(long)]
        cluster_tol: Option<f64>,
        /// Write the report here instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write tables, summary and plots for a completed run.
    Report {
        manifest: PathBuf,
        #[arg(long)]
        no_plots: bool,
    },
}

fn load_spectrum(path: &Path) -> Result<SpectrumResult> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e == "csv") {
        let name = path.file_stem().map_or("csv".into(), |s| s.to_string_lossy().into_owned());
        return SpectrumResult::from_csv(&text, &name, f64::NAN);
    }
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    // Quantized and Bohr–Sommerfeld artifacts carry the spectrum under `merged`.
    let value = value.get("merged").cloned().unwrap_or(value);
    serde_json::from_value(value).map_err(|e| Error::Config(format!("{}: not a spectrum: {e}", path.display())))
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { config } => {
            let c = ExperimentConfig::load(&config)?;
            let model = c.validate()?;
            let report = validate_assumptions(&model, &SampleSpec::default());
            for check in &report.checks {
                let state = match check.passed {
                    Some(true) => "pass",
                    Some(false) => "FAIL",
                    None => "n/a",
                };
                println!("{state:5} {}: {}", check.id, check.description);
            }
            if !report.all_pass() {
                return Err(Error::Config(format!("model {} fails its assumption checks", model.name)));
            }
            println!("config ok; run directory {}", c.run_directory().display());
        }
        Command::Run { config, report } => {
            let c = ExperimentConfig::load(&config)?;
            let manifest = run_pipeline(&c)?;
            println!("{}", manifest.run_directory.join(maglab::lab::MANIFEST_FILE).display());
            if report {
                for p in emit_report(&manifest, c.outputs.emit_plots)? {
                    println!("{}", p.display());
                }
            }
        }
        Command::Compare { a, b, window, cluster_tol, output } => {
            let (sa, sb) = (load_spectrum(&a)?, load_spectrum(&b)?);
            let window = match window.as_slice() {
                [lo, hi] => (*lo, *hi),
                _ => (f64::NEG_INFINITY, f64::INFINITY),
            };
            let tol = cluster_tol.unwrap_or_else(|| {
                let r = sa.residuals.iter().chain(&sb.residuals).copied().filter(|r| r.is_finite()).fold(0.0, f64::max);
                10.0 * r.max(1e-12)
            });
            let report = compare_spectra(&sa, &sb, window, tol)?;
            let text = serde_json::to_string_pretty(&report).map_err(|e| Error::Diagnostic(e.to_string()))? + "\n";
            match output {
                Some(p) => std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?,
                None => print!("{text}"),
            }
        }
        Command::Report { manifest, no_plots } => {
            let m = RunManifest::load(&manifest)?;
            for p in emit_report(&m, m.config.outputs.emit_plots && !no_plots)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
