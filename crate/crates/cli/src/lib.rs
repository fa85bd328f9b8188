//! Library half of the `tentlab` command: configuration and report output,
//! shared by the binary and its tests.

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use tentlab::probes::{report_stem, run_probe, ProbeReport};

pub use config::{Experiment, ExperimentConfig};

/// Exit status when a run finishes but an asserted verdict fails.
pub const EXIT_VERDICT_FAILED: u8 = 2;
/// Exit status for configuration and runtime errors.
pub const EXIT_ERROR: u8 = 1;

#[derive(Debug)]
pub struct RunOutcome {
    pub report: ProbeReport,
    pub json_path: PathBuf,
    pub csv_path: PathBuf,
}

/// Loads and validates a config; `probe` overrides the `probe` key.
pub fn load_experiment(path: &Path, probe: Option<&str>) -> Result<Experiment> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(name) = probe {
        cfg.probe = Some(name.to_string());
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    cfg.validate(&base)
        .with_context(|| format!("invalid config {}", path.display()))
}

/// Runs the configured probe and writes `<stem>.json` and `<stem>.csv`.
pub fn run_experiment(exp: &Experiment) -> Result<RunOutcome> {
    let Some(probe) = exp.probe.as_deref() else {
        bail!("key `probe`: no probe named in the config");
    };
    let report = run_probe(probe, &exp.setup, &exp.params)
        .with_context(|| format!("probe {probe} failed"))?;
    fs::create_dir_all(&exp.output_dir).with_context(|| {
        format!(
            "cannot create output directory {}",
            exp.output_dir.display()
        )
    })?;
    let stem = report_stem(probe, &exp.setup);
    let json_path = exp.output_dir.join(format!("{stem}.json"));
    let csv_path = exp.output_dir.join(format!("{stem}.csv"));
    fs::write(&json_path, report.to_json()?)
        .with_context(|| format!("cannot write {}", json_path.display()))?;
    fs::write(&csv_path, report.to_csv())
        .with_context(|| format!("cannot write {}", csv_path.display()))?;
    Ok(RunOutcome {
        report,
        json_path,
        csv_path,
    })
}

/// One line per verdict, asserted ones first.
pub fn verdict_summary(report: &ProbeReport) -> String {
    let mut lines: Vec<String> = Vec::new();
    for asserted in [true, false] {
        for v in report.verdicts.iter().filter(|v| v.asserted == asserted) {
            let status = match (v.asserted, v.passed) {
                (true, true) => "PASS",
                (true, false) => "FAIL",
                (false, true) => "ok  ",
                (false, false) => "note",
            };
            lines.push(format!("{status} {}  {}", v.name, v.detail));
        }
    }
    lines.join("\n")
}
