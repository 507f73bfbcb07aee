//! Batch front-end for the `txbf` link simulator.
//!
//! An [`ExperimentSpec`] (TOML) describes a sweep over SNR points and
//! criteria; [`run_experiment`] runs it and writes
//!
//! | file                | contents                                               |
//! |---------------------|--------------------------------------------------------|
//! | `ber.csv`           | `snr_db,criterion,ber,ber_stderr,bits`                 |
//! | `abr.csv`           | `snr_db,criterion,abr_bits_per_symbol`                 |
//! | `solver_trace.json` | per-channel dual iterates (λ, constraint gap, objective) |
//! | `manifest.json`     | normalized spec, seed, software version, exclusions    |
//!
//! Rows follow the spec order: SNR points outer, criteria inner. Reals in
//! the CSVs carry 12 significant digits in scientific notation, so reruns
//! can be diffed byte for byte.

pub mod error;
pub mod spec;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;
use txbf::simulator::{MonteCarloReport, SweepConfig};
use txbf::monte_carlo_sweep;

pub use error::{CliError, FieldError};
pub use spec::{parse_spec, parse_spec_str, ExperimentSpec, Overrides};

pub const BER_CSV: &str = "ber.csv";
pub const ABR_CSV: &str = "abr.csv";
pub const TRACE_JSON: &str = "solver_trace.json";
pub const MANIFEST_JSON: &str = "manifest.json";

#[derive(Debug)]
pub struct RunOutcome {
    pub report: MonteCarloReport,
    pub files: Vec<PathBuf>,
}

/// Runs the sweep on the current rayon pool and writes the four output
/// files. Nothing is written when the spec is invalid or too many channels
/// had to be excluded.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunOutcome, CliError> {
    spec.validate()?;
    let cfg = spec.system_config();
    let pdp = spec.power_delay_profile()?;
    let sweep = SweepConfig {
        schemes: spec.schemes()?,
        snrs_db: spec.snrs_db.clone(),
        n_channels: spec.n_channels,
        blocks_per_channel: spec.blocks_per_channel,
        seed: spec.seed,
        solver: spec.solver,
    };
    let report = monte_carlo_sweep(&cfg, &pdp, &sweep)?;

    let cells = spec.n_channels * spec.snrs_db.len() * spec.criteria.len();
    let allowed = (spec.exclusion_budget * cells as f64).floor() as usize;
    if report.excluded.len() > allowed {
        return Err(CliError::ExclusionBudget {
            excluded: report.excluded.len(),
            cells,
            allowed,
            first: report.excluded.iter().take(10).cloned().collect(),
        });
    }

    let dir = &spec.output_dir;
    fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.clone(),
        source,
    })?;
    let manifest = json!({
        "software": { "name": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION") },
        "seed": spec.seed,
        "spec": spec,
        "spec_toml": spec.to_toml(),
        "outputs": [BER_CSV, ABR_CSV, TRACE_JSON],
        "exclusions": {
            "cells": cells,
            "allowed": allowed,
            "excluded": report.excluded,
        },
    });
    let files = vec![
        write(dir, BER_CSV, &ber_csv(&report))?,
        write(dir, ABR_CSV, &abr_csv(&report))?,
        write(dir, TRACE_JSON, &pretty(&report.traces))?,
        write(dir, MANIFEST_JSON, &pretty(&manifest))?,
    ];
    Ok(RunOutcome { report, files })
}

/// `x` with 12 significant digits.
pub fn format_real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.11e}")
    } else {
        format!("{x}")
    }
}

pub fn ber_csv(report: &MonteCarloReport) -> String {
    let mut out = String::from("snr_db,criterion,ber,ber_stderr,bits\n");
    for p in &report.points {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            format_real(p.snr_db),
            p.scheme,
            format_real(p.ber),
            format_real(p.ber_stderr),
            p.bits_counted
        );
    }
    out
}

pub fn abr_csv(report: &MonteCarloReport) -> String {
    let mut out = String::from("snr_db,criterion,abr_bits_per_symbol\n");
    for p in &report.points {
        let _ = writeln!(
            out,
            "{},{},{}",
            format_real(p.snr_db),
            p.scheme,
            format_real(p.abr_bits_per_symbol)
        );
    }
    out
}

fn pretty<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| CliError::Write {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}
