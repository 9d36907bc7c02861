//! CSV tables and the versioned JSON summary.

use std::path::Path;

use helfrich::homogenize::ConvergenceRow;
use serde::Serialize;

use crate::checks::CheckResult;
use crate::config::ExperimentConfig;
use crate::spectral::SpectralReport;
use crate::HarnessError;

pub const SUMMARY_SCHEMA: &str = "helfrich.summary/1";
pub const ARTIFACT_VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

const ENTRIES: [&str; 4] = ["11", "12", "21", "22"];

/// Column names of the convergence table.
pub fn table_header() -> Vec<String> {
    let mut h = vec!["epsilon".to_string(), "n_paths".to_string()];
    let block = |prefix: &str, suffix: &str| ENTRIES.iter().map(|e| format!("{prefix}{e}{suffix}")).collect::<Vec<_>>();
    for (p, s) in [("D", ""), ("D", "_se"), ("Aito", ""), ("Aito", "_se"), ("Astrato", ""), ("Astrato", "_se"), ("refD", ""), ("refAito", ""), ("refAstrato", "")] {
        h.extend(block(p, s));
    }
    h.push("wall_s".into());
    h.push("config_hash".into());
    h
}

fn flat(m: [[f64; 2]; 2]) -> [f64; 4] {
    [m[0][0], m[0][1], m[1][0], m[1][1]]
}

pub fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v:e}")
    } else {
        "NA".into()
    }
}

pub fn write_table(path: &Path, rows: &[ConvergenceRow<f64>], cfg: &ExperimentConfig, hash: &str) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(table_header()).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![fmt(r.epsilon), r.n_paths.to_string()];
        for m in [r.d.value, r.d.stderr, r.a_ito.value, r.a_ito.stderr, r.a_strato.value, r.a_strato.stderr] {
            rec.extend(flat(m).map(fmt));
        }
        match &r.reference {
            Some(q) => {
                for m in [q.d, q.a_ito, q.a_strato] {
                    rec.extend(flat(m).map(fmt));
                }
            }
            None => rec.extend(std::iter::repeat_n("NA".to_string(), 12)),
        }
        rec.push(if cfg.output.wall_clock { fmt(r.wall_s) } else { "NA".into() });
        rec.push(hash.to_string());
        w.write_record(rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_err(e: csv::Error) -> HarnessError {
    HarnessError::Io(std::io::Error::other(e))
}

#[derive(Serialize)]
pub struct RowRecord {
    pub epsilon: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub d: [[f64; 2]; 2],
    pub d_se: [[f64; 2]; 2],
    pub a_ito: [[f64; 2]; 2],
    pub a_ito_se: [[f64; 2]; 2],
    pub a_strato: [[f64; 2]; 2],
    pub a_strato_se: [[f64; 2]; 2],
    pub d_error: Option<[f64; 2]>,
    pub wall_s: Option<f64>,
}

impl RowRecord {
    pub fn new(r: &ConvergenceRow<f64>, wall_clock: bool) -> Self {
        RowRecord {
            epsilon: r.epsilon,
            dt: r.dt,
            n_paths: r.n_paths,
            d: r.d.value,
            d_se: r.d.stderr,
            a_ito: r.a_ito.value,
            a_ito_se: r.a_ito.stderr,
            a_strato: r.a_strato.value,
            a_strato_se: r.a_strato.stderr,
            d_error: r.d_error().map(|(e, s)| [e, s]),
            wall_s: wall_clock.then_some(r.wall_s),
        }
    }
}

#[derive(Serialize)]
pub struct Summary<'a, X: Serialize> {
    pub schema: &'static str,
    pub artifact_version: &'static str,
    pub command: &'static str,
    pub config_hash: &'a str,
    pub config: &'a ExperimentConfig,
    pub spectral: Option<&'a SpectralReport>,
    pub rows: Vec<RowRecord>,
    pub extra: Option<X>,
    pub checks: &'a [CheckResult],
    pub passed: bool,
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Compute(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
