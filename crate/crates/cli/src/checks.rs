//! Acceptance checks gating the exit code.

use helfrich::homogenize::ConvergenceRow;
use helfrich::sde_sim::Regime;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::spectral::{SpectralReport, Status};
use crate::HarnessError;

pub const SPECTRAL_CHECKS: [&str; 6] = ["psd", "residual", "area_vanish", "drift_vanish", "centering", "a_forms"];
pub const MC_CHECKS: [&str; 5] = ["flat", "averaged", "area_mc", "ito_area", "trend"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Selection {
    All,
    None,
    List(Vec<String>),
}

impl std::str::FromStr for Selection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(Selection::All),
            "none" => Ok(Selection::None),
            list => {
                let names: Vec<String> = list.split(',').map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).collect();
                if names.is_empty() {
                    return Err("empty check list".into());
                }
                Ok(Selection::List(names))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

/// Checks that make sense for `regime`, the membrane and whether Monte-Carlo
/// rows are available.
pub fn applicable(cfg: &ExperimentConfig, with_mc: bool) -> Vec<&'static str> {
    let r = cfg.run.regime;
    let flat = cfg.model.cutoff == 0;
    let mut out = vec!["psd"];
    match r {
        Regime::Avg => {}
        Regime::Hom11 => out.extend(["residual", "area_vanish", "drift_vanish"]),
        Regime::Hom12 => out.extend(["residual", "centering", "a_forms"]),
    }
    if with_mc {
        if flat {
            out.push("flat");
        }
        match r {
            Regime::Avg => out.push("averaged"),
            Regime::Hom11 => {
                out.push("area_mc");
                if cfg.run.epsilons.len() > 1 {
                    out.push("trend");
                }
            }
            Regime::Hom12 => out.push("ito_area"),
        }
    }
    out
}

/// Resolves `--check` against the applicable set; unknown or inapplicable
/// names are configuration errors.
pub fn resolve(sel: &Selection, cfg: &ExperimentConfig, with_mc: bool) -> Result<Vec<&'static str>, HarnessError> {
    let avail = applicable(cfg, with_mc);
    match sel {
        Selection::All => Ok(avail),
        Selection::None => Ok(Vec::new()),
        Selection::List(names) => names
            .iter()
            .map(|n| {
                avail.iter().copied().find(|a| a == n).ok_or_else(|| {
                    let known = SPECTRAL_CHECKS.iter().chain(&MC_CHECKS).any(|k| k == n);
                    HarnessError::Config(if known {
                        format!("check {n:?} does not apply here; available: {}", avail.join(","))
                    } else {
                        format!("unknown check {n:?}")
                    })
                })
            })
            .collect(),
    }
}

fn max_abs(m: [[f64; 2]; 2]) -> f64 {
    m.iter().flatten().fold(0.0, |a, v| a.max(v.abs()))
}

fn result(name: &str, value: f64, threshold: f64, passed: bool, detail: String) -> CheckResult {
    CheckResult { name: name.into(), passed, value, threshold, detail }
}

fn missing(name: &str, report: &SpectralReport) -> CheckResult {
    let why = report.error.clone().unwrap_or_else(|| "no spectral values".into());
    result(name, f64::NAN, f64::NAN, false, why)
}

/// Largest `|est − target| / se` over the entries.
fn z_score(value: [[f64; 2]; 2], se: [[f64; 2]; 2], target: [[f64; 2]; 2]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let d = (value[i][j] - target[i][j]).abs();
            worst = worst.max(if se[i][j] > 0.0 { d / se[i][j] } else if d == 0.0 { 0.0 } else { f64::INFINITY });
        }
    }
    worst
}

const ZERO: [[f64; 2]; 2] = [[0.0; 2]; 2];
const IDENTITY: [[f64; 2]; 2] = [[1.0, 0.0], [0.0, 1.0]];

/// Evaluates `names`. `rows` are in descending ε; `averaged` holds the
/// averaged-SDE estimate of `D` with its standard errors.
pub fn evaluate(
    names: &[&str],
    cfg: &ExperimentConfig,
    report: &SpectralReport,
    rows: &[ConvergenceRow<f64>],
    averaged: Option<&helfrich::homogenize::MatrixEstimate<f64>>,
) -> Vec<CheckResult> {
    let c = &cfg.checks;
    let k = c.k_se;
    let q = report.quantities.as_ref();
    let last = rows.last();
    names
        .iter()
        .map(|&name| match name {
            "psd" => match q {
                Some(q) => {
                    let b = 0.5 * (q.d[0][1] + q.d[1][0]);
                    let lo = 0.5 * (q.d[0][0] + q.d[1][1]) - (0.25 * (q.d[0][0] - q.d[1][1]).powi(2) + b * b).sqrt();
                    let asym = (q.d[0][1] - q.d[1][0]).abs();
                    let v = (-lo).max(asym);
                    result(name, v, c.psd_tol, lo >= -c.psd_tol && asym <= c.psd_tol, format!("min eigenvalue {lo:e}, asymmetry {asym:e}"))
                }
                None => missing(name, report),
            },
            "residual" => {
                let r = report.residuals.solver_residual;
                let ok = report.status == Status::Ok;
                let detail = report.error.clone().unwrap_or_else(|| format!("{} refinement steps", report.trace.len()));
                result(name, r, report.tolerance, ok, detail)
            }
            "area_vanish" => match q {
                Some(q) => {
                    let v = max_abs(q.a_strato) + report.residuals.a_strato_gap;
                    result(name, v, c.area_tol, v <= c.area_tol, format!("gap between forms {:e}", report.residuals.a_strato_gap))
                }
                None => missing(name, report),
            },
            "drift_vanish" => match q.and_then(|q| q.l) {
                Some(l) => {
                    let v = l[0].abs().max(l[1].abs());
                    result(name, v, c.drift_tol, v <= c.drift_tol, String::new())
                }
                None => missing(name, report),
            },
            "centering" => {
                let v = report.residuals.compatibility;
                result(name, v, c.centering_tol, v <= c.centering_tol && q.is_some(), String::new())
            }
            "a_forms" => {
                let v = report.residuals.a_strato_gap;
                result(name, v, c.a_forms_tol, v <= c.a_forms_tol && q.is_some(), format!("D route gap {:e}", report.residuals.d_route_gap.unwrap_or(0.0)))
            }
            "flat" => {
                let z = rows.iter().map(|r| z_score(r.d.value, r.d.stderr, IDENTITY).max(z_score(r.a_ito.value, r.a_ito.stderr, ZERO))).fold(0.0, f64::max);
                result(name, z, k, z <= k, "largest z-score of D vs I and Ito area vs 0".into())
            }
            "averaged" => match (last, averaged) {
                (Some(r), Some(a)) => {
                    let mut z: f64 = 0.0;
                    for i in 0..2 {
                        for j in 0..2 {
                            let se = (r.d.stderr[i][j].powi(2) + a.stderr[i][j].powi(2)).sqrt();
                            let d = (r.d.value[i][j] - a.value[i][j]).abs();
                            z = z.max(if se > 0.0 { d / se } else if d == 0.0 { 0.0 } else { f64::INFINITY });
                        }
                    }
                    result(name, z, k, z <= k, format!("epsilon {}", r.epsilon))
                }
                _ => result(name, f64::NAN, k, false, "no rows".into()),
            },
            "area_mc" => match last {
                Some(r) => {
                    let a = &r.a_strato;
                    match c.area_mc_tol {
                        Some(tol) => {
                            let v = max_abs(a.value);
                            result(name, v, tol, v <= tol, format!("epsilon {}, absolute", r.epsilon))
                        }
                        None => {
                            let z = z_score(a.value, a.stderr, ZERO);
                            result(name, z, k, z <= k, format!("epsilon {}, z-score", r.epsilon))
                        }
                    }
                }
                None => result(name, f64::NAN, k, false, "no rows".into()),
            },
            "ito_area" => match (last, q) {
                (Some(r), Some(q)) => {
                    let z = z_score(r.a_ito.value, r.a_ito.stderr, q.a_ito);
                    result(name, z, k, z <= k, format!("epsilon {}, z-score", r.epsilon))
                }
                (_, None) => missing(name, report),
                _ => result(name, f64::NAN, k, false, "no rows".into()),
            },
            "trend" => match q {
                Some(q) => trend(rows, q.d, c.trend_rel),
                None => missing(name, report),
            },
            other => unreachable!("check {other} was resolved"),
        })
        .collect()
}

/// `‖D̂ − D‖_F` must not increase beyond the joint 1σ band between
/// consecutive ε, and ends below `rel` relative error.
fn trend(rows: &[ConvergenceRow<f64>], d: [[f64; 2]; 2], rel: f64) -> CheckResult {
    let errs: Vec<(f64, f64)> = rows.iter().map(|r| r.d.frobenius_error(d)).collect();
    let monotone = errs.windows(2).all(|w| w[1].0 - w[1].1 <= w[0].0 + w[0].1);
    let norm = d.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    let last = errs.last().map_or(f64::NAN, |e| e.0 / norm);
    let detail = errs.iter().map(|(e, s)| format!("{e:.4e}±{s:.1e}")).collect::<Vec<_>>().join(" > ");
    result("trend", last, rel, monotone && last <= rel, detail)
}
