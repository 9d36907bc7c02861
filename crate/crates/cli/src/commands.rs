//! The four subcommands.

use std::path::PathBuf;

use helfrich::homogenize::{
    self, default_centering, mc_estimate_area, mc_estimate_d, summarize_replicas, Centering, ConvergenceRow, MatrixEstimate, N_BATCHES,
};
use helfrich::membrane::Membrane;
use helfrich::rng::{substream, STREAM_AUX};
use helfrich::rough_lift::{chen_defect_relative, holder_norms, ito_lift, strato_lift, ucv_diagnostics, Flavor, PairSet, RoughPathLift};
use helfrich::sde_sim::{Regime, Simulator};
use rand::Rng;
use serde::Serialize;

use crate::artifacts::{self, csv_err, fmt, RowRecord, Summary};
use crate::checks::{self, CheckResult, Selection};
use crate::config::ExperimentConfig;
use crate::spectral::{self, SpectralReport};
use crate::HarnessError;

/// Exponent of the grid Hölder norms in the lift diagnostics.
pub const HOLDER_GAMMA: f64 = 0.4;
/// Random triples per lift in the Chen check.
pub const CHEN_TRIPLES: usize = 200;

/// What a command produced.
#[derive(Debug)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub checks: Vec<CheckResult>,
    pub cache_hit: Option<bool>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn prepare(cfg: &ExperimentConfig) -> Result<Membrane<f64>, HarnessError> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output.dir)?;
    Ok(Membrane::new(cfg.model_params()?))
}

/// Lift diagnostics of one stored path.
#[derive(Clone, Debug, Serialize)]
pub struct LiftDiagnostics {
    pub replica: u64,
    pub flavor: &'static str,
    pub chen_defect: f64,
    pub flavor_gap: f64,
    pub holder_x: f64,
    pub holder_xx: f64,
    pub ucv_qv: [f64; 2],
    pub ucv_tv: f64,
}

/// Largest relative Chen defect over random ordered triples drawn from
/// `seed`'s auxiliary stream of `replica`.
pub fn chen_max(lift: &RoughPathLift<f64>, seed: u64, replica: u64, triples: usize) -> f64 {
    let n = lift.n_steps();
    let mut rng = substream(seed, replica, STREAM_AUX);
    (0..triples)
        .map(|_| {
            let mut idx = [rng.random_range(0..=n), rng.random_range(0..=n), rng.random_range(0..=n)];
            idx.sort_unstable();
            chen_defect_relative(lift, idx[0], idx[1], idx[2]).expect("ordered on-grid triple")
        })
        .fold(0.0, f64::max)
}

/// Largest entry of `𝕏^S − 𝕏^I − ½[X]` over the pair set.
pub fn flavor_gap(ito: &RoughPathLift<f64>, strato: &RoughPathLift<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for &(s, t) in ito.pair_set().pairs() {
        let (a, b, h) = (ito.level2(s, t).unwrap(), strato.level2(s, t).unwrap(), ito.half_bracket(s, t).unwrap());
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((b[i][j] - a[i][j] - h[i][j]).abs());
            }
        }
    }
    worst
}

#[derive(Serialize)]
struct EpsilonSummary {
    epsilon: f64,
    dt: f64,
    n_steps: usize,
    n_paths: usize,
    chen_defect_max: f64,
    flavor_gap_max: f64,
    /// Mean of the fourth power of the path Hölder norm over stored paths.
    holder_x_p4: f64,
}

/// `simulate`: runs every ε, writes subsampled paths, lift diagnostics,
/// the first stored replica's lift and the estimator table.
pub fn simulate(cfg: &ExperimentConfig) -> Result<Outcome, HarnessError> {
    let membrane = prepare(cfg)?;
    let hash = cfg.hash();
    let regime = cfg.run.regime;
    let dir = &cfg.output.dir;
    let name = |kind: &str, ext: &str| dir.join(format!("{kind}_{}.{ext}", regime.name()));
    let mut paths_csv = csv::Writer::from_path(name("paths", "csv")).map_err(csv_err)?;
    paths_csv.write_record(["epsilon", "replica", "step", "t", "x1", "x2", "config_hash"]).map_err(csv_err)?;
    let mut lift_csv = csv::Writer::from_path(name("lift", "csv")).map_err(csv_err)?;
    lift_csv
        .write_record(["epsilon", "replica", "flavor", "chen_defect", "flavor_gap", "holder_gamma", "holder_x", "holder_xx", "ucv_qv1", "ucv_qv2", "ucv_tv", "config_hash"])
        .map_err(csv_err)?;
    let mut pairs_csv = csv::Writer::from_path(name("lift_pairs", "csv")).map_err(csv_err)?;
    pairs_csv.write_record(["epsilon", "replica", "s", "t", "flavor", "X11", "X12", "X21", "X22", "config_hash"]).map_err(csv_err)?;

    let mut rows = Vec::new();
    let mut per_eps = Vec::new();
    for eps in cfg.epsilons_desc() {
        let start = std::time::Instant::now();
        let sim = Simulator::new(membrane.clone(), cfg.sim_config(eps))?;
        let saved = cfg.output.saved_paths.min(cfg.run.paths) as u64;
        let stored = sim.batch_map(|id| {
            if id >= saved {
                return None;
            }
            let p = sim.simulate_path(id);
            let pairs = PairSet::dyadic(p.n_steps());
            let ito = ito_lift(&p, &pairs).expect("dyadic pairs");
            let strato = strato_lift(&p, &pairs).expect("dyadic pairs");
            let ucv = ucv_diagnostics(&membrane, &p, regime, eps);
            let gap = flavor_gap(&ito, &strato);
            let diag = [&ito, &strato].map(|l| {
                let h = holder_norms(l, HOLDER_GAMMA);
                LiftDiagnostics {
                    replica: id,
                    flavor: l.flavor().name(),
                    chen_defect: chen_max(l, cfg.run.seed, id, CHEN_TRIPLES),
                    flavor_gap: gap,
                    holder_x: h.norm_x,
                    holder_xx: h.norm_xx,
                    ucv_qv: ucv.expected_qv,
                    ucv_tv: ucv.expected_tv,
                }
            });
            Some((p, ito, strato, diag))
        });
        let stored: Vec<_> = stored.into_iter().flatten().collect();
        for (p, ito, strato, diag) in &stored {
            for (k, x) in p.x.iter().enumerate() {
                if k % cfg.output.stride == 0 || k == p.n_steps() {
                    paths_csv
                        .write_record([fmt(eps), p.replica_id.to_string(), k.to_string(), fmt(p.time(k)), fmt(x[0]), fmt(x[1]), hash.clone()])
                        .map_err(csv_err)?;
                }
            }
            for d in diag {
                lift_csv
                    .write_record([
                        fmt(eps),
                        d.replica.to_string(),
                        d.flavor.to_string(),
                        fmt(d.chen_defect),
                        fmt(d.flavor_gap),
                        fmt(HOLDER_GAMMA),
                        fmt(d.holder_x),
                        fmt(d.holder_xx),
                        fmt(d.ucv_qv[0]),
                        fmt(d.ucv_qv[1]),
                        fmt(d.ucv_tv),
                        hash.clone(),
                    ])
                    .map_err(csv_err)?;
            }
            if p.replica_id == 0 {
                for lift in [ito, strato] {
                    for (&(s, t), x) in lift.pair_set().pairs().iter().zip(lift.second_level()) {
                        let mut rec = vec![fmt(eps), "0".into(), s.to_string(), t.to_string(), lift.flavor().name().to_string()];
                        rec.extend([x[0][0], x[0][1], x[1][0], x[1][1]].map(fmt));
                        rec.push(hash.clone());
                        pairs_csv.write_record(rec).map_err(csv_err)?;
                    }
                }
            }
        }
        let summaries = summarize_replicas(&sim);
        let all_diag = stored.iter().flat_map(|s| s.3.iter());
        let holder: Vec<f64> = stored.iter().map(|s| s.3[0].holder_x.powi(4)).collect();
        per_eps.push(EpsilonSummary {
            epsilon: eps,
            dt: sim.config().dt,
            n_steps: sim.n_steps(),
            n_paths: cfg.run.paths,
            chen_defect_max: all_diag.clone().map(|d| d.chen_defect).fold(0.0, f64::max),
            flavor_gap_max: all_diag.map(|d| d.flavor_gap).fold(0.0, f64::max),
            holder_x_p4: if holder.is_empty() { f64::NAN } else { holder.iter().sum::<f64>() / holder.len() as f64 },
        });
        if summaries.len() >= 2 * N_BATCHES {
            let centering = default_centering(regime, None);
            let drift = [0.0; 2];
            rows.push(ConvergenceRow {
                epsilon: eps,
                dt: sim.config().dt,
                n_paths: cfg.run.paths,
                d: mc_estimate_d(&summaries, centering)?,
                a_ito: mc_estimate_area(&summaries, Flavor::Ito, drift)?,
                a_strato: mc_estimate_area(&summaries, Flavor::Stratonovich, drift)?,
                reference: None,
                wall_s: start.elapsed().as_secs_f64(),
            });
        }
    }
    paths_csv.flush()?;
    lift_csv.flush()?;
    pairs_csv.flush()?;
    artifacts::write_table(&name("simulate", "csv"), &rows, cfg, &hash)?;
    let summary = Summary {
        schema: artifacts::SUMMARY_SCHEMA,
        artifact_version: artifacts::ARTIFACT_VERSION,
        command: "simulate",
        config_hash: &hash,
        config: cfg,
        spectral: None,
        rows: rows.iter().map(|r| RowRecord::new(r, cfg.output.wall_clock)).collect(),
        extra: Some(per_eps),
        checks: &[],
        passed: true,
    };
    artifacts::write_json(&name("simulate", "json"), &summary)?;
    let files = ["paths", "lift", "lift_pairs", "simulate"].iter().map(|k| name(k, "csv")).chain([name("simulate", "json")]).collect();
    Ok(Outcome { files, checks: Vec::new(), cache_hit: None })
}

/// `solve`: spectral quantities with residuals, through the cache.
pub fn solve(cfg: &ExperimentConfig, sel: &Selection) -> Result<Outcome, HarnessError> {
    let membrane = prepare(cfg)?;
    let names = checks::resolve(sel, cfg, false)?;
    let (sol, hit) = spectral::solve_cached(cfg, &membrane)?;
    let hash = cfg.hash();
    let results = checks::evaluate(&names, cfg, &sol.report, &[], None);
    let path = cfg.output.dir.join(format!("solve_{}.json", cfg.run.regime.name()));
    write_summary::<()>(&path, "solve", cfg, &hash, Some(&sol.report), &[], None, &results)?;
    Ok(Outcome { files: vec![path], checks: results, cache_hit: Some(hit) })
}

#[allow(clippy::too_many_arguments)]
fn write_summary<X: Serialize>(
    path: &std::path::Path,
    command: &'static str,
    cfg: &ExperimentConfig,
    hash: &str,
    report: Option<&SpectralReport>,
    rows: &[ConvergenceRow<f64>],
    extra: Option<X>,
    results: &[CheckResult],
) -> Result<(), HarnessError> {
    let summary = Summary {
        schema: artifacts::SUMMARY_SCHEMA,
        artifact_version: artifacts::ARTIFACT_VERSION,
        command,
        config_hash: hash,
        config: cfg,
        spectral: report,
        rows: rows.iter().map(|r| RowRecord::new(r, cfg.output.wall_clock)).collect(),
        extra,
        checks: results,
        passed: results.iter().all(|c| c.passed),
    };
    artifacts::write_json(path, &summary)
}

/// Spectral reference plus Monte-Carlo rows over `cfg`'s ε grid.
pub fn mc_rows(cfg: &ExperimentConfig, membrane: &Membrane<f64>) -> Result<(spectral::Solution, bool, Vec<ConvergenceRow<f64>>), HarnessError> {
    let (sol, hit) = spectral::solve_cached(cfg, membrane)?;
    let sampler = sol.sampler(membrane)?;
    let eps = cfg.epsilons_desc();
    let reference = sol.report.reference();
    let rows = homogenize::convergence_table(membrane, &cfg.sim_config(eps[0]), &eps, |e| cfg.dt_for(e), sampler, reference.as_ref())?;
    Ok((sol, hit, rows))
}

/// `D̂` of the averaged SDE at the smallest ε of `cfg`.
fn averaged_estimate(cfg: &ExperimentConfig, membrane: &Membrane<f64>) -> Result<MatrixEstimate<f64>, HarnessError> {
    let eps = *cfg.epsilons_desc().last().expect("validated");
    let mut sim = cfg.sim_config(eps);
    sim.master_seed = sim.master_seed.wrapping_add(1);
    let order = cfg.spectral.outer_order.unwrap_or(10);
    let summaries = homogenize::simulate_averaged_sde(membrane, &sim, order)?;
    Ok(mc_estimate_d(&summaries, Centering::SampleMean)?)
}

fn mc_command(cfg: &ExperimentConfig, sel: &Selection, command: &'static str) -> Result<Outcome, HarnessError> {
    let membrane = prepare(cfg)?;
    let names = checks::resolve(sel, cfg, true)?;
    let (sol, hit, rows) = mc_rows(cfg, &membrane)?;
    let averaged = match cfg.run.regime {
        Regime::Avg if names.contains(&"averaged") => Some(averaged_estimate(cfg, &membrane)?),
        _ => None,
    };
    let hash = cfg.hash();
    let results = checks::evaluate(&names, cfg, &sol.report, &rows, averaged.as_ref());
    let dir = &cfg.output.dir;
    let csv_path = dir.join(format!("{command}_{}.csv", cfg.run.regime.name()));
    let json_path = dir.join(format!("{command}_{}.json", cfg.run.regime.name()));
    artifacts::write_table(&csv_path, &rows, cfg, &hash)?;
    let extra = averaged.map(|a| serde_json::json!({ "averaged_sde_d": a.value, "averaged_sde_d_se": a.stderr }));
    write_summary(&json_path, command, cfg, &hash, Some(&sol.report), &rows, extra, &results)?;
    Ok(Outcome { files: vec![csv_path, json_path], checks: results, cache_hit: Some(hit) })
}

/// `compare`: one ε against the spectral reference.
pub fn compare(cfg: &ExperimentConfig, sel: &Selection) -> Result<Outcome, HarnessError> {
    if cfg.run.epsilons.len() != 1 {
        return Err(HarnessError::Config(format!("compare takes exactly one epsilon, got {}", cfg.run.epsilons.len())));
    }
    mc_command(cfg, sel, "compare")
}

/// `table`: the convergence table over the ε grid.
pub fn table(cfg: &ExperimentConfig, sel: &Selection) -> Result<Outcome, HarnessError> {
    mc_command(cfg, sel, "table")
}
