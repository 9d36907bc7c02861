//! End-to-end acceptance suite. Each criterion prints one PASS/FAIL line on
//! stderr; the test fails if any criterion fails.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use helfrich::fourier::FourierGrid;
use helfrich::homogenize::{default_centering, mc_estimate_area, mc_estimate_d, summarize_replicas, Centering, MatrixEstimate};
use helfrich::membrane::{fit_drift_growth, Membrane, ModelParams};
use helfrich::ou_process::sample_stationary;
use helfrich::poisson_spectral::frozen::l0_at;
use helfrich::poisson_spectral::oracle::{resolvent_oracle, FastDynamics, ResolventOptions};
use helfrich::poisson_spectral::{solve_chi_fixed_eta, FrozenOperator, FrozenSolveOptions, HermiteFourierBasis};
use helfrich::rng::{normal, substream, uniform, StreamRng};
use helfrich::rough_lift::{holder_norms, ito_lift, strato_lift, Flavor, PairSet};
use helfrich::scalar::Vec2;
use helfrich::sde_sim::{InitialPosition, Regime, RhoYSampler, SimConfig, Simulator};
use helfrich_cli::commands::{chen_max, flavor_gap, mc_rows, CHEN_TRIPLES, HOLDER_GAMMA};
use helfrich_cli::config::ExperimentConfig;
use helfrich_cli::spectral::{solve_cached, Solution, Status};
use num_complex::Complex;
use tempfile::TempDir;

type C = Complex<f64>;
type Mat2 = [[f64; 2]; 2];

const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];
const ZERO: Mat2 = [[0.0; 2]; 2];
const K_SE: f64 = 3.0;

#[derive(Default)]
struct Suite {
    failed: Vec<String>,
}

impl Suite {
    fn record(&mut self, name: &str, passed: bool, detail: String) {
        let _ = writeln!(std::io::stderr().lock(), "{} {name}: {detail}", if passed { "PASS" } else { "FAIL" });
        if !passed {
            self.failed.push(name.to_string());
        }
    }
}

fn within(elapsed: Duration, limit_s: u64) -> (bool, String) {
    (elapsed.as_secs() <= limit_s, format!("{:.1} s of {limit_s} s", elapsed.as_secs_f64()))
}

fn reference(cutoff: u32) -> Membrane<f64> {
    Membrane::new(ModelParams::new(0.01, 10.0, cutoff).unwrap())
}

fn stationary_eta(m: &Membrane<f64>, rng: &mut StreamRng) -> Vec<f64> {
    sample_stationary(m.modes(), m.spectra(), rng).coords
}

fn random_point(rng: &mut StreamRng) -> Vec2<f64> {
    [uniform(rng), uniform(rng)]
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

fn max_abs(a: Mat2) -> f64 {
    a.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
}

/// Largest `|value − target| / stderr` over entries.
fn z_score(e: &MatrixEstimate<f64>, target: Mat2) -> f64 {
    let mut z: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let d = (e.value[i][j] - target[i][j]).abs();
            z = z.max(if e.stderr[i][j] > 0.0 { d / e.stderr[i][j] } else if d == 0.0 { 0.0 } else { f64::INFINITY });
        }
    }
    z
}

fn config(regime: Regime, out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.run.regime = regime;
    cfg.output.dir = out.to_path_buf();
    cfg
}

fn chen_and_flavor(s: &mut Suite) {
    let mut chen: f64 = 0.0;
    let mut gap: f64 = 0.0;
    let mut area_gap: f64 = 0.0;
    let mut lifts = 0;
    let cases = [(0, Regime::Avg, 1e-3), (1, Regime::Hom11, 1e-3 * 0.0625), (1, Regime::Hom12, 1e-3 * 0.0625)];
    for (k, &(cutoff, regime, dt)) in cases.iter().enumerate() {
        let x0 = if regime == Regime::Avg { InitialPosition::Point([0.0, 0.0]) } else { InitialPosition::Stationary };
        let cfg = SimConfig { regime, epsilon: 0.25, horizon: 1.0, dt, n_paths: 4, master_seed: 500 + k as u64, x0 };
        let sim = Simulator::new(reference(cutoff), cfg).unwrap();
        let pairs = PairSet::dyadic(sim.n_steps());
        for id in 0..4u64 {
            let path = sim.simulate_path(id);
            let ito = ito_lift(&path, &pairs).unwrap();
            let strato = strato_lift(&path, &pairs).unwrap();
            chen = chen.max(chen_max(&ito, 500, id, CHEN_TRIPLES)).max(chen_max(&strato, 501, id, CHEN_TRIPLES));
            gap = gap.max(flavor_gap(&ito, &strato));
            for &(a, b) in pairs.pairs() {
                let (li, ls) = (ito.level2(a, b).unwrap(), strato.level2(a, b).unwrap());
                area_gap = area_gap.max(((li[0][1] - li[1][0]) - (ls[0][1] - ls[1][0])).abs());
            }
            lifts += 2;
        }
    }
    s.record("chen", chen <= 1e-10, format!("max relative defect {chen:e} over {lifts} lifts, {CHEN_TRIPLES} triples each (limit 1e-10)"));
    s.record("flavor_gap", gap <= 1e-12 && area_gap <= 1e-12, format!("bracket defect {gap:e}, area difference {area_gap:e} (limit 1e-12)"));
}

fn flat_collapse(s: &mut Suite) {
    let start = Instant::now();
    let flat = reference(0);
    let base = SimConfig { regime: Regime::Avg, epsilon: 1.0, horizon: 1.0, dt: 1e-3, n_paths: 10_000, master_seed: 600, x0: InitialPosition::Point([0.0, 0.0]) };
    let sim = Simulator::new(flat.clone(), base.clone()).unwrap();
    let summaries = summarize_replicas(&sim);
    let d = mc_estimate_d(&summaries, Centering::Drift([0.0, 0.0])).unwrap();
    let a = mc_estimate_area(&summaries, Flavor::Ito, [0.0, 0.0]).unwrap();
    let (zd, za) = (z_score(&d, IDENTITY), z_score(&a, ZERO));

    let moments: Vec<(f64, f64)> = [0.5, 0.25, 0.125]
        .iter()
        .enumerate()
        .map(|(k, &eps)| {
            let cfg = SimConfig { epsilon: eps, master_seed: 610 + k as u64, ..base.clone() };
            let sim = Simulator::new(flat.clone(), cfg).unwrap();
            let pairs = PairSet::dyadic(sim.n_steps());
            let p4 = sim.batch_map(|id| holder_norms(&ito_lift(&sim.simulate_path(id), &pairs).unwrap(), HOLDER_GAMMA).norm_x.powi(4));
            mean_se(&p4)
        })
        .collect();
    let finite = moments.iter().all(|(m, se)| m.is_finite() && se.is_finite() && *m > 0.0);
    let stable = moments.windows(2).map(|w| (w[0].0 - w[1].0).abs() / w[0].1.hypot(w[1].1)).fold(0.0, f64::max);
    let (fast, time) = within(start.elapsed(), 60);
    let detail = format!(
        "D z {zd:.2}, Ito area z {za:.2}, Hölder p4 {:?}, largest pairwise z {stable:.2} (limit {K_SE}); {time}",
        moments.iter().map(|m| format!("{:.4}±{:.4}", m.0, m.1)).collect::<Vec<_>>()
    );
    s.record("flat_collapse", zd <= K_SE && za <= K_SE && finite && stable <= K_SE && fast, detail);
}

fn fd_grad(m: &Membrane<f64>, x: Vec2<f64>, eta: &[f64], d: f64) -> Vec2<f64> {
    let h = |p: Vec2<f64>| m.height(p, eta);
    [(h([x[0] + d, x[1]]) - h([x[0] - d, x[1]])) / (2.0 * d), (h([x[0], x[1] + d]) - h([x[0], x[1] - d])) / (2.0 * d)]
}

/// `(1/√g) Σ_j ∂_j(√g Σ_ij)` by central differences.
fn fd_drift(m: &Membrane<f64>, x: Vec2<f64>, eta: &[f64], d: f64) -> Vec2<f64> {
    let w = |p: Vec2<f64>| {
        let s = m.sigma(p, eta).to_mat();
        let r = m.det_g(p, eta).sqrt();
        [[r * s[0][0], r * s[0][1]], [r * s[1][0], r * s[1][1]]]
    };
    let (px, mx) = (w([x[0] + d, x[1]]), w([x[0] - d, x[1]]));
    let (py, my) = (w([x[0], x[1] + d]), w([x[0], x[1] - d]));
    let r = m.det_g(x, eta).sqrt();
    let mut f = [0.0; 2];
    for i in 0..2 {
        f[i] = ((px[i][0] - mx[i][0]) + (py[i][1] - my[i][1])) / (2.0 * d * r);
    }
    f
}

fn membrane_oracles(s: &mut Suite) {
    let (mut grad_err, mut drift_err, mut metric_err): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut growth = Vec::new();
    for cutoff in [1, 2] {
        let m = reference(cutoff);
        let mut rng = substream(700, cutoff as u64, 0);
        for _ in 0..1000 {
            let eta: Vec<f64> = (0..m.dim()).map(|_| 0.05 * (2.0 * uniform::<f64, _>(&mut rng) - 1.0)).collect();
            let x = random_point(&mut rng);
            let (g, gf) = (m.grad_height(x, &eta), fd_grad(&m, x, &eta, 1e-5));
            let (f, ff) = (m.drift_f(x, &eta), fd_drift(&m, x, &eta, 1e-5));
            for i in 0..2 {
                grad_err = grad_err.max((g[i] - gf[i]).abs());
                drift_err = drift_err.max((f[i] - ff[i]).abs() / f[i].abs().max(1.0));
            }
        }
        let samples: Vec<(Vec2<f64>, Vec<f64>)> = (0..10_000)
            .map(|_| {
                let eta = stationary_eta(&m, &mut rng);
                (random_point(&mut rng), eta)
            })
            .collect();
        for (x, eta) in &samples {
            let geo = m.geometry(*x, eta);
            let sig = geo.sigma().to_mat();
            let p = geo.grad;
            let metric = [[1.0 + p[0] * p[0], p[0] * p[1]], [p[1] * p[0], 1.0 + p[1] * p[1]]];
            for i in 0..2 {
                for j in 0..2 {
                    let prod = sig[i][0] * metric[0][j] + sig[i][1] * metric[1][j];
                    metric_err = metric_err.max((prod - IDENTITY[i][j]).abs());
                }
            }
        }
        growth.push((fit_drift_growth(&m, &samples), m.drift_growth_bound()));
    }
    let fd_ok = grad_err <= 1e-6 && drift_err <= 1e-6;
    s.record("membrane_fd", fd_ok, format!("grad_height {grad_err:e}, drift_F {drift_err:e} over 2×10³ points (limit 1e-6)"));
    s.record("membrane_sigma", metric_err <= 1e-14, format!("max |Σ(I+∇h∇hᵀ) − I| {metric_err:e} over 2×10⁴ samples (limit 1e-14)"));
    let growth_ok = growth.iter().all(|(c, bound)| c.is_finite() && c <= bound);
    s.record("membrane_growth", growth_ok, format!("fitted C vs analytic bound {growth:?}"));
}

fn random_field(grid: &FourierGrid<f64>, rng: &mut StreamRng) -> Vec<C> {
    let mut c: Vec<C> = grid.modes().iter().map(|_| C::new(normal(rng), normal(rng))).collect();
    let n = c.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    c.iter_mut().for_each(|v| *v /= n);
    c
}

/// `∫ u √g dy / ∫ √g dy` on an independent 96² trapezoid grid.
fn rho_average(m: &Membrane<f64>, eta: &[f64], u: impl Fn(Vec2<f64>) -> C) -> C {
    let n = 96;
    let (mut num, mut den) = (C::new(0.0, 0.0), 0.0);
    for i in 0..n {
        for j in 0..n {
            let y = [i as f64 / n as f64, j as f64 / n as f64];
            let w = m.det_g(y, eta).sqrt();
            num += u(y) * w;
            den += w;
        }
    }
    num / den
}

fn rho_y(s: &mut Suite) {
    let m = reference(1);
    let mut rng = substream(800, 0, 0);
    let grid = FourierGrid::new(3);
    let (mut l0_mean, mut f_mean): (f64, f64) = (0.0, 0.0);
    for _ in 0..20 {
        let eta = stationary_eta(&m, &mut rng);
        let f = random_field(&grid, &mut rng);
        l0_mean = l0_mean.max(rho_average(&m, &eta, |y| l0_at(&m, &eta, &grid, &f, y)).norm());
        let op = FrozenOperator::new(&m, &eta, FourierGrid::new(16)).unwrap();
        let nodes = op.rho_nodes().len() as f64;
        for comp in 0..2 {
            let mf: f64 = op.rho_nodes().iter().zip(op.drift_nodes()).map(|(r, f)| r * f[comp]).sum::<f64>() / nodes;
            f_mean = f_mean.max(mf.abs());
        }
    }
    s.record("rho_y", l0_mean <= 1e-8 && f_mean <= 1e-10, format!("max <L0 f> {l0_mean:e} (limit 1e-8), max <F> {f_mean:e} (limit 1e-10)"));
}

fn frozen_cell(s: &mut Suite) {
    let m = reference(1);
    let mut rng = substream(900, 0, 0);
    let (mut residual, mut worst_z): (f64, f64) = (0.0, 0.0);
    for probe in 0..5u64 {
        let eta = stationary_eta(&m, &mut rng);
        let y = random_point(&mut rng);
        let sol = solve_chi_fixed_eta(&m, &eta, &FrozenSolveOptions::default()).unwrap();
        residual = residual.max(sol.solver_residual);
        let chi = sol.value_at(y);
        let est = resolvent_oracle(&m, y, &eta, FastDynamics::Frozen, &ResolventOptions { seed: 900 + probe, ..ResolventOptions::default() });
        for i in 0..2 {
            let excess = ((est.value[i] - chi[i]).abs() - est.truncation_bound).max(0.0);
            worst_z = worst_z.max(excess / est.stderr[i]);
        }
    }
    s.record("frozen_residual", residual <= 1e-8, format!("largest residual {residual:e} over 5 states (limit 1e-8)"));
    s.record("frozen_oracle", worst_z <= K_SE, format!("largest |chi − oracle| {worst_z:.2} standard errors at 5 probes (limit {K_SE})"));
}

/// Joint cell problem at `(6, 4)`, its density checks, and the regime
/// (1,2) Monte-Carlo protocol.
fn regime12(s: &mut Suite, out: &Path, cell_start: Instant) {
    let cfg = config(Regime::Hom12, out);
    let m = reference(1);
    let (sol, _) = solve_cached(&cfg, &m).unwrap();
    let r = &sol.report;
    let converged = r.status == Status::Ok && r.residuals.solver_residual <= 1e-6;
    let reported = r.status == Status::Failed && !r.trace.is_empty() && r.error.is_some();
    let (fast, time) = within(cell_start.elapsed(), 600);
    let outcome = if converged { "converged".to_string() } else { format!("reported failure: {}", r.error.clone().unwrap_or_default()) };
    s.record(
        "joint_residual",
        (converged || reported) && fast,
        format!("(M,d)=({},{:?}) residual {:e}, {outcome}, trace of {} steps; cell problems {time}", r.fourier_order, r.hermite_degree, r.residuals.solver_residual, r.trace.len()),
    );

    centering(s, &sol, &m);

    let start = Instant::now();
    let mut cfg = cfg;
    cfg.run.seed = 1200;
    let (sol, hit, rows) = mc_rows(&cfg, &m).unwrap();
    assert!(hit, "spectral solution reused from the cache");
    let q = sol.report.quantities.as_ref().expect("regime (1,2) quantities");
    let last = rows.last().unwrap();
    let z = z_score(&last.a_ito, q.a_ito);
    let errs: Vec<String> = rows.iter().map(|r| format!("{:.4e}±{:.1e}", r.a_ito.frobenius_error(q.a_ito).0, r.a_ito.frobenius_error(q.a_ito).1)).collect();
    let (fast, time) = within(start.elapsed(), 45 * 60);
    s.record(
        "trend_hom12_ito_area",
        z <= K_SE && fast,
        format!("z {z:.2} at epsilon {} (limit {K_SE}); Frobenius errors {}; {time}", last.epsilon, errs.join(" > ")),
    );
}

fn centering(s: &mut Suite, sol: &Solution, m: &Membrane<f64>) {
    let stored = sol.density.as_ref().expect("Galerkin density");
    let basis = HermiteFourierBasis::new(m, stored.fourier_order, stored.degree).unwrap();
    let density = stored.to_density();
    let mean = basis.forcing().iter().map(|f| basis.expectation(f, &density).unwrap().abs()).fold(0.0, f64::max);
    let z = basis.grid().zero_index();
    let coeffs = match &density {
        helfrich::poisson_spectral::InvariantDensity::GalerkinGEta { coeffs, .. } => coeffs.clone(),
        _ => unreachable!("stored densities are Galerkin"),
    };
    let normalised = (coeffs[basis.index(z, 0)] - 1.0).norm();
    let marginal = (1..basis.n_hermite()).map(|h| coeffs[basis.index(z, h)].norm()).fold(0.0, f64::max);
    s.record("centering_rho", mean <= 1e-6, format!("max <F>_rho {mean:e} (limit 1e-6)"));
    s.record(
        "eta_marginal",
        marginal <= 1e-8 && normalised <= 1e-8,
        format!("largest Hermite coefficient beyond degree 0 {marginal:e}, |c0 − 1| {normalised:e} (limit 1e-8)"),
    );
}

fn regime11(s: &mut Suite, out: &Path) {
    let start = Instant::now();
    let cfg = config(Regime::Hom11, out);
    let m = reference(1);
    let (sol, _) = solve_cached(&cfg, &m).unwrap();
    let r = &sol.report;
    let q = r.quantities.as_ref().expect("regime (1,1) quantities");
    let dirichlet = max_abs(q.a_strato);
    let chi_f = dirichlet + r.residuals.a_strato_gap;
    let l = q.l.expect("regime (1,1) drift");
    let l_max = l[0].abs().max(l[1].abs());
    s.record("drift_vanish", l_max <= 1e-5, format!("max |L| {l_max:e} (limit 1e-5)"));

    let reference = r.reference().unwrap();
    let centre = default_centering(Regime::Hom11, Some(&reference));
    let drift = l;
    let simulate = |eps: f64, paths: usize| {
        let mut c = cfg.clone();
        c.run.paths = paths;
        c.run.seed = 1100;
        let sim = Simulator::with_sampler(m.clone(), c.sim_config(eps), Arc::new(RhoYSampler)).unwrap();
        summarize_replicas(&sim)
    };
    let small = simulate(0.125, 20_000);
    let area = mc_estimate_area(&small, Flavor::Stratonovich, drift).unwrap();
    let z = z_score(&area, ZERO);
    let (fast, time) = within(start.elapsed(), 15 * 60);
    s.record(
        "area_vanish",
        dirichlet <= 1e-6 && chi_f <= 1e-6 && z <= K_SE && fast,
        format!("spectral |Ã| {dirichlet:e} / {chi_f:e} (limit 1e-6); MC z {z:.2} at epsilon 0.125 with {} paths (limit {K_SE}); {time}", small.len()),
    );

    let start = Instant::now();
    let mut estimates: Vec<(f64, MatrixEstimate<f64>)> = Vec::new();
    for eps in [0.5, 0.25] {
        estimates.push((eps, mc_estimate_d(&simulate(eps, 10_000), centre).unwrap()));
    }
    estimates.push((0.125, mc_estimate_d(&small[..10_000], centre).unwrap()));
    let errs: Vec<(f64, f64)> = estimates.iter().map(|(_, e)| e.frobenius_error(q.d)).collect();
    let monotone = errs.windows(2).all(|w| w[1].0 - w[1].1 <= w[0].0 + w[0].1);
    let norm = q.d.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    let rel = errs.last().unwrap().0 / norm;
    let (fast, time) = within(start.elapsed(), 45 * 60);
    let trace: Vec<String> = estimates.iter().zip(&errs).map(|((eps, _), (e, se))| format!("{eps}: {e:.4e}±{se:.1e}")).collect();
    s.record(
        "trend_hom11_d",
        monotone && rel <= 0.2 && fast,
        format!("Frobenius errors {}; relative {rel:.3} at 0.125 (limit 0.2); {time}", trace.join(", ")),
    );
}

fn run_binary(args: &[&str]) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_helfrich"));
    for (k, _) in std::env::vars() {
        if k.starts_with("HELFRICH_") {
            cmd.env_remove(k);
        }
    }
    let o = cmd.args(args).output().expect("binary runs");
    assert!(matches!(o.status.code(), Some(0 | 2)), "{}", String::from_utf8_lossy(&o.stderr));
}

fn artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv" || e == "json"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn determinism(s: &mut Suite, root: &Path) {
    let runs: [&[&str]; 3] = [
        &["simulate", "--regime", "hom11", "--paths", "40", "--epsilons", "0.5,0.25", "--horizon", "0.1"],
        &["table", "--regime", "hom12", "--paths", "60", "--epsilons", "0.5,0.25", "--horizon", "0.1", "--fourier-modes", "3", "--hermite-degree", "2"],
        &["table", "--regime", "avg", "--cutoff", "0", "--paths", "200", "--epsilons", "0.5"],
    ];
    let mut identical = true;
    let mut count = 0;
    for (k, args) in runs.iter().enumerate() {
        let collect = |workers: &str| {
            let out = root.join(format!("det{k}_w{workers}"));
            let mut full = args.to_vec();
            full.extend(["--seed", "77", "--workers", workers, "--out", out.to_str().unwrap()]);
            run_binary(&full);
            artifacts(&out)
        };
        let (a, b) = (collect("1"), collect("2"));
        identical &= !a.is_empty() && a == b;
        count += a.len();
    }
    s.record("determinism", identical, format!("{count} CSV/JSON artifacts compared between 1 and 2 workers"));
}

#[test]
fn acceptance() {
    let dir = TempDir::new().unwrap();
    let mut s = Suite::default();
    chen_and_flavor(&mut s);
    flat_collapse(&mut s);
    membrane_oracles(&mut s);
    rho_y(&mut s);
    let cell_start = Instant::now();
    frozen_cell(&mut s);
    regime12(&mut s, dir.path(), cell_start);
    regime11(&mut s, dir.path());
    determinism(&mut s, dir.path());
    assert!(s.failed.is_empty(), "failed criteria: {:?}", s.failed);
}
