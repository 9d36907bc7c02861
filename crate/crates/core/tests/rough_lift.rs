mod common;

use common::mean_se;
use helfrich::membrane::{fit_drift_growth, Membrane, ModelParams};
use helfrich::rng::{normal, substream, uniform};
use helfrich::rough_lift::{
    chen_defect, chen_defect_relative, holder_norms, ito_lift, strato_lift, ucv_diagnostics, FullIntervalLift, Flavor, LiftError, PairSet,
    RoughPathLift, UcvAccumulator,
};
use helfrich::scalar::Vec2;
use helfrich::sde_sim::{InitialPosition, PathSample, Regime, SimConfig, Simulator};
use proptest::prelude::*;

fn random_walk(n: usize, seed: u64) -> Vec<Vec2<f64>> {
    let mut rng = substream(seed, 0, 0);
    let mut x = vec![[0.0, 0.0]];
    for _ in 0..n {
        let last = x[x.len() - 1];
        x.push([last[0] + normal::<f64, _>(&mut rng), last[1] + 0.3 * normal::<f64, _>(&mut rng) + 0.01]);
    }
    x
}

fn linear_path(n: usize, t: f64, v: Vec2<f64>) -> Vec<Vec2<f64>> {
    (0..=n).map(|i| [v[0] * t * i as f64 / n as f64, v[1] * t * i as f64 / n as f64]).collect()
}

fn flat_paths(n_paths: usize, seed: u64) -> Vec<PathSample<f64>> {
    let m = Membrane::new(ModelParams::new(0.01, 10.0, 0).unwrap());
    let cfg = SimConfig { regime: Regime::Avg, epsilon: 1.0, horizon: 1.0, dt: 1e-3, n_paths, master_seed: seed, x0: InitialPosition::Point([0.0, 0.0]) };
    Simulator::new(m, cfg).unwrap().batch_simulate()
}

#[test]
fn constant_path_has_zero_lift() {
    let x = vec![[0.4, -1.0]; 17];
    let pairs = PairSet::dyadic(16);
    for flavor in [Flavor::Ito, Flavor::Stratonovich] {
        let lift = RoughPathLift::from_points(x.clone(), 0.1, flavor, &pairs).unwrap();
        assert!(lift.second_level().iter().all(|m| *m == [[0.0; 2]; 2]));
        let h = holder_norms(&lift, 0.4);
        assert_eq!((h.norm_x, h.norm_xx), (0.0, 0.0));
    }
}

#[test]
fn linear_path_closed_forms() {
    let (n, t, v) = (64, 2.0, [1.5, -0.7]);
    let x = linear_path(n, t, v);
    let pairs = PairSet::dyadic(n);
    let ito = RoughPathLift::from_points(x.clone(), t / n as f64, Flavor::Ito, &pairs).unwrap();
    let strato = ito.with_flavor(Flavor::Stratonovich);
    let (i0, s0) = (ito.level2(0, n).unwrap(), strato.level2(0, n).unwrap());
    for i in 0..2 {
        for j in 0..2 {
            let full = v[i] * v[j] * t * t / 2.0;
            assert!((i0[i][j] - full * (n - 1) as f64 / n as f64).abs() < 1e-12);
            assert!((s0[i][j] - full).abs() < 1e-12);
        }
    }
    let gamma = 0.4;
    let h = holder_norms(&ito, gamma);
    let speed = (v[0] * v[0] + v[1] * v[1]).sqrt();
    assert!((h.norm_x - speed * t.powf(1.0 - gamma)).abs() < 1e-12);
}

#[test]
fn chen_relation_on_random_triples() {
    for (k, x) in [random_walk(1024, 1), random_walk(1000, 2)].into_iter().enumerate() {
        let n = x.len() - 1;
        let pairs = PairSet::dyadic(n);
        for flavor in [Flavor::Ito, Flavor::Stratonovich] {
            let lift = RoughPathLift::from_points(x.clone(), 1e-3, flavor, &pairs).unwrap();
            let mut rng = substream(3, k as u64, 0);
            let mut worst: f64 = 0.0;
            for _ in 0..200 {
                let mut idx: Vec<usize> = (0..3).map(|_| (uniform::<f64, _>(&mut rng) * (n + 1) as f64) as usize).collect();
                idx.sort();
                worst = worst.max(chen_defect_relative(&lift, idx[0], idx[1], idx[2]).unwrap());
            }
            assert!(worst <= 1e-10, "{flavor:?} defect {worst:e}");
        }
    }
}

#[test]
fn chen_rejects_unordered_triples() {
    let lift = RoughPathLift::from_points(random_walk(8, 4), 0.1, Flavor::Ito, &PairSet::dyadic(8)).unwrap();
    assert_eq!(chen_defect(&lift, 3, 2, 5), Err(LiftError::Unordered { r: 3, s: 2, t: 5 }));
    assert!(matches!(lift.level2(2, 9), Err(LiftError::OffGrid { .. })));
    assert!(matches!(PairSet::from_pairs(8, vec![(3, 3)]), Err(LiftError::OffGrid { .. })));
}

#[test]
fn flavor_gap_is_half_bracket() {
    let x = random_walk(512, 5);
    let pairs = PairSet::dyadic(512);
    let ito = RoughPathLift::from_points(x.clone(), 1e-3, Flavor::Ito, &pairs).unwrap();
    let strato = ito.with_flavor(Flavor::Stratonovich);
    for (k, &(s, t)) in pairs.pairs().iter().enumerate() {
        let (a, b) = (ito.second_level()[k], strato.second_level()[k]);
        let hb = ito.half_bracket(s, t).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let scale = a[i][j].abs().max(b[i][j].abs()).max(1.0);
                assert!((b[i][j] - a[i][j] - hb[i][j]).abs() <= 1e-12 * scale);
            }
        }
        let area_ito = a[0][1] - a[1][0];
        let area_strato = b[0][1] - b[1][0];
        assert!((area_ito - area_strato).abs() <= 1e-12 * area_ito.abs().max(1.0));
    }
}

#[test]
fn holder_norms_do_not_grow_under_coarsening() {
    let x = random_walk(1024, 6);
    let pairs = PairSet::dyadic(1024);
    let mut lift = RoughPathLift::from_points(x.clone(), 1e-3, Flavor::Ito, &pairs).unwrap();
    let mut prev = holder_norms(&lift, 0.45);
    for _ in 0..8 {
        let coarse = lift.pair_set().coarsen();
        assert!(coarse.len() < lift.pair_set().len());
        lift = RoughPathLift::from_points(x.clone(), 1e-3, Flavor::Ito, &coarse).unwrap();
        let h = holder_norms(&lift, 0.45);
        assert!(h.norm_x <= prev.norm_x && h.norm_xx <= prev.norm_xx);
        assert!(h.norm_x >= 0.0 && h.norm_xx >= 0.0);
        prev = h;
    }
}

#[test]
fn flat_ito_area_is_centred() {
    let paths = flat_paths(10_000, 7);
    let full = PairSet::from_pairs(1000, vec![(0, 1000)]).unwrap();
    let off: Vec<f64> = paths.iter().map(|p| ito_lift(p, &full).unwrap().second_level()[0][0][1]).collect();
    let (m, se) = mean_se(&off);
    assert!(m.abs() < 3.0 * se);
    let p = &paths[0];
    assert_eq!(strato_lift(p, &full).unwrap().flavor(), Flavor::Stratonovich);
}

#[test]
fn flat_holder_moment_is_finite_and_epsilon_stable() {
    let m = Membrane::new(ModelParams::new(0.01, 10.0, 0).unwrap());
    let moments: Vec<(f64, f64)> = [0.5, 0.25, 0.125]
        .iter()
        .enumerate()
        .map(|(k, &eps)| {
            let cfg = SimConfig { regime: Regime::Avg, epsilon: eps, horizon: 1.0, dt: 1e-3, n_paths: 2000, master_seed: 30 + k as u64, x0: InitialPosition::Point([0.0, 0.0]) };
            let sim = Simulator::new(m.clone(), cfg).unwrap();
            let pairs = PairSet::dyadic(sim.n_steps());
            let p4: Vec<f64> = sim.batch_map(|id| holder_norms(&ito_lift(&sim.simulate_path(id), &pairs).unwrap(), 0.4f64).norm_x.powi(4));
            mean_se(&p4)
        })
        .collect();
    for &(m4, se) in &moments {
        assert!(m4.is_finite() && se.is_finite() && m4 > 0.0);
    }
    for w in moments.windows(2) {
        let (a, b) = (w[0], w[1]);
        assert!((a.0 - b.0).abs() < 3.0 * (a.1 * a.1 + b.1 * b.1).sqrt(), "{a:?} vs {b:?}");
    }
}

#[test]
fn flat_ucv_diagnostics() {
    let m = Membrane::new(ModelParams::new(0.01, 10.0, 0).unwrap());
    let p = &flat_paths(1, 8)[0];
    let r = ucv_diagnostics(&m, p, Regime::Avg, 1.0);
    assert_eq!(r.expected_tv, 0.0);
    assert!((r.expected_qv[0] - 2.0).abs() < 1e-9 && (r.expected_qv[1] - 2.0).abs() < 1e-9);
}

#[test]
fn ucv_bounds_in_the_averaging_regime() {
    let m = Membrane::new(ModelParams::new(0.01, 10.0, 1).unwrap());
    let mut tvs = Vec::new();
    for (k, eps) in [0.5, 0.25, 0.125].into_iter().enumerate() {
        let cfg = SimConfig { regime: Regime::Avg, epsilon: eps, horizon: 1.0, dt: 1e-3, n_paths: 400, master_seed: 40 + k as u64, x0: InitialPosition::Stationary };
        let sim = Simulator::new(m.clone(), cfg).unwrap();
        let paths = sim.batch_simulate();
        let samples: Vec<(Vec2<f64>, Vec<f64>)> = paths.iter().flat_map(|p| (0..p.n_steps()).step_by(50).map(|u| (p.y(u), p.eta(u).to_vec()))).collect();
        let c = fit_drift_growth(&m, &samples);
        let tv: Vec<f64> = paths.iter().map(|p| ucv_diagnostics(&m, p, Regime::Avg, eps).expected_tv).collect();
        let eta0: Vec<f64> = paths.iter().map(|p| p.eta(0).iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
        let (mean_tv, se) = mean_se(&tv);
        let (mean_eta, _) = mean_se(&eta0);
        assert!(mean_tv <= c * (1.0 + mean_eta) + 3.0 * se, "tv {mean_tv} vs bound {}", c * (1.0 + mean_eta));
        let qv: Vec<f64> = paths.iter().map(|p| ucv_diagnostics(&m, p, Regime::Avg, eps).expected_qv[0]).collect();
        assert!(qv.iter().all(|&q| q > 0.0 && q <= 2.0 + 1e-12));
        tvs.push(mean_tv);
    }
    let spread = tvs.iter().cloned().fold(0.0, f64::max) / tvs.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread < 1.5, "tv not uniform in epsilon: {tvs:?}");
}

#[test]
fn drift_variation_grows_like_inverse_epsilon_in_fast_regime() {
    let m = Membrane::new(ModelParams::new(0.01, 10.0, 1).unwrap());
    let tv = |eps: f64, seed: u64| {
        let dt = 1e-2 * eps * eps;
        let cfg = SimConfig { regime: Regime::Hom12, epsilon: eps, horizon: 0.25, dt, n_paths: 200, master_seed: seed, x0: InitialPosition::Stationary };
        let sim = Simulator::new(m.clone(), cfg).unwrap();
        let v: Vec<f64> = sim.batch_map(|id| {
            let mut acc = UcvAccumulator::new(dt, Regime::Hom12, eps);
            sim.run(id, &mut acc);
            acc.report().expected_tv
        });
        mean_se(&v).0
    };
    let ratio = tv(0.125, 51) / tv(0.25, 50);
    assert!((ratio - 2.0).abs() < 0.3, "ratio {ratio}");
}

#[test]
fn streaming_lift_matches_stored_lift() {
    let m = Membrane::new(ModelParams::new(0.01, 10.0, 1).unwrap());
    let cfg = SimConfig { regime: Regime::Hom11, epsilon: 0.5, horizon: 0.1, dt: 2.5e-4, n_paths: 1, master_seed: 9, x0: InitialPosition::Stationary };
    let sim = Simulator::new(m, cfg).unwrap();
    let path = sim.simulate_path(0);
    let mut acc = FullIntervalLift::default();
    sim.run(0, &mut acc);
    let n = path.n_steps();
    let full = PairSet::from_pairs(n, vec![(0, n)]).unwrap();
    for flavor in [Flavor::Ito, Flavor::Stratonovich] {
        let stored: [[f64; 2]; 2] = RoughPathLift::from_points(path.x.clone(), path.dt, flavor, &full).unwrap().second_level()[0];
        let streamed = acc.level2(flavor);
        for i in 0..2 {
            for j in 0..2 {
                assert!((stored[i][j] - streamed[i][j]).abs() < 1e-12);
            }
        }
    }
    let inc = acc.increment();
    assert_eq!(inc, [path.x[n][0] - path.x[0][0], path.x[n][1] - path.x[0][1]]);
}

proptest! {
    #[test]
    fn lift_invariants(seed in 0u64..5000, n in 2usize..200, r in 0usize..200, s in 0usize..200, t in 0usize..200) {
        let x = random_walk(n, seed);
        let mut idx = [r % (n + 1), s % (n + 1), t % (n + 1)];
        idx.sort();
        let [r, s, t] = idx;
        let pairs = PairSet::dyadic(n);
        let lift = RoughPathLift::from_points(x, 1.0, Flavor::Stratonovich, &pairs).unwrap();
        prop_assert!(chen_defect_relative(&lift, r, s, t).unwrap() <= 1e-10);
        let (a, b, c) = (lift.increment(r, s).unwrap(), lift.increment(s, t).unwrap(), lift.increment(r, t).unwrap());
        for i in 0..2 {
            prop_assert!((a[i] + b[i] - c[i]).abs() <= 1e-12 * (a[i].abs() + b[i].abs()).max(1.0));
        }
        let m = lift.level2(r, t).unwrap();
        let anti = [m[0][1] - m[1][0], m[1][0] - m[0][1]];
        prop_assert_eq!(anti[0], -anti[1]);
    }
}
