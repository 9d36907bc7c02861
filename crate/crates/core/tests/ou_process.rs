mod common;

use common::{ks_critical, ks_normal, mean_se, ols_slope};
use helfrich::hermite::{HermiteBasis, MultiIndexSet};
use helfrich::membrane::{build_mode_set, spectra, Membrane, ModelParams, SurfaceState};
use helfrich::ou_process::{apply_generator_eta, exact_step, generator_eta_fd, sample_stationary, OUStepper};
use helfrich::rng::{normal, substream};
use proptest::prelude::*;

fn unit_membrane() -> Membrane<f64> {
    Membrane::new(ModelParams::new(1.0, 1.0, 1).unwrap())
}

/// Coordinate `Re η^(1,0)` at cutoff 1.
const RE_10: usize = 2;

#[test]
fn empty_mode_set_gives_empty_state() {
    let m = Membrane::new(ModelParams::new(1.0, 1.0, 0).unwrap());
    let s = sample_stationary(m.modes(), m.spectra(), &mut substream(1, 0, 0));
    assert!(s.coords.is_empty());
}

#[test]
fn stationary_moments() {
    let m = unit_membrane();
    let mut rng = substream(2, 0, 0);
    let n = 100_000;
    let mut cols = vec![Vec::with_capacity(n); m.dim()];
    for _ in 0..n {
        let s = sample_stationary(m.modes(), m.spectra(), &mut rng);
        for (c, v) in cols.iter_mut().zip(&s.coords) {
            c.push(*v);
        }
    }
    let var = m.spectra().coord_variances(m.modes());
    assert!((var[RE_10] - 3.1289e-4).abs() < 1e-8);
    for (c, v) in cols.iter().zip(&var) {
        let (mean, se) = mean_se(c);
        assert!(mean.abs() < 3.0 * se);
        let sq: Vec<f64> = c.iter().map(|x| x * x).collect();
        let (m2, se2) = mean_se(&sq);
        assert!((m2 - v).abs() < 3.0 * se2, "variance {m2} vs {v}");
    }
}

#[test]
fn vanishing_step_is_identity() {
    let m = unit_membrane();
    let stepper = OUStepper::new(m.modes(), m.spectra(), 0.0, 1.0);
    let state = SurfaceState { coords: vec![0.01, -0.02, 0.03, 0.0] };
    let next = exact_step(&state, 1e-300, &stepper, &mut substream(3, 0, 0));
    assert_eq!(next, state);
}

#[test]
fn long_step_forgets_initial_state() {
    let m = unit_membrane();
    let stepper = OUStepper::new(m.modes(), m.spectra(), 0.0, 1.0);
    let r = stepper.rates()[RE_10];
    let v = stepper.variances()[RE_10];
    let start = SurfaceState { coords: vec![0.1; 4] };
    let mut rng = substream(4, 0, 0);
    let xs: Vec<f64> = (0..10_000).map(|_| exact_step(&start, 20.0 / r, &stepper, &mut rng).coords[RE_10]).collect();
    assert!(ks_normal(&xs, v) < ks_critical(xs.len() as f64));
}

/// Correlation of `c_0` and `c_s` from stationary starts.
fn lagged_products(stepper: &OUStepper<f64>, m: &Membrane<f64>, lag: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = substream(seed, 0, 0);
    (0..n)
        .map(|_| {
            let s0 = sample_stationary(m.modes(), m.spectra(), &mut rng);
            let s1 = exact_step(&s0, lag, stepper, &mut rng);
            s0.coords[RE_10] * s1.coords[RE_10]
        })
        .collect()
}

#[test]
fn autocovariance_and_spectral_gap() {
    let m = unit_membrane();
    for (beta, eps) in [(0.0, 1.0), (2.0, 0.5)] {
        let stepper = OUStepper::new(m.modes(), m.spectra(), beta, eps);
        let r = stepper.rates()[RE_10];
        assert!((r - m.spectra().gamma[m.modes().coord_wavevector(RE_10)] / f64::powf(eps, beta)).abs() < 1e-9 * r);
        let v = stepper.variances()[RE_10];
        for s in [0.1, 0.5] {
            let prods = lagged_products(&stepper, &m, s / r, 10_000, 5 + (10.0 * s) as u64);
            let (cov, se) = mean_se(&prods);
            assert!((cov - v * (-s).exp()).abs() < 3.0 * se, "cov {cov} vs {}", v * (-s).exp());
            if s == 0.5 {
                let rate = -(cov / v).ln() / (s / r);
                assert!((rate / r - 1.0).abs() < 0.1, "rate {rate} vs {r}");
            }
        }
    }
}

#[test]
fn step_composition_matches_single_step() {
    let m = unit_membrane();
    let stepper = OUStepper::new(m.modes(), m.spectra(), 0.0, 1.0);
    let r = stepper.rates()[RE_10];
    let horizon = 0.7 / r;
    let start = SurfaceState { coords: vec![0.02, -0.01, 0.03, 0.01] };
    let n = 10_000;
    let mut rng = substream(6, 0, 0);
    let one: Vec<f64> = (0..n).map(|_| exact_step(&start, horizon, &stepper, &mut rng).coords[RE_10]).collect();
    let mut rng = substream(6, 1, 0);
    let many: Vec<f64> = (0..n)
        .map(|_| {
            let mut s = start.clone();
            for _ in 0..10 {
                s = exact_step(&s, horizon / 10.0, &stepper, &mut rng);
            }
            s.coords[RE_10]
        })
        .collect();
    let (m1, se1) = mean_se(&one);
    let (m2, se2) = mean_se(&many);
    assert!((m1 - m2).abs() < 3.0 * (se1 * se1 + se2 * se2).sqrt());
    let exact_mean = start.coords[RE_10] * (-r * horizon).exp();
    assert!((m1 - exact_mean).abs() < 3.0 * se1);
    let sq = |xs: &[f64], mean: f64| xs.iter().map(|x| (x - mean) * (x - mean)).collect::<Vec<f64>>();
    let (v1, sv1) = mean_se(&sq(&one, exact_mean));
    let (v2, sv2) = mean_se(&sq(&many, exact_mean));
    assert!((v1 - v2).abs() < 3.0 * (sv1 * sv1 + sv2 * sv2).sqrt());
}

#[test]
fn stationary_variance_has_no_trend() {
    let m = unit_membrane();
    let stepper = OUStepper::new(m.modes(), m.spectra(), 0.0, 1.0);
    let r = stepper.rates()[RE_10];
    let v = stepper.variances()[RE_10];
    let n = 10_000;
    let steps = 12;
    let dt = 2.0 / r;
    let mut sums = vec![0.0; steps + 1];
    let mut rng = substream(7, 0, 0);
    for _ in 0..n {
        let mut s = sample_stationary(m.modes(), m.spectra(), &mut rng);
        sums[0] += s.coords[RE_10] * s.coords[RE_10];
        for k in 1..=steps {
            s = exact_step(&s, dt, &stepper, &mut rng);
            sums[k] += s.coords[RE_10] * s.coords[RE_10];
        }
    }
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
    let vars: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
    let (slope, se) = ols_slope(&times, &vars, v * (2.0 / n as f64).sqrt());
    assert!(slope.abs() < 3.0 * se, "slope {slope:e} ± {se:e}");
}

#[test]
fn generator_eigenvalues() {
    let m = unit_membrane();
    let set = MultiIndexSet::total_degree(4, 2);
    let mut c = vec![0.0; set.len()];
    c[0] = 1.0;
    assert!(apply_generator_eta(&c, &set, m.modes(), m.spectra()).unwrap().iter().all(|&v| v == 0.0));
    let rates = m.spectra().coord_rates(m.modes());
    for i in 0..4 {
        let mut e = [0u8; 4];
        e[i] = 1;
        let pos = set.position(&e).unwrap();
        let mut c = vec![0.0; set.len()];
        c[pos] = 1.0;
        let out = apply_generator_eta(&c, &set, m.modes(), m.spectra()).unwrap();
        assert_eq!(out[pos], -rates[i]);
    }
    let wrong = MultiIndexSet::total_degree(3, 2);
    assert!(apply_generator_eta(&vec![0.0; wrong.len()], &wrong, m.modes(), m.spectra()).is_err());
}

#[test]
fn generator_matches_pointwise_differences() {
    let m = Membrane::new(ModelParams::new(0.01, 10.0, 1).unwrap());
    let set = MultiIndexSet::total_degree(4, 2);
    let var = m.spectra().coord_variances(m.modes());
    let rates = m.spectra().coord_rates(m.modes());
    let basis = HermiteBasis::new(set.clone(), &var).unwrap();
    let mut rng = substream(8, 0, 0);
    for _ in 0..5 {
        let c: Vec<f64> = (0..set.len()).map(|_| normal(&mut rng)).collect();
        let lc = apply_generator_eta(&c, &set, m.modes(), m.spectra()).unwrap();
        let step = 1e-3 * var[0].sqrt();
        for _ in 0..20 {
            let eta: Vec<f64> = var.iter().map(|v| 2.0 * v.sqrt() * normal::<f64, _>(&mut rng)).collect();
            let fd = generator_eta_fd(|e| basis.expand(&c, e), &eta, &rates, &var, step);
            let exact = basis.expand(&lc, &eta);
            let scale = rates.iter().cloned().fold(0.0, f64::max) * c.iter().map(|x| x.abs()).sum::<f64>();
            assert!((fd - exact).abs() < 1e-6 * scale, "{fd} vs {exact}");
        }
    }
}

proptest! {
    #[test]
    fn rates_scale_with_epsilon(eps in 0.05..1.0f64, beta in prop_oneof![Just(1.0), Just(2.0)]) {
        let modes = build_mode_set(2);
        let sp = spectra(&ModelParams::new(0.01, 10.0, 2).unwrap(), &modes);
        let s = OUStepper::new(&modes, &sp, beta, eps);
        for (r, g) in s.rates().iter().zip(sp.coord_rates(&modes)) {
            prop_assert!(r.is_finite());
            prop_assert!((r * eps.powf(beta) - g).abs() <= 1e-12 * g);
        }
    }
}
