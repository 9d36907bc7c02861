use helfrich::membrane::{build_mode_set, fit_drift_growth, spectra, Membrane, ModelParams};
use helfrich::ou_process::sample_stationary;
use helfrich::rng::{substream, uniform};
use helfrich::scalar::Vec2;
use proptest::prelude::*;

fn membrane(cutoff: u32) -> Membrane<f64> {
    Membrane::new(ModelParams::new(0.01, 10.0, cutoff).unwrap())
}

fn random_state(dim: usize, scale: f64, seed: u64) -> Vec<f64> {
    let mut rng = substream(seed, 0, 9);
    (0..dim).map(|_| scale * (2.0 * uniform::<f64, _>(&mut rng) - 1.0)).collect()
}

/// Coordinates of the class `(1, 0)` at cutoff 1.
const RE_10: usize = 2;

#[test]
fn mode_set_matches_enumeration() {
    assert!(build_mode_set(0).is_empty());
    let m1 = build_mode_set(1);
    assert_eq!(m1.len(), 4);
    for k in [[1, 0], [-1, 0], [0, 1], [0, -1]] {
        assert!(m1.wavevectors().contains(&k));
    }
    let m2 = build_mode_set(2);
    assert_eq!(m2.len(), 12);
    for k in [[1, 1], [-1, -1], [1, -1], [-1, 1], [2, 0], [-2, 0], [0, 2], [0, -2]] {
        assert!(m2.wavevectors().contains(&k));
    }
    let ws = m2.wavevectors();
    assert!(ws.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn spectra_values() {
    let p = ModelParams::<f64>::new(1.0, 1.0, 1).unwrap();
    let modes = build_mode_set(1);
    let s = spectra(&p, &modes);
    let i = modes.wavevectors().iter().position(|&k| k == [1, 0]).unwrap();
    let q = 2.0 * std::f64::consts::PI;
    assert!((s.gamma[i] - 254.3334).abs() < 1e-4);
    assert!((s.gamma[i] - (q.powi(3) + q)).abs() < 1e-10);
    assert!((s.pi[i] - 6.2578e-4).abs() < 1e-8);
    for cutoff in 1..4 {
        let modes = build_mode_set(cutoff);
        let s = spectra(&ModelParams::new(0.3, 2.0, cutoff).unwrap(), &modes);
        for (j, k) in modes.wavevectors().iter().enumerate() {
            let norm = q * ((k[0] * k[0] + k[1] * k[1]) as f64).sqrt();
            assert!((s.gamma[j] * s.pi[j] * norm - 1.0).abs() < 1e-12);
            let p = modes.partner(j);
            assert_eq!(s.gamma[j], s.gamma[p]);
            assert_eq!(s.pi[j], s.pi[p]);
            for (l, q2) in modes.wavevectors().iter().enumerate() {
                if q2[0] * q2[0] + q2[1] * q2[1] > k[0] * k[0] + k[1] * k[1] {
                    assert!(s.pi[l] < s.pi[j]);
                }
            }
        }
    }
}

#[test]
fn single_mode_height_and_gradient() {
    let m = membrane(1);
    let a = 0.03;
    let mut eta = vec![0.0; 4];
    eta[RE_10] = a;
    assert!((m.height([0.0, 0.37], &eta) - 2.0 * a).abs() < 1e-15);
    for x in [[0.1, 0.2], [0.77, 0.5], [0.33, 0.9]] {
        let h = m.height(x, &eta);
        assert!((h - 2.0 * a * (2.0 * std::f64::consts::PI * x[0]).cos()).abs() < 1e-14);
        let g = m.grad_height(x, &eta);
        assert!((g[0] + 4.0 * std::f64::consts::PI * a * (2.0 * std::f64::consts::PI * x[0]).sin()).abs() < 1e-14);
        assert!(g[1].abs() < 1e-15);
    }
}

#[test]
fn flat_state_is_euclidean() {
    let m = membrane(2);
    let eta = vec![0.0; m.dim()];
    let x = [0.3, 0.6];
    assert_eq!(m.height(x, &eta), 0.0);
    assert_eq!(m.grad_height(x, &eta), [0.0, 0.0]);
    assert_eq!(m.sigma(x, &eta).to_mat(), [[1.0, 0.0], [0.0, 1.0]]);
    assert_eq!(m.det_g(x, &eta), 1.0);
    assert_eq!(m.drift_f(x, &eta), [0.0, 0.0]);
}

#[test]
fn unit_gradient_sigma() {
    use helfrich::membrane::LocalGeometry;
    let mut geo = LocalGeometry::<f64>::flat();
    geo.grad = [1.0, 0.0];
    let s = geo.sigma();
    assert_eq!(s.to_mat(), [[0.5, 0.0], [0.0, 1.0]]);
    assert_eq!(geo.det_g(), 2.0);
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

#[test]
fn gradient_and_drift_match_finite_differences() {
    for cutoff in [1, 2] {
        let m = membrane(cutoff);
        let mut rng = substream(3, cutoff as u64, 0);
        let mut worst: f64 = 0.0;
        for p in 0..1000 {
            let eta = random_state(m.dim(), 0.05, 1000 * cutoff as u64 + p);
            let x = [uniform::<f64, _>(&mut rng), uniform::<f64, _>(&mut rng)];
            let g = m.grad_height(x, &eta);
            let gf = fd_grad(&m, x, &eta, 1e-5);
            let f = m.drift_f(x, &eta);
            let ff = fd_drift(&m, x, &eta, 1e-5);
            for i in 0..2 {
                assert!((g[i] - gf[i]).abs() < 1e-6, "grad {g:?} vs {gf:?}");
                let rel = (f[i] - ff[i]).abs() / f[i].abs().max(1.0);
                worst = worst.max(rel);
            }
        }
        assert!(worst < 1e-6, "drift relative FD error {worst:e}");
    }
}

#[test]
fn hessian_matches_finite_differences() {
    let m = membrane(2);
    let mut rng = substream(4, 0, 0);
    let d = 1e-5;
    for p in 0..1000 {
        let eta = random_state(m.dim(), 0.05, 7000 + p);
        let x = [uniform::<f64, _>(&mut rng), uniform::<f64, _>(&mut rng)];
        let h = m.geometry(x, &eta).hess;
        let gp = m.grad_height([x[0] + d, x[1]], &eta);
        let gm = m.grad_height([x[0] - d, x[1]], &eta);
        let gq = m.grad_height([x[0], x[1] + d], &eta);
        let gn = m.grad_height([x[0], x[1] - d], &eta);
        let tol = 1e-6 * h.frobenius().max(1.0);
        assert!(((gp[0] - gm[0]) / (2.0 * d) - h.xx).abs() < tol);
        assert!(((gp[1] - gm[1]) / (2.0 * d) - h.xy).abs() < tol);
        assert!(((gq[1] - gn[1]) / (2.0 * d) - h.yy).abs() < tol);
    }
}

#[test]
fn weighted_drift_integrates_to_zero() {
    let m = membrane(2);
    let mut rng = substream(11, 0, 0);
    let eta = sample_stationary(m.modes(), m.spectra(), &mut rng).coords;
    let n = 64;
    let mut acc = [0.0; 2];
    for a in 0..n {
        for b in 0..n {
            let x = [a as f64 / n as f64, b as f64 / n as f64];
            let f = m.drift_f(x, &eta);
            let r = m.det_g(x, &eta).sqrt();
            acc[0] += f[0] * r;
            acc[1] += f[1] * r;
        }
    }
    let scale = 1.0 / (n * n) as f64;
    assert!(acc[0].abs() * scale < 1e-10 && acc[1].abs() * scale < 1e-10, "{acc:?}");
}

#[test]
fn drift_growth_over_stationary_samples() {
    for cutoff in [1, 2] {
        let m = membrane(cutoff);
        let mut rng = substream(5, cutoff as u64, 0);
        let samples: Vec<(Vec2<f64>, Vec<f64>)> = (0..10_000)
            .map(|_| {
                let eta = sample_stationary(m.modes(), m.spectra(), &mut rng).coords;
                ([uniform::<f64, _>(&mut rng), uniform::<f64, _>(&mut rng)], eta)
            })
            .collect();
        let c = fit_drift_growth(&m, &samples);
        assert!(c.is_finite() && c > 0.0);
        assert!(c <= m.drift_growth_bound(), "fitted {c} above analytic {}", m.drift_growth_bound());
    }
}

proptest! {
    #[test]
    fn sigma_inverts_metric(g0 in -5.0..5.0f64, g1 in -5.0..5.0f64) {
        use helfrich::membrane::LocalGeometry;
        let mut geo = LocalGeometry::<f64>::flat();
        geo.grad = [g0, g1];
        let s = geo.sigma().to_mat();
        let g = [[1.0 + g0 * g0, g0 * g1], [g0 * g1, 1.0 + g1 * g1]];
        for i in 0..2 {
            for j in 0..2 {
                let p = s[i][0] * g[0][j] + s[i][1] * g[1][j];
                let id = if i == j { 1.0 } else { 0.0 };
                prop_assert!((p - id).abs() < 1e-14);
            }
        }
        let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
        prop_assert!((geo.det_g() - det).abs() <= 1e-14 * det);
    }

    #[test]
    fn geometry_invariants(seed in 0u64..10_000, x0 in 0.0..1.0f64, x1 in 0.0..1.0f64, scale in 0.0..0.3f64) {
        let m = membrane(2);
        let eta = random_state(m.dim(), scale, seed);
        let x = [x0, x1];
        let hc = m.height_complex(x, &eta);
        prop_assert!(hc.im.abs() < 1e-12);
        prop_assert!((hc.re - m.height(x, &eta)).abs() < 1e-12);
        let s = m.sigma(x, &eta);
        prop_assert!(s.frobenius() <= 2f64.sqrt() + 1e-12);
        let tr = s.trace();
        let det = s.det();
        let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
        prop_assert!(0.5 * tr + disc <= 1.0 + 1e-12 && 0.5 * tr - disc > 0.0);
        prop_assert!(m.det_g(x, &eta) >= 1.0);
        let neg: Vec<f64> = eta.iter().map(|v| -v).collect();
        prop_assert_eq!(m.height(x, &neg), -m.height(x, &eta));
        prop_assert_eq!(m.sigma(x, &neg), s);
        let (f, fn_) = (m.drift_f(x, &eta), m.drift_f(x, &neg));
        prop_assert!((f[0] - fn_[0]).abs() <= 1e-15 * (1.0 + f[0].abs()) && (f[1] - fn_[1]).abs() <= 1e-15 * (1.0 + f[1].abs()));
        let norm = eta.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((f[0] * f[0] + f[1] * f[1]).sqrt() <= m.drift_growth_bound() * norm + 1e-12);
    }
}
