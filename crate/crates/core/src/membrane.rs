//! Membrane geometry in Monge gauge over the unit torus.
//!
//! The height field is a real trigonometric polynomial
//! `h(x) = Σ_k η^k exp(2πi k·x)` over wavevectors `0 < |k| ≤ cutoff`.
//! Since `η^{-k} = conj(η^k)`, only one `(Re, Im)` pair per `{k, -k}` class
//! is stored. Coordinate `2c` holds `Re η^k` and `2c + 1` holds `Im η^k`
//! for the class representative `k` (the lexicographically positive one).

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{lit, Scalar, Sym2, Vec2};

#[derive(Debug, Error, PartialEq)]
pub enum MembraneError {
    #[error("kappa_star must be positive and finite, got {0}")]
    Kappa(f64),
    #[error("sigma_star must be positive and finite, got {0}")]
    Sigma(f64),
    #[error("state has {got} coordinates, mode set needs {expected}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    pub kappa_star: T,
    pub sigma_star: T,
    pub cutoff: u32,
}

impl<T: Scalar> ModelParams<T> {
    pub fn new(kappa_star: T, sigma_star: T, cutoff: u32) -> Result<Self, MembraneError> {
        if !(kappa_star > T::zero()) || !kappa_star.is_finite() {
            return Err(MembraneError::Kappa(crate::scalar::to_f64(kappa_star)));
        }
        if !(sigma_star > T::zero()) || !sigma_star.is_finite() {
            return Err(MembraneError::Sigma(crate::scalar::to_f64(sigma_star)));
        }
        Ok(ModelParams { kappa_star, sigma_star, cutoff })
    }
}

/// Wavevectors with their pairing and real-coordinate bookkeeping.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModeSet {
    cutoff: u32,
    wavevectors: Vec<[i32; 2]>,
    partner: Vec<usize>,
    /// For each wavevector: (class index, true if it is the conjugate member).
    class_of: Vec<(usize, bool)>,
    representatives: Vec<[i32; 2]>,
}

fn positive_half(k: [i32; 2]) -> bool {
    k[0] > 0 || (k[0] == 0 && k[1] > 0)
}

/// All `k ∈ Z²` with `0 < |k| ≤ cutoff`, sorted lexicographically.
pub fn build_mode_set(cutoff: u32) -> ModeSet {
    let c = cutoff as i32;
    let mut wavevectors = Vec::new();
    for k1 in -c..=c {
        for k2 in -c..=c {
            let n2 = k1 * k1 + k2 * k2;
            if n2 > 0 && n2 <= c * c {
                wavevectors.push([k1, k2]);
            }
        }
    }
    let partner: Vec<usize> = wavevectors
        .iter()
        .map(|k| wavevectors.iter().position(|q| q[0] == -k[0] && q[1] == -k[1]).expect("closed under negation"))
        .collect();
    let representatives: Vec<[i32; 2]> = wavevectors.iter().copied().filter(|&k| positive_half(k)).collect();
    let class_of = wavevectors
        .iter()
        .map(|&k| {
            let rep = if positive_half(k) { k } else { [-k[0], -k[1]] };
            let c = representatives.iter().position(|&r| r == rep).expect("representative present");
            (c, !positive_half(k))
        })
        .collect();
    ModeSet { cutoff, wavevectors, partner, class_of, representatives }
}

impl ModeSet {
    pub fn cutoff(&self) -> u32 {
        self.cutoff
    }

    /// Number of wavevectors, which equals the number of real coordinates.
    pub fn len(&self) -> usize {
        self.wavevectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wavevectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.wavevectors.len()
    }

    pub fn wavevectors(&self) -> &[[i32; 2]] {
        &self.wavevectors
    }

    pub fn partner(&self, i: usize) -> usize {
        self.partner[i]
    }

    /// Class representatives, one per `{k, -k}` pair.
    pub fn classes(&self) -> &[[i32; 2]] {
        &self.representatives
    }

    /// Real coordinates `(re, im)` of wavevector `i` and the sign carried by
    /// the imaginary part (`-1` for the conjugate member of a class).
    pub fn real_index(&self, i: usize) -> (usize, usize, i8) {
        let (c, conj) = self.class_of[i];
        (2 * c, 2 * c + 1, if conj { -1 } else { 1 })
    }

    /// Complex amplitude `η^k` of wavevector `i`.
    pub fn amplitude<T: Scalar>(&self, i: usize, eta: &[T]) -> Complex<T> {
        let (re, im, sign) = self.real_index(i);
        let s = if sign < 0 { -T::one() } else { T::one() };
        Complex::new(eta[re], s * eta[im])
    }

    /// Real coordinate index -> wavevector index of its class representative.
    pub fn coord_wavevector(&self, coord: usize) -> usize {
        let rep = self.representatives[coord / 2];
        self.wavevectors.iter().position(|&k| k == rep).expect("representative present")
    }
}

/// Relaxation rates and stationary variances per wavevector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectra<T> {
    pub gamma: Vec<T>,
    pub pi: Vec<T>,
}

pub fn spectra<T: Scalar>(params: &ModelParams<T>, modes: &ModeSet) -> Spectra<T> {
    let two_pi = T::PI() + T::PI();
    let mut gamma = Vec::with_capacity(modes.len());
    let mut pi = Vec::with_capacity(modes.len());
    for k in modes.wavevectors() {
        let q2 = lit::<T>((k[0] * k[0] + k[1] * k[1]) as f64) * two_pi * two_pi;
        let q = q2.sqrt();
        let stiffness = params.kappa_star * q2 * q2 + params.sigma_star * q2;
        gamma.push(stiffness / q);
        pi.push(T::one() / stiffness);
    }
    Spectra { gamma, pi }
}

impl<T: Scalar> Spectra<T> {
    /// Rate of each real coordinate.
    pub fn coord_rates(&self, modes: &ModeSet) -> Vec<T> {
        (0..modes.dim()).map(|c| self.gamma[modes.coord_wavevector(c)]).collect()
    }

    /// Stationary variance of each real coordinate, `Π_k / 2`.
    pub fn coord_variances(&self, modes: &ModeSet) -> Vec<T> {
        (0..modes.dim()).map(|c| self.pi[modes.coord_wavevector(c)] * lit(0.5)).collect()
    }

    pub fn scaled(&self, gamma_factor: T, pi_factor: T) -> Self {
        Spectra {
            gamma: self.gamma.iter().map(|&g| g * gamma_factor).collect(),
            pi: self.pi.iter().map(|&p| p * pi_factor).collect(),
        }
    }
}

/// Real state vector of the membrane modes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceState<T> {
    pub coords: Vec<T>,
}

impl<T: Scalar> SurfaceState<T> {
    pub fn zeros(modes: &ModeSet) -> Self {
        SurfaceState { coords: vec![T::zero(); modes.dim()] }
    }

    pub fn norm(&self) -> T {
        self.coords.iter().fold(T::zero(), |acc, &c| acc + c * c).sqrt()
    }
}

/// Height, gradient and Hessian at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalGeometry<T> {
    pub h: T,
    pub grad: Vec2<T>,
    pub hess: Sym2<T>,
}

impl<T: Scalar> LocalGeometry<T> {
    pub fn flat() -> Self {
        LocalGeometry { h: T::zero(), grad: [T::zero(); 2], hess: Sym2::zero() }
    }

    /// `1 + |∇h|²`
    pub fn det_g(&self) -> T {
        T::one() + self.grad[0] * self.grad[0] + self.grad[1] * self.grad[1]
    }

    /// `(I + ∇h∇hᵀ)⁻¹`
    pub fn sigma(&self) -> Sym2<T> {
        let s = self.det_g();
        let p = self.grad;
        Sym2 { xx: T::one() - p[0] * p[0] / s, xy: -p[0] * p[1] / s, yy: T::one() - p[1] * p[1] / s }
    }

    /// `(1/√g) ∇·(√g Σ)` expanded with the Hessian of `h`:
    /// `F = -∇h (Δh - ∇hᵀ H ∇h / g) / g`.
    pub fn drift(&self) -> Vec2<T> {
        let s = self.det_g();
        let p = self.grad;
        let coef = -(self.hess.trace() - self.hess.quad(p) / s) / s;
        [coef * p[0], coef * p[1]]
    }
}

/// Model parameters, modes and spectra bundled with cached wavevectors.
#[derive(Clone, Debug)]
pub struct Membrane<T> {
    params: ModelParams<T>,
    modes: ModeSet,
    spectra: Spectra<T>,
    /// `2πk` for each class representative.
    kvec: Vec<Vec2<T>>,
}

impl<T: Scalar> Membrane<T> {
    pub fn new(params: ModelParams<T>) -> Self {
        let modes = build_mode_set(params.cutoff);
        let spectra = spectra(&params, &modes);
        Self::with_spectra(params, modes, spectra)
    }

    /// Uses caller-supplied spectra, e.g. rescaled ones.
    pub fn with_spectra(params: ModelParams<T>, modes: ModeSet, spectra: Spectra<T>) -> Self {
        let two_pi = T::PI() + T::PI();
        let kvec = modes
            .classes()
            .iter()
            .map(|k| [two_pi * lit(k[0] as f64), two_pi * lit(k[1] as f64)])
            .collect();
        Membrane { params, modes, spectra, kvec }
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn modes(&self) -> &ModeSet {
        &self.modes
    }

    pub fn spectra(&self) -> &Spectra<T> {
        &self.spectra
    }

    pub fn dim(&self) -> usize {
        self.modes.dim()
    }

    pub fn is_flat(&self) -> bool {
        self.modes.is_empty()
    }

    /// `2πk` per class.
    pub fn class_wavevectors(&self) -> &[Vec2<T>] {
        &self.kvec
    }

    pub fn check_state(&self, eta: &[T]) -> Result<(), MembraneError> {
        if eta.len() != self.dim() {
            return Err(MembraneError::Dimension { expected: self.dim(), got: eta.len() });
        }
        Ok(())
    }

    pub fn geometry(&self, x: Vec2<T>, eta: &[T]) -> LocalGeometry<T> {
        debug_assert_eq!(eta.len(), self.dim());
        let two = lit::<T>(2.0);
        let mut g = LocalGeometry::flat();
        for (c, k) in self.kvec.iter().enumerate() {
            let (a, b) = (eta[2 * c], eta[2 * c + 1]);
            let (sn, cs) = (k[0] * x[0] + k[1] * x[1]).sin_cos();
            let u = two * (a * cs - b * sn);
            let w = two * (-a * sn - b * cs);
            g.h = g.h + u;
            g.grad[0] = g.grad[0] + w * k[0];
            g.grad[1] = g.grad[1] + w * k[1];
            g.hess.xx = g.hess.xx - u * k[0] * k[0];
            g.hess.xy = g.hess.xy - u * k[0] * k[1];
            g.hess.yy = g.hess.yy - u * k[1] * k[1];
        }
        g
    }

    pub fn height(&self, x: Vec2<T>, eta: &[T]) -> T {
        self.geometry(x, eta).h
    }

    /// Direct complex sum over all wavevectors; its imaginary part is
    /// rounding noise.
    pub fn height_complex(&self, x: Vec2<T>, eta: &[T]) -> Complex<T> {
        let two_pi = T::PI() + T::PI();
        let mut acc = Complex::new(T::zero(), T::zero());
        for (i, k) in self.modes.wavevectors().iter().enumerate() {
            let theta = two_pi * (lit::<T>(k[0] as f64) * x[0] + lit::<T>(k[1] as f64) * x[1]);
            acc = acc + self.modes.amplitude(i, eta) * Complex::new(theta.cos(), theta.sin());
        }
        acc
    }

    pub fn grad_height(&self, x: Vec2<T>, eta: &[T]) -> Vec2<T> {
        self.geometry(x, eta).grad
    }

    pub fn sigma(&self, x: Vec2<T>, eta: &[T]) -> Sym2<T> {
        self.geometry(x, eta).sigma()
    }

    pub fn det_g(&self, x: Vec2<T>, eta: &[T]) -> T {
        self.geometry(x, eta).det_g()
    }

    pub fn drift_f(&self, x: Vec2<T>, eta: &[T]) -> Vec2<T> {
        self.geometry(x, eta).drift()
    }

    /// Upper bound on `|∇h(·, η)|` over the torus.
    pub fn grad_bound(&self, eta: &[T]) -> T {
        let two = lit::<T>(2.0);
        self.kvec.iter().enumerate().fold(T::zero(), |acc, (c, k)| {
            let amp = (eta[2 * c] * eta[2 * c] + eta[2 * c + 1] * eta[2 * c + 1]).sqrt();
            acc + two * amp * (k[0] * k[0] + k[1] * k[1]).sqrt()
        })
    }

    /// A constant `C` with `|F(x, η)| ≤ C |η|` for every `x` and `η`.
    ///
    /// Uses `|∇h|/g ≤ 1/2`, `|∇h|²/g ≤ 1`, `|Δh| ≤ √2 ‖H‖_F` and
    /// `‖H‖_F ≤ 2 max|2πk|² Σ_c |η_c|`.
    pub fn drift_growth_bound(&self) -> T {
        if self.kvec.is_empty() {
            return T::zero();
        }
        let kmax2 = self.kvec.iter().map(|k| k[0] * k[0] + k[1] * k[1]).fold(T::zero(), T::max);
        let classes = lit::<T>(self.kvec.len() as f64);
        (T::SQRT_2() + T::one()) * kmax2 * classes.sqrt()
    }
}

/// Empirical `sup |F| / (1 + |η|)` over the given samples.
pub fn fit_drift_growth<T: Scalar>(membrane: &Membrane<T>, samples: &[(Vec2<T>, Vec<T>)]) -> T {
    samples.iter().fold(T::zero(), |acc, (x, eta)| {
        let f = membrane.drift_f(*x, eta);
        let norm = (f[0] * f[0] + f[1] * f[1]).sqrt();
        let eta_norm = eta.iter().fold(T::zero(), |a, &c| a + c * c).sqrt();
        acc.max(norm / (T::one() + eta_norm))
    })
}
