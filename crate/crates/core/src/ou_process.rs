//! Ornstein-Uhlenbeck dynamics of the membrane modes.
//!
//! Each real coordinate relaxes at rate `Γ_k / ε^β` towards a centred
//! Gaussian with variance `Π_k / 2`. Steps are sampled from the exact
//! transition law, so any `dt` is admissible.

use rand::Rng;

use crate::hermite::{HermiteError, MultiIndexSet};
use crate::membrane::{ModeSet, Spectra, SurfaceState};
use crate::rng::normal;
use crate::scalar::{lit, Scalar};

#[derive(Clone, Debug)]
pub struct OUStepper<T> {
    rates: Vec<T>,
    variances: Vec<T>,
    beta: T,
    epsilon: T,
}

impl<T: Scalar> OUStepper<T> {
    pub fn new(modes: &ModeSet, spectra: &Spectra<T>, beta: T, epsilon: T) -> Self {
        let scale = epsilon.powf(-beta);
        OUStepper {
            rates: spectra.coord_rates(modes).into_iter().map(|g| g * scale).collect(),
            variances: spectra.coord_variances(modes),
            beta,
            epsilon,
        }
    }

    pub fn rates(&self) -> &[T] {
        &self.rates
    }

    pub fn variances(&self) -> &[T] {
        &self.variances
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    /// Precomputed decay factors and noise amplitudes for a fixed `dt`.
    pub fn transition(&self, dt: T) -> OUTransition<T> {
        let decay: Vec<T> = self.rates.iter().map(|&r| (-r * dt).exp()).collect();
        let noise = decay
            .iter()
            .zip(&self.variances)
            .map(|(&a, &v)| (v * (T::one() - a * a)).max(T::zero()).sqrt())
            .collect();
        OUTransition { decay, noise }
    }
}

#[derive(Clone, Debug)]
pub struct OUTransition<T> {
    decay: Vec<T>,
    noise: Vec<T>,
}

impl<T: Scalar> OUTransition<T> {
    #[inline]
    pub fn advance<R: Rng + ?Sized>(&self, coords: &mut [T], rng: &mut R) {
        for ((c, &a), &s) in coords.iter_mut().zip(&self.decay).zip(&self.noise) {
            *c = a * *c + s * normal::<T, R>(rng);
        }
    }
}

/// Independent centred Gaussians with variance `Π_k / 2` per coordinate.
pub fn sample_stationary<T: Scalar, R: Rng + ?Sized>(modes: &ModeSet, spectra: &Spectra<T>, rng: &mut R) -> SurfaceState<T> {
    let coords = spectra
        .coord_variances(modes)
        .into_iter()
        .map(|v| v.sqrt() * normal::<T, R>(rng))
        .collect();
    SurfaceState { coords }
}

/// One exact transition of length `dt`.
pub fn exact_step<T: Scalar, R: Rng + ?Sized>(state: &SurfaceState<T>, dt: T, stepper: &OUStepper<T>, rng: &mut R) -> SurfaceState<T> {
    assert!(dt > T::zero(), "dt must be positive");
    let mut coords = state.coords.clone();
    stepper.transition(dt).advance(&mut coords, rng);
    SurfaceState { coords }
}

/// Applies `L_η = -Γη·∇ + ΓΠ:∇∇` to an expansion in the orthonormal
/// Hermite basis of the stationary law; it is diagonal with eigenvalue
/// `-(m · Γ)`.
pub fn apply_generator_eta<T: Scalar>(
    coeffs: &[T],
    set: &MultiIndexSet,
    modes: &ModeSet,
    spectra: &Spectra<T>,
) -> Result<Vec<T>, HermiteError> {
    if set.dim() != modes.dim() {
        return Err(HermiteError::Dimension { expected: modes.dim(), got: set.dim() });
    }
    if coeffs.len() != set.len() {
        return Err(HermiteError::Length { expected: set.len(), got: coeffs.len() });
    }
    let eig = set.ou_eigenvalues(&spectra.coord_rates(modes));
    Ok(coeffs.iter().zip(eig).map(|(&c, e)| c * e).collect())
}

/// Pointwise OU generator `Σ_i r_i (v_i ∂²f - η_i ∂f)` by central differences.
pub fn generator_eta_fd<T: Scalar>(f: impl Fn(&[T]) -> T, eta: &[T], rates: &[T], variances: &[T], step: T) -> T {
    let mut point = eta.to_vec();
    let f0 = f(eta);
    let mut acc = T::zero();
    for i in 0..eta.len() {
        point[i] = eta[i] + step;
        let fp = f(&point);
        point[i] = eta[i] - step;
        let fm = f(&point);
        point[i] = eta[i];
        let d1 = (fp - fm) / (lit::<T>(2.0) * step);
        let d2 = (fp - lit::<T>(2.0) * f0 + fm) / (step * step);
        acc = acc + rates[i] * (variances[i] * d2 - eta[i] * d1);
    }
    acc
}
