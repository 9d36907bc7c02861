//! Homogenized diffusivity `D`, drift `L` and area corrections `A`, `Ã`.
//!
//! [`spectral`] integrates cell-problem solutions against the invariant
//! measure of the fast pair; [`monte_carlo`] estimates the same quantities
//! from full-interval lifts of simulated ensembles.

pub mod monte_carlo;
pub mod spectral;

use serde::Serialize;
use thiserror::Error;

use crate::poisson_spectral::SpectralError;
use crate::scalar::{Mat2, Scalar, Vec2};
use crate::sde_sim::{Regime, SimError};

pub use monte_carlo::{
    convergence_table, default_centering, mc_estimate_area, mc_estimate_d, simulate_averaged_sde, summarize_path, summarize_replicas, Centering,
    ConvergenceRow, MatrixEstimate, ReplicaSummary, N_BATCHES,
};
pub use spectral::{
    averaged_coefficients, averaged_coefficients_mc, regime11_quantities, regime12_quantities, AveragedEstimate, OuterRule, Regime11Options,
    MAX_AVERAGING_NODES,
};

#[derive(Debug, Error)]
pub enum HomogenizeError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("outer η-quadrature not converged: orders {coarse} and {fine} differ by {difference:e}")]
    EtaQuadrature { coarse: usize, fine: usize, difference: f64 },
    #[error("tensor quadrature with {nodes} nodes exceeds the limit of {limit}")]
    TooManyNodes { nodes: f64, limit: usize },
    #[error("need at least {needed} replicas, got {got}")]
    TooFewReplicas { needed: usize, got: usize },
    #[error("replicas disagree on the horizon")]
    MixedHorizons,
    #[error("invalid argument: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Spectral,
    MonteCarlo,
}

/// Per-entry standard errors of a Monte-Carlo evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantityErrors<T> {
    pub d: Mat2<T>,
    pub a_ito: Mat2<T>,
    pub a_strato: Mat2<T>,
}

/// Accuracy indicators of a spectral evaluation.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SpectralDiagnostics {
    /// Largest cell-problem residual that entered the integrals.
    pub solver_residual: f64,
    /// Largest `|⟨F⟩|` under the invariant measure.
    pub compatibility: f64,
    /// Largest gap between the two evaluation routes of `D`.
    pub d_route_gap: Option<f64>,
    /// Largest gap between the two evaluation forms of `Ã`.
    pub a_strato_gap: f64,
    /// Largest change of `D` and `L` between the two outer quadrature orders.
    pub eta_quadrature_gap: Option<f64>,
    pub quadrature_nodes: usize,
    /// Largest Fourier truncation order used.
    pub fourier_order: usize,
    pub hermite_degree: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HomogenizedQuantities<T> {
    pub regime: Regime,
    /// Effective diffusivity, `X = √(2D) Z`.
    pub d: Mat2<T>,
    /// Limit drift (regime (1,1) only).
    pub l: Option<Vec2<T>>,
    pub a_ito: Mat2<T>,
    pub a_strato: Mat2<T>,
    pub source: Source,
    pub stderr: Option<QuantityErrors<T>>,
    pub diagnostics: Option<SpectralDiagnostics>,
}

impl<T: Scalar> HomogenizedQuantities<T> {
    /// Brownian values `D = I`, `A = Ã = 0`.
    pub fn brownian(regime: Regime) -> Self {
        let (o, z) = (T::one(), T::zero());
        HomogenizedQuantities {
            regime,
            d: [[o, z], [z, o]],
            l: (regime == Regime::Hom11).then_some([z, z]),
            a_ito: [[z; 2]; 2],
            a_strato: [[z; 2]; 2],
            source: Source::Spectral,
            stderr: None,
            diagnostics: Some(SpectralDiagnostics::default()),
        }
    }

    /// Smallest eigenvalue of the symmetric part of `D`.
    pub fn d_min_eigenvalue(&self) -> T {
        sym_min_eigenvalue(self.d)
    }
}

pub(crate) fn sym_min_eigenvalue<T: Scalar>(m: Mat2<T>) -> T {
    let half = crate::scalar::lit::<T>(0.5);
    let (a, b, c) = (m[0][0], half * (m[0][1] + m[1][0]), m[1][1]);
    let mean = half * (a + c);
    let rad = (half * half * (a - c) * (a - c) + b * b).sqrt();
    mean - rad
}

pub(crate) fn transpose<T: Copy>(m: Mat2<T>) -> Mat2<T> {
    [[m[0][0], m[1][0]], [m[0][1], m[1][1]]]
}

pub(crate) fn max_abs_diff<T: Scalar>(a: Mat2<T>, b: Mat2<T>) -> T {
    let mut worst = T::zero();
    for i in 0..2 {
        for j in 0..2 {
            worst = worst.max(num_traits::Float::abs(a[i][j] - b[i][j]));
        }
    }
    worst
}

/// Antisymmetric part `½(M − Mᵀ)`.
pub fn antisym<T: Scalar>(m: Mat2<T>) -> Mat2<T> {
    let half = crate::scalar::lit::<T>(0.5);
    [[T::zero(), half * (m[0][1] - m[1][0])], [half * (m[1][0] - m[0][1]), T::zero()]]
}
