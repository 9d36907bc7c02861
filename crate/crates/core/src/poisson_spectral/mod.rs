//! Spectral Galerkin solvers for the fast generators.
//!
//! * [`frozen`]: the y-generator `L₀(η)` at a fixed membrane state, its
//!   explicit invariant density and the corrector `L₀χ = -F`.
//! * [`joint`]: the joint generator `G = L₀ + L_η` on a Fourier ⊗ Hermite
//!   tensor basis, its invariant density and corrector.
//! * [`split`]: self-adjoint / skew-adjoint splitting under a weighted
//!   inner product.
//! * [`oracle`]: Monte-Carlo resolvent estimates used to cross-check the
//!   solvers.

pub mod frozen;
pub mod joint;
pub mod oracle;
pub mod split;

use num_complex::Complex;
use thiserror::Error;

use crate::fourier::GridError;
use crate::hermite::HermiteError;
use crate::linalg::LinalgError;
use crate::membrane::MembraneError;

pub use frozen::{assemble_l0, assemble_l0_weighted, rho_y_density, solve_chi_fixed_eta, solve_chi_fixed_eta_at, FrozenOperator, FrozenSolveOptions};
pub use joint::{assemble_g, GalerkinYSampler, solve_chi_12, solve_invariant_density, HermiteFourierBasis, JointSolveOptions};
pub use split::symmetric_antisymmetric_split;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Membrane(#[from] MembraneError),
    #[error(transparent)]
    Hermite(#[from] HermiteError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("compatibility violated: mean forcing {0:e}")]
    Compatibility(f64),
    #[error("not converged: residual {residual:e} after {} refinement steps", trace.len())]
    NotConverged { residual: f64, trace: Vec<RefinementStep> },
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("quadrature too coarse: orthonormality defect {0:e}")]
    Quadrature(f64),
    #[error("null space of the adjoint is not one-dimensional (residual {0:e})")]
    Multiplicity(f64),
    #[error("basis mismatch: {0}")]
    BasisMismatch(String),
}

/// One attempt of an adaptive solve.
#[derive(Clone, Debug, PartialEq)]
pub struct RefinementStep {
    pub fourier_order: usize,
    pub hermite_degree: usize,
    /// Algebraic residual of the discrete system.
    pub solver_residual: f64,
    /// Residual of the discrete solution measured in an enriched basis,
    /// when computed.
    pub truncation_residual: Option<f64>,
    pub iterations: usize,
}

/// Which basis a coefficient vector lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisDescriptor {
    /// Fourier modes `|m_i| ≤ order`.
    Fourier { order: usize },
    /// Fourier ⊗ total-degree Hermite, coefficients laid out `[fourier][hermite]`.
    HermiteFourier { order: usize, degree: usize, eta_dim: usize },
}

/// Corrector `χ = (χ¹, χ²)` in spectral form.
#[derive(Clone, Debug)]
pub struct PoissonSolution<T> {
    pub basis: BasisDescriptor,
    pub coeffs: [Vec<Complex<T>>; 2],
    /// `|⟨χ⟩|` under the target invariant measure after re-centering.
    pub centering_residual: T,
    /// Largest residual over both components (nodal sup norm for frozen
    /// solves, relative coefficient norm for joint solves).
    pub solver_residual: T,
    /// Mean of the forcing under the invariant measure, per component.
    pub compatibility: T,
    pub trace: Vec<RefinementStep>,
}

/// Joint density of the fast pair relative to `dy × ρ_η`.
#[derive(Clone, Debug)]
pub enum InvariantDensity<T> {
    /// `ρ_Y(y, η) = √(1 + |∇h|²) / C(η)` at one frozen state.
    ExplicitRhoY { eta: Vec<T>, normalization: T, fourier_order: usize, coeffs: Vec<Complex<T>> },
    /// `g_η(y)` on the Fourier ⊗ Hermite basis, with `g_{0,0} = 1`.
    GalerkinGEta { fourier_order: usize, degree: usize, eta_dim: usize, coeffs: Vec<Complex<T>>, solver_residual: T, iterations: usize },
}

impl<T> InvariantDensity<T> {
    pub fn tag(&self) -> &'static str {
        match self {
            InvariantDensity::ExplicitRhoY { .. } => "explicit_rhoY",
            InvariantDensity::GalerkinGEta { .. } => "galerkin_g_eta",
        }
    }

    pub fn coeffs(&self) -> &[Complex<T>] {
        match self {
            InvariantDensity::ExplicitRhoY { coeffs, .. } | InvariantDensity::GalerkinGEta { coeffs, .. } => coeffs,
        }
    }
}
