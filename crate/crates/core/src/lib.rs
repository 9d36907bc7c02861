//! Brownian particles on fluctuating Helfrich membranes.
//!
//! The crate simulates a particle diffusing on a quasi-planar membrane whose
//! Fourier modes follow Ornstein-Uhlenbeck dynamics, lifts its path to a
//! level-2 rough path, and computes the homogenized diffusivity, drift and
//! area corrections both from spectral cell-problem solves and from
//! Monte-Carlo ensembles.
//!
//! Everything is generic over [`Scalar`]; the `*64` aliases below fix `f64`,
//! which is what the numerical tolerances are tuned for.

pub mod fourier;
pub mod hermite;
pub mod homogenize;
pub mod linalg;
pub mod membrane;
pub mod ou_process;
pub mod poisson_spectral;
pub mod rng;
pub mod rough_lift;
pub mod scalar;
pub mod sde_sim;

pub use scalar::{Mat2, Scalar, Sym2, Vec2};

pub type Membrane64 = membrane::Membrane<f64>;
pub type Membrane32 = membrane::Membrane<f32>;
pub type ModelParams64 = membrane::ModelParams<f64>;
pub type SurfaceState64 = membrane::SurfaceState<f64>;
pub type SimConfig64 = sde_sim::SimConfig<f64>;
pub type Simulator64 = sde_sim::Simulator<f64>;
pub type PathSample64 = sde_sim::PathSample<f64>;
