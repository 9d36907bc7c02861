//! Euler-Maruyama integration of the rescaled particle/membrane system
//!
//! ```text
//! dX = ε^{-α} F(X/ε^α, η) dt + √(2Σ(X/ε^α, η)) dB
//! dη = -ε^{-β} Γ η dt + √(2ΓΠ/ε^β) dW
//! ```
//!
//! `X` is kept unwrapped in the plane. The membrane modes are advanced with
//! the exact OU transition, the particle with frozen coefficients per step.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::membrane::{Membrane, MembraneError};
use crate::ou_process::{sample_stationary, OUStepper, OUTransition};
use crate::rng::{normal, substream, uniform, StreamRng, STREAM_ETA, STREAM_INIT, STREAM_NOISE};
use crate::scalar::{from_usize, lit, to_f64, wrap_unit, Mat2, Scalar, Sym2, Vec2};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("dt = {dt} exceeds dt_max = {dt_max} for this regime and epsilon")]
    StepTooLarge { dt: f64, dt_max: f64 },
    #[error("horizon {horizon} is not an integer multiple of dt = {dt}")]
    NonIntegerSteps { horizon: f64, dt: f64 },
    #[error("{0} must be positive and finite")]
    NonPositive(&'static str),
    #[error("matrix is not symmetric")]
    NonSymmetric,
    #[error("matrix is not positive semidefinite")]
    NotPositive,
    #[error("unknown regime {0:?}; expected avg, hom12 or hom11")]
    UnknownRegime(String),
    #[error("no regime with (alpha, beta) = ({0}, {1})")]
    Exponents(u32, u32),
    #[error(transparent)]
    Membrane(#[from] MembraneError),
}

/// Scaling exponents `(α, β)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// `(0, 1)`: averaging over the membrane.
    Avg,
    /// `(1, 2)`: homogenization with an environment as fast as the particle.
    Hom12,
    /// `(1, 1)`: homogenization with a slower environment.
    Hom11,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Avg, Regime::Hom12, Regime::Hom11];

    pub fn alpha(self) -> u32 {
        match self {
            Regime::Avg => 0,
            Regime::Hom12 | Regime::Hom11 => 1,
        }
    }

    pub fn beta(self) -> u32 {
        match self {
            Regime::Avg | Regime::Hom11 => 1,
            Regime::Hom12 => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::Avg => "avg",
            Regime::Hom12 => "hom12",
            Regime::Hom11 => "hom11",
        }
    }

    pub fn from_exponents(alpha: u32, beta: u32) -> Result<Self, SimError> {
        Regime::ALL
            .into_iter()
            .find(|r| r.alpha() == alpha && r.beta() == beta)
            .ok_or(SimError::Exponents(alpha, beta))
    }
}

impl std::str::FromStr for Regime {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Regime::ALL.into_iter().find(|r| r.name() == s).ok_or_else(|| SimError::UnknownRegime(s.to_string()))
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitialPosition<T> {
    Point(Vec2<T>),
    /// `Y₀` drawn from the stationary law of the fast variable, `X₀ = ε^α Y₀`.
    Stationary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig<T> {
    pub regime: Regime,
    pub epsilon: T,
    pub horizon: T,
    pub dt: T,
    pub n_paths: usize,
    pub master_seed: u64,
    pub x0: InitialPosition<T>,
}

/// Largest admissible step: `1e-2 ε^{2α}` for `α = 1`, `1e-3 T` for `α = 0`.
pub fn dt_max<T: Scalar>(regime: Regime, epsilon: T, horizon: T) -> T {
    match regime.alpha() {
        0 => lit::<T>(1e-3) * horizon,
        _ => lit::<T>(1e-2) * epsilon * epsilon,
    }
}

impl<T: Scalar> SimConfig<T> {
    /// Checks the configuration and returns the number of steps.
    pub fn validate(&self) -> Result<usize, SimError> {
        for (name, v) in [("epsilon", self.epsilon), ("horizon", self.horizon), ("dt", self.dt)] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(SimError::NonPositive(name));
            }
        }
        if self.n_paths == 0 {
            return Err(SimError::NonPositive("n_paths"));
        }
        let limit = dt_max(self.regime, self.epsilon, self.horizon);
        if self.dt > limit * lit(1.0 + 1e-12) {
            return Err(SimError::StepTooLarge { dt: to_f64(self.dt), dt_max: to_f64(limit) });
        }
        let ratio = self.horizon / self.dt;
        let n = ratio.round();
        if num_traits::Float::abs(ratio - n) > lit::<T>(1e-9) * ratio.max(T::one()) || n < T::one() {
            return Err(SimError::NonIntegerSteps { horizon: to_f64(self.horizon), dt: to_f64(self.dt) });
        }
        Ok(n.to_usize().expect("step count fits usize"))
    }
}

/// Symmetric PSD square root of `2Σ`.
pub fn sqrt_2sigma<T: Scalar>(sigma: Mat2<T>) -> Result<Mat2<T>, SimError> {
    let scale = sigma.iter().flatten().fold(T::one(), |m, &v| m.max(num_traits::Float::abs(v)));
    if num_traits::Float::abs(sigma[0][1] - sigma[1][0]) > lit::<T>(1e-12) * scale {
        return Err(SimError::NonSymmetric);
    }
    let s = Sym2 { xx: sigma[0][0], xy: lit::<T>(0.5) * (sigma[0][1] + sigma[1][0]), yy: sigma[1][1] };
    let tol = lit::<T>(1e-12) * scale;
    if s.xx < -tol || s.yy < -tol || s.det() < -tol * scale {
        return Err(SimError::NotPositive);
    }
    Ok(sqrt_psd(s.scale(lit(2.0))).to_mat())
}

/// `√A = (A + √det A · I) / √(tr A + 2√det A)` for 2x2 symmetric PSD `A`.
#[inline]
pub fn sqrt_psd<T: Scalar>(a: Sym2<T>) -> Sym2<T> {
    let root_det = a.det().max(T::zero()).sqrt();
    let t = (a.trace() + root_det + root_det).max(T::zero()).sqrt();
    if t == T::zero() {
        return Sym2::zero();
    }
    Sym2 { xx: (a.xx + root_det) / t, xy: a.xy / t, yy: (a.yy + root_det) / t }
}

/// Draws `Y₀` given `η₀` from a stationary law of the fast variable.
pub trait StationaryY<T>: Send + Sync {
    fn sample_y(&self, membrane: &Membrane<T>, eta: &[T], rng: &mut StreamRng) -> Vec2<T>;
}

/// Rejection sampler for `ρ_Y(y, η) ∝ √(1 + |∇h(y, η)|²)` with a uniform
/// proposal.
#[derive(Clone, Copy, Debug, Default)]
pub struct RhoYSampler;

impl<T: Scalar> StationaryY<T> for RhoYSampler {
    fn sample_y(&self, membrane: &Membrane<T>, eta: &[T], rng: &mut StreamRng) -> Vec2<T> {
        let g = membrane.grad_bound(eta);
        let bound = (T::one() + g * g).sqrt();
        loop {
            let y = [uniform::<T, _>(rng), uniform::<T, _>(rng)];
            let u: T = uniform(rng);
            if u * bound <= membrane.det_g(y, eta).sqrt() {
                return y;
            }
        }
    }
}

/// Everything the integrator knows about one step `x -> x_next`.
pub struct StepRecord<'a, T> {
    pub index: usize,
    pub x: Vec2<T>,
    pub x_next: Vec2<T>,
    pub y: Vec2<T>,
    pub eta: &'a [T],
    /// Membrane state at the end of the step.
    pub eta_next: &'a [T],
    /// `F(Y, η)`, before the `ε^{-α}` factor.
    pub drift: Vec2<T>,
    pub sigma: Sym2<T>,
}

pub trait PathVisitor<T> {
    fn start(&mut self, _x: Vec2<T>, _eta: &[T]) {}
    fn step(&mut self, record: &StepRecord<'_, T>);
}

/// Discretized trajectory with its provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSample<T> {
    pub replica_id: u64,
    pub master_seed: u64,
    pub dt: T,
    pub epsilon: T,
    pub alpha: u32,
    pub x: Vec<Vec2<T>>,
    eta: Vec<T>,
    dim: usize,
}

impl<T: Scalar> PathSample<T> {
    pub fn from_parts(x: Vec<Vec2<T>>, eta: Vec<T>, dim: usize, dt: T, epsilon: T, alpha: u32) -> Self {
        assert_eq!(eta.len(), x.len() * dim);
        PathSample { replica_id: 0, master_seed: 0, dt, epsilon, alpha, x, eta, dim }
    }

    pub fn n_steps(&self) -> usize {
        self.x.len() - 1
    }

    pub fn time(&self, i: usize) -> T {
        from_usize::<T>(i) * self.dt
    }

    pub fn times(&self) -> Vec<T> {
        (0..self.x.len()).map(|i| self.time(i)).collect()
    }

    pub fn eta(&self, i: usize) -> &[T] {
        &self.eta[i * self.dim..(i + 1) * self.dim]
    }

    pub fn eta_dim(&self) -> usize {
        self.dim
    }

    pub fn y(&self, i: usize) -> Vec2<T> {
        let s = self.epsilon.powi(self.alpha as i32);
        [wrap_unit(self.x[i][0] / s), wrap_unit(self.x[i][1] / s)]
    }
}

struct Recorder<T> {
    x: Vec<Vec2<T>>,
    eta: Vec<T>,
}

impl<T: Scalar> PathVisitor<T> for Recorder<T> {
    fn start(&mut self, x: Vec2<T>, eta: &[T]) {
        self.x.push(x);
        self.eta.extend_from_slice(eta);
    }

    fn step(&mut self, r: &StepRecord<'_, T>) {
        self.x.push(r.x_next);
        self.eta.extend_from_slice(r.eta_next);
    }
}

/// Integrator bound to one membrane and configuration.
#[derive(Clone)]
pub struct Simulator<T> {
    membrane: Membrane<T>,
    config: SimConfig<T>,
    n_steps: usize,
    transition: OUTransition<T>,
    sampler: Arc<dyn StationaryY<T>>,
    eps_alpha: T,
}

impl<T: Scalar> Simulator<T> {
    pub fn new(membrane: Membrane<T>, config: SimConfig<T>) -> Result<Self, SimError> {
        Self::with_sampler(membrane, config, Arc::new(RhoYSampler))
    }

    pub fn with_sampler(membrane: Membrane<T>, config: SimConfig<T>, sampler: Arc<dyn StationaryY<T>>) -> Result<Self, SimError> {
        let n_steps = config.validate()?;
        let regime = config.regime;
        let stepper = OUStepper::new(membrane.modes(), membrane.spectra(), from_usize(regime.beta() as usize), config.epsilon);
        let transition = stepper.transition(config.dt);
        let eps_alpha = config.epsilon.powi(regime.alpha() as i32);
        Ok(Simulator { membrane, config, n_steps, transition, sampler, eps_alpha })
    }

    pub fn config(&self) -> &SimConfig<T> {
        &self.config
    }

    pub fn membrane(&self) -> &Membrane<T> {
        &self.membrane
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Integrates one replica, reporting every step to `visitor`.
    pub fn run<V: PathVisitor<T>>(&self, replica_id: u64, visitor: &mut V) -> (Vec2<T>, Vec<T>) {
        let seed = self.config.master_seed;
        let mut rng_init = substream(seed, replica_id, STREAM_INIT);
        let mut rng_eta = substream(seed, replica_id, STREAM_ETA);
        let mut rng_noise = substream(seed, replica_id, STREAM_NOISE);
        let m = &self.membrane;
        let mut eta = sample_stationary(m.modes(), m.spectra(), &mut rng_init).coords;
        let mut x = match self.config.x0 {
            InitialPosition::Point(p) => p,
            InitialPosition::Stationary => {
                let y = self.sampler.sample_y(m, &eta, &mut rng_init);
                [y[0] * self.eps_alpha, y[1] * self.eps_alpha]
            }
        };
        visitor.start(x, &eta);
        let mut eta_next = eta.clone();
        let dt = self.config.dt;
        let sqrt_dt = dt.sqrt();
        let drift_scale = dt / self.eps_alpha;
        let two = lit::<T>(2.0);
        for index in 0..self.n_steps {
            let y = [wrap_unit(x[0] / self.eps_alpha), wrap_unit(x[1] / self.eps_alpha)];
            let geom = m.geometry(y, &eta);
            let drift = geom.drift();
            let sigma = geom.sigma();
            let root = sqrt_psd(sigma.scale(two));
            let xi = [normal::<T, _>(&mut rng_noise) * sqrt_dt, normal::<T, _>(&mut rng_noise) * sqrt_dt];
            let kick = root.mul_vec(xi);
            let x_next = [x[0] + drift[0] * drift_scale + kick[0], x[1] + drift[1] * drift_scale + kick[1]];
            eta_next.copy_from_slice(&eta);
            self.transition.advance(&mut eta_next, &mut rng_eta);
            visitor.step(&StepRecord { index, x, x_next, y, eta: &eta, eta_next: &eta_next, drift, sigma });
            std::mem::swap(&mut eta, &mut eta_next);
            x = x_next;
        }
        (x, eta)
    }

    pub fn simulate_path(&self, replica_id: u64) -> PathSample<T> {
        let dim = self.membrane.dim();
        let mut rec = Recorder { x: Vec::with_capacity(self.n_steps + 1), eta: Vec::with_capacity((self.n_steps + 1) * dim) };
        self.run(replica_id, &mut rec);
        PathSample {
            replica_id,
            master_seed: self.config.master_seed,
            dt: self.config.dt,
            epsilon: self.config.epsilon,
            alpha: self.config.regime.alpha(),
            x: rec.x,
            eta: rec.eta,
            dim,
        }
    }

    /// All replicas `0..n_paths`, in replica order.
    pub fn batch_simulate(&self) -> Vec<PathSample<T>> {
        self.batch_map(|id| self.simulate_path(id))
    }

    /// Maps every replica id through `f` in parallel; the result is ordered
    /// by replica id whatever the completion order.
    pub fn batch_map<R: Send>(&self, f: impl Fn(u64) -> R + Sync + Send) -> Vec<R> {
        (0..self.config.n_paths as u64).into_par_iter().map(f).collect()
    }
}

/// Mean squared displacement `E|X_T - X_0|²` over a batch.
pub fn mean_squared_displacement<T: Scalar>(paths: &[PathSample<T>]) -> T {
    let n = from_usize::<T>(paths.len());
    paths
        .iter()
        .map(|p| {
            let (a, b) = (p.x[0], p.x[p.x.len() - 1]);
            (b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)
        })
        .fold(T::zero(), |acc, v| acc + v)
        / n
}

/// Uniform draw on the torus from an auxiliary stream.
pub fn uniform_point<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> Vec2<T> {
    [uniform(rng), uniform(rng)]
}
