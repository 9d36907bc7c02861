//! Monte-Carlo estimators of `D`, `A` and `Ã` from full-interval lifts.
//!
//! Every estimator reduces the replicas in replica order. Standard errors
//! come from [`N_BATCHES`] contiguous batches of replicas.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use super::spectral::averaged_coefficients;
use super::{HomogenizeError, HomogenizedQuantities};
use crate::membrane::Membrane;
use crate::rng::{normal, substream, STREAM_NOISE};
use crate::rough_lift::{iterated_sum, Flavor, FullIntervalLift};
use crate::scalar::{from_usize, lit, Mat2, Scalar, Vec2};
use crate::sde_sim::{sqrt_psd, InitialPosition, PathSample, PathVisitor, Regime, SimConfig, Simulator, StationaryY, StepRecord};

/// Number of batches behind every standard error.
pub const N_BATCHES: usize = 20;

/// What one replica contributes to the estimators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReplicaSummary<T> {
    pub replica_id: u64,
    pub horizon: T,
    /// `X_T − X_0`.
    pub increment: Vec2<T>,
    /// Itô `𝕏_{0,T}`.
    pub ito: Mat2<T>,
    /// Stratonovich `𝕏_{0,T}`.
    pub strato: Mat2<T>,
}

impl<T: Scalar> ReplicaSummary<T> {
    pub fn level2(&self, flavor: Flavor) -> Mat2<T> {
        match flavor {
            Flavor::Ito => self.ito,
            Flavor::Stratonovich => self.strato,
        }
    }

    fn from_lift(replica_id: u64, horizon: T, lift: &FullIntervalLift<T>) -> Self {
        ReplicaSummary {
            replica_id,
            horizon,
            increment: lift.increment(),
            ito: lift.level2(Flavor::Ito),
            strato: lift.level2(Flavor::Stratonovich),
        }
    }
}

/// Runs every replica of `sim` through a full-interval lift.
pub fn summarize_replicas<T: Scalar>(sim: &Simulator<T>) -> Vec<ReplicaSummary<T>> {
    let horizon = sim.config().horizon;
    sim.batch_map(|id| {
        let mut lift = FullIntervalLift::default();
        sim.run(id, &mut lift);
        ReplicaSummary::from_lift(id, horizon, &lift)
    })
}

/// Summary of a stored path.
pub fn summarize_path<T: Scalar>(path: &PathSample<T>) -> ReplicaSummary<T> {
    let n = path.n_steps();
    let (a, b) = (path.x[0], path.x[n]);
    ReplicaSummary {
        replica_id: path.replica_id,
        horizon: path.time(n),
        increment: [b[0] - a[0], b[1] - a[1]],
        ito: iterated_sum(&path.x, 0, n, Flavor::Ito),
        strato: iterated_sum(&path.x, 0, n, Flavor::Stratonovich),
    }
}

/// How the increments are centred before forming `D̂`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Centering<T> {
    /// Sample covariance.
    SampleMean,
    /// Second moment of `X_T − X_0 − L T` for a known drift `L`.
    Drift(Vec2<T>),
}

/// A 2x2 estimate with batch-means standard errors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatrixEstimate<T> {
    pub value: Mat2<T>,
    pub stderr: Mat2<T>,
    pub n_replicas: usize,
    pub n_batches: usize,
}

impl<T: Scalar> MatrixEstimate<T> {
    /// Whether every entry lies within `k` standard errors of `target`.
    pub fn compatible_with(&self, target: Mat2<T>, k: T) -> bool {
        (0..2).all(|i| (0..2).all(|j| num_traits::Float::abs(self.value[i][j] - target[i][j]) <= k * self.stderr[i][j]))
    }

    /// Frobenius distance to `target` and its standard error by linearization
    /// over entries.
    pub fn frobenius_error(&self, target: Mat2<T>) -> (T, T) {
        let mut sq = T::zero();
        let mut var = T::zero();
        for i in 0..2 {
            for j in 0..2 {
                let d = self.value[i][j] - target[i][j];
                sq = sq + d * d;
                var = var + d * d * self.stderr[i][j] * self.stderr[i][j];
            }
        }
        let norm = sq.sqrt();
        let se = if norm > T::zero() {
            var.sqrt() / norm
        } else {
            let mut s = T::zero();
            for row in self.stderr {
                for v in row {
                    s = s + v * v;
                }
            }
            s.sqrt()
        };
        (norm, se)
    }
}

fn common_horizon<T: Scalar>(summaries: &[ReplicaSummary<T>]) -> Result<T, HomogenizeError> {
    let needed = 2 * N_BATCHES;
    if summaries.len() < needed {
        return Err(HomogenizeError::TooFewReplicas { needed, got: summaries.len() });
    }
    let t = summaries[0].horizon;
    if summaries.iter().any(|s| s.horizon != t) {
        return Err(HomogenizeError::MixedHorizons);
    }
    if !(t > T::zero()) {
        return Err(HomogenizeError::Invalid("horizon must be positive".into()));
    }
    Ok(t)
}

fn batch_estimate<T: Scalar>(summaries: &[ReplicaSummary<T>], f: impl Fn(&[ReplicaSummary<T>]) -> Mat2<T>) -> MatrixEstimate<T> {
    let n = summaries.len();
    let value = f(summaries);
    let values: Vec<Mat2<T>> = (0..N_BATCHES).map(|b| f(&summaries[b * n / N_BATCHES..(b + 1) * n / N_BATCHES])).collect();
    let nb = from_usize::<T>(N_BATCHES);
    let mut stderr = [[T::zero(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let mean = values.iter().map(|v| v[i][j]).sum::<T>() / nb;
            let var = values.iter().map(|v| (v[i][j] - mean) * (v[i][j] - mean)).sum::<T>() / (nb - T::one());
            stderr[i][j] = (var / nb).sqrt();
        }
    }
    MatrixEstimate { value, stderr, n_replicas: n, n_batches: N_BATCHES }
}

fn diffusivity<T: Scalar>(s: &[ReplicaSummary<T>], centering: Centering<T>, horizon: T) -> Mat2<T> {
    let n = from_usize::<T>(s.len());
    let (centre, denom) = match centering {
        Centering::SampleMean => {
            let m = s.iter().fold([T::zero(); 2], |a, r| [a[0] + r.increment[0], a[1] + r.increment[1]]);
            ([m[0] / n, m[1] / n], n - T::one())
        }
        Centering::Drift(l) => ([l[0] * horizon, l[1] * horizon], n),
    };
    let mut out = [[T::zero(); 2]; 2];
    for r in s {
        let d = [r.increment[0] - centre[0], r.increment[1] - centre[1]];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = out[i][j] + d[i] * d[j];
            }
        }
    }
    let scale = T::one() / (denom * lit::<T>(2.0) * horizon);
    out.map(|row| row.map(|v| v * scale))
}

/// `D̂ = Cov(X_T − X_0) / 2T`.
pub fn mc_estimate_d<T: Scalar>(summaries: &[ReplicaSummary<T>], centering: Centering<T>) -> Result<MatrixEstimate<T>, HomogenizeError> {
    let t = common_horizon(summaries)?;
    Ok(batch_estimate(summaries, |s| diffusivity(s, centering, t)))
}

/// `Â = mean(𝕏_{0,T}) / T − L⊗L T/2`; the Stratonovich flavor further
/// subtracts `D̂` formed about the same drift `L`, so it estimates `Ã`.
///
/// The symmetric part of a Stratonovich lift over `[0, T]` is exactly
/// `½ ΔX ΔXᵀ`, so in that flavor the symmetric part of the estimate reduces
/// to `½(L ΔX̄ᵀ + ΔX̄ Lᵀ) − L⊗L T` and is evaluated in that form.
pub fn mc_estimate_area<T: Scalar>(summaries: &[ReplicaSummary<T>], flavor: Flavor, drift: Vec2<T>) -> Result<MatrixEstimate<T>, HomogenizeError> {
    let t = common_horizon(summaries)?;
    let half = lit::<T>(0.5);
    Ok(batch_estimate(summaries, |s| {
        let n = from_usize::<T>(s.len());
        let mut lift = [[T::zero(); 2]; 2];
        let mut inc = [T::zero(); 2];
        for r in s {
            let x = r.level2(flavor);
            for i in 0..2 {
                inc[i] = inc[i] + r.increment[i] / n;
                for j in 0..2 {
                    lift[i][j] = lift[i][j] + x[i][j] / (n * t);
                }
            }
        }
        let mut est = [[T::zero(); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                est[i][j] = match flavor {
                    Flavor::Ito => lift[i][j] - drift[i] * drift[j] * t * half,
                    Flavor::Stratonovich => {
                        half * (lift[i][j] - lift[j][i]) + half * (drift[i] * inc[j] + inc[i] * drift[j]) - drift[i] * drift[j] * t
                    }
                };
            }
        }
        est
    }))
}

/// Simulates `dX = F̄ dt + √(2Σ̄) dB` with the averaged coefficients.
///
/// `F̄` and `Σ̄` do not depend on `x` because the stationary membrane law is
/// translation invariant, so they are evaluated once at `X₀`.
pub fn simulate_averaged_sde<T: Scalar>(
    membrane: &Membrane<T>,
    config: &SimConfig<T>,
    quadrature_order: usize,
) -> Result<Vec<ReplicaSummary<T>>, HomogenizeError> {
    let steps = config.validate()?;
    let x0 = match config.x0 {
        InitialPosition::Point(p) => p,
        InitialPosition::Stationary => [T::zero(); 2],
    };
    let (drift, sigma) = averaged_coefficients(membrane, x0, quadrature_order)?;
    let root = sqrt_psd(sigma.scale(lit(2.0)));
    let dt = config.dt;
    let sdt = dt.sqrt();
    Ok((0..config.n_paths as u64)
        .into_par_iter()
        .map(|id| {
            let mut rng = substream(config.master_seed, id, STREAM_NOISE);
            let mut lift = FullIntervalLift::default();
            let mut x = x0;
            lift.start(x, &[]);
            for index in 0..steps {
                let xi = [normal::<T, _>(&mut rng) * sdt, normal::<T, _>(&mut rng) * sdt];
                let k = root.mul_vec(xi);
                let next = [x[0] + drift[0] * dt + k[0], x[1] + drift[1] * dt + k[1]];
                lift.step(&StepRecord { index, x, x_next: next, y: x, eta: &[], eta_next: &[], drift, sigma });
                x = next;
            }
            ReplicaSummary::from_lift(id, config.horizon, &lift)
        })
        .collect())
}

/// One ε of a convergence study.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow<T> {
    pub epsilon: T,
    pub dt: T,
    pub n_paths: usize,
    pub d: MatrixEstimate<T>,
    pub a_ito: MatrixEstimate<T>,
    pub a_strato: MatrixEstimate<T>,
    pub reference: Option<HomogenizedQuantities<T>>,
    pub wall_s: f64,
}

impl<T: Scalar> ConvergenceRow<T> {
    /// `‖D̂ − D_ref‖_F` with its standard error.
    pub fn d_error(&self) -> Option<(T, T)> {
        self.reference.as_ref().map(|r| self.d.frobenius_error(r.d))
    }
}

/// Centering used for `D̂` in `regime`: about the spectral drift in the
/// `(1, 1)` regime, the sample mean otherwise.
pub fn default_centering<T: Scalar>(regime: Regime, reference: Option<&HomogenizedQuantities<T>>) -> Centering<T> {
    match (regime, reference.and_then(|r| r.l)) {
        (Regime::Hom11, Some(l)) => Centering::Drift(l),
        (Regime::Hom11, None) => Centering::Drift([T::zero(); 2]),
        _ => Centering::SampleMean,
    }
}

/// Simulates `base` at every ε (in descending order, with step `dt_for(ε)`)
/// and estimates `D`, `A` and `Ã` from the full-interval lifts.
pub fn convergence_table<T: Scalar>(
    membrane: &Membrane<T>,
    base: &SimConfig<T>,
    epsilons: &[T],
    dt_for: impl Fn(T) -> T,
    sampler: Arc<dyn StationaryY<T>>,
    reference: Option<&HomogenizedQuantities<T>>,
) -> Result<Vec<ConvergenceRow<T>>, HomogenizeError> {
    if epsilons.is_empty() {
        return Err(HomogenizeError::Invalid("no epsilon values".into()));
    }
    if epsilons.iter().any(|e| !(*e > T::zero())) {
        return Err(HomogenizeError::Invalid("epsilon values must be positive".into()));
    }
    let mut eps = epsilons.to_vec();
    eps.sort_by(|a, b| b.partial_cmp(a).expect("finite epsilons"));
    let drift = reference.and_then(|r| r.l).unwrap_or([T::zero(); 2]);
    let centering = default_centering(base.regime, reference);
    eps.into_iter()
        .map(|epsilon| {
            let start = Instant::now();
            let config = SimConfig { epsilon, dt: dt_for(epsilon), ..base.clone() };
            let sim = Simulator::with_sampler(membrane.clone(), config.clone(), sampler.clone())?;
            let summaries = summarize_replicas(&sim);
            Ok(ConvergenceRow {
                epsilon,
                dt: config.dt,
                n_paths: config.n_paths,
                d: mc_estimate_d(&summaries, centering)?,
                a_ito: mc_estimate_area(&summaries, Flavor::Ito, drift)?,
                a_strato: mc_estimate_area(&summaries, Flavor::Stratonovich, drift)?,
                reference: reference.cloned(),
                wall_s: start.elapsed().as_secs_f64(),
            })
        })
        .collect()
}
