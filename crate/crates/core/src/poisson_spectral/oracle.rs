//! Monte-Carlo resolvent estimates `χ(y, η) ≈ ∫₀^{T*} E[F(Y_t, η_t)] dt`.
//!
//! The fast pair is run in its own time scale, either with η frozen or with
//! η following its OU law. The horizon is `T* = 8/λ̂`, where `λ̂` is fitted
//! to the exponential decay of `|E[F]|` in a pilot ensemble, and the part of
//! the integral beyond `T*` is bounded by the fitted envelope.

use crate::membrane::Membrane;
use crate::ou_process::{OUStepper, OUTransition};
use crate::rng::{normal, substream, STREAM_ETA, STREAM_NOISE};
use crate::scalar::{from_usize, lit, Scalar, Vec2};
use crate::sde_sim::sqrt_psd;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FastDynamics {
    /// η held at its initial value.
    Frozen,
    /// η evolves as the unscaled OU process.
    Joint,
}

#[derive(Clone, Copy, Debug)]
pub struct ResolventOptions<T> {
    pub n_paths: usize,
    pub dt: T,
    pub seed: u64,
    pub pilot_paths: usize,
    pub pilot_horizon: T,
    /// Overrides the fitted horizon.
    pub horizon: Option<T>,
}

impl<T: Scalar> Default for ResolventOptions<T> {
    fn default() -> Self {
        ResolventOptions { n_paths: 10_000, dt: lit(1e-4), seed: 7, pilot_paths: 2000, pilot_horizon: lit(0.3), horizon: None }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ResolventEstimate<T> {
    pub value: Vec2<T>,
    pub stderr: Vec2<T>,
    pub horizon: T,
    /// Fitted decay rate `λ̂`.
    pub decay_rate: T,
    /// Envelope bound on `|∫_{T*}^∞ E[F] dt|`.
    pub truncation_bound: T,
}

struct FastPath<'a, T: Scalar> {
    membrane: &'a Membrane<T>,
    ou: Option<OUTransition<T>>,
    dt: T,
}

impl<T: Scalar> FastPath<'_, T> {
    /// Runs `steps` Euler steps and hands `F` at every grid time to `visit`.
    fn run(&self, y0: Vec2<T>, eta0: &[T], steps: usize, seed: u64, replica: u64, mut visit: impl FnMut(usize, Vec2<T>)) {
        let mut noise = substream(seed, replica, STREAM_NOISE);
        let mut eta_rng = substream(seed, replica, STREAM_ETA);
        let mut y = y0;
        let mut eta = eta0.to_vec();
        let sdt = self.dt.sqrt();
        let two = lit::<T>(2.0);
        for i in 0..=steps {
            let geo = self.membrane.geometry(y, &eta);
            let f = geo.drift();
            visit(i, f);
            if i == steps {
                break;
            }
            let root = sqrt_psd(geo.sigma().scale(two));
            let xi = [normal::<T, _>(&mut noise), normal::<T, _>(&mut noise)];
            let kick = root.mul_vec(xi);
            y = [y[0] + f[0] * self.dt + kick[0] * sdt, y[1] + f[1] * self.dt + kick[1] * sdt];
            if let Some(tr) = &self.ou {
                tr.advance(&mut eta, &mut eta_rng);
            }
        }
    }
}

/// Decay rate from a log-linear fit of `|mean F(t)|` over the leading
/// stretch where it exceeds three standard errors.
fn fit_decay<T: Scalar>(times: &[T], mean: &[T], se: &[T]) -> Option<(T, T)> {
    let pts: Vec<(T, T)> = times
        .iter()
        .zip(mean.iter().zip(se))
        .take_while(|(_, (m, s))| **m > lit::<T>(3.0) * **s && **m > T::zero())
        .map(|(&t, (&m, _))| (t, m.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = from_usize::<T>(pts.len());
    let (st, sl) = pts.iter().fold((T::zero(), T::zero()), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mt, ml) = (st / n, sl / n);
    let (cov, var) = pts.iter().fold((T::zero(), T::zero()), |a, p| (a.0 + (p.0 - mt) * (p.1 - ml), a.1 + (p.0 - mt) * (p.0 - mt)));
    let slope = cov / var;
    if !(slope < T::zero()) {
        return None;
    }
    Some((-slope, (ml - slope * mt).exp()))
}

/// Estimates the corrector at `(y0, eta0)` for the chosen fast dynamics.
pub fn resolvent_oracle<T: Scalar>(
    membrane: &Membrane<T>,
    y0: Vec2<T>,
    eta0: &[T],
    dynamics: FastDynamics,
    opts: &ResolventOptions<T>,
) -> ResolventEstimate<T> {
    let ou = match dynamics {
        FastDynamics::Frozen => None,
        FastDynamics::Joint => {
            Some(OUStepper::new(membrane.modes(), membrane.spectra(), T::zero(), T::one()).transition(opts.dt))
        }
    };
    let fast = FastPath { membrane, ou, dt: opts.dt };
    let (decay_rate, amplitude) = match opts.horizon {
        Some(h) => (lit::<T>(8.0) / h, T::zero()),
        None => {
            let steps = (opts.pilot_horizon / opts.dt).round().to_usize().unwrap_or(1).max(1);
            let stride = (steps / 60).max(1);
            let bins = steps / stride + 1;
            let mut sum = vec![[T::zero(); 2]; bins];
            let mut sq = vec![[T::zero(); 2]; bins];
            for p in 0..opts.pilot_paths {
                fast.run(y0, eta0, steps, opts.seed ^ 0x5eed, p as u64, |i, f| {
                    if i % stride == 0 {
                        let b = i / stride;
                        for c in 0..2 {
                            sum[b][c] = sum[b][c] + f[c];
                            sq[b][c] = sq[b][c] + f[c] * f[c];
                        }
                    }
                });
            }
            let n = from_usize::<T>(opts.pilot_paths);
            let mut times = Vec::new();
            let mut mean = Vec::new();
            let mut se = Vec::new();
            for b in 0..bins {
                let m = [sum[b][0] / n, sum[b][1] / n];
                let v = (sq[b][0] / n - m[0] * m[0]).max(T::zero()) + (sq[b][1] / n - m[1] * m[1]).max(T::zero());
                times.push(from_usize::<T>(b * stride) * opts.dt);
                mean.push((m[0] * m[0] + m[1] * m[1]).sqrt());
                se.push((v / n).sqrt());
            }
            fit_decay(&times[1..], &mean[1..], &se[1..])
                .unwrap_or((lit::<T>(8.0) / opts.pilot_horizon, mean[0]))
        }
    };
    let horizon = opts.horizon.unwrap_or(lit::<T>(8.0) / decay_rate);
    let steps = (horizon / opts.dt).round().to_usize().unwrap_or(1).max(1);
    let half = lit::<T>(0.5);
    let mut sum = [T::zero(); 2];
    let mut sq = [T::zero(); 2];
    for p in 0..opts.n_paths {
        let mut acc = [T::zero(); 2];
        fast.run(y0, eta0, steps, opts.seed, p as u64, |i, f| {
            let w = if i == 0 || i == steps { half } else { T::one() };
            acc[0] = acc[0] + w * f[0] * opts.dt;
            acc[1] = acc[1] + w * f[1] * opts.dt;
        });
        for c in 0..2 {
            sum[c] = sum[c] + acc[c];
            sq[c] = sq[c] + acc[c] * acc[c];
        }
    }
    let n = from_usize::<T>(opts.n_paths);
    let value = [sum[0] / n, sum[1] / n];
    let stderr = [
        ((sq[0] / n - value[0] * value[0]).max(T::zero()) / (n - T::one())).sqrt(),
        ((sq[1] / n - value[1] * value[1]).max(T::zero()) / (n - T::one())).sqrt(),
    ];
    let truncation_bound = amplitude * (-decay_rate * horizon).exp() / decay_rate;
    ResolventEstimate { value, stderr, horizon, decay_rate, truncation_bound }
}
