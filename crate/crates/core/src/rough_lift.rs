//! Level-2 lifts of discrete planar paths and their diagnostics.
//!
//! Second levels are left-point (Itô) or trapezoid (Stratonovich) sums on
//! the simulation grid. They are reported on a dyadic set of index pairs,
//! but any grid pair can be evaluated on demand.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::membrane::Membrane;
use crate::sde_sim::{PathSample, PathVisitor, Regime, StepRecord};
use crate::scalar::{frobenius, from_usize, lit, norm2, Mat2, Scalar, Vec2};

/// Default upper bound on the number of reported pairs.
pub const MAX_PAIRS: usize = 1 << 12;

#[derive(Debug, Error, PartialEq)]
pub enum LiftError {
    #[error("pair ({s}, {t}) is not an ordered pair of grid indices in 0..={n}")]
    OffGrid { s: usize, t: usize, n: usize },
    #[error("triple ({r}, {s}, {t}) is not ordered")]
    Unordered { r: usize, s: usize, t: usize },
    #[error("path has no steps")]
    Empty,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    Ito,
    Stratonovich,
}

impl Flavor {
    pub fn name(self) -> &'static str {
        match self {
            Flavor::Ito => "ito",
            Flavor::Stratonovich => "stratonovich",
        }
    }
}

/// Ordered index pairs `s < t` on a grid of `n_steps` steps.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairSet {
    n_steps: usize,
    pairs: Vec<(usize, usize)>,
    /// Dyadic level of each pair; the full interval added on non-dyadic
    /// grids gets `usize::MAX`.
    levels: Vec<usize>,
}

impl PairSet {
    /// Pairs `(j 2^m, (j+1) 2^m)` for all levels `m`, plus the full interval.
    /// The finest levels are dropped until at most [`MAX_PAIRS`] remain.
    pub fn dyadic(n_steps: usize) -> Self {
        Self::dyadic_limited(n_steps, MAX_PAIRS)
    }

    pub fn dyadic_limited(n_steps: usize, max_pairs: usize) -> Self {
        assert!(n_steps > 0, "grid needs at least one step");
        let top = usize::BITS as usize - 1 - n_steps.leading_zeros() as usize;
        let count = |m: usize| n_steps >> m;
        let mut lowest = 0;
        loop {
            let total: usize = (lowest..=top).map(count).sum::<usize>() + 1;
            if total <= max_pairs || lowest == top {
                break;
            }
            lowest += 1;
        }
        let mut pairs = Vec::new();
        let mut levels = Vec::new();
        for m in lowest..=top {
            let len = 1usize << m;
            for j in 0..count(m) {
                pairs.push((j * len, (j + 1) * len));
                levels.push(m);
            }
        }
        if !pairs.contains(&(0, n_steps)) {
            pairs.push((0, n_steps));
            levels.push(usize::MAX);
        }
        PairSet { n_steps, pairs, levels }
    }

    pub fn from_pairs(n_steps: usize, pairs: Vec<(usize, usize)>) -> Result<Self, LiftError> {
        for &(s, t) in &pairs {
            if s >= t || t > n_steps {
                return Err(LiftError::OffGrid { s, t, n: n_steps });
            }
        }
        let levels = vec![usize::MAX; pairs.len()];
        Ok(PairSet { n_steps, pairs, levels })
    }

    /// Drops the finest dyadic level still present.
    pub fn coarsen(&self) -> Self {
        let finest = self.levels.iter().copied().filter(|&l| l != usize::MAX).min();
        let keep: Vec<bool> = self.levels.iter().map(|&l| Some(l) != finest || finest.is_none()).collect();
        PairSet {
            n_steps: self.n_steps,
            pairs: self.pairs.iter().zip(&keep).filter(|(_, &k)| k).map(|(p, _)| *p).collect(),
            levels: self.levels.iter().zip(&keep).filter(|(_, &k)| k).map(|(l, _)| *l).collect(),
        }
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }
}

/// A planar path together with its second level on a pair set.
#[derive(Clone, Debug, PartialEq)]
pub struct RoughPathLift<T> {
    flavor: Flavor,
    x: Vec<Vec2<T>>,
    grid_dt: T,
    pairs: PairSet,
    second_level: Vec<Mat2<T>>,
}

pub fn ito_lift<T: Scalar>(path: &PathSample<T>, pairs: &PairSet) -> Result<RoughPathLift<T>, LiftError> {
    RoughPathLift::from_points(path.x.clone(), path.dt, Flavor::Ito, pairs)
}

pub fn strato_lift<T: Scalar>(path: &PathSample<T>, pairs: &PairSet) -> Result<RoughPathLift<T>, LiftError> {
    RoughPathLift::from_points(path.x.clone(), path.dt, Flavor::Stratonovich, pairs)
}

/// Second level of `x` over `[s, t)` by direct summation.
pub fn iterated_sum<T: Scalar>(x: &[Vec2<T>], s: usize, t: usize, flavor: Flavor) -> Mat2<T> {
    let half = lit::<T>(0.5);
    let base = x[s];
    let mut out = [[T::zero(); 2]; 2];
    for u in s..t {
        let d = [x[u + 1][0] - x[u][0], x[u + 1][1] - x[u][1]];
        let left = match flavor {
            Flavor::Ito => [x[u][0] - base[0], x[u][1] - base[1]],
            Flavor::Stratonovich => [
                half * (x[u][0] + x[u + 1][0]) - base[0],
                half * (x[u][1] + x[u + 1][1]) - base[1],
            ],
        };
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = out[i][j] + left[i] * d[j];
            }
        }
    }
    out
}

/// `½ Σ_{u∈[s,t)} δX ⊗ δX`
pub fn half_bracket<T: Scalar>(x: &[Vec2<T>], s: usize, t: usize) -> Mat2<T> {
    let half = lit::<T>(0.5);
    let mut out = [[T::zero(); 2]; 2];
    for u in s..t {
        let d = [x[u + 1][0] - x[u][0], x[u + 1][1] - x[u][1]];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = out[i][j] + half * d[i] * d[j];
            }
        }
    }
    out
}

impl<T: Scalar> RoughPathLift<T> {
    pub fn from_points(x: Vec<Vec2<T>>, grid_dt: T, flavor: Flavor, pairs: &PairSet) -> Result<Self, LiftError> {
        if x.len() < 2 {
            return Err(LiftError::Empty);
        }
        let n = x.len() - 1;
        for &(s, t) in pairs.pairs() {
            if s >= t || t > n {
                return Err(LiftError::OffGrid { s, t, n });
            }
        }
        let second_level = pairs.pairs().iter().map(|&(s, t)| iterated_sum(&x, s, t, flavor)).collect();
        Ok(RoughPathLift { flavor, x, grid_dt, pairs: pairs.clone(), second_level })
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    pub fn grid_dt(&self) -> T {
        self.grid_dt
    }

    pub fn base(&self) -> &[Vec2<T>] {
        &self.x
    }

    pub fn n_steps(&self) -> usize {
        self.x.len() - 1
    }

    pub fn pair_set(&self) -> &PairSet {
        &self.pairs
    }

    /// Second level on the reported pairs, aligned with `pair_set().pairs()`.
    pub fn second_level(&self) -> &[Mat2<T>] {
        &self.second_level
    }

    fn check(&self, s: usize, t: usize) -> Result<(), LiftError> {
        if s > t || t > self.n_steps() {
            return Err(LiftError::OffGrid { s, t, n: self.n_steps() });
        }
        Ok(())
    }

    pub fn increment(&self, s: usize, t: usize) -> Result<Vec2<T>, LiftError> {
        self.check(s, t)?;
        Ok([self.x[t][0] - self.x[s][0], self.x[t][1] - self.x[s][1]])
    }

    /// Second level over any grid pair `s ≤ t`.
    pub fn level2(&self, s: usize, t: usize) -> Result<Mat2<T>, LiftError> {
        self.check(s, t)?;
        if let Some(k) = self.pairs.pairs().iter().position(|&p| p == (s, t)) {
            return Ok(self.second_level[k]);
        }
        Ok(iterated_sum(&self.x, s, t, self.flavor))
    }

    pub fn half_bracket(&self, s: usize, t: usize) -> Result<Mat2<T>, LiftError> {
        self.check(s, t)?;
        Ok(half_bracket(&self.x, s, t))
    }

    /// The same path lifted with the other flavor.
    pub fn with_flavor(&self, flavor: Flavor) -> Self {
        Self::from_points(self.x.clone(), self.grid_dt, flavor, &self.pairs).expect("pairs already validated")
    }
}

/// `𝕏_{r,t} - 𝕏_{r,s} - 𝕏_{s,t} - X_{r,s} ⊗ X_{s,t}`
pub fn chen_defect<T: Scalar>(lift: &RoughPathLift<T>, r: usize, s: usize, t: usize) -> Result<Mat2<T>, LiftError> {
    if !(r <= s && s <= t) {
        return Err(LiftError::Unordered { r, s, t });
    }
    let rt = lift.level2(r, t)?;
    let rs = lift.level2(r, s)?;
    let st = lift.level2(s, t)?;
    let a = lift.increment(r, s)?;
    let b = lift.increment(s, t)?;
    let mut out = [[T::zero(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = rt[i][j] - rs[i][j] - st[i][j] - a[i] * b[j];
        }
    }
    Ok(out)
}

/// Chen defect divided by the size of the terms it balances.
pub fn chen_defect_relative<T: Scalar>(lift: &RoughPathLift<T>, r: usize, s: usize, t: usize) -> Result<T, LiftError> {
    let defect = chen_defect(lift, r, s, t)?;
    let a = lift.increment(r, s)?;
    let b = lift.increment(s, t)?;
    let scale = [lift.level2(r, t)?, lift.level2(r, s)?, lift.level2(s, t)?]
        .iter()
        .map(|m| frobenius(*m))
        .fold(norm2(a) * norm2(b), T::max);
    if scale == T::zero() {
        return Ok(frobenius(defect));
    }
    Ok(frobenius(defect) / scale)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderReport<T> {
    pub gamma: T,
    pub norm_x: T,
    pub norm_xx: T,
}

/// Grid Hölder norms over the lift's pair set.
pub fn holder_norms<T: Scalar>(lift: &RoughPathLift<T>, gamma: T) -> HolderReport<T> {
    let mut norm_x = T::zero();
    let mut norm_xx = T::zero();
    for (&(s, t), second) in lift.pairs.pairs().iter().zip(&lift.second_level) {
        let h = from_usize::<T>(t - s) * lift.grid_dt;
        let inc = [lift.x[t][0] - lift.x[s][0], lift.x[t][1] - lift.x[s][1]];
        norm_x = norm_x.max(norm2(inc) / h.powf(gamma));
        norm_xx = norm_xx.max(frobenius(*second) / h.powf(gamma + gamma));
    }
    HolderReport { gamma, norm_x, norm_xx }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UCVReport<T> {
    /// `Σ dt · 2Σ_ii` per component.
    pub expected_qv: Vec2<T>,
    /// `Σ dt · |F| / ε^α`.
    pub expected_tv: T,
}

/// Accumulates the UCV diagnostics while a path is being simulated.
#[derive(Clone, Debug)]
pub struct UcvAccumulator<T> {
    dt: T,
    drift_scale: T,
    report: UCVReport<T>,
}

impl<T: Scalar> UcvAccumulator<T> {
    pub fn new(dt: T, regime: Regime, epsilon: T) -> Self {
        UcvAccumulator {
            dt,
            drift_scale: epsilon.powi(-(regime.alpha() as i32)),
            report: UCVReport { expected_qv: [T::zero(); 2], expected_tv: T::zero() },
        }
    }

    pub fn add(&mut self, drift: Vec2<T>, sigma: crate::scalar::Sym2<T>) {
        let two = lit::<T>(2.0);
        self.report.expected_tv = self.report.expected_tv + self.dt * norm2(drift) * self.drift_scale;
        self.report.expected_qv[0] = self.report.expected_qv[0] + self.dt * two * sigma.xx;
        self.report.expected_qv[1] = self.report.expected_qv[1] + self.dt * two * sigma.yy;
    }

    pub fn report(&self) -> UCVReport<T> {
        self.report
    }
}

impl<T: Scalar> PathVisitor<T> for UcvAccumulator<T> {
    fn step(&mut self, r: &StepRecord<'_, T>) {
        self.add(r.drift, r.sigma);
    }
}

/// UCV diagnostics re-evaluated along a stored path.
pub fn ucv_diagnostics<T: Scalar>(membrane: &Membrane<T>, path: &PathSample<T>, regime: Regime, epsilon: T) -> UCVReport<T> {
    let mut acc = UcvAccumulator::new(path.dt, regime, epsilon);
    for u in 0..path.n_steps() {
        let g = membrane.geometry(path.y(u), path.eta(u));
        acc.add(g.drift(), g.sigma());
    }
    acc.report()
}

/// Full-interval Itô second level and half bracket accumulated on the fly.
#[derive(Clone, Debug)]
pub struct FullIntervalLift<T> {
    x0: Vec2<T>,
    last: Vec2<T>,
    ito: Mat2<T>,
    half_bracket: Mat2<T>,
}

impl<T: Scalar> Default for FullIntervalLift<T> {
    fn default() -> Self {
        let z = [[T::zero(); 2]; 2];
        FullIntervalLift { x0: [T::zero(); 2], last: [T::zero(); 2], ito: z, half_bracket: z }
    }
}

impl<T: Scalar> FullIntervalLift<T> {
    pub fn increment(&self) -> Vec2<T> {
        [self.last[0] - self.x0[0], self.last[1] - self.x0[1]]
    }

    pub fn level2(&self, flavor: Flavor) -> Mat2<T> {
        match flavor {
            Flavor::Ito => self.ito,
            Flavor::Stratonovich => {
                let mut out = self.ito;
                for i in 0..2 {
                    for j in 0..2 {
                        out[i][j] = out[i][j] + self.half_bracket[i][j];
                    }
                }
                out
            }
        }
    }
}

impl<T: Scalar> PathVisitor<T> for FullIntervalLift<T> {
    fn start(&mut self, x: Vec2<T>, _eta: &[T]) {
        *self = FullIntervalLift { x0: x, last: x, ..Default::default() };
    }

    fn step(&mut self, r: &StepRecord<'_, T>) {
        let half = lit::<T>(0.5);
        let d = [r.x_next[0] - r.x[0], r.x_next[1] - r.x[1]];
        let left = [r.x[0] - self.x0[0], r.x[1] - self.x0[1]];
        for i in 0..2 {
            for j in 0..2 {
                self.ito[i][j] = self.ito[i][j] + left[i] * d[j];
                self.half_bracket[i][j] = self.half_bracket[i][j] + half * d[i] * d[j];
            }
        }
        self.last = r.x_next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dyadic_pairs_respect_limit_and_include_full_interval() {
        for n in [1usize, 2, 7, 1000, 1024, 6400, 25600] {
            let p = PairSet::dyadic(n);
            assert!(p.len() <= MAX_PAIRS, "n = {n}: {}", p.len());
            assert!(p.pairs().contains(&(0, n)));
            assert!(p.pairs().iter().all(|&(s, t)| s < t && t <= n));
        }
        let p = PairSet::dyadic(1024);
        assert_eq!(p.len(), 2047);
        assert_eq!(p.coarsen().len(), 1023);
    }

    #[test]
    fn linear_path_sums() {
        let n = 10;
        let total = 2.0;
        let v = [1.5, -0.5];
        let x: Vec<Vec2<f64>> = (0..=n).map(|i| [v[0] * total * i as f64 / n as f64, v[1] * total * i as f64 / n as f64]).collect();
        let pairs = PairSet::dyadic(n);
        let ito = RoughPathLift::from_points(x.clone(), total / n as f64, Flavor::Ito, &pairs).unwrap();
        let st = ito.with_flavor(Flavor::Stratonovich);
        let a = ito.level2(0, n).unwrap();
        let b = st.level2(0, n).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let exact = v[i] * v[j] * total * total / 2.0;
                assert!((a[i][j] - exact * (n as f64 - 1.0) / n as f64).abs() < 1e-12);
                assert!((b[i][j] - exact).abs() < 1e-12);
            }
        }
        let rep = holder_norms(&ito, 0.4);
        assert!((rep.norm_x - norm2(v) * total.powf(0.6)).abs() < 1e-12);
    }

    #[test]
    fn off_grid_pairs_are_rejected() {
        assert!(PairSet::from_pairs(4, vec![(1, 5)]).is_err());
        assert!(PairSet::from_pairs(4, vec![(2, 2)]).is_err());
        let x = vec![[0.0, 0.0]; 5];
        let lift = RoughPathLift::from_points(x, 0.1, Flavor::Ito, &PairSet::dyadic(4)).unwrap();
        assert!(lift.level2(3, 9).is_err());
        assert!(chen_defect(&lift, 3, 1, 2).is_err());
    }
}
