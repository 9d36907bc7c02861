//! The y-generator at a frozen membrane state.
//!
//! `L₀ = F·∇ + Σ:∇∇` is reversible for `ρ_Y = √g / C`, so the corrector is
//! found from the Ritz form `S_ab = -∫ conj(∇e_a)·ρ_YΣ∇e_b dy`, which is
//! Hermitian negative semidefinite with the constants as its kernel. `S` is
//! applied matrix-free through the collocation grid and inverted by
//! preconditioned conjugate gradients.

use num_complex::Complex;

use super::{BasisDescriptor, InvariantDensity, PoissonSolution, RefinementStep, SpectralError};
use crate::fourier::{FftWork, FourierGrid};
use crate::linalg::{pcg, CMatrix};
use crate::membrane::Membrane;
use crate::scalar::{lit, to_f64, Scalar, Sym2, Vec2};

type C<T> = Complex<T>;

fn czero<T: Scalar>() -> C<T> {
    C::new(T::zero(), T::zero())
}

/// `L₀(η)` and `ρ_Y(·, η)` sampled on a collocation grid.
#[derive(Clone, Debug)]
pub struct FrozenOperator<T: Scalar> {
    grid: FourierGrid<T>,
    eta: Vec<T>,
    drift: Vec<Vec2<T>>,
    sigma: Vec<Sym2<T>>,
    rho: Vec<T>,
    normalization: T,
    rho_spectrum: Vec<C<T>>,
    mean_weight: Sym2<T>,
}

impl<T: Scalar> FrozenOperator<T> {
    pub fn new(membrane: &Membrane<T>, eta: &[T], grid: FourierGrid<T>) -> Result<Self, SpectralError> {
        membrane.check_state(eta)?;
        let n = grid.n_nodes();
        let mut drift = Vec::with_capacity(n);
        let mut sigma = Vec::with_capacity(n);
        let mut sqrt_g = Vec::with_capacity(n);
        for j in 0..n {
            let geo = membrane.geometry(grid.node(j), eta);
            drift.push(geo.drift());
            sigma.push(geo.sigma());
            sqrt_g.push(geo.det_g().sqrt());
        }
        let inv_n = T::one() / lit::<T>(n as f64);
        let normalization = sqrt_g.iter().copied().sum::<T>() * inv_n;
        let rho: Vec<T> = sqrt_g.iter().map(|&s| s / normalization).collect();
        let mut work = grid.work();
        for (b, &r) in work.buf.iter_mut().zip(&rho) {
            *b = C::new(r, T::zero());
        }
        grid.analyze_in_place(&mut work);
        let rho_spectrum = work.buf.clone();
        let mean_weight = rho
            .iter()
            .zip(&sigma)
            .fold(Sym2::zero(), |acc, (&r, s)| acc.add(s.scale(r)))
            .scale(inv_n);
        Ok(FrozenOperator { grid, eta: eta.to_vec(), drift, sigma, rho, normalization, rho_spectrum, mean_weight })
    }

    pub fn grid(&self) -> &FourierGrid<T> {
        &self.grid
    }

    pub fn eta(&self) -> &[T] {
        &self.eta
    }

    /// `C(η) = ∫ √g dy`.
    pub fn normalization(&self) -> T {
        self.normalization
    }

    /// `ρ_Y` at the collocation nodes.
    pub fn rho_nodes(&self) -> &[T] {
        &self.rho
    }

    pub fn drift_nodes(&self) -> &[Vec2<T>] {
        &self.drift
    }

    pub fn sigma_nodes(&self) -> &[Sym2<T>] {
        &self.sigma
    }

    /// Fourier coefficient `∫ ρ_Y e^{-2πi k·y} dy` for `|k_i| ≤ (N-1)/2`.
    pub fn rho_coefficient(&self, k: [i32; 2]) -> C<T> {
        self.grid.spectrum_at(&self.rho_spectrum, k)
    }

    /// `∫ f ρ_Y dy` for `f` given by retained coefficients.
    pub fn mean_rho(&self, coeffs: &[C<T>]) -> C<T> {
        coeffs
            .iter()
            .zip(self.grid.modes())
            .fold(czero(), |acc, (&c, &k)| acc + c * self.rho_coefficient(k).conj())
    }

    /// Nodal values of `∇f`.
    pub fn gradient_nodes(&self, coeffs: &[C<T>], work: &mut FftWork<T>) -> [Vec<C<T>>; 2] {
        let g = &self.grid;
        g.synthesize_with(coeffs, |k| g.ik(k)[0], work);
        let d1 = work.buf.clone();
        g.synthesize_with(coeffs, |k| g.ik(k)[1], work);
        [d1, work.buf.clone()]
    }

    /// Nodal values of `L₀f`.
    pub fn generator_nodes(&self, coeffs: &[C<T>], work: &mut FftWork<T>) -> Vec<C<T>> {
        let g = &self.grid;
        let [d1, d2] = self.gradient_nodes(coeffs, work);
        g.synthesize_with(coeffs, |k| g.ik(k)[0] * g.ik(k)[0], work);
        let d11 = work.buf.clone();
        g.synthesize_with(coeffs, |k| g.ik(k)[0] * g.ik(k)[1], work);
        let d12 = work.buf.clone();
        g.synthesize_with(coeffs, |k| g.ik(k)[1] * g.ik(k)[1], work);
        let two = lit::<T>(2.0);
        (0..g.n_nodes())
            .map(|j| {
                let (f, s) = (self.drift[j], self.sigma[j]);
                d1[j] * f[0] + d2[j] * f[1] + d11[j] * s.xx + d12[j] * (two * s.xy) + work.buf[j] * s.yy
            })
            .collect()
    }

    /// `P_M L₀ f`: the dy-orthogonal projection onto the retained modes.
    pub fn apply_projected(&self, coeffs: &[C<T>], out: &mut [C<T>], work: &mut FftWork<T>) {
        let vals = self.generator_nodes(coeffs, work);
        work.buf.copy_from_slice(&vals);
        self.grid.analyze_in_place(work);
        self.grid.truncate(&work.buf, out);
    }

    /// `(S f)_a = ∫ conj(e_a) ρ_Y L₀f dy = Σ_i 2πi a_i (ρ_YΣ∇f)^_i(a)`.
    pub fn apply_weighted(&self, coeffs: &[C<T>], out: &mut [C<T>], work: &mut FftWork<T>) {
        let g = &self.grid;
        let [d1, d2] = self.gradient_nodes(coeffs, work);
        let mut w2 = vec![czero(); g.n_nodes()];
        for j in 0..g.n_nodes() {
            let (r, s) = (self.rho[j], self.sigma[j]);
            work.buf[j] = (d1[j] * s.xx + d2[j] * s.xy) * r;
            w2[j] = (d1[j] * s.xy + d2[j] * s.yy) * r;
        }
        g.analyze_in_place(work);
        g.truncate(&work.buf, out);
        work.buf.copy_from_slice(&w2);
        g.analyze_in_place(work);
        for (o, &k) in out.iter_mut().zip(g.modes()) {
            let ik = g.ik(k);
            *o = ik[0] * *o + ik[1] * g.spectrum_at(&work.buf, k);
        }
    }

    /// `(ρ_Y F_i)^(a)`.
    pub fn forcing_weighted(&self, comp: usize, work: &mut FftWork<T>) -> Vec<C<T>> {
        let vals: Vec<T> = self.drift.iter().zip(&self.rho).map(|(f, &r)| f[comp] * r).collect();
        let mut out = vec![czero(); self.grid.n_modes()];
        self.grid.analyze_real(&vals, work, &mut out);
        out
    }

    /// Jacobi preconditioner of `-S`: `4π² aᵀ⟨ρ_YΣ⟩a`.
    pub fn preconditioner(&self) -> Vec<T> {
        let four_pi2 = lit::<T>(4.0) * T::PI() * T::PI();
        self.grid
            .modes()
            .iter()
            .map(|k| {
                if *k == [0, 0] {
                    T::one()
                } else {
                    four_pi2 * self.mean_weight.quad([lit(k[0] as f64), lit(k[1] as f64)])
                }
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrozenSolveOptions<T> {
    /// Initial truncation order, doubled until the residual target is met.
    pub m_start: usize,
    pub m_max: usize,
    /// Target for the nodal residual `‖L₀χ + F‖∞`.
    pub tol: T,
    pub cg_tol: T,
    pub max_iter: usize,
    /// Largest admissible `|∫ F ρ_Y dy|`.
    pub compat_tol: T,
}

impl<T: Scalar> Default for FrozenSolveOptions<T> {
    fn default() -> Self {
        FrozenSolveOptions { m_start: 8, m_max: 64, tol: lit(1e-8), cg_tol: lit(1e-13), max_iter: 2000, compat_tol: lit(1e-8) }
    }
}

/// Corrector at a fixed truncation order.
pub fn solve_chi_fixed_eta_at<T: Scalar>(
    membrane: &Membrane<T>,
    eta: &[T],
    order: usize,
    opts: &FrozenSolveOptions<T>,
) -> Result<PoissonSolution<T>, SpectralError> {
    let op = FrozenOperator::new(membrane, eta, FourierGrid::new(order))?;
    solve_with_operator(&op, opts)
}

pub fn solve_with_operator<T: Scalar>(op: &FrozenOperator<T>, opts: &FrozenSolveOptions<T>) -> Result<PoissonSolution<T>, SpectralError> {
    let grid = op.grid();
    let zero_idx = grid.zero_index();
    let mut work = grid.work();
    let diag = op.preconditioner();
    let mut coeffs: [Vec<C<T>>; 2] = [Vec::new(), Vec::new()];
    let mut compatibility = T::zero();
    let mut iterations = 0;
    let mut scratch = vec![czero(); grid.n_modes()];
    for (comp, slot) in coeffs.iter_mut().enumerate() {
        let mut b = op.forcing_weighted(comp, &mut work);
        compatibility = compatibility.max(b[zero_idx].norm());
        b[zero_idx] = czero();
        let out = pcg(
            |u, o| {
                scratch.copy_from_slice(u);
                scratch[zero_idx] = czero();
                op.apply_weighted(&scratch, o, &mut work);
                o.iter_mut().for_each(|v| *v = -*v);
                o[zero_idx] = czero();
            },
            &diag,
            &b,
            opts.cg_tol,
            opts.max_iter,
        );
        iterations += out.iterations;
        let mut c = out.x;
        c[zero_idx] = czero();
        let mean = op.mean_rho(&c);
        c[zero_idx] = -mean / op.rho_coefficient([0, 0]).conj();
        *slot = c;
    }
    let mut residual = T::zero();
    let mut centering = T::zero();
    for (comp, c) in coeffs.iter().enumerate() {
        let vals = op.generator_nodes(c, &mut work);
        for (v, f) in vals.iter().zip(op.drift_nodes()) {
            residual = residual.max((*v + C::new(f[comp], T::zero())).norm());
        }
        centering = centering.max(op.mean_rho(c).norm());
    }
    let step = RefinementStep {
        fourier_order: grid.order(),
        hermite_degree: 0,
        solver_residual: to_f64(residual),
        truncation_residual: None,
        iterations,
    };
    Ok(PoissonSolution {
        basis: BasisDescriptor::Fourier { order: grid.order() },
        coeffs,
        centering_residual: centering,
        solver_residual: residual,
        compatibility,
        trace: vec![step],
    })
}

/// Solves `L₀(η)χ = -F(·, η)`, doubling the truncation order until the
/// nodal residual meets `opts.tol` and the grid resolves `∫ F ρ_Y dy = 0`
/// to `opts.compat_tol`.
pub fn solve_chi_fixed_eta<T: Scalar>(membrane: &Membrane<T>, eta: &[T], opts: &FrozenSolveOptions<T>) -> Result<PoissonSolution<T>, SpectralError> {
    let mut order = opts.m_start.max(1);
    let mut trace = Vec::new();
    loop {
        let mut sol = solve_chi_fixed_eta_at(membrane, eta, order, opts)?;
        trace.extend(sol.trace.drain(..));
        if sol.solver_residual <= opts.tol && sol.compatibility <= opts.compat_tol {
            sol.trace = trace;
            return Ok(sol);
        }
        order *= 2;
        if order > opts.m_max {
            if sol.solver_residual <= opts.tol {
                return Err(SpectralError::Compatibility(to_f64(sol.compatibility)));
            }
            return Err(SpectralError::NotConverged { residual: to_f64(sol.solver_residual), trace });
        }
    }
}

/// `ρ_Y(·, η) = √g / C` with its Fourier coefficients up to `order`.
pub fn rho_y_density<T: Scalar>(membrane: &Membrane<T>, eta: &[T], order: usize) -> Result<InvariantDensity<T>, SpectralError> {
    let op = FrozenOperator::new(membrane, eta, FourierGrid::new(order))?;
    let coeffs = op.grid().modes().iter().map(|&k| op.rho_coefficient(k)).collect();
    Ok(InvariantDensity::ExplicitRhoY { eta: eta.to_vec(), normalization: op.normalization(), fourier_order: order, coeffs })
}

/// Matrix of `P_M L₀(η)` on the Fourier basis (dy projection). Column `b`
/// holds the image of `e_b`; the constant column is zero.
pub fn assemble_l0<T: Scalar>(membrane: &Membrane<T>, eta: &[T], grid: &FourierGrid<T>) -> Result<CMatrix<T>, SpectralError> {
    let op = FrozenOperator::new(membrane, eta, grid.clone())?;
    Ok(assemble_columns(grid.n_modes(), |u, o, w| op.apply_projected(u, o, w), grid))
}

/// Ritz matrix `S_ab = ∫ conj(e_a) ρ_Y L₀e_b dy` and Gram matrix
/// `W_ab = ∫ conj(e_a) e_b ρ_Y dy`. `W⁻¹S` is the ρ_Y-Galerkin matrix of
/// `L₀`; both its constant row and column of `S` vanish.
pub fn assemble_l0_weighted<T: Scalar>(
    membrane: &Membrane<T>,
    eta: &[T],
    grid: &FourierGrid<T>,
) -> Result<(CMatrix<T>, CMatrix<T>), SpectralError> {
    let op = FrozenOperator::new(membrane, eta, grid.clone())?;
    let s = assemble_columns(grid.n_modes(), |u, o, w| op.apply_weighted(u, o, w), grid);
    let n = grid.n_modes();
    let mut gram = CMatrix::zeros(n, n);
    for (a, ka) in grid.modes().iter().enumerate() {
        for (b, kb) in grid.modes().iter().enumerate() {
            gram[(a, b)] = op.rho_coefficient([ka[0] - kb[0], ka[1] - kb[1]]);
        }
    }
    Ok((s, gram))
}

fn assemble_columns<T: Scalar>(
    n: usize,
    mut apply: impl FnMut(&[C<T>], &mut [C<T>], &mut FftWork<T>),
    grid: &FourierGrid<T>,
) -> CMatrix<T> {
    let mut work = grid.work();
    let mut m = CMatrix::zeros(n, n);
    let mut unit = vec![czero(); n];
    let mut col = vec![czero(); n];
    for b in 0..n {
        unit[b] = C::new(T::one(), T::zero());
        apply(&unit, &mut col, &mut work);
        m.set_column(b, &col);
        unit[b] = czero();
    }
    m
}

/// `F·∇f + Σ:∇∇f` evaluated directly at `y`.
pub fn l0_at<T: Scalar>(membrane: &Membrane<T>, eta: &[T], grid: &FourierGrid<T>, coeffs: &[C<T>], y: Vec2<T>) -> C<T> {
    let geo = membrane.geometry(y, eta);
    let (f, s) = (geo.drift(), geo.sigma());
    let d = |i: usize| grid.evaluate_with(coeffs, y, |k| grid.ik(k)[i]);
    let dd = |i: usize, j: usize| grid.evaluate_with(coeffs, y, |k| grid.ik(k)[i] * grid.ik(k)[j]);
    d(0) * f[0] + d(1) * f[1] + dd(0, 0) * s.xx + dd(0, 1) * (lit::<T>(2.0) * s.xy) + dd(1, 1) * s.yy
}

impl<T: Scalar> PoissonSolution<T> {
    /// `χ(y)` for a frozen-state solution.
    pub fn value_at(&self, y: Vec2<T>) -> Vec2<T> {
        let grid = self.fourier_grid();
        [grid.evaluate(&self.coeffs[0], y).re, grid.evaluate(&self.coeffs[1], y).re]
    }

    /// Jacobian `J_ij = ∂_j χ^i` for a frozen-state solution.
    pub fn jacobian_at(&self, y: Vec2<T>) -> [[T; 2]; 2] {
        let grid = self.fourier_grid();
        let d = |c: &[C<T>], j: usize| grid.evaluate_with(c, y, |k| grid.ik(k)[j]).re;
        [[d(&self.coeffs[0], 0), d(&self.coeffs[0], 1)], [d(&self.coeffs[1], 0), d(&self.coeffs[1], 1)]]
    }

    fn fourier_grid(&self) -> FourierGrid<T> {
        match self.basis {
            BasisDescriptor::Fourier { order } => FourierGrid::new(order),
            BasisDescriptor::HermiteFourier { .. } => panic!("pointwise frozen evaluation needs a Fourier solution"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::membrane::ModelParams;

    #[test]
    fn flat_state_gives_laplacian_and_zero_corrector() {
        let mem = Membrane::new(ModelParams::new(1.0, 1.0, 1).unwrap());
        let eta = vec![0.0; mem.dim()];
        let grid = FourierGrid::new(3);
        let l0 = assemble_l0(&mem, &eta, &grid).unwrap();
        for (a, k) in grid.modes().iter().enumerate() {
            let expect = -4.0 * std::f64::consts::PI.powi(2) * (k[0] * k[0] + k[1] * k[1]) as f64;
            for b in 0..grid.n_modes() {
                let target = if a == b { expect } else { 0.0 };
                assert!((l0[(a, b)].re - target).abs() < 1e-9 && l0[(a, b)].im.abs() < 1e-9);
            }
        }
        let sol = solve_chi_fixed_eta(&mem, &eta, &FrozenSolveOptions::default()).unwrap();
        assert!(sol.coeffs.iter().all(|c| c.iter().all(|v| v.norm() == 0.0)));
    }
}
