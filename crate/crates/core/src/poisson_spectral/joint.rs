//! The joint fast generator `G = L₀ + L_η` on a Fourier ⊗ Hermite basis.
//!
//! Basis functions are `e_a(y) ψ_m(η)` with `ψ_m` the orthonormal Hermite
//! polynomials of the stationary OU law, so the basis is orthonormal in
//! `L²(dy × ρ_η)` and `L_η` is diagonal. `L₀` couples Hermite levels through
//! the η-dependence of `F` and `Σ`; its matrix elements come from a tensor
//! Gauss-Hermite rule in η combined with collocation in y, and the operator
//! is only ever applied matrix-free.
//!
//! Coefficient vectors describe real fields and are laid out Fourier-major:
//! entry `a * n_hermite + m`.

use num_complex::Complex;
use num_traits::Float;
use rayon::prelude::*;

use super::{BasisDescriptor, InvariantDensity, PoissonSolution, RefinementStep, SpectralError};
use crate::fourier::{FftWork, FourierGrid};
use crate::hermite::{orthonormality_defect, HermiteBasis, MultiIndexSet, TensorQuadrature};
use crate::linalg::{gmres, norm, CMatrix};
use crate::membrane::{LocalGeometry, Membrane};
use crate::rng::{uniform, StreamRng};
use crate::scalar::{lit, to_f64, Scalar, Sym2, Vec2};
use crate::sde_sim::StationaryY;

type C<T> = Complex<T>;

fn czero<T: Scalar>() -> C<T> {
    C::new(T::zero(), T::zero())
}

/// Largest Hermite degree the tensor Galerkin is offered for.
pub const MAX_DEGREE: usize = 6;
const QUADRATURE_DEFECT_TOL: f64 = 1e-10;
const NODE_CHUNKS: usize = 32;

/// Which derivative of a field to synthesize on the y-grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum YDerivative {
    Value,
    D1,
    D2,
}

pub struct HermiteFourierBasis<T: Scalar> {
    membrane: Membrane<T>,
    grid: FourierGrid<T>,
    hermite: HermiteBasis<T>,
    quad: TensorQuadrature<T>,
    quad_order: usize,
    /// `ψ_m(η_n)`, node major.
    psi: Vec<T>,
    /// `-(m·Γ)` per Hermite index.
    eigen: Vec<T>,
    rates: Vec<T>,
    variances: Vec<T>,
    /// `∂∇h/∂η_i` and `∂∇∇h/∂η_i` on the y-grid.
    grad_fields: Vec<[Vec<T>; 2]>,
    hess_fields: Vec<[Vec<T>; 3]>,
    mean_sigma: Sym2<T>,
}

/// Per-node geometry on the y-grid.
pub struct NodeFields<T> {
    pub drift: Vec<Vec2<T>>,
    pub sigma: Vec<Sym2<T>>,
    pub sqrt_g: Vec<T>,
}

impl<T: Scalar> HermiteFourierBasis<T> {
    /// Gauss-Hermite order `2d + 2` per coordinate.
    pub fn new(membrane: &Membrane<T>, order: usize, degree: usize) -> Result<Self, SpectralError> {
        Self::with_quadrature(membrane, order, degree, 2 * degree + 2)
    }

    pub fn with_quadrature(membrane: &Membrane<T>, order: usize, degree: usize, quad_order: usize) -> Result<Self, SpectralError> {
        if membrane.modes().cutoff() > 1 {
            return Err(SpectralError::Unsupported(format!(
                "joint Galerkin needs cutoff <= 1, got {}; use the Monte-Carlo resolvent instead",
                membrane.modes().cutoff()
            )));
        }
        if degree > MAX_DEGREE {
            return Err(SpectralError::Unsupported(format!("Hermite degree {degree} exceeds {MAX_DEGREE}")));
        }
        let modes = membrane.modes();
        let rates = membrane.spectra().coord_rates(modes);
        let variances = membrane.spectra().coord_variances(modes);
        let dim = variances.len();
        let set = MultiIndexSet::total_degree(dim, degree);
        let eigen = set.ou_eigenvalues(&rates);
        let hermite = HermiteBasis::new(set, &variances)?;
        let quad = TensorQuadrature::new(quad_order, &variances);
        let defect = orthonormality_defect(&hermite, &quad);
        if !(to_f64(defect) <= QUADRATURE_DEFECT_TOL) {
            return Err(SpectralError::Quadrature(to_f64(defect)));
        }
        let nh = hermite.len();
        let mut psi = vec![T::zero(); quad.len() * nh];
        for (n, p) in quad.points.iter().enumerate() {
            hermite.evaluate(p, &mut psi[n * nh..(n + 1) * nh]);
        }
        let grid = FourierGrid::new(order);
        let two = lit::<T>(2.0);
        let mut grad_fields = Vec::with_capacity(dim);
        let mut hess_fields = Vec::with_capacity(dim);
        for k in membrane.class_wavevectors() {
            let theta: Vec<T> = (0..grid.n_nodes())
                .map(|j| {
                    let y = grid.node(j);
                    k[0] * y[0] + k[1] * y[1]
                })
                .collect();
            // Re coordinate: h = 2 cos θ, imaginary coordinate: h = -2 sin θ.
            let (gre, hre): (Vec<Vec2<T>>, Vec<[T; 3]>) = theta
                .iter()
                .map(|&t| {
                    let (s, cs) = t.sin_cos();
                    ([-two * s * k[0], -two * s * k[1]], [-two * cs * k[0] * k[0], -two * cs * k[0] * k[1], -two * cs * k[1] * k[1]])
                })
                .unzip();
            let (gim, him): (Vec<Vec2<T>>, Vec<[T; 3]>) = theta
                .iter()
                .map(|&t| {
                    let (s, cs) = t.sin_cos();
                    ([-two * cs * k[0], -two * cs * k[1]], [two * s * k[0] * k[0], two * s * k[0] * k[1], two * s * k[1] * k[1]])
                })
                .unzip();
            for (g, h) in [(gre, hre), (gim, him)] {
                grad_fields.push([g.iter().map(|v| v[0]).collect(), g.iter().map(|v| v[1]).collect()]);
                hess_fields.push([h.iter().map(|v| v[0]).collect(), h.iter().map(|v| v[1]).collect(), h.iter().map(|v| v[2]).collect()]);
            }
        }
        let mut basis = HermiteFourierBasis {
            membrane: membrane.clone(),
            grid,
            hermite,
            quad,
            quad_order,
            psi,
            eigen,
            rates,
            variances,
            grad_fields,
            hess_fields,
            mean_sigma: Sym2::identity(),
        };
        basis.mean_sigma = basis.average_sigma();
        Ok(basis)
    }

    fn average_sigma(&self) -> Sym2<T> {
        let mut fields = self.empty_fields();
        let inv = T::one() / lit::<T>(self.grid.n_nodes() as f64);
        let mut acc = Sym2::zero();
        for n in 0..self.quad.len() {
            self.fill_node_fields(n, &mut fields);
            let s = fields.sigma.iter().fold(Sym2::zero(), |a, s| a.add(*s));
            acc = acc.add(s.scale(self.quad.weights[n] * inv));
        }
        acc
    }

    pub fn membrane(&self) -> &Membrane<T> {
        &self.membrane
    }

    pub fn grid(&self) -> &FourierGrid<T> {
        &self.grid
    }

    pub fn hermite(&self) -> &HermiteBasis<T> {
        &self.hermite
    }

    pub fn quadrature(&self) -> &TensorQuadrature<T> {
        &self.quad
    }

    pub fn quadrature_order(&self) -> usize {
        self.quad_order
    }

    pub fn fourier_order(&self) -> usize {
        self.grid.order()
    }

    pub fn degree(&self) -> usize {
        self.hermite.set().degree()
    }

    pub fn eta_dim(&self) -> usize {
        self.variances.len()
    }

    pub fn rates(&self) -> &[T] {
        &self.rates
    }

    pub fn variances(&self) -> &[T] {
        &self.variances
    }

    pub fn n_hermite(&self) -> usize {
        self.hermite.len()
    }

    pub fn len(&self) -> usize {
        self.grid.n_modes() * self.hermite.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn descriptor(&self) -> BasisDescriptor {
        BasisDescriptor::HermiteFourier { order: self.fourier_order(), degree: self.degree(), eta_dim: self.eta_dim() }
    }

    pub fn index(&self, fourier: usize, hermite: usize) -> usize {
        fourier * self.hermite.len() + hermite
    }

    /// Index of the constant function.
    pub fn constant_index(&self) -> usize {
        self.index(self.grid.zero_index(), 0)
    }

    /// `ψ_m` at quadrature node `n`.
    pub fn psi_at_node(&self, n: usize) -> &[T] {
        let nh = self.hermite.len();
        &self.psi[n * nh..(n + 1) * nh]
    }

    pub fn empty_fields(&self) -> NodeFields<T> {
        let n = self.grid.n_nodes();
        NodeFields { drift: vec![[T::zero(); 2]; n], sigma: vec![Sym2::zero(); n], sqrt_g: vec![T::zero(); n] }
    }

    /// Geometry at an arbitrary η on the y-grid.
    pub fn fill_fields(&self, eta: &[T], out: &mut NodeFields<T>) {
        for j in 0..self.grid.n_nodes() {
            let mut geo = LocalGeometry::flat();
            for (i, &e) in eta.iter().enumerate() {
                let (g, h) = (&self.grad_fields[i], &self.hess_fields[i]);
                geo.grad[0] = geo.grad[0] + e * g[0][j];
                geo.grad[1] = geo.grad[1] + e * g[1][j];
                geo.hess.xx = geo.hess.xx + e * h[0][j];
                geo.hess.xy = geo.hess.xy + e * h[1][j];
                geo.hess.yy = geo.hess.yy + e * h[2][j];
            }
            out.drift[j] = geo.drift();
            out.sigma[j] = geo.sigma();
            out.sqrt_g[j] = geo.det_g().sqrt();
        }
    }

    pub fn fill_node_fields(&self, n: usize, out: &mut NodeFields<T>) {
        let eta = self.quad.points[n].clone();
        self.fill_fields(&eta, out);
    }

    /// Fourier coefficients at node `n`: `U_a = Σ_m ψ_m(η_n) u_{a,m}`.
    pub fn hermite_synthesis(&self, u: &[C<T>], n: usize, out: &mut [C<T>]) {
        let nh = self.hermite.len();
        let psi = self.psi_at_node(n);
        for (a, o) in out.iter_mut().enumerate() {
            let row = &u[a * nh..(a + 1) * nh];
            *o = row.iter().zip(psi).fold(czero(), |acc, (&c, &p)| acc + c * p);
        }
    }

    fn hermite_analysis(&self, v: &[C<T>], n: usize, weight: T, out: &mut [C<T>]) {
        let nh = self.hermite.len();
        let psi = self.psi_at_node(n);
        for (a, &va) in v.iter().enumerate() {
            if va == czero() {
                continue;
            }
            let va = va * weight;
            for (o, &p) in out[a * nh..(a + 1) * nh].iter_mut().zip(psi) {
                *o = *o + va * p;
            }
        }
    }

    /// Nodal y-grid values of the field (or a y-derivative) at node `n`.
    pub fn node_values(&self, u: &[C<T>], n: usize, deriv: YDerivative, work: &mut FftWork<T>) -> Vec<T> {
        let mut coeffs = vec![czero(); self.grid.n_modes()];
        self.hermite_synthesis(u, n, &mut coeffs);
        let g = &self.grid;
        match deriv {
            YDerivative::Value => g.synthesize(&coeffs, work),
            YDerivative::D1 => g.synthesize_with(&coeffs, |k| g.ik(k)[0], work),
            YDerivative::D2 => g.synthesize_with(&coeffs, |k| g.ik(k)[1], work),
        }
        work.buf.iter().map(|v| v.re).collect()
    }

    /// Coefficients of `∂_{η_i} u`.
    pub fn eta_derivative(&self, u: &[C<T>], i: usize) -> Vec<C<T>> {
        let nh = self.hermite.len();
        let mut out = vec![czero(); u.len()];
        for a in 0..self.grid.n_modes() {
            let row = &u[a * nh..(a + 1) * nh];
            let re: Vec<T> = row.iter().map(|c| c.re).collect();
            let im: Vec<T> = row.iter().map(|c| c.im).collect();
            let (dre, dim) = (self.hermite.derivative(&re, i), self.hermite.derivative(&im, i));
            for m in 0..nh {
                out[a * nh + m] = C::new(dre[m], dim[m]);
            }
        }
        out
    }

    /// Direct evaluation at `(y, η)`.
    pub fn evaluate(&self, u: &[C<T>], y: Vec2<T>, eta: &[T]) -> T {
        let nh = self.hermite.len();
        let mut psi = vec![T::zero(); nh];
        self.hermite.evaluate(eta, &mut psi);
        let coeffs: Vec<C<T>> = (0..self.grid.n_modes())
            .map(|a| u[a * nh..(a + 1) * nh].iter().zip(&psi).fold(czero(), |acc, (&c, &p)| acc + c * p))
            .collect();
        self.grid.evaluate(&coeffs, y).re
    }

    /// Embeds coefficients from a smaller basis of the same membrane.
    pub fn embed(&self, from: &HermiteFourierBasis<T>, u: &[C<T>]) -> Vec<C<T>> {
        let mut out = vec![czero(); self.len()];
        let nh_from = from.n_hermite();
        for (a, &k) in from.grid.modes().iter().enumerate() {
            let Some(a2) = self.grid.mode_index(k) else { continue };
            for (m, idx) in from.hermite.set().iter().enumerate() {
                if let Some(m2) = self.hermite.set().position(idx) {
                    out[self.index(a2, m2)] = u[a * nh_from + m];
                }
            }
        }
        out
    }

    /// Runs `per_node` over quadrature nodes in fixed contiguous chunks and
    /// sums the chunk results in order, so the result does not depend on
    /// the number of worker threads.
    fn accumulate<S: Send>(
        &self,
        len: usize,
        init: impl Fn() -> S + Sync + Send,
        per_node: impl Fn(usize, &mut S, &mut [C<T>]) + Sync + Send,
    ) -> Vec<C<T>> {
        let nodes = self.quad.len();
        let chunk = nodes.div_ceil(NODE_CHUNKS).max(1);
        let partials: Vec<Vec<C<T>>> = (0..nodes.div_ceil(chunk))
            .into_par_iter()
            .map(|c| {
                let mut state = init();
                let mut acc = vec![czero(); len];
                for n in c * chunk..((c + 1) * chunk).min(nodes) {
                    per_node(n, &mut state, &mut acc);
                }
                acc
            })
            .collect();
        let mut out = vec![czero(); len];
        for p in partials {
            for (o, v) in out.iter_mut().zip(p) {
                *o = *o + v;
            }
        }
        out
    }

    /// Splits `u = u_R + i u_I` into coefficient vectors of real fields.
    pub fn real_parts(&self, u: &[C<T>]) -> (Vec<C<T>>, Vec<C<T>>) {
        let nh = self.hermite.len();
        let half = lit::<T>(0.5);
        let mut re = vec![czero(); u.len()];
        let mut im = vec![czero(); u.len()];
        for (a, &k) in self.grid.modes().iter().enumerate() {
            let b = self.grid.mode_index([-k[0], -k[1]]).expect("mode set is symmetric");
            for m in 0..nh {
                let (x, y) = (u[a * nh + m], u[b * nh + m].conj());
                re[a * nh + m] = (x + y) * half;
                let d = (x - y) * half;
                im[a * nh + m] = C::new(d.im, -d.re);
            }
        }
        (re, im)
    }

    /// Applies a real-field operator to an arbitrary complex vector.
    pub fn apply_complex(&self, u: &[C<T>], out: &mut [C<T>], op: impl Fn(&Self, &[C<T>], &mut [C<T>])) {
        let (re, im) = self.real_parts(u);
        let mut tmp = vec![czero(); u.len()];
        op(self, &re, out);
        op(self, &im, &mut tmp);
        for (o, t) in out.iter_mut().zip(tmp) {
            *o = *o + C::new(-t.im, t.re);
        }
    }

    /// `G u` for `u` describing a real field.
    pub fn apply_g(&self, u: &[C<T>], out: &mut [C<T>]) {
        let g = &self.grid;
        let nf = g.n_modes();
        let two = lit::<T>(2.0);
        let acc = self.accumulate(
            self.len(),
            || (g.work(), self.empty_fields(), vec![czero(); nf], vec![czero(); g.n_nodes()], vec![czero(); g.n_nodes()]),
            |n, (work, fields, coeffs, first, second), acc| {
                self.hermite_synthesis(u, n, coeffs);
                let i = C::new(T::zero(), T::one());
                g.synthesize_with(coeffs, |k| g.ik(k)[0] + i * g.ik(k)[1], work);
                first.copy_from_slice(&work.buf);
                g.synthesize_with(coeffs, |k| g.ik(k)[0] * g.ik(k)[0] + i * g.ik(k)[1] * g.ik(k)[1], work);
                second.copy_from_slice(&work.buf);
                g.synthesize_with(coeffs, |k| g.ik(k)[0] * g.ik(k)[1], work);
                self.fill_node_fields(n, fields);
                for j in 0..g.n_nodes() {
                    let (f, s) = (fields.drift[j], fields.sigma[j]);
                    let v = f[0] * first[j].re + f[1] * first[j].im + s.xx * second[j].re + two * s.xy * work.buf[j].re + s.yy * second[j].im;
                    work.buf[j] = C::new(v, T::zero());
                }
                g.analyze_in_place(work);
                g.truncate(&work.buf, coeffs);
                self.hermite_analysis(coeffs, n, self.quad.weights[n], acc);
            },
        );
        let nh = self.hermite.len();
        for (idx, o) in out.iter_mut().enumerate() {
            *o = acc[idx] + u[idx] * self.eigen[idx % nh];
        }
    }

    /// `(L₀* + L_η) g` with `L₀* g = ∇·(√g Σ ∇(g / √g))`, adjoint to `L₀`
    /// with respect to `dy`.
    pub fn apply_adjoint(&self, u: &[C<T>], out: &mut [C<T>]) {
        let g = &self.grid;
        let nf = g.n_modes();
        let n_axis = g.nodes_per_axis();
        let acc = self.accumulate(
            self.len(),
            || (g.work(), self.empty_fields(), vec![czero(); nf], vec![czero(); nf]),
            |n, (work, fields, coeffs, second), acc| {
                self.hermite_synthesis(u, n, coeffs);
                g.synthesize(coeffs, work);
                self.fill_node_fields(n, fields);
                for (b, &s) in work.buf.iter_mut().zip(&fields.sqrt_g) {
                    *b = C::new(b.re / s, T::zero());
                }
                g.analyze_in_place(work);
                let i = C::new(T::zero(), T::one());
                for j1 in 0..n_axis {
                    for j2 in 0..n_axis {
                        let ik = g.ik([g.wavenumber(j1), g.wavenumber(j2)]);
                        let slot = j1 * n_axis + j2;
                        work.buf[slot] = work.buf[slot] * (ik[0] + i * ik[1]);
                    }
                }
                g.synthesize_full_in_place(work);
                for j in 0..g.n_nodes() {
                    let (s, r) = (fields.sigma[j], fields.sqrt_g[j]);
                    let d = [work.buf[j].re, work.buf[j].im];
                    let flux = s.mul_vec(d);
                    work.buf[j] = C::new(flux[0] * r, flux[1] * r);
                }
                g.analyze_in_place(work);
                g.split_packed(&work.buf, coeffs, second);
                for ((c, s), &k) in coeffs.iter_mut().zip(second.iter()).zip(g.modes()) {
                    let ik = g.ik(k);
                    *c = ik[0] * *c + ik[1] * *s;
                }
                self.hermite_analysis(coeffs, n, self.quad.weights[n], acc);
            },
        );
        let nh = self.hermite.len();
        for (idx, o) in out.iter_mut().enumerate() {
            *o = acc[idx] + u[idx] * self.eigen[idx % nh];
        }
    }

    /// Basis coefficients of `F_1` and `F_2`.
    pub fn forcing(&self) -> [Vec<C<T>>; 2] {
        let g = &self.grid;
        let nf = g.n_modes();
        let len = self.len();
        let packed = self.accumulate(
            2 * len,
            || (g.work(), self.empty_fields(), vec![czero(); nf], vec![czero(); nf]),
            |n, (work, fields, f1, f2), acc| {
                self.fill_node_fields(n, fields);
                for (b, f) in work.buf.iter_mut().zip(&fields.drift) {
                    *b = C::new(f[0], f[1]);
                }
                g.analyze_in_place(work);
                g.split_packed(&work.buf, f1, f2);
                let (lo, hi) = acc.split_at_mut(len);
                self.hermite_analysis(f1, n, self.quad.weights[n], lo);
                self.hermite_analysis(f2, n, self.quad.weights[n], hi);
            },
        );
        [packed[..len].to_vec(), packed[len..].to_vec()]
    }

    /// Right preconditioner `-(4π² aᵀ⟨Σ⟩a + m·Γ)`, one at the constant.
    pub fn preconditioner(&self) -> Vec<C<T>> {
        let four_pi2 = lit::<T>(4.0) * T::PI() * T::PI();
        let nh = self.hermite.len();
        let mut d = Vec::with_capacity(self.len());
        for k in self.grid.modes() {
            let lap = four_pi2 * self.mean_sigma.quad([lit(k[0] as f64), lit(k[1] as f64)]);
            for m in 0..nh {
                let v = lap - self.eigen[m];
                d.push(if v == T::zero() { C::new(T::one(), T::zero()) } else { C::new(-v, T::zero()) });
            }
        }
        d
    }

    /// `∫∫ u dρ = Σ u_{a,m} conj(g_{a,m})` for a Galerkin density on this basis.
    pub fn expectation(&self, u: &[C<T>], density: &InvariantDensity<T>) -> Result<T, SpectralError> {
        self.check_density(density)?;
        Ok(u.iter().zip(density.coeffs()).fold(czero(), |acc, (&a, &b)| acc + a * b.conj()).re)
    }

    pub fn check_density(&self, density: &InvariantDensity<T>) -> Result<(), SpectralError> {
        match density {
            InvariantDensity::GalerkinGEta { fourier_order, degree, eta_dim, .. }
                if *fourier_order == self.fourier_order() && *degree == self.degree() && *eta_dim == self.eta_dim() =>
            {
                Ok(())
            }
            _ => Err(SpectralError::BasisMismatch(format!("density is not a {} Galerkin density", describe(self.descriptor())))),
        }
    }

    pub fn check_solution(&self, sol: &PoissonSolution<T>) -> Result<(), SpectralError> {
        if sol.basis != self.descriptor() {
            return Err(SpectralError::BasisMismatch(format!("solution on {:?}, basis {:?}", sol.basis, self.descriptor())));
        }
        Ok(())
    }
}

fn describe(d: BasisDescriptor) -> String {
    match d {
        BasisDescriptor::Fourier { order } => format!("Fourier(M={order})"),
        BasisDescriptor::HermiteFourier { order, degree, eta_dim } => format!("Fourier(M={order})xHermite(d={degree},K={eta_dim})"),
    }
}

/// Dense matrix of `G` on the complex basis, column by column. Only
/// sensible for small bases.
pub fn assemble_g<T: Scalar>(basis: &HermiteFourierBasis<T>) -> CMatrix<T> {
    let n = basis.len();
    let mut m = CMatrix::zeros(n, n);
    let mut unit = vec![czero(); n];
    let mut col = vec![czero(); n];
    for b in 0..n {
        unit[b] = C::new(T::one(), T::zero());
        basis.apply_complex(&unit, &mut col, |b, u, o| b.apply_g(u, o));
        m.set_column(b, &col);
        unit[b] = czero();
    }
    m
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointSolveOptions<T> {
    pub m_start: usize,
    pub d_start: usize,
    pub m_max: usize,
    pub d_max: usize,
    /// Target for the relative residual.
    pub tol: T,
    pub gmres_tol: T,
    pub restart: usize,
    pub max_iter: usize,
    /// Measures the residual in the basis enriched by `M + 2`, `d + 1`.
    pub estimate_truncation: bool,
    pub density_tol: T,
}

impl<T: Scalar> Default for JointSolveOptions<T> {
    fn default() -> Self {
        JointSolveOptions {
            m_start: 6,
            d_start: 4,
            m_max: 6,
            d_max: 4,
            tol: lit(1e-6),
            gmres_tol: lit(1e-9),
            restart: 60,
            max_iter: 600,
            estimate_truncation: true,
            density_tol: lit(1e-11),
        }
    }
}

/// Solves `(L₀* + L_η) g = 0` with `g_{0,0} = 1`.
///
/// The constant-mode row vanishes identically, so it is dropped together with
/// the pinned unknown. Rows with `a = 0` reduce to `-(m·Γ) g_{0,m} = 0`,
/// which makes the η-marginal exactly Gaussian.
pub fn solve_invariant_density<T: Scalar>(basis: &HermiteFourierBasis<T>, opts: &JointSolveOptions<T>) -> Result<InvariantDensity<T>, SpectralError> {
    let n = basis.len();
    let c0 = basis.constant_index();
    let mut e0 = vec![czero(); n];
    e0[c0] = C::new(T::one(), T::zero());
    let mut b = vec![czero(); n];
    basis.apply_adjoint(&e0, &mut b);
    b.iter_mut().for_each(|v| *v = -*v);
    b[c0] = czero();
    let diag = basis.preconditioner();
    let mut scratch = vec![czero(); n];
    let out = gmres(
        |u, o| {
            scratch.copy_from_slice(u);
            scratch[c0] = czero();
            basis.apply_adjoint(&scratch, o);
            o[c0] = czero();
        },
        &diag,
        &b,
        None,
        opts.density_tol,
        opts.restart,
        opts.max_iter,
    );
    if !out.converged && out.residual > lit(1e-6) {
        return Err(SpectralError::Multiplicity(to_f64(out.residual)));
    }
    let mut coeffs = out.x;
    coeffs[c0] = C::new(T::one(), T::zero());
    Ok(InvariantDensity::GalerkinGEta {
        fourier_order: basis.fourier_order(),
        degree: basis.degree(),
        eta_dim: basis.eta_dim(),
        coeffs,
        solver_residual: out.residual,
        iterations: out.iterations,
    })
}

/// Solves `Gχ = -F` on a fixed basis, re-centred so that `⟨χ⟩_ρ = 0`.
pub fn solve_chi_12<T: Scalar>(
    basis: &HermiteFourierBasis<T>,
    density: &InvariantDensity<T>,
    opts: &JointSolveOptions<T>,
) -> Result<PoissonSolution<T>, SpectralError> {
    basis.check_density(density)?;
    let n = basis.len();
    let c0 = basis.constant_index();
    let forcing = basis.forcing();
    let compatibility = forcing
        .iter()
        .map(|f| basis.expectation(f, density))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold(T::zero(), |m, v| m.max(Float::abs(v)));
    let diag = basis.preconditioner();
    let mut scratch = vec![czero(); n];
    let mut coeffs: [Vec<C<T>>; 2] = [Vec::new(), Vec::new()];
    let mut residual = T::zero();
    let mut iterations = 0;
    for (comp, f) in forcing.iter().enumerate() {
        let mut b: Vec<C<T>> = f.iter().map(|&v| -v).collect();
        b[c0] = czero();
        let out = gmres(
            |u, o| {
                scratch.copy_from_slice(u);
                scratch[c0] = czero();
                basis.apply_g(&scratch, o);
                o[c0] = czero();
            },
            &diag,
            &b,
            None,
            opts.gmres_tol,
            opts.restart,
            opts.max_iter,
        );
        residual = residual.max(out.residual);
        iterations += out.iterations;
        let mut c = out.x;
        c[c0] = czero();
        let mean = basis.expectation(&c, density)?;
        c[c0] = C::new(-mean, T::zero());
        coeffs[comp] = c;
    }
    let centering = coeffs
        .iter()
        .map(|c| basis.expectation(c, density).map(Float::abs))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold(T::zero(), T::max);
    let truncation = if opts.estimate_truncation { Some(truncation_residual(basis, &coeffs)?) } else { None };
    let step = RefinementStep {
        fourier_order: basis.fourier_order(),
        hermite_degree: basis.degree(),
        solver_residual: to_f64(residual),
        truncation_residual: truncation.map(to_f64),
        iterations,
    };
    Ok(PoissonSolution {
        basis: basis.descriptor(),
        coeffs,
        centering_residual: centering,
        solver_residual: truncation.map_or(residual, |t| t.max(residual)),
        compatibility,
        trace: vec![step],
    })
}


/// Relative residual `‖P'(Gχ + F)‖ / ‖P'F‖` in the basis enriched by
/// `M + 2` and `d + 1` (capped at [`MAX_DEGREE`]), constant mode excluded.
pub fn truncation_residual<T: Scalar>(basis: &HermiteFourierBasis<T>, coeffs: &[Vec<C<T>>; 2]) -> Result<T, SpectralError> {
    let rich = HermiteFourierBasis::new(&basis.membrane, basis.fourier_order() + 2, (basis.degree() + 1).min(MAX_DEGREE))?;
    let forcing = rich.forcing();
    let c0 = rich.constant_index();
    let mut worst = T::zero();
    let mut gu = vec![czero(); rich.len()];
    for (c, f) in coeffs.iter().zip(&forcing) {
        let u = rich.embed(basis, c);
        rich.apply_g(&u, &mut gu);
        let mut r: Vec<C<T>> = gu.iter().zip(f).map(|(&a, &b)| a + b).collect();
        let mut fr = f.clone();
        r[c0] = czero();
        fr[c0] = czero();
        let fnorm = norm(&fr);
        if fnorm > T::zero() {
            worst = worst.max(norm(&r) / fnorm);
        }
    }
    Ok(worst)
}

/// Outcome of the adaptive joint solve.
pub struct JointSolution<T: Scalar> {
    pub basis: HermiteFourierBasis<T>,
    pub density: InvariantDensity<T>,
    pub chi: PoissonSolution<T>,
    pub converged: bool,
}

/// Refines `(M, d)` alternately (`M + 2`, then `d + 1`) from the starting
/// pair until the residual meets `opts.tol` or both limits are reached.
/// The last attempt is returned with `converged = false` in the latter case.
pub fn solve_chi_12_adaptive<T: Scalar>(membrane: &Membrane<T>, opts: &JointSolveOptions<T>) -> Result<JointSolution<T>, SpectralError> {
    let (mut m, mut d) = (opts.m_start, opts.d_start);
    let mut trace = Vec::new();
    let mut grow_m = true;
    loop {
        let basis = HermiteFourierBasis::new(membrane, m, d)?;
        let density = solve_invariant_density(&basis, opts)?;
        let mut chi = solve_chi_12(&basis, &density, opts)?;
        trace.extend(chi.trace.drain(..));
        let done = chi.solver_residual <= opts.tol;
        let can_m = m + 2 <= opts.m_max;
        let can_d = d < opts.d_max.min(MAX_DEGREE);
        if done || (!can_m && !can_d) {
            chi.trace = trace;
            return Ok(JointSolution { basis, density, chi, converged: done });
        }
        if (grow_m && can_m) || !can_d {
            m += 2;
        } else {
            d += 1;
        }
        grow_m = !grow_m;
    }
}

impl<T: Scalar> InvariantDensity<T> {
    /// Joint density relative to `dy × ρ_η` at `(y, η)`; for the explicit
    /// frozen density `η` is ignored.
    pub fn density_at(&self, basis: Option<&HermiteFourierBasis<T>>, y: Vec2<T>, eta: &[T]) -> T {
        match self {
            InvariantDensity::ExplicitRhoY { fourier_order, coeffs, .. } => FourierGrid::new(*fourier_order).evaluate(coeffs, y).re,
            InvariantDensity::GalerkinGEta { coeffs, .. } => basis.expect("Galerkin density needs its basis").evaluate(coeffs, y, eta),
        }
    }
}

/// Draws `Y₀ | η₀` from a Galerkin density `g_η` by rejection against a
/// uniform proposal. Negative values of the truncated expansion count as
/// zero.
pub struct GalerkinYSampler<T: Scalar> {
    basis: std::sync::Arc<HermiteFourierBasis<T>>,
    coeffs: Vec<C<T>>,
}

impl<T: Scalar> GalerkinYSampler<T> {
    pub fn new(basis: std::sync::Arc<HermiteFourierBasis<T>>, density: &InvariantDensity<T>) -> Result<Self, SpectralError> {
        basis.check_density(density)?;
        Ok(GalerkinYSampler { coeffs: density.coeffs().to_vec(), basis })
    }
}

impl<T: Scalar> StationaryY<T> for GalerkinYSampler<T> {
    fn sample_y(&self, _membrane: &Membrane<T>, eta: &[T], rng: &mut StreamRng) -> Vec2<T> {
        let b = &self.basis;
        let nh = b.n_hermite();
        let mut psi = vec![T::zero(); nh];
        b.hermite().evaluate(eta, &mut psi);
        let fc: Vec<C<T>> = (0..b.grid().n_modes())
            .map(|a| self.coeffs[a * nh..(a + 1) * nh].iter().zip(&psi).fold(czero(), |acc, (&c, &p)| acc + c * p))
            .collect();
        let mut work = b.grid().work();
        let peak = b.grid().nodal_real(&fc, &mut work).into_iter().fold(T::zero(), T::max);
        let bound = lit::<T>(1.25) * peak;
        loop {
            let y = [uniform::<T, _>(rng), uniform::<T, _>(rng)];
            let u: T = uniform(rng);
            if u * bound <= b.grid().evaluate(&fc, y).re.max(T::zero()) {
                return y;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::membrane::ModelParams;

    #[test]
    fn flat_membrane_reduces_to_laplacian() {
        let mem = Membrane::new(ModelParams::new(1.0, 1.0, 0).unwrap());
        let basis = HermiteFourierBasis::new(&mem, 2, 3).unwrap();
        assert_eq!(basis.n_hermite(), 1);
        let g = assemble_g(&basis);
        for (a, k) in basis.grid().modes().iter().enumerate() {
            let lap = -4.0 * std::f64::consts::PI.powi(2) * (k[0] * k[0] + k[1] * k[1]) as f64;
            assert!((g[(a, a)].re - lap).abs() < 1e-9);
        }
        let opts = JointSolveOptions { estimate_truncation: false, ..Default::default() };
        let rho = solve_invariant_density(&basis, &opts).unwrap();
        assert!(rho.coeffs().iter().enumerate().all(|(i, c)| if i == basis.constant_index() { (c.re - 1.0).abs() < 1e-14 } else { c.norm() < 1e-14 }));
        let chi = solve_chi_12(&basis, &rho, &opts).unwrap();
        assert!(chi.coeffs.iter().all(|c| c.iter().all(|v| v.norm() == 0.0)));
    }

    #[test]
    fn unsupported_configurations_are_rejected() {
        let mem = Membrane::new(ModelParams::new(1.0, 1.0, 2).unwrap());
        assert!(matches!(HermiteFourierBasis::new(&mem, 2, 2), Err(SpectralError::Unsupported(_))));
        let mem = Membrane::new(ModelParams::new(1.0, 1.0, 1).unwrap());
        assert!(matches!(HermiteFourierBasis::new(&mem, 2, 7), Err(SpectralError::Unsupported(_))));
        assert!(matches!(HermiteFourierBasis::with_quadrature(&mem, 2, 3, 3), Err(SpectralError::Quadrature(_))));
    }
}
