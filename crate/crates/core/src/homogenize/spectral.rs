//! Spectral evaluation of the homogenized quantities.

use num_complex::Complex;
use num_traits::Float;
use rayon::prelude::*;

use super::{max_abs_diff, transpose, HomogenizeError, HomogenizedQuantities, Source, SpectralDiagnostics};
use crate::fourier::FourierGrid;
use crate::hermite::TensorQuadrature;
use crate::membrane::Membrane;
use crate::ou_process::sample_stationary;
use crate::poisson_spectral::joint::YDerivative;
use crate::poisson_spectral::{
    frozen::solve_with_operator, solve_chi_fixed_eta, BasisDescriptor, FrozenOperator, FrozenSolveOptions, HermiteFourierBasis,
    InvariantDensity, PoissonSolution,
};
use crate::rng::{substream, STREAM_AUX};
use crate::scalar::{from_usize, lit, to_f64, Mat2, Scalar, Sym2, Vec2};
use crate::sde_sim::Regime;

type C<T> = Complex<T>;

/// Largest tensor rule [`averaged_coefficients`] will build.
pub const MAX_AVERAGING_NODES: usize = 10_000_000;
const CHUNKS: usize = 64;

/// Sums `item(i)` over `0..len` in fixed contiguous chunks, adding the chunk
/// totals in order so the result is independent of the thread count.
fn ordered_sum<T: Scalar, const N: usize>(len: usize, item: impl Fn(usize) -> [T; N] + Sync + Send) -> [T; N] {
    let chunk = len.div_ceil(CHUNKS).max(1);
    let partials: Vec<[T; N]> = (0..len.div_ceil(chunk))
        .into_par_iter()
        .map(|c| {
            let mut acc = [T::zero(); N];
            for i in c * chunk..((c + 1) * chunk).min(len) {
                for (a, v) in acc.iter_mut().zip(item(i)) {
                    *a = *a + v;
                }
            }
            acc
        })
        .collect();
    let mut out = [T::zero(); N];
    for p in partials {
        for (o, v) in out.iter_mut().zip(p) {
            *o = *o + v;
        }
    }
    out
}

fn tensor_rule<T: Scalar>(order: usize, variances: &[T], limit: usize) -> Result<TensorQuadrature<T>, HomogenizeError> {
    if order == 0 {
        return Err(HomogenizeError::Invalid("quadrature order must be positive".into()));
    }
    let nodes = (order as f64).powi(variances.len() as i32);
    if nodes > limit as f64 {
        return Err(HomogenizeError::TooManyNodes { nodes, limit });
    }
    Ok(TensorQuadrature::new(order, variances))
}

fn sym_entry<T: Copy>(s: Sym2<T>, i: usize, j: usize) -> T {
    match (i, j) {
        (0, 0) => s.xx,
        (1, 1) => s.yy,
        _ => s.xy,
    }
}

fn mat_from<T: Copy>(v: &[T]) -> Mat2<T> {
    [[v[0], v[1]], [v[2], v[3]]]
}

fn combine<T: Scalar>(terms: &[(T, Mat2<T>)]) -> Mat2<T> {
    let mut out = [[T::zero(); 2]; 2];
    for (c, m) in terms {
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = out[i][j] + *c * m[i][j];
            }
        }
    }
    out
}

/// `(F̄(x), Σ̄(x))` by tensor Gauss-Hermite quadrature of `order` points per
/// real coordinate over `ρ_η`.
pub fn averaged_coefficients<T: Scalar>(membrane: &Membrane<T>, x: Vec2<T>, order: usize) -> Result<(Vec2<T>, Sym2<T>), HomogenizeError> {
    let variances = membrane.spectra().coord_variances(membrane.modes());
    let quad = tensor_rule(order, &variances, MAX_AVERAGING_NODES)?;
    let s = ordered_sum(quad.len(), |n| {
        let geo = membrane.geometry(x, &quad.points[n]);
        let (f, s, w) = (geo.drift(), geo.sigma(), quad.weights[n]);
        [w * f[0], w * f[1], w * s.xx, w * s.xy, w * s.yy]
    });
    Ok(([s[0], s[1]], Sym2 { xx: s[2], xy: s[3], yy: s[4] }))
}

/// Plain Monte-Carlo average over stationary membrane states.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AveragedEstimate<T> {
    pub drift: Vec2<T>,
    pub sigma: Sym2<T>,
    pub drift_se: Vec2<T>,
    pub sigma_se: Sym2<T>,
    pub samples: usize,
}

pub fn averaged_coefficients_mc<T: Scalar>(membrane: &Membrane<T>, x: Vec2<T>, samples: usize, seed: u64) -> AveragedEstimate<T> {
    let mut rng = substream(seed, 0, STREAM_AUX);
    let mut sum = [T::zero(); 5];
    let mut sq = [T::zero(); 5];
    for _ in 0..samples {
        let eta = sample_stationary(membrane.modes(), membrane.spectra(), &mut rng).coords;
        let geo = membrane.geometry(x, &eta);
        let (f, s) = (geo.drift(), geo.sigma());
        for (i, v) in [f[0], f[1], s.xx, s.xy, s.yy].into_iter().enumerate() {
            sum[i] = sum[i] + v;
            sq[i] = sq[i] + v * v;
        }
    }
    let n = from_usize::<T>(samples.max(1));
    let mean: Vec<T> = sum.iter().map(|&s| s / n).collect();
    let se: Vec<T> = (0..5)
        .map(|i| ((sq[i] / n - mean[i] * mean[i]).max(T::zero()) / (n - T::one()).max(T::one())).sqrt())
        .collect();
    AveragedEstimate {
        drift: [mean[0], mean[1]],
        sigma: Sym2 { xx: mean[2], xy: mean[3], yy: mean[4] },
        drift_se: [se[0], se[1]],
        sigma_se: Sym2 { xx: se[2], xy: se[3], yy: se[4] },
        samples,
    }
}

/// Outer rule over `ρ_η` for the `(1, 1)` regime.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OuterRule {
    /// Gauss-Hermite tensor rule with this many points per real coordinate.
    TensorHermite(usize),
    /// Gauss-Laguerre rule with this many points in the squared amplitude
    /// `|η^k|²` of each mode class. The cell integrals do not depend on the
    /// phases, which a translation of y removes; this needs linearly
    /// independent class wavevectors, i.e. cutoff at most 1.
    PhaseReduced(usize),
}

impl OuterRule {
    pub fn order(self) -> usize {
        match self {
            OuterRule::TensorHermite(q) | OuterRule::PhaseReduced(q) => q,
        }
    }

    /// Nodes and weights of the rule for `membrane`.
    pub fn build<T: Scalar>(self, membrane: &Membrane<T>) -> Result<TensorQuadrature<T>, HomogenizeError> {
        let variances = membrane.spectra().coord_variances(membrane.modes());
        match self {
            OuterRule::TensorHermite(q) => tensor_rule(q, &variances, MAX_AVERAGING_NODES),
            OuterRule::PhaseReduced(q) => {
                let classes = membrane.class_wavevectors();
                let independent = match classes {
                    [] | [_] => true,
                    [a, b] => Float::abs(a[0] * b[1] - a[1] * b[0]) > T::zero(),
                    _ => false,
                };
                if !independent {
                    return Err(HomogenizeError::Invalid(format!(
                        "phase-reduced rule needs at most two independent mode classes, got {}",
                        classes.len()
                    )));
                }
                if q == 0 {
                    return Err(HomogenizeError::Invalid("quadrature order must be positive".into()));
                }
                let (x, w) = crate::hermite::gauss_laguerre(q);
                let nc = classes.len();
                let total = q.pow(nc as u32);
                let mut points = Vec::with_capacity(total);
                let mut weights = Vec::with_capacity(total);
                for idx in 0..total {
                    let mut eta = vec![T::zero(); variances.len()];
                    let mut weight = 1.0;
                    let mut rest = idx;
                    for c in 0..nc {
                        let i = rest % q;
                        rest /= q;
                        // |η^k|² = 2 v U with U ~ Exp(1), v the per-coordinate variance.
                        eta[2 * c] = (lit::<T>(2.0 * x[i]) * variances[2 * c]).sqrt();
                        weight *= w[i];
                    }
                    points.push(eta);
                    weights.push(lit(weight));
                }
                Ok(TensorQuadrature { points, weights })
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Regime11Options<T> {
    pub outer: OuterRule,
    /// Coarser rule used to check η-convergence.
    pub check: Option<OuterRule>,
    /// Largest admissible change of `D` and `L` between the two rules.
    pub eta_tol: T,
    /// Finite-difference step in units of `√Π_k`.
    pub fd_scale: T,
    pub frozen: FrozenSolveOptions<T>,
}

impl<T: Scalar> Default for Regime11Options<T> {
    fn default() -> Self {
        Regime11Options {
            outer: OuterRule::PhaseReduced(6),
            check: Some(OuterRule::PhaseReduced(5)),
            eta_tol: lit(1e-5),
            fd_scale: lit(1e-3),
            frozen: FrozenSolveOptions::default(),
        }
    }
}

/// Integrals of one frozen state against `ρ_Y(·, η) dy`.
struct FrozenTerms<T> {
    sigma: Mat2<T>,
    /// `∫ e_i·Σ∇χ^j ρ_Y`.
    cross: Mat2<T>,
    /// `∫ ∇χ^i·Σ∇χ^j ρ_Y`.
    dirichlet: Mat2<T>,
    /// `∫ χ^i L₀χ^j ρ_Y`.
    chi_l0_chi: Mat2<T>,
    /// `∫ χ^i F^j ρ_Y`.
    chi_f: Mat2<T>,
    /// `∫ L_ηχ ρ_Y`.
    drift: Vec2<T>,
    compatibility: T,
    residual: T,
    order: usize,
}

fn frozen_terms<T: Scalar>(
    membrane: &Membrane<T>,
    eta: &[T],
    rates: &[T],
    variances: &[T],
    opts: &Regime11Options<T>,
) -> Result<FrozenTerms<T>, HomogenizeError> {
    let sol = solve_chi_fixed_eta(membrane, eta, &opts.frozen)?;
    let order = match sol.basis {
        BasisDescriptor::Fourier { order } => order,
        BasisDescriptor::HermiteFourier { order, .. } => order,
    };
    let op = FrozenOperator::new(membrane, eta, FourierGrid::new(order))?;
    let grid = op.grid();
    let mut work = grid.work();
    let chi = [grid.nodal_real(&sol.coeffs[0], &mut work), grid.nodal_real(&sol.coeffs[1], &mut work)];
    let grad = [op.gradient_nodes(&sol.coeffs[0], &mut work), op.gradient_nodes(&sol.coeffs[1], &mut work)];
    let gen = [op.generator_nodes(&sol.coeffs[0], &mut work), op.generator_nodes(&sol.coeffs[1], &mut work)];
    let inv_n = T::one() / from_usize::<T>(grid.n_nodes());
    let z = [[T::zero(); 2]; 2];
    let (mut sigma, mut cross, mut dirichlet, mut chi_l0_chi, mut chi_f) = (z, z, z, z, z);
    let mut mean_f = [T::zero(); 2];
    for j in 0..grid.n_nodes() {
        let (r, s, f) = (op.rho_nodes()[j] * inv_n, op.sigma_nodes()[j], op.drift_nodes()[j]);
        let g = [[grad[0][0][j].re, grad[0][1][j].re], [grad[1][0][j].re, grad[1][1][j].re]];
        let sg = [s.mul_vec(g[0]), s.mul_vec(g[1])];
        for a in 0..2 {
            mean_f[a] = mean_f[a] + r * f[a];
            for b in 0..2 {
                sigma[a][b] = sigma[a][b] + r * sym_entry(s, a, b);
                cross[a][b] = cross[a][b] + r * sg[b][a];
                dirichlet[a][b] = dirichlet[a][b] + r * s.bilinear(g[a], g[b]);
                chi_l0_chi[a][b] = chi_l0_chi[a][b] + r * chi[a][j] * gen[b][j].re;
                chi_f[a][b] = chi_f[a][b] + r * chi[a][j] * f[b];
            }
        }
    }
    let mut residual = sol.solver_residual;
    // L_ηχ by central differences of the cell solutions at fixed truncation.
    let stencil_opts = FrozenSolveOptions { cg_tol: opts.frozen.cg_tol.min(lit(1e-14)), ..opts.frozen };
    let nm = grid.n_modes();
    let mut lc = [vec![C::new(T::zero(), T::zero()); nm], vec![C::new(T::zero(), T::zero()); nm]];
    let two = lit::<T>(2.0);
    for k in 0..eta.len() {
        let delta = opts.fd_scale * (two * variances[k]).sqrt();
        let mut solve_shift = |sign: T| -> Result<PoissonSolution<T>, HomogenizeError> {
            let mut e = eta.to_vec();
            e[k] = e[k] + sign * delta;
            let op = FrozenOperator::new(membrane, &e, FourierGrid::new(order))?;
            let s = solve_with_operator(&op, &stencil_opts)?;
            residual = residual.max(s.solver_residual);
            Ok(s)
        };
        let plus = solve_shift(T::one())?;
        let minus = solve_shift(-T::one())?;
        let c2 = rates[k] * variances[k] / (delta * delta);
        let c1 = rates[k] * eta[k] / (two * delta);
        for comp in 0..2 {
            for a in 0..nm {
                let (p, c, m) = (plus.coeffs[comp][a], sol.coeffs[comp][a], minus.coeffs[comp][a]);
                lc[comp][a] = lc[comp][a] + (p - c * two + m) * c2 - (p - m) * c1;
            }
        }
    }
    let drift = [op.mean_rho(&lc[0]).re, op.mean_rho(&lc[1]).re];
    let compatibility = Float::abs(mean_f[0]).max(Float::abs(mean_f[1]));
    Ok(FrozenTerms { sigma, cross, dirichlet, chi_l0_chi, chi_f, drift, compatibility, residual, order })
}

struct OuterIntegral<T> {
    sigma: Mat2<T>,
    cross: Mat2<T>,
    dirichlet: Mat2<T>,
    chi_l0_chi: Mat2<T>,
    chi_f: Mat2<T>,
    drift: Vec2<T>,
    compatibility: T,
    residual: T,
    order: usize,
    nodes: usize,
}

fn outer_integral<T: Scalar>(membrane: &Membrane<T>, rule: OuterRule, opts: &Regime11Options<T>) -> Result<OuterIntegral<T>, HomogenizeError> {
    let modes = membrane.modes();
    let rates = membrane.spectra().coord_rates(modes);
    let variances = membrane.spectra().coord_variances(modes);
    let quad = rule.build(membrane)?;
    let per_node: Vec<FrozenTerms<T>> = quad
        .points
        .par_iter()
        .map(|eta| frozen_terms(membrane, eta, &rates, &variances, opts))
        .collect::<Result<_, _>>()?;
    let z = [[T::zero(); 2]; 2];
    let mut out = OuterIntegral {
        sigma: z,
        cross: z,
        dirichlet: z,
        chi_l0_chi: z,
        chi_f: z,
        drift: [T::zero(); 2],
        compatibility: T::zero(),
        residual: T::zero(),
        order: 0,
        nodes: quad.len(),
    };
    for (t, &w) in per_node.iter().zip(&quad.weights) {
        out.sigma = combine(&[(T::one(), out.sigma), (w, t.sigma)]);
        out.cross = combine(&[(T::one(), out.cross), (w, t.cross)]);
        out.dirichlet = combine(&[(T::one(), out.dirichlet), (w, t.dirichlet)]);
        out.chi_l0_chi = combine(&[(T::one(), out.chi_l0_chi), (w, t.chi_l0_chi)]);
        out.chi_f = combine(&[(T::one(), out.chi_f), (w, t.chi_f)]);
        out.drift = [out.drift[0] + w * t.drift[0], out.drift[1] + w * t.drift[1]];
        out.compatibility = out.compatibility.max(t.compatibility);
        out.residual = out.residual.max(t.residual);
        out.order = out.order.max(t.order);
    }
    Ok(out)
}

fn diffusivity_11<T: Scalar>(o: &OuterIntegral<T>) -> Mat2<T> {
    let one = T::one();
    combine(&[(one, o.sigma), (one, o.cross), (one, transpose(o.cross)), (one, o.dirichlet)])
}

/// Homogenized quantities of the `(1, 1)` regime.
///
/// The cell problem is solved at every node of an outer rule over `ρ_η`; inner integrals use the collocation grid with `ρ_Y` weights.
/// `L_ηχ` comes from a central-difference stencil in η at fixed truncation.
/// `Ã` is returned in its Dirichlet form; the gap to the `χF` form is in the
/// diagnostics.
pub fn regime11_quantities<T: Scalar>(membrane: &Membrane<T>, opts: &Regime11Options<T>) -> Result<HomogenizedQuantities<T>, HomogenizeError> {
    let o = outer_integral(membrane, opts.outer, opts)?;
    let one = T::one();
    let two = lit::<T>(2.0);
    let d = diffusivity_11(&o);
    let a_ito = combine(&[(one, o.chi_l0_chi), (two, d), (-two, o.sigma), (-two, transpose(o.cross))]);
    let a_dirichlet = combine(&[(one, o.cross), (-one, transpose(o.cross))]);
    let a_chi_f = combine(&[(one, o.chi_f), (-one, transpose(o.chi_f))]);
    let eta_gap = match opts.check {
        Some(c) if membrane.dim() > 0 && c != opts.outer => {
            let coarse = outer_integral(membrane, c, opts)?;
            let gap = max_abs_diff(d, diffusivity_11(&coarse))
                .max(Float::abs(o.drift[0] - coarse.drift[0]))
                .max(Float::abs(o.drift[1] - coarse.drift[1]));
            if !(gap <= opts.eta_tol) {
                return Err(HomogenizeError::EtaQuadrature { coarse: c.order(), fine: opts.outer.order(), difference: to_f64(gap) });
            }
            Some(to_f64(gap))
        }
        _ => None,
    };
    let diagnostics = SpectralDiagnostics {
        solver_residual: to_f64(o.residual),
        compatibility: to_f64(o.compatibility),
        d_route_gap: None,
        a_strato_gap: to_f64(max_abs_diff(a_dirichlet, a_chi_f)),
        eta_quadrature_gap: eta_gap,
        quadrature_nodes: o.nodes,
        fourier_order: o.order,
        hermite_degree: None,
    };
    Ok(HomogenizedQuantities {
        regime: Regime::Hom11,
        d,
        l: Some(o.drift),
        a_ito,
        a_strato: a_dirichlet,
        source: Source::Spectral,
        stderr: None,
        diagnostics: Some(diagnostics),
    })
}

/// `Ã` of the `(1, 1)` regime in the `χF` form, for cross-checking.
pub fn regime11_area_chi_f<T: Scalar>(membrane: &Membrane<T>, opts: &Regime11Options<T>) -> Result<Mat2<T>, HomogenizeError> {
    let o = outer_integral(membrane, opts.outer, opts)?;
    Ok(combine(&[(T::one(), o.chi_f), (-T::one(), transpose(o.chi_f))]))
}

const N12: usize = 23;

/// Homogenized quantities of the `(1, 2)` regime from a joint corrector and
/// Galerkin density on the same basis.
///
/// Integrals use the collocation grid in y and the basis Gauss-Hermite rule
/// in η, weighted by `g_η`. `D` is assembled from the Dirichlet blocks in y
/// and η and cross-checked against the martingale-bracket route
/// `∫Σ + cross terms − ½(⟨χ^i, Gχ^j⟩ + ⟨Gχ^i, χ^j⟩)`. `Ã` is returned in its
/// `G^A` form and compared against `A + ∫Σ − D`.
pub fn regime12_quantities<T: Scalar>(
    basis: &HermiteFourierBasis<T>,
    chi: &PoissonSolution<T>,
    rho: &InvariantDensity<T>,
) -> Result<HomogenizedQuantities<T>, HomogenizeError> {
    basis.check_solution(chi)?;
    basis.check_density(rho)?;
    let grid = basis.grid();
    let dim = basis.eta_dim();
    let eta_derivs: Vec<[Vec<C<T>>; 2]> =
        (0..dim).map(|e| [basis.eta_derivative(&chi.coeffs[0], e), basis.eta_derivative(&chi.coeffs[1], e)]).collect();
    let mut gchi = [vec![C::new(T::zero(), T::zero()); basis.len()], vec![C::new(T::zero(), T::zero()); basis.len()]];
    for c in 0..2 {
        basis.apply_g(&chi.coeffs[c], &mut gchi[c]);
    }
    let quad = basis.quadrature();
    let (rates, variances) = (basis.rates(), basis.variances());
    let inv_n = T::one() / from_usize::<T>(grid.n_nodes());
    let s = ordered_sum::<T, N12>(quad.len(), |n| {
        let mut work = grid.work();
        let mut fields = basis.empty_fields();
        basis.fill_node_fields(n, &mut fields);
        let vals = |u: &[C<T>], d: YDerivative, work: &mut _| basis.node_values(u, n, d, work);
        let g = vals(rho.coeffs(), YDerivative::Value, &mut work);
        let chi_v = [vals(&chi.coeffs[0], YDerivative::Value, &mut work), vals(&chi.coeffs[1], YDerivative::Value, &mut work)];
        let gc = [vals(&gchi[0], YDerivative::Value, &mut work), vals(&gchi[1], YDerivative::Value, &mut work)];
        let dy = [
            [vals(&chi.coeffs[0], YDerivative::D1, &mut work), vals(&chi.coeffs[0], YDerivative::D2, &mut work)],
            [vals(&chi.coeffs[1], YDerivative::D1, &mut work), vals(&chi.coeffs[1], YDerivative::D2, &mut work)],
        ];
        let de: Vec<[Vec<T>; 2]> = eta_derivs
            .iter()
            .map(|d| [vals(&d[0], YDerivative::Value, &mut work), vals(&d[1], YDerivative::Value, &mut work)])
            .collect();
        let w = quad.weights[n] * inv_n;
        let mut acc = [T::zero(); N12];
        for j in 0..grid.n_nodes() {
            let r = w * g[j];
            let (s, f) = (fields.sigma[j], fields.drift[j]);
            let gr = [[dy[0][0][j], dy[0][1][j]], [dy[1][0][j], dy[1][1][j]]];
            let sg = [s.mul_vec(gr[0]), s.mul_vec(gr[1])];
            for a in 0..2 {
                for b in 0..2 {
                    let idx = 2 * a + b;
                    acc[idx] = acc[idx] + r * sym_entry(s, a, b);
                    acc[4 + idx] = acc[4 + idx] + r * sg[b][a];
                    acc[8 + idx] = acc[8 + idx] + r * s.bilinear(gr[a], gr[b]);
                    let mut eta_block = T::zero();
                    for (e, d) in de.iter().enumerate() {
                        eta_block = eta_block + rates[e] * variances[e] * d[a][j] * d[b][j];
                    }
                    acc[12 + idx] = acc[12 + idx] + r * eta_block;
                    acc[16 + idx] = acc[16 + idx] + r * chi_v[a][j] * gc[b][j];
                }
            }
            acc[20] = acc[20] + r;
            acc[21] = acc[21] + r * f[0];
            acc[22] = acc[22] + r * f[1];
        }
        acc
    });
    let (sigma, cross, dir_y, dir_eta, chi_g) = (mat_from(&s[0..4]), mat_from(&s[4..8]), mat_from(&s[8..12]), mat_from(&s[12..16]), mat_from(&s[16..20]));
    let one = T::one();
    let half = lit::<T>(0.5);
    let two = lit::<T>(2.0);
    let d = combine(&[(one, sigma), (one, cross), (one, transpose(cross)), (one, dir_y), (one, dir_eta)]);
    let d_bracket = combine(&[(one, sigma), (one, cross), (one, transpose(cross)), (-half, chi_g), (-half, transpose(chi_g))]);
    let a_ito = combine(&[(one, chi_g), (two, d), (-two, sigma), (-two, transpose(cross))]);
    let a_strato = combine(&[(half, chi_g), (-half, transpose(chi_g)), (one, cross), (-one, transpose(cross))]);
    let a_strato_ito_route = combine(&[(one, a_ito), (one, sigma), (-one, d)]);
    let diagnostics = SpectralDiagnostics {
        solver_residual: to_f64(chi.solver_residual),
        compatibility: to_f64(Float::abs(s[21]).max(Float::abs(s[22]))),
        d_route_gap: Some(to_f64(max_abs_diff(d, d_bracket))),
        a_strato_gap: to_f64(max_abs_diff(a_strato, a_strato_ito_route)),
        eta_quadrature_gap: None,
        quadrature_nodes: quad.len(),
        fourier_order: basis.fourier_order(),
        hermite_degree: Some(basis.degree()),
    };
    Ok(HomogenizedQuantities {
        regime: Regime::Hom12,
        d,
        l: None,
        a_ito,
        a_strato,
        source: Source::Spectral,
        stderr: None,
        diagnostics: Some(diagnostics),
    })
}
