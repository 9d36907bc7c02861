//! Spectral reference values and the on-disk solution cache.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use helfrich::homogenize::{self, HomogenizeError, HomogenizedQuantities, OuterRule, Regime11Options};
use helfrich::membrane::Membrane;
use helfrich::poisson_spectral::{
    joint::solve_chi_12_adaptive, GalerkinYSampler, HermiteFourierBasis, InvariantDensity, JointSolveOptions, RefinementStep, SpectralError,
};
use helfrich::sde_sim::{Regime, RhoYSampler, StationaryY};
use helfrich::{Mat2, Vec2};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::HarnessError;

pub const CACHE_SCHEMA: &str = "helfrich.solution/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quantities {
    pub d: Mat2<f64>,
    pub l: Option<Vec2<f64>>,
    pub a_ito: Mat2<f64>,
    pub a_strato: Mat2<f64>,
    /// `F̄` of the averaged regime.
    pub averaged_drift: Option<Vec2<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub solver_residual: f64,
    pub compatibility: f64,
    pub d_route_gap: Option<f64>,
    pub a_strato_gap: f64,
    pub eta_quadrature_gap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub fourier_order: usize,
    pub hermite_degree: usize,
    pub solver_residual: f64,
    pub truncation_residual: Option<f64>,
    pub iterations: usize,
}

impl From<&RefinementStep> for TraceStep {
    fn from(s: &RefinementStep) -> Self {
        TraceStep {
            fourier_order: s.fourier_order,
            hermite_degree: s.hermite_degree,
            solver_residual: s.solver_residual,
            truncation_residual: s.truncation_residual,
            iterations: s.iterations,
        }
    }
}

/// Outcome of a spectral solve as written to JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub regime: Regime,
    pub status: Status,
    pub error: Option<String>,
    pub tolerance: f64,
    pub quantities: Option<Quantities>,
    pub residuals: Residuals,
    pub fourier_order: usize,
    pub hermite_degree: Option<usize>,
    pub quadrature_nodes: usize,
    pub trace: Vec<TraceStep>,
}

impl SpectralReport {
    pub fn reference(&self) -> Option<HomogenizedQuantities<f64>> {
        let q = self.quantities.as_ref()?;
        let mut h = HomogenizedQuantities::brownian(self.regime);
        h.d = q.d;
        h.l = q.l;
        h.a_ito = q.a_ito;
        h.a_strato = q.a_strato;
        h.diagnostics = None;
        Some(h)
    }
}

/// Galerkin density of the `(1, 2)` regime, kept for sampling `Y₀`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredDensity {
    pub fourier_order: usize,
    pub degree: usize,
    pub eta_dim: usize,
    pub solver_residual: f64,
    pub iterations: usize,
    /// `[re, im]` pairs laid out `[fourier][hermite]`.
    pub coeffs: Vec<[f64; 2]>,
}

impl StoredDensity {
    fn from_density(d: &InvariantDensity<f64>) -> Option<Self> {
        match d {
            InvariantDensity::GalerkinGEta { fourier_order, degree, eta_dim, coeffs, solver_residual, iterations } => Some(StoredDensity {
                fourier_order: *fourier_order,
                degree: *degree,
                eta_dim: *eta_dim,
                solver_residual: *solver_residual,
                iterations: *iterations,
                coeffs: coeffs.iter().map(|c| [c.re, c.im]).collect(),
            }),
            InvariantDensity::ExplicitRhoY { .. } => None,
        }
    }

    pub fn to_density(&self) -> InvariantDensity<f64> {
        InvariantDensity::GalerkinGEta {
            fourier_order: self.fourier_order,
            degree: self.degree,
            eta_dim: self.eta_dim,
            coeffs: self.coeffs.iter().map(|c| Complex::new(c[0], c[1])).collect(),
            solver_residual: self.solver_residual,
            iterations: self.iterations,
        }
    }
}

/// Cache file contents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub schema: String,
    pub spectral_hash: String,
    pub report: SpectralReport,
    pub density: Option<StoredDensity>,
}

impl Solution {
    /// Stationary law of `Y₀` for the Monte-Carlo runs.
    pub fn sampler(&self, membrane: &Membrane<f64>) -> Result<Arc<dyn StationaryY<f64>>, HarnessError> {
        match &self.density {
            Some(d) if self.report.regime == Regime::Hom12 => {
                let basis = HermiteFourierBasis::new(membrane, d.fourier_order, d.degree).map_err(spectral_err)?;
                let sampler = GalerkinYSampler::new(Arc::new(basis), &d.to_density()).map_err(spectral_err)?;
                Ok(Arc::new(sampler))
            }
            _ => Ok(Arc::new(RhoYSampler)),
        }
    }
}

fn spectral_err(e: SpectralError) -> HarnessError {
    HarnessError::Compute(e.to_string())
}

fn default_tol(regime: Regime) -> f64 {
    match regime {
        Regime::Hom12 => 1e-6,
        Regime::Hom11 | Regime::Avg => 1e-8,
    }
}

fn failed(regime: Regime, tolerance: f64, error: String, trace: Vec<TraceStep>) -> SpectralReport {
    SpectralReport {
        regime,
        status: Status::Failed,
        error: Some(error),
        tolerance,
        quantities: None,
        residuals: Residuals::default(),
        fourier_order: 0,
        hermite_degree: None,
        quadrature_nodes: 0,
        trace,
    }
}

fn report_from(q: &HomogenizedQuantities<f64>, tolerance: f64, trace: Vec<TraceStep>, averaged_drift: Option<Vec2<f64>>) -> SpectralReport {
    let diag = q.diagnostics.clone().unwrap_or_default();
    let status = if diag.solver_residual <= tolerance { Status::Ok } else { Status::Failed };
    SpectralReport {
        regime: q.regime,
        status,
        error: (status == Status::Failed).then(|| format!("residual {:e} exceeds tolerance {tolerance:e}", diag.solver_residual)),
        tolerance,
        quantities: Some(Quantities { d: q.d, l: q.l, a_ito: q.a_ito, a_strato: q.a_strato, averaged_drift }),
        residuals: Residuals {
            solver_residual: diag.solver_residual,
            compatibility: diag.compatibility,
            d_route_gap: diag.d_route_gap,
            a_strato_gap: diag.a_strato_gap,
            eta_quadrature_gap: diag.eta_quadrature_gap,
        },
        fourier_order: diag.fourier_order,
        hermite_degree: diag.hermite_degree,
        quadrature_nodes: diag.quadrature_nodes,
        trace,
    }
}

/// Runs the spectral solve for the configured regime.
pub fn solve(cfg: &ExperimentConfig, membrane: &Membrane<f64>) -> Result<Solution, HarnessError> {
    let regime = cfg.run.regime;
    let sp = &cfg.spectral;
    let tol = sp.tol.unwrap_or(default_tol(regime));
    let (report, density) = match regime {
        Regime::Avg => {
            let order = sp.outer_order.unwrap_or(10);
            let (drift, sigma) = homogenize::averaged_coefficients(membrane, [0.0, 0.0], order).map_err(compute_err)?;
            let mut q = HomogenizedQuantities::brownian(Regime::Avg);
            q.d = sigma.to_mat();
            let mut report = report_from(&q, tol, Vec::new(), Some(drift));
            report.quadrature_nodes = order.pow(membrane.dim() as u32);
            (report, None)
        }
        Regime::Hom11 => {
            let q = sp.outer_order.unwrap_or(6);
            let rule = |q: usize| if membrane.modes().cutoff() <= 1 { OuterRule::PhaseReduced(q) } else { OuterRule::TensorHermite(q) };
            let mut opts = Regime11Options::<f64> { outer: rule(q), check: (q > 1).then(|| rule(q - 1)), eta_tol: sp.eta_tol, ..Default::default() };
            opts.frozen.tol = tol;
            if let Some(m) = sp.fourier_modes {
                opts.frozen.m_start = m;
            }
            match homogenize::regime11_quantities(membrane, &opts) {
                Ok(h) => (report_from(&h, tol, Vec::new(), None), None),
                Err(e @ (HomogenizeError::EtaQuadrature { .. } | HomogenizeError::Spectral(SpectralError::NotConverged { .. }))) => {
                    let trace = match &e {
                        HomogenizeError::Spectral(SpectralError::NotConverged { trace, .. }) => trace.iter().map(TraceStep::from).collect(),
                        _ => Vec::new(),
                    };
                    (failed(regime, tol, e.to_string(), trace), None)
                }
                Err(e) => return Err(compute_err(e)),
            }
        }
        Regime::Hom12 => {
            let m = sp.fourier_modes.unwrap_or(6);
            let d = sp.hermite_degree;
            let opts = JointSolveOptions::<f64> { m_start: m, m_max: m, d_start: d, d_max: d, tol, ..Default::default() };
            let sol = solve_chi_12_adaptive(membrane, &opts).map_err(spectral_err)?;
            let trace = sol.chi.trace.iter().map(TraceStep::from).collect();
            let h = homogenize::regime12_quantities(&sol.basis, &sol.chi, &sol.density).map_err(compute_err)?;
            (report_from(&h, tol, trace, None), StoredDensity::from_density(&sol.density))
        }
    };
    Ok(Solution { schema: CACHE_SCHEMA.into(), spectral_hash: cfg.spectral_hash(), report, density })
}

fn compute_err(e: HomogenizeError) -> HarnessError {
    HarnessError::Compute(e.to_string())
}

pub fn cache_path(dir: &Path, hash: &str) -> PathBuf {
    dir.join("cache").join(format!("solution_{}.json", &hash[..16]))
}

/// Loads the cached solution for `cfg`, or solves and stores it. The flag
/// tells whether the cache was used.
pub fn solve_cached(cfg: &ExperimentConfig, membrane: &Membrane<f64>) -> Result<(Solution, bool), HarnessError> {
    let hash = cfg.spectral_hash();
    let path = cache_path(&cfg.output.dir, &hash);
    if let Ok(text) = std::fs::read_to_string(&path) {
        if let Ok(sol) = serde_json::from_str::<Solution>(&text) {
            if sol.schema == CACHE_SCHEMA && sol.spectral_hash == hash {
                return Ok((sol, true));
            }
        }
    }
    let sol = solve(cfg, membrane)?;
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(&path, serde_json::to_vec(&sol).map_err(|e| HarnessError::Compute(e.to_string()))?)?;
    Ok((sol, false))
}
