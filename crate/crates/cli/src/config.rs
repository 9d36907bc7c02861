//! Experiment configuration: TOML file, `HELFRICH_*` environment and flags.
//!
//! ```toml
//! [model]
//! kappa = 0.01
//! sigma = 10.0
//! cutoff = 1
//!
//! [run]
//! regime = "hom11"
//! epsilons = [0.5, 0.25, 0.125]
//! paths = 10000
//! horizon = 1.0
//! dt_factor = 1e-3   # dt = dt_factor·ε² (α = 1) or dt_factor·T (α = 0)
//! # dt = 1e-4        # fixed step, overrides dt_factor
//! seed = 0
//!
//! [spectral]
//! fourier_modes = 6  # joint order M (hom12) or starting frozen order (hom11)
//! hermite_degree = 4
//! outer_order = 6    # η rule: phase-reduced (hom11), Gauss-Hermite (avg)
//! tol = 1e-6
//! eta_tol = 1e-5
//!
//! [output]
//! dir = "out"
//! saved_paths = 8
//! stride = 10
//! wall_clock = false
//!
//! [checks]
//! k_se = 3.0
//! area_tol = 1e-6
//! ```

use std::path::{Path, PathBuf};

use helfrich::membrane::ModelParams;
use helfrich::sde_sim::{InitialPosition, Regime, SimConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::HarnessError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub run: RunSection,
    pub spectral: SpectralSection,
    pub output: OutputSection,
    pub checks: CheckSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub kappa: f64,
    pub sigma: f64,
    pub cutoff: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub regime: Regime,
    pub epsilons: Vec<f64>,
    pub paths: usize,
    pub horizon: f64,
    pub dt_factor: f64,
    pub dt: Option<f64>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralSection {
    pub fourier_modes: Option<usize>,
    pub hermite_degree: usize,
    pub outer_order: Option<usize>,
    pub tol: Option<f64>,
    pub eta_tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    #[serde(skip_serializing)]
    pub dir: PathBuf,
    /// Replicas whose paths and lift diagnostics are written by `simulate`.
    pub saved_paths: usize,
    /// Subsampling stride of the written paths.
    pub stride: usize,
    /// Write measured wall-clock times instead of `NA`.
    pub wall_clock: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckSection {
    /// Width of Monte-Carlo compatibility bands in standard errors.
    pub k_se: f64,
    pub psd_tol: f64,
    /// Bound on the spectral `Ã` entries (regime hom11), both forms.
    pub area_tol: f64,
    /// Absolute bound on the Monte-Carlo `Ã` entries; unset means `k_se`
    /// standard errors.
    pub area_mc_tol: Option<f64>,
    pub drift_tol: f64,
    pub centering_tol: f64,
    pub a_forms_tol: f64,
    /// Largest relative `D` error at the smallest ε.
    pub trend_rel: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { kappa: 0.01, sigma: 10.0, cutoff: 1 }
    }
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { regime: Regime::Hom11, epsilons: vec![0.5, 0.25, 0.125], paths: 10_000, horizon: 1.0, dt_factor: 1e-3, dt: None, seed: 0 }
    }
}

impl Default for SpectralSection {
    fn default() -> Self {
        SpectralSection { fourier_modes: None, hermite_degree: 4, outer_order: None, tol: None, eta_tol: 1e-5 }
    }
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out"), saved_paths: 8, stride: 10, wall_clock: false }
    }
}

impl Default for CheckSection {
    fn default() -> Self {
        CheckSection {
            k_se: 3.0,
            psd_tol: 1e-10,
            area_tol: 1e-6,
            area_mc_tol: None,
            drift_tol: 1e-5,
            centering_tol: 1e-6,
            a_forms_tol: 1e-6,
            trend_rel: 0.2,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelSection::default(),
            run: RunSection::default(),
            spectral: SpectralSection::default(),
            output: OutputSection::default(),
            checks: CheckSection::default(),
        }
    }
}

/// Values that replace the file contents when present.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub regime: Option<Regime>,
    pub epsilons: Option<Vec<f64>>,
    pub paths: Option<usize>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub seed: Option<u64>,
    pub cutoff: Option<u32>,
    pub fourier_modes: Option<usize>,
    pub hermite_degree: Option<usize>,
    pub out: Option<PathBuf>,
}

/// Parses a comma-separated ε list; the empty string gives an empty list.
pub fn parse_epsilons(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|e| format!("bad epsilon {t:?}: {e}")))
        .collect()
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: Option<&Path>) -> Result<Self, HarnessError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| HarnessError::Config(format!("{}: {e}", p.display())))?;
                Self::from_toml(&text)
            }
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(r) = o.regime {
            self.run.regime = r;
        }
        if let Some(e) = &o.epsilons {
            self.run.epsilons = e.clone();
        }
        if let Some(n) = o.paths {
            self.run.paths = n;
        }
        if o.dt.is_some() {
            self.run.dt = o.dt;
        }
        if let Some(h) = o.horizon {
            self.run.horizon = h;
        }
        if let Some(s) = o.seed {
            self.run.seed = s;
        }
        if let Some(c) = o.cutoff {
            self.model.cutoff = c;
        }
        if o.fourier_modes.is_some() {
            self.spectral.fourier_modes = o.fourier_modes;
        }
        if let Some(d) = o.hermite_degree {
            self.spectral.hermite_degree = d;
        }
        if let Some(dir) = &o.out {
            self.output.dir = dir.clone();
        }
    }

    pub fn model_params(&self) -> Result<ModelParams<f64>, HarnessError> {
        ModelParams::new(self.model.kappa, self.model.sigma, self.model.cutoff).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Checks everything that can be checked without computing.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        self.model_params()?;
        let eps = &self.run.epsilons;
        if eps.is_empty() {
            return bad("epsilons must not be empty".into());
        }
        if eps.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return bad(format!("epsilons must be positive and finite, got {eps:?}"));
        }
        let mut sorted = eps.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return bad(format!("epsilons must be distinct, got {eps:?}"));
        }
        if !(self.run.dt_factor.is_finite() && self.run.dt_factor > 0.0) {
            return bad("dt_factor must be positive".into());
        }
        if self.output.stride == 0 {
            return bad("output.stride must be at least 1".into());
        }
        if !(self.checks.k_se > 0.0) {
            return bad("checks.k_se must be positive".into());
        }
        for e in sorted {
            self.sim_config(e).validate().map_err(|err| HarnessError::Config(format!("epsilon {e}: {err}")))?;
        }
        Ok(())
    }

    /// ε values in descending order.
    pub fn epsilons_desc(&self) -> Vec<f64> {
        let mut e = self.run.epsilons.clone();
        e.sort_by(|a, b| b.total_cmp(a));
        e
    }

    /// Step at `epsilon`: the fixed `dt` if given, else the largest step
    /// below the `dt_factor` rule that divides the horizon.
    pub fn dt_for(&self, epsilon: f64) -> f64 {
        if let Some(dt) = self.run.dt {
            return dt;
        }
        let t = self.run.horizon;
        let target = match self.run.regime.alpha() {
            0 => self.run.dt_factor * t,
            _ => self.run.dt_factor * epsilon * epsilon,
        };
        let n = (t / target * (1.0 - 1e-12)).ceil().max(1.0);
        t / n
    }

    pub fn sim_config(&self, epsilon: f64) -> SimConfig<f64> {
        let x0 = match self.run.regime.alpha() {
            0 => InitialPosition::Point([0.0, 0.0]),
            _ => InitialPosition::Stationary,
        };
        SimConfig {
            regime: self.run.regime,
            epsilon,
            horizon: self.run.horizon,
            dt: self.dt_for(epsilon),
            n_paths: self.run.paths,
            master_seed: self.run.seed,
            x0,
        }
    }

    /// SHA-256 of the resolved configuration; the output directory is not
    /// serialized and so does not enter.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }

    /// Hash of the inputs of the spectral solve only.
    pub fn spectral_hash(&self) -> String {
        let key = serde_json::json!({
            "model": self.model,
            "regime": self.run.regime,
            "spectral": self.spectral,
        });
        hex(&Sha256::digest(serde_json::to_vec(&key).expect("key serializes")))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
