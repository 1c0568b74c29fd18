//! JSON experiment configuration.

use anyhow::{bail, Context, Result};
use illiq_core::gauss::QuadratureMethod;
use illiq_core::hjb::SchemeConfig;
use illiq_core::model::ModelParams;
use illiq_core::sim::SimConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Scheme profile selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// dz = 0.02, dt = 5e-4 (the desk-scale grid of the baseline runs).
    Paper,
    /// dz = 0.04, dt = 2e-3 (CI-sized).
    Fast,
}

impl Profile {
    pub fn scheme(self, lambda: f64) -> SchemeConfig {
        match self {
            Profile::Paper => SchemeConfig::paper(lambda),
            Profile::Fast => SchemeConfig::fast(lambda),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Profile::Paper => "paper",
            Profile::Fast => "fast",
        }
    }
}

fn default_lambdas() -> Vec<f64> {
    vec![1.0, 5.0, 10.0, 50.0]
}
fn default_gammas() -> Vec<f64> {
    vec![0.0, 1.0]
}
fn default_rhos() -> Vec<f64> {
    vec![0.0, 0.5, -0.5]
}
fn default_profile() -> Profile {
    Profile::Paper
}
fn default_quadrature() -> QuadratureMethod {
    QuadratureMethod::GaussHermite
}
fn default_quadrature_points() -> usize {
    96
}
fn default_seed() -> u64 {
    42
}

/// Experiment description: base parameters plus the sweep axes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub params: ModelParams,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_gammas")]
    pub gammas: Vec<f64>,
    #[serde(default = "default_rhos")]
    pub rhos: Vec<f64>,
    #[serde(default = "default_profile")]
    pub profile: Profile,
    /// "gauss-hermite" (default) or "quantizer".
    #[serde(default = "default_quadrature")]
    pub quadrature: QuadratureMethod,
    /// Node count; the baseline quantizer runs used 5000.
    #[serde(default = "default_quadrature_points")]
    pub quadrature_points: usize,
    /// Optional override of the per-lambda horizon rule.
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub sim: Option<SimConfig>,
    /// Directory for content-hashed kernel-table caches (optional; the
    /// kernel is cheap with the default quadrature but expensive with the
    /// N = 5000 quantizer).
    #[serde(default)]
    pub kernel_cache_dir: Option<std::path::PathBuf>,
}

impl ExperimentSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let spec: ExperimentSpec =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        spec.validate_all()?;
        Ok(spec)
    }

    /// Every swept combination must pass model validation before any solve
    /// begins.
    pub fn validate_all(&self) -> Result<()> {
        self.params
            .validate()
            .map_err(|e| anyhow::anyhow!("base params: {e}"))?;
        if self.quadrature_points < 2 {
            bail!("quadrature_points must be at least 2");
        }
        for &lambda in &self.lambdas {
            for &gamma in &self.gammas {
                for &rho in &self.rhos {
                    let cell = ModelParams {
                        lambda,
                        gamma,
                        rho,
                        ..self.params
                    };
                    cell.validate().map_err(|e| {
                        anyhow::anyhow!("sweep cell (lambda={lambda}, gamma={gamma}, rho={rho}): {e}")
                    })?;
                }
            }
        }
        Ok(())
    }

    pub fn scheme_for(&self, lambda: f64) -> SchemeConfig {
        let cfg = self.profile.scheme(lambda);
        match self.horizon {
            Some(t) => cfg.with_horizon(t),
            None => cfg,
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        let mut cfg = self.sim.unwrap_or_default();
        cfg.seed = self.seed;
        cfg
    }
}
