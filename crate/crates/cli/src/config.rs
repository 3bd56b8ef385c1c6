//! Effective run configuration: built-in defaults, overridden by an
//! optional JSON config file, overridden by command-line flags.

use std::path::Path;

use serde::{Deserialize, Serialize};
use splatlift_core::evaluate::HullKind;
use splatlift_core::geometry::{DEFAULT_EPSILON_COV, DEFAULT_EPSILON_Z};
use splatlift_core::uplift::UpliftConfig;

use crate::CliError;

/// All tunables a config file may set. Every field is optional; unset
/// fields fall through to the built-in defaults.
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub sigma_k: Option<f64>,
    pub footprint_sigma: Option<f64>,
    pub epsilon_cov: Option<f64>,
    pub epsilon_z: Option<f64>,
    pub fill: Option<bool>,
    pub fill_opacity_window: Option<bool>,
    pub backproject_sigma: Option<f64>,
    pub saturation: Option<f64>,
    pub hull: Option<HullKind>,
    pub hull_k: Option<usize>,
    pub workers: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError {
            kind: "io",
            message: format!("cannot read config {}: {e}", path.display()),
        })?;
        serde_json::from_slice(&bytes).map_err(|e| CliError {
            kind: "config",
            message: format!("invalid config {}: {e}", path.display()),
        })
    }
}

/// The resolved configuration used by a command; echoed into every output
/// document for reproducibility.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub sigma_k: f64,
    pub footprint_sigma: f64,
    pub epsilon_cov: f64,
    pub epsilon_z: f64,
    pub fill: bool,
    pub fill_opacity_window: bool,
    pub backproject_sigma: f64,
    pub saturation: f64,
    pub hull: HullKind,
    pub hull_k: usize,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sigma_k: 2.0,
            footprint_sigma: 3.0,
            epsilon_cov: DEFAULT_EPSILON_COV,
            epsilon_z: DEFAULT_EPSILON_Z,
            fill: true,
            fill_opacity_window: false,
            backproject_sigma: 2.0,
            saturation: 0.9999,
            hull: HullKind::Convex,
            hull_k: 16,
            workers: 0,
        }
    }
}

impl RunConfig {
    /// Defaults, then file values, then explicit flags.
    pub fn resolve(file: &FileConfig, flags: &FileConfig) -> Self {
        let mut c = Self::default();
        for layer in [file, flags] {
            if let Some(v) = layer.sigma_k {
                c.sigma_k = v;
            }
            if let Some(v) = layer.footprint_sigma {
                c.footprint_sigma = v;
            }
            if let Some(v) = layer.epsilon_cov {
                c.epsilon_cov = v;
            }
            if let Some(v) = layer.epsilon_z {
                c.epsilon_z = v;
            }
            if let Some(v) = layer.fill {
                c.fill = v;
            }
            if let Some(v) = layer.fill_opacity_window {
                c.fill_opacity_window = v;
            }
            if let Some(v) = layer.backproject_sigma {
                c.backproject_sigma = v;
            }
            if let Some(v) = layer.saturation {
                c.saturation = v;
            }
            if let Some(v) = layer.hull {
                c.hull = v;
            }
            if let Some(v) = layer.hull_k {
                c.hull_k = v;
            }
            if let Some(v) = layer.workers {
                c.workers = v;
            }
        }
        c
    }

    pub fn uplift(&self) -> UpliftConfig {
        UpliftConfig {
            sigma_k: self.sigma_k,
            footprint_sigma: self.footprint_sigma,
            epsilon_cov: self.epsilon_cov,
            epsilon_z: self.epsilon_z,
            fill: self.fill,
            fill_opacity_window: self.fill_opacity_window,
        }
    }

    pub fn projection(&self) -> splatlift_core::rasterizer::ProjectionParams {
        splatlift_core::rasterizer::ProjectionParams {
            epsilon_cov: self.epsilon_cov,
            epsilon_z: self.epsilon_z,
        }
    }
}
