//! Target distributions for the benchmark experiments.
//!
//! All densities are unnormalized log-densities; normalization constants are
//! dropped consistently (the regeneration machinery rescales explicitly where
//! it must compare against a proper density). Every target is pure and
//! stateless after construction, so chains may evaluate them concurrently.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};

mod gmm;
mod sensor;
mod welling;

pub use gmm::GaussianMixtureTarget;
pub use sensor::{generate_sensor_data, SensorNetworkTarget, DEFAULT_ANCHORS};
pub use welling::WellingTarget;

/// An unnormalized differentiable log-density.
pub trait TargetDensity: Send + Sync {
    /// Dimension of the parameter space.
    fn dim(&self) -> usize;

    /// Unnormalized log π(θ). Panics on dimension mismatch.
    fn log_density(&self, x: &DVector<f64>) -> f64;

    /// Gradient of `log_density`. Panics on dimension mismatch.
    fn grad_log_density(&self, x: &DVector<f64>) -> DVector<f64>;
}

pub(crate) fn check_dim(expected: usize, x: &DVector<f64>) {
    assert!(
        x.len() == expected,
        "dimension mismatch: target has dimension {expected}, point has {}",
        x.len()
    );
}

/// On-disk representation of a target instance.
///
/// Matrices are stored flattened in row-major order next to their dimension
/// so files are self-describing.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetFile {
    Gmm {
        dim: usize,
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        /// One row-major `dim × dim` precision matrix per component.
        precisions: Vec<Vec<f64>>,
    },
    Sensor {
        n_sensors: usize,
        anchors: Vec<Vec<f64>>,
        /// Row-major `(n_sensors + anchors)²` observed-distance matrix.
        obs_distance: Vec<f64>,
        /// Row-major 0/1 observation indicators, same shape.
        obs_indicator: Vec<f64>,
        radius: f64,
        noise_sd: f64,
    },
    Welling {
        data: Vec<f64>,
        prior_vars: [f64; 2],
        obs_var: f64,
    },
}

/// A target loaded from disk, with its concrete type still accessible.
pub enum LoadedTarget {
    Gmm(GaussianMixtureTarget),
    Sensor(SensorNetworkTarget),
    Welling(WellingTarget),
}

impl LoadedTarget {
    pub fn as_density(&self) -> &dyn TargetDensity {
        match self {
            LoadedTarget::Gmm(t) => t,
            LoadedTarget::Sensor(t) => t,
            LoadedTarget::Welling(t) => t,
        }
    }

    pub fn dim(&self) -> usize {
        self.as_density().dim()
    }
}

impl TargetFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn into_target(self) -> Result<LoadedTarget> {
        match self {
            TargetFile::Gmm {
                dim,
                weights,
                means,
                precisions,
            } => {
                let means = means
                    .into_iter()
                    .map(DVector::from_vec)
                    .collect::<Vec<_>>();
                let precisions = precisions
                    .into_iter()
                    .map(|p| {
                        if p.len() != dim * dim {
                            return Err(Error::DimensionMismatch {
                                expected: dim * dim,
                                got: p.len(),
                            });
                        }
                        Ok(nalgebra::DMatrix::from_row_slice(dim, dim, &p))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(LoadedTarget::Gmm(GaussianMixtureTarget::new(
                    weights, means, precisions,
                )?))
            }
            TargetFile::Sensor {
                n_sensors,
                anchors,
                obs_distance,
                obs_indicator,
                radius,
                noise_sd,
            } => {
                let n_total = n_sensors + anchors.len();
                let anchors = anchors.into_iter().map(DVector::from_vec).collect();
                let dist = nalgebra::DMatrix::from_row_slice(n_total, n_total, &obs_distance);
                let ind = nalgebra::DMatrix::from_row_slice(n_total, n_total, &obs_indicator);
                Ok(LoadedTarget::Sensor(SensorNetworkTarget::new(
                    n_sensors, anchors, dist, ind, radius, noise_sd,
                )?))
            }
            TargetFile::Welling {
                data,
                prior_vars,
                obs_var,
            } => Ok(LoadedTarget::Welling(WellingTarget::new(
                data,
                (prior_vars[0], prior_vars[1]),
                obs_var,
            )?)),
        }
    }
}

impl From<&GaussianMixtureTarget> for TargetFile {
    fn from(t: &GaussianMixtureTarget) -> Self {
        TargetFile::Gmm {
            dim: t.dim(),
            weights: t.weights().to_vec(),
            means: t.means().iter().map(|m| m.as_slice().to_vec()).collect(),
            precisions: t
                .precisions()
                .iter()
                .map(|p| p.transpose().as_slice().to_vec())
                .collect(),
        }
    }
}

impl From<&SensorNetworkTarget> for TargetFile {
    fn from(t: &SensorNetworkTarget) -> Self {
        TargetFile::Sensor {
            n_sensors: t.n_sensors(),
            anchors: t
                .anchors()
                .iter()
                .map(|a| a.as_slice().to_vec())
                .collect(),
            obs_distance: t.obs_distance().transpose().as_slice().to_vec(),
            obs_indicator: t.obs_indicator().transpose().as_slice().to_vec(),
            radius: t.radius(),
            noise_sd: t.noise_sd(),
        }
    }
}

impl From<&WellingTarget> for TargetFile {
    fn from(t: &WellingTarget) -> Self {
        TargetFile::Welling {
            data: t.data().to_vec(),
            prior_vars: [t.prior_vars().0, t.prior_vars().1],
            obs_var: t.obs_var(),
        }
    }
}
