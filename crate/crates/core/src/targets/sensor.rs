//! Planar sensor-network localization posterior.
//!
//! `N` sensors sit at unknown planar positions; three anchors are known. A
//! pair's distance is observed with probability `exp(-d²/(2R²))`, and observed
//! distances carry Gaussian noise with standard deviation `σ`. The prior on
//! sensor positions is uniform (constant, dropped), so the posterior over the
//! `2N` coordinates is just the observation likelihood. Near-coincident pairs
//! with an unobserved distance drive `log(1-π)` to `-∞`; those terms are
//! floored at [`LOG_FLOOR`] so the integrator always sees finite gradients.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{check_dim, TargetDensity};
use crate::error::{Error, Result};
use crate::linalg::log1m_exp;
use crate::seeding::seeded_rng;

const LOG_2PI: f64 = 1.8378770664093453;

/// Floor for a single `log(1 - π_ij)` term.
pub const LOG_FLOOR: f64 = -700.0;

/// Default anchor positions inside the unit square.
pub const DEFAULT_ANCHORS: [[f64; 2]; 3] = [[0.2, 0.2], [0.8, 0.2], [0.5, 0.8]];

#[derive(Debug, Clone, PartialEq)]
pub struct SensorNetworkTarget {
    n_sensors: usize,
    anchors: Vec<DVector<f64>>,
    obs_distance: DMatrix<f64>,
    obs_indicator: DMatrix<f64>,
    radius: f64,
    noise_sd: f64,
}

impl SensorNetworkTarget {
    pub fn new(
        n_sensors: usize,
        anchors: Vec<DVector<f64>>,
        obs_distance: DMatrix<f64>,
        obs_indicator: DMatrix<f64>,
        radius: f64,
        noise_sd: f64,
    ) -> Result<Self> {
        let n_total = n_sensors + anchors.len();
        if obs_distance.nrows() != n_total || obs_indicator.nrows() != n_total {
            return Err(Error::DimensionMismatch {
                expected: n_total,
                got: obs_distance.nrows(),
            });
        }
        for i in 0..n_total {
            if obs_distance[(i, i)] != 0.0 || obs_indicator[(i, i)] != 0.0 {
                return Err(Error::InvalidParameter {
                    name: "obs matrices",
                    reason: "diagonals must be zero".into(),
                });
            }
            for j in 0..n_total {
                let z = obs_indicator[(i, j)];
                let y = obs_distance[(i, j)];
                if (obs_distance[(i, j)] - obs_distance[(j, i)]).abs() > 0.0
                    || (obs_indicator[(i, j)] - obs_indicator[(j, i)]).abs() > 0.0
                {
                    return Err(Error::InvalidParameter {
                        name: "obs matrices",
                        reason: "must be symmetric".into(),
                    });
                }
                if (z != 0.0 && z != 1.0) || (z == 1.0) != (y > 0.0) {
                    return Err(Error::InvalidParameter {
                        name: "obs matrices",
                        reason: "indicator must be 0/1 and match distance positivity".into(),
                    });
                }
            }
        }
        if radius <= 0.0 || noise_sd <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "radius/noise_sd",
                reason: "must be positive".into(),
            });
        }
        Ok(Self {
            n_sensors,
            anchors,
            obs_distance,
            obs_indicator,
            radius,
            noise_sd,
        })
    }

    pub fn n_sensors(&self) -> usize {
        self.n_sensors
    }

    pub fn anchors(&self) -> &[DVector<f64>] {
        &self.anchors
    }

    pub fn obs_distance(&self) -> &DMatrix<f64> {
        &self.obs_distance
    }

    pub fn obs_indicator(&self) -> &DMatrix<f64> {
        &self.obs_indicator
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn noise_sd(&self) -> f64 {
        self.noise_sd
    }

    fn node_position(&self, x: &DVector<f64>, node: usize) -> DVector<f64> {
        if node < self.n_sensors {
            DVector::from_vec(vec![x[2 * node], x[2 * node + 1]])
        } else {
            self.anchors[node - self.n_sensors].clone()
        }
    }

    /// Log-density plus a flag marking that at least one unobserved-pair term
    /// hit the [`LOG_FLOOR`]; floored states are valid but extremely
    /// improbable.
    pub fn log_density_flagged(&self, x: &DVector<f64>) -> (f64, bool) {
        check_dim(2 * self.n_sensors, x);
        let n_total = self.n_sensors + self.anchors.len();
        let mut total = 0.0;
        let mut floored = false;
        for i in 0..n_total {
            for j in (i + 1)..n_total {
                if i >= self.n_sensors && j >= self.n_sensors {
                    continue; // anchor-anchor pairs carry no information
                }
                let pi = self.node_position(x, i);
                let pj = self.node_position(x, j);
                let d = (&pi - &pj).norm();
                let log_pi = -d * d / (2.0 * self.radius * self.radius);
                if self.obs_indicator[(i, j)] == 1.0 {
                    let y = self.obs_distance[(i, j)];
                    let resid = (y - d) / self.noise_sd;
                    total += log_pi
                        - 0.5 * resid * resid
                        - 0.5 * (LOG_2PI + 2.0 * self.noise_sd.ln());
                } else {
                    let term = log1m_exp(log_pi);
                    if term < LOG_FLOOR {
                        total += LOG_FLOOR;
                        floored = true;
                    } else {
                        total += term;
                    }
                }
            }
        }
        (total, floored)
    }
}

impl TargetDensity for SensorNetworkTarget {
    fn dim(&self) -> usize {
        2 * self.n_sensors
    }

    fn log_density(&self, x: &DVector<f64>) -> f64 {
        self.log_density_flagged(x).0
    }

    fn grad_log_density(&self, x: &DVector<f64>) -> DVector<f64> {
        check_dim(2 * self.n_sensors, x);
        let n_total = self.n_sensors + self.anchors.len();
        let mut grad = DVector::zeros(2 * self.n_sensors);
        let add = |grad: &mut DVector<f64>, node: usize, g: &DVector<f64>| {
            if node < self.n_sensors {
                grad[2 * node] += g[0];
                grad[2 * node + 1] += g[1];
            }
        };
        for i in 0..n_total {
            for j in (i + 1)..n_total {
                if i >= self.n_sensors && j >= self.n_sensors {
                    continue;
                }
                let pi = self.node_position(x, i);
                let pj = self.node_position(x, j);
                let diff = &pi - &pj;
                let d = diff.norm();
                let r2 = self.radius * self.radius;
                let log_pi = -d * d / (2.0 * r2);
                let mut g_i = DVector::zeros(2);
                if self.obs_indicator[(i, j)] == 1.0 {
                    // d/dp_i of log π_ij
                    g_i -= &diff / r2;
                    // d/dp_i of the Gaussian distance term
                    if d > 0.0 {
                        let y = self.obs_distance[(i, j)];
                        g_i += &diff * ((y - d) / (self.noise_sd * self.noise_sd * d));
                    }
                } else {
                    let term = log1m_exp(log_pi);
                    if term >= LOG_FLOOR {
                        // d/dp_i of log(1 - e^u) with u = -d²/(2R²)
                        let coef = (log_pi - log1m_exp(log_pi)).exp() / r2;
                        g_i += &diff * coef;
                    }
                    // floored terms are locally constant
                }
                add(&mut grad, i, &g_i);
                add(&mut grad, j, &(-g_i));
            }
        }
        grad
    }
}

/// Synthetic instance: `n_sensors` true locations uniform in the unit square,
/// the three default anchors, and observations sampled from the model.
/// Returns the target together with the flattened true locations.
pub fn generate_sensor_data(seed: u64) -> (SensorNetworkTarget, DVector<f64>) {
    generate_sensor_data_with(seed, 8, 0.3, 0.02)
}

pub fn generate_sensor_data_with(
    seed: u64,
    n_sensors: usize,
    radius: f64,
    noise_sd: f64,
) -> (SensorNetworkTarget, DVector<f64>) {
    let mut rng = seeded_rng(seed);
    let anchors: Vec<DVector<f64>> = DEFAULT_ANCHORS
        .iter()
        .map(|a| DVector::from_vec(a.to_vec()))
        .collect();
    let truth: Vec<DVector<f64>> = (0..n_sensors)
        .map(|_| DVector::from_vec(vec![rng.random(), rng.random()]))
        .collect();
    let n_total = n_sensors + anchors.len();
    let position = |node: usize| -> DVector<f64> {
        if node < n_sensors {
            truth[node].clone()
        } else {
            anchors[node - n_sensors].clone()
        }
    };
    let mut dist = DMatrix::zeros(n_total, n_total);
    let mut ind = DMatrix::zeros(n_total, n_total);
    for i in 0..n_total {
        for j in (i + 1)..n_total {
            if i >= n_sensors && j >= n_sensors {
                continue;
            }
            let d = (position(i) - position(j)).norm();
            let p_obs = (-d * d / (2.0 * radius * radius)).exp();
            if rng.random::<f64>() < p_obs {
                let y = loop {
                    let draw = d + noise_sd * rng.sample::<f64, _>(StandardNormal);
                    if draw > 0.0 {
                        break draw;
                    }
                };
                dist[(i, j)] = y;
                dist[(j, i)] = y;
                ind[(i, j)] = 1.0;
                ind[(j, i)] = 1.0;
            }
        }
    }
    let target = SensorNetworkTarget::new(n_sensors, anchors, dist, ind, radius, noise_sd)
        .expect("generated observations are consistent");
    let flat = DVector::from_fn(2 * n_sensors, |i, _| truth[i / 2][i % 2]);
    (target, flat)
}
