//! Gaussian mixture targets and the synthetic benchmark generator.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{check_dim, TargetDensity};
use crate::error::{Error, Result};
use crate::linalg::{is_spd, logsumexp, random_spd, spd_inverse};

const LOG_2PI: f64 = 1.8378770664093453;

/// Mixture of Gaussians parameterized by precision matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixtureTarget {
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    precisions: Vec<DMatrix<f64>>,
    log_det_precisions: Vec<f64>,
    dim: usize,
}

impl GaussianMixtureTarget {
    pub fn new(
        weights: Vec<f64>,
        means: Vec<DVector<f64>>,
        precisions: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || weights.len() != precisions.len()
        {
            return Err(Error::InvalidParameter {
                name: "weights/means/precisions",
                reason: "component counts must match and be nonzero".into(),
            });
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| *w < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter {
                name: "weights",
                reason: format!("must be nonnegative and sum to 1 (got {total})"),
            });
        }
        let dim = means[0].len();
        let mut log_det_precisions = Vec::with_capacity(precisions.len());
        for (mean, prec) in means.iter().zip(&precisions) {
            if mean.len() != dim || prec.nrows() != dim || prec.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: mean.len(),
                });
            }
            if (prec - prec.transpose()).amax() > 1e-10 || !is_spd(prec) {
                return Err(Error::NotPositiveDefinite {
                    context: "mixture precision",
                });
            }
            log_det_precisions.push(prec.determinant().ln());
        }
        Ok(Self {
            weights,
            means,
            precisions,
            log_det_precisions,
            dim,
        })
    }

    /// Equal-weight isotropic mixture; convenient for small test problems.
    pub fn isotropic(means: Vec<DVector<f64>>, variance: f64) -> Result<Self> {
        let k = means.len();
        let dim = means[0].len();
        let prec = DMatrix::identity(dim, dim) / variance;
        Self::new(
            vec![1.0 / k as f64; k],
            means,
            vec![prec; k],
        )
    }

    /// Benchmark instance: `k` component means drawn uniformly in a hypercube
    /// rescaled so the mean pairwise distance equals `target_spacing`, with
    /// random SPD covariances whose spectra are log-uniform on `[0.25, 4]` so
    /// the components have visibly different density functions.
    pub fn generate<R: Rng + ?Sized>(
        k: usize,
        dim: usize,
        target_spacing: f64,
        rng: &mut R,
    ) -> Self {
        assert!(k >= 1 && dim >= 1);
        let mut means: Vec<DVector<f64>> =
            (0..k).map(|_| DVector::from_fn(dim, |_, _| rng.random::<f64>())).collect();
        if k > 1 {
            let mut total = 0.0;
            let mut pairs = 0usize;
            for i in 0..k {
                for j in (i + 1)..k {
                    total += (&means[i] - &means[j]).norm();
                    pairs += 1;
                }
            }
            let scale = target_spacing / (total / pairs as f64);
            for m in &mut means {
                *m *= scale;
            }
        }
        let mut precisions = Vec::with_capacity(k);
        let mut log_dets = Vec::with_capacity(k);
        for _ in 0..k {
            let cov = random_spd(dim, 0.25, 4.0, rng);
            let (prec, log_det_cov) = spd_inverse(&cov).expect("generated covariance is SPD");
            precisions.push((&prec + prec.transpose()) * 0.5);
            log_dets.push(-log_det_cov);
        }
        Self {
            weights: vec![1.0 / k as f64; k],
            means,
            precisions,
            log_det_precisions: log_dets,
            dim,
        }
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn precisions(&self) -> &[DMatrix<f64>] {
        &self.precisions
    }

    pub fn log_det_precisions(&self) -> &[f64] {
        &self.log_det_precisions
    }

    /// Mean pairwise Euclidean distance between component means.
    pub fn mean_pairwise_distance(&self) -> f64 {
        let k = self.means.len();
        if k < 2 {
            return 0.0;
        }
        let mut total = 0.0;
        let mut pairs = 0usize;
        for i in 0..k {
            for j in (i + 1)..k {
                total += (&self.means[i] - &self.means[j]).norm();
                pairs += 1;
            }
        }
        total / pairs as f64
    }

    /// `log w_k + log N(x; μ_k, Σ_k)` for every component.
    pub fn component_log_terms(&self, x: &DVector<f64>) -> Vec<f64> {
        check_dim(self.dim, x);
        (0..self.weights.len())
            .map(|k| {
                let diff = x - &self.means[k];
                let quad = (&self.precisions[k] * &diff).dot(&diff);
                self.weights[k].ln()
                    + 0.5 * (self.log_det_precisions[k] - self.dim as f64 * LOG_2PI)
                    - 0.5 * quad
            })
            .collect()
    }
}

impl TargetDensity for GaussianMixtureTarget {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, x: &DVector<f64>) -> f64 {
        logsumexp(&self.component_log_terms(x))
    }

    fn grad_log_density(&self, x: &DVector<f64>) -> DVector<f64> {
        let terms = self.component_log_terms(x);
        let log_total = logsumexp(&terms);
        let mut grad = DVector::zeros(self.dim);
        for k in 0..self.weights.len() {
            let resp = (terms[k] - log_total).exp();
            if resp > 0.0 {
                grad += (&self.precisions[k] * (&self.means[k] - x)) * resp;
            }
        }
        grad
    }
}
