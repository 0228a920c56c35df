//! Bimodal posterior over the location parameters of a two-component
//! Gaussian mixture: `x_i ~ ½N(θ₁, σ_x²) + ½N(θ₁+θ₂, σ_x²)` with Gaussian
//! priors on θ₁ and θ₂. Swapping the roles of the two components produces a
//! second, nearly symmetric posterior mode.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{check_dim, TargetDensity};
use crate::error::{Error, Result};
use crate::seeding::seeded_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct WellingTarget {
    data: Vec<f64>,
    prior_vars: (f64, f64),
    obs_var: f64,
}

impl WellingTarget {
    pub fn new(data: Vec<f64>, prior_vars: (f64, f64), obs_var: f64) -> Result<Self> {
        if prior_vars.0 <= 0.0 || prior_vars.1 <= 0.0 || obs_var <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "variances",
                reason: "must be strictly positive".into(),
            });
        }
        Ok(Self {
            data,
            prior_vars,
            obs_var,
        })
    }

    /// The canonical configuration: θ₁=0, θ₂=1, σ₁²=10, σ₂²=1, σ_x²=2, with
    /// 1000 data points generated from the model.
    pub fn canonical(seed: u64) -> Self {
        Self::generate(seed, 1000, 0.0, 1.0, (10.0, 1.0), 2.0)
    }

    pub fn generate(
        seed: u64,
        n: usize,
        theta1: f64,
        theta2: f64,
        prior_vars: (f64, f64),
        obs_var: f64,
    ) -> Self {
        let mut rng = seeded_rng(seed);
        let sd = obs_var.sqrt();
        let data = (0..n)
            .map(|_| {
                let center = if rng.random::<f64>() < 0.5 {
                    theta1
                } else {
                    theta1 + theta2
                };
                center + sd * rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        Self {
            data,
            prior_vars,
            obs_var,
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn prior_vars(&self) -> (f64, f64) {
        self.prior_vars
    }

    pub fn obs_var(&self) -> f64 {
        self.obs_var
    }
}

impl TargetDensity for WellingTarget {
    fn dim(&self) -> usize {
        2
    }

    fn log_density(&self, x: &DVector<f64>) -> f64 {
        check_dim(2, x);
        let (t1, t2) = (x[0], x[1]);
        let mut total = -t1 * t1 / (2.0 * self.prior_vars.0) - t2 * t2 / (2.0 * self.prior_vars.1);
        let inv2v = 1.0 / (2.0 * self.obs_var);
        for &d in &self.data {
            let a = -(d - t1) * (d - t1) * inv2v;
            let b = -(d - t1 - t2) * (d - t1 - t2) * inv2v;
            // log(½ e^a + ½ e^b), constants dropped
            let m = a.max(b);
            total += m + (0.5 * (a - m).exp() + 0.5 * (b - m).exp()).ln();
        }
        total
    }

    fn grad_log_density(&self, x: &DVector<f64>) -> DVector<f64> {
        check_dim(2, x);
        let (t1, t2) = (x[0], x[1]);
        let mut g1 = -t1 / self.prior_vars.0;
        let mut g2 = -t2 / self.prior_vars.1;
        let inv2v = 1.0 / (2.0 * self.obs_var);
        for &d in &self.data {
            let a = -(d - t1) * (d - t1) * inv2v;
            let b = -(d - t1 - t2) * (d - t1 - t2) * inv2v;
            let m = a.max(b);
            let wa = (a - m).exp();
            let wb = (b - m).exp();
            let r2 = wb / (wa + wb);
            let r1 = 1.0 - r2;
            g1 += (r1 * (d - t1) + r2 * (d - t1 - t2)) / self.obs_var;
            g2 += r2 * (d - t1 - t2) / self.obs_var;
        }
        DVector::from_vec(vec![g1, g2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::fd_gradient;

    #[test]
    fn empty_likelihood_reduces_to_the_prior() {
        let t = WellingTarget::new(vec![], (10.0, 1.0), 2.0).unwrap();
        let x = DVector::from_vec(vec![1.5, -0.7]);
        let expected = -1.5 * 1.5 / 20.0 - 0.7 * 0.7 / 2.0;
        assert!((t.log_density(&x) - expected).abs() < 1e-14);
    }

    #[test]
    fn canonical_instance_has_1000_points() {
        let t = WellingTarget::canonical(1);
        assert_eq!(t.data().len(), 1000);
        assert_eq!(t.prior_vars(), (10.0, 1.0));
        assert_eq!(t.obs_var(), 2.0);
        // the two nearly symmetric modes both have finite density
        assert!(t.log_density(&DVector::from_vec(vec![0.0, 1.0])).is_finite());
        assert!(t.log_density(&DVector::from_vec(vec![1.0, -1.0])).is_finite());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let t = WellingTarget::generate(5, 200, 0.0, 1.0, (10.0, 1.0), 2.0);
        let mut rng = seeded_rng(6);
        for _ in 0..20 {
            let x = crate::linalg::standard_normal_vector(2, &mut rng);
            let g = t.grad_log_density(&x);
            let fd = fd_gradient(|p: &DVector<f64>| t.log_density(p), &x);
            let rel = (&g - &fd).amax() / g.amax().max(1.0);
            assert!(rel < 1e-5, "rel err {rel}");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(WellingTarget::canonical(3), WellingTarget::canonical(3));
    }
}
