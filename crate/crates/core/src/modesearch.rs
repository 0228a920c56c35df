//! Mode discovery through the residual energy surface.
//!
//! Optimizing `-log π` directly keeps rediscovering modes the sampler
//! already knows. The residual energy subtracts the fitted mixture `q` from
//! the (rescaled) target first,
//!
//! ```text
//! U_r(θ, T) = −log( π(θ)/Ẑ − q(θ)^{1/T} + c_r )
//! ```
//!
//! which raises the known basins while leaving unknown ones intact; the
//! temperature `T ≳ 1` keeps the known basins from flattening out entirely so
//! gradient-based optimizers still have signal. Minima found on the residual
//! surface are re-polished on the plain potential so stored modes are true
//! local maxima of π.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::geometry::{Mode, ModeLibrary};
use crate::linalg::{fd_hessian_from_grad, is_spd, sample_mvn};
use crate::regeneration::IndependenceKernel;
use crate::targets::TargetDensity;

/// Tempered residual potential energy over a target/kernel pair.
pub struct ResidualEnergy<'a> {
    target: &'a dyn TargetDensity,
    kernel: &'a IndependenceKernel,
    temperature: f64,
    floor_constant: f64,
}

impl<'a> ResidualEnergy<'a> {
    /// The floor constant is scale-relative: `c_r = 1e-8 · max_k π̃(θ̂_k)`
    /// over the kernel's component centers.
    pub fn new(
        target: &'a dyn TargetDensity,
        kernel: &'a IndependenceKernel,
        temperature: f64,
    ) -> Self {
        assert!(temperature >= 1.0, "temperature must be ≥ 1");
        let max_scaled = (0..kernel.n_components())
            .map(|k| target.log_density(kernel.component_mean(k)) - kernel.log_target_scale())
            .fold(f64::NEG_INFINITY, f64::max);
        let floor_constant = 1e-8 * max_scaled.exp();
        Self {
            target,
            kernel,
            temperature,
            floor_constant,
        }
    }

    pub fn floor_constant(&self) -> f64 {
        self.floor_constant
    }

    /// Scaled inner terms `(a, b, m)` with `a = log π̃`, `b = (1/T) log q`,
    /// and the shared shift `m`.
    fn inner_terms(&self, x: &DVector<f64>) -> (f64, f64, f64) {
        let a = self.target.log_density(x) - self.kernel.log_target_scale();
        let b = self.kernel.log_density(x) / self.temperature;
        let m = a.max(b).max(self.floor_constant.ln());
        (a, b, m)
    }

    /// `U_r(θ, T)`, clamped below at `c_r/2` inside the log so the energy
    /// and its gradient stay finite where `q` exceeds `π̃`.
    pub fn energy(&self, x: &DVector<f64>) -> f64 {
        let (a, b, m) = self.inner_terms(x);
        let lc = self.floor_constant.ln();
        let v = (a - m).exp() - (b - m).exp() + (lc - m).exp();
        let clamped = v.max(0.5 * (lc - m).exp());
        -(m + clamped.ln())
    }

    /// Gradient of [`Self::energy`]; zero where the clamp is active.
    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let (a, b, m) = self.inner_terms(x);
        let lc = self.floor_constant.ln();
        let v = (a - m).exp() - (b - m).exp() + (lc - m).exp();
        let clamp = 0.5 * (lc - m).exp();
        if v <= clamp {
            return DVector::zeros(x.len());
        }
        let grad_pi = self.target.grad_log_density(x);
        let grad_q = self.kernel.grad_log_density(x);
        let num = grad_pi * (a - m).exp() - grad_q * ((b - m).exp() / self.temperature);
        -num / v
    }
}

/// BFGS quasi-Newton result.
#[derive(Debug, Clone)]
pub struct BfgsResult {
    pub x: DVector<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimize `f` by BFGS with inverse-Hessian updates and an Armijo
/// backtracking line search (`c₁ = 1e-4`, shrink 0.5). Stops when
/// `‖grad‖_∞ ≤ tol` or after `max_iter` iterations; on line-search failure
/// the best iterate is returned with `converged = false`.
pub fn bfgs_minimize<F, G>(
    mut f: F,
    mut grad: G,
    x0: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> BfgsResult
where
    F: FnMut(&DVector<f64>) -> f64,
    G: FnMut(&DVector<f64>) -> DVector<f64>,
{
    let n = x0.len();
    let mut x = x0.clone();
    let mut fx = f(&x);
    let mut g = grad(&x);
    let mut h_inv = DMatrix::identity(n, n);
    let mut scaled = false;
    let c1 = 1e-4;
    for iter in 0..max_iter {
        if g.amax() <= tol {
            return BfgsResult {
                grad_norm: g.amax(),
                x,
                f: fx,
                iterations: iter,
                converged: true,
            };
        }
        let mut direction = -(&h_inv * &g);
        let mut slope = g.dot(&direction);
        if slope >= 0.0 {
            // non-descent direction: reset the approximation
            h_inv = DMatrix::identity(n, n);
            direction = -g.clone();
            slope = g.dot(&direction);
        }
        // Unit trial step, one quadratic-interpolation refinement (exact on
        // quadratic objectives), then Armijo backtracking with shrink 0.5.
        let mut alpha = 1.0;
        let mut found = None;
        let trial = f(&(&x + &direction));
        if trial.is_finite() {
            let q = 2.0 * (trial - fx - slope);
            if q > 0.0 {
                let alpha_min = (-slope / q).clamp(1e-3, 1e3);
                let candidate = &x + &direction * alpha_min;
                let fc = f(&candidate);
                if fc.is_finite() && fc <= trial && fc <= fx + c1 * alpha_min * slope {
                    found = Some((candidate, fc));
                }
            }
            if found.is_none() && trial <= fx + c1 * slope {
                found = Some((&x + &direction, trial));
            }
        }
        while found.is_none() {
            alpha *= 0.5;
            if alpha < 1e-15 {
                break;
            }
            let candidate = &x + &direction * alpha;
            let fc = f(&candidate);
            if fc.is_finite() && fc <= fx + c1 * alpha * slope {
                found = Some((candidate, fc));
            }
        }
        let Some((x_new, f_new)) = found else {
            return BfgsResult {
                grad_norm: g.amax(),
                x,
                f: fx,
                iterations: iter,
                converged: false,
            };
        };
        let g_new = grad(&x_new);
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if !scaled {
                // scale the initial inverse Hessian to the first curvature pair
                h_inv *= sy / y.norm_squared();
                scaled = true;
            }
            let rho = 1.0 / sy;
            let eye = DMatrix::identity(n, n);
            let left = &eye - &s * y.transpose() * rho;
            let right = &eye - &y * s.transpose() * rho;
            h_inv = &left * h_inv * &right + &s * s.transpose() * rho;
        }
        x = x_new;
        fx = f_new;
        g = g_new;
    }
    let converged = g.amax() <= tol;
    BfgsResult {
        grad_norm: g.amax(),
        x,
        f: fx,
        iterations: max_iter,
        converged,
    }
}

/// Settings for one round of residual-energy mode search.
#[derive(Debug, Clone)]
pub struct ModeSearchConfig {
    pub n_starts: usize,
    pub temperature: f64,
    /// Gradient tolerance for the optimizer runs.
    pub tol: f64,
    pub max_iter: usize,
    /// Iteration cap for the re-polish run on the plain potential.
    pub polish_iter: usize,
}

impl Default for ModeSearchConfig {
    fn default() -> Self {
        Self {
            n_starts: 20,
            temperature: 1.05,
            tol: 1e-6,
            max_iter: 200,
            polish_iter: 20,
        }
    }
}

/// Broad Gaussian start distribution for the optimizer runs.
#[derive(Debug, Clone)]
pub struct StartDistribution {
    mean: DVector<f64>,
    chol: DMatrix<f64>,
}

impl StartDistribution {
    pub fn new(mean: DVector<f64>, covariance: &DMatrix<f64>) -> Self {
        let chol = crate::linalg::cholesky_with_ridge(covariance, "start distribution")
            .expect("start covariance is SPD");
        Self { mean, chol }
    }

    /// Centered at the sample mean with 4× the sample covariance; falls back
    /// to a unit sphere around the last sample when history is too short.
    pub fn from_samples(samples: &[DVector<f64>], dim: usize) -> Self {
        if samples.len() < 2 * dim + 2 {
            let mean = samples
                .last()
                .cloned()
                .unwrap_or_else(|| DVector::zeros(dim));
            return Self {
                mean,
                chol: DMatrix::identity(dim, dim) * 2.0,
            };
        }
        let n = samples.len() as f64;
        let mean = samples.iter().fold(DVector::zeros(dim), |acc, s| acc + s) / n;
        let mut cov = DMatrix::zeros(dim, dim);
        for s in samples {
            let d = s - &mean;
            cov += &d * d.transpose();
        }
        cov /= n - 1.0;
        cov *= 4.0;
        cov += DMatrix::identity(dim, dim) * 1e-6;
        let chol = crate::linalg::cholesky_with_ridge(&cov, "start distribution")
            .expect("ridged covariance is SPD");
        Self { mean, chol }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        sample_mvn(&self.mean, &self.chol, rng)
    }
}

/// Deduplication threshold: `1e-2` of the library's average pairwise mode
/// distance, falling back to `1e-3` when the library has fewer than two
/// modes.
pub fn dedup_threshold(library: &ModeLibrary) -> f64 {
    let avg = library.average_pairwise_distance();
    if avg > 0.0 {
        1e-2 * avg
    } else {
        1e-3
    }
}

/// Search for modes not yet in the library.
///
/// Runs BFGS on the tempered residual energy from `n_starts` draws of the
/// start distribution, re-polishes each minimum on the plain potential,
/// keeps candidates whose polished gradient satisfies
/// `‖∇ log π‖_∞ ≤ 10·tol`, and deduplicates them (deterministically, sorted
/// by final energy then lexicographic location) against each other and the
/// library. Finite-difference Hessians are attached to the survivors.
pub fn search_new_modes<R: Rng + ?Sized>(
    target: &dyn TargetDensity,
    kernel: &IndependenceKernel,
    library: &ModeLibrary,
    config: &ModeSearchConfig,
    starts: &StartDistribution,
    rng: &mut R,
) -> Vec<Mode> {
    let residual = ResidualEnergy::new(target, kernel, config.temperature);
    let mut candidates: Vec<(f64, DVector<f64>)> = Vec::new();
    for _ in 0..config.n_starts {
        let x0 = starts.sample(rng);
        let coarse = bfgs_minimize(
            |x| residual.energy(x),
            |x| residual.gradient(x),
            &x0,
            config.tol,
            config.max_iter,
        );
        // polish on the plain potential so the result is a mode of π itself
        let polished = bfgs_minimize(
            |x| -target.log_density(x),
            |x| -target.grad_log_density(x),
            &coarse.x,
            config.tol,
            config.polish_iter,
        );
        let grad_inf = target.grad_log_density(&polished.x).amax();
        if grad_inf <= 10.0 * config.tol {
            candidates.push((-target.log_density(&polished.x), polished.x));
        }
    }
    candidates.sort_by(|a, b| {
        a.0.partial_cmp(&b.0).unwrap().then_with(|| {
            a.1.iter()
                .zip(b.1.iter())
                .find_map(|(x, y)| x.partial_cmp(y).filter(|o| o.is_ne()))
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });

    let threshold = dedup_threshold(library);
    let mut new_modes: Vec<Mode> = Vec::new();
    for (_, location) in candidates {
        let known = library
            .modes()
            .iter()
            .map(|m| &m.location)
            .chain(new_modes.iter().map(|m| &m.location))
            .any(|loc| (loc - &location).norm() <= threshold);
        if known {
            continue;
        }
        let mut hessian = fd_hessian_from_grad(|x| target.grad_log_density(x), &location);
        if !is_spd(&hessian) {
            let ridge = 1e-6 * hessian.trace().abs().max(1.0) / location.len() as f64;
            hessian += DMatrix::identity(location.len(), location.len()) * ridge;
        }
        if let Ok(mode) = Mode::new(location, hessian, 1.0) {
            new_modes.push(mode);
        }
    }
    new_modes
}

/// Append deduplicated new modes to the library (zero initial visit counts).
/// Existing mode order and visit counts are preserved; duplicates within the
/// threshold are skipped silently.
pub fn update_library(library: &ModeLibrary, new_modes: &[Mode]) -> ModeLibrary {
    let threshold = dedup_threshold(library);
    let mut modes: Vec<Mode> = library.modes().to_vec();
    let mut counts = library.visit_counts().to_vec();
    for mode in new_modes {
        let duplicate = modes
            .iter()
            .any(|m| (&m.location - &mode.location).norm() <= threshold);
        if !duplicate {
            modes.push(mode.clone());
            counts.push(0);
        }
    }
    let mut lib = ModeLibrary::new(modes);
    for (i, c) in counts.iter().enumerate() {
        for _ in 0..*c {
            lib.record_visit(i);
        }
    }
    lib
}
