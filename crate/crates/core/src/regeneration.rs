//! Regeneration-based kernel adaptation.
//!
//! The hybrid chain alternates wormhole trajectories with an independence
//! sampler whose proposal `q` is a normalized Gaussian mixture over the known
//! modes. The independence transition kernel `T` splits as
//! `T(θ'|θ) ≥ S(θ)·Q(θ')`, so after every accepted independence move a
//! retrospective Bernoulli draw with probability `r = S·Q/T` decides whether
//! the chain has regenerated. At regeneration times the chain forgets its
//! state, the mode library may grow (see [`crate::modesearch`]), and the
//! kernel is refit — all without disturbing the stationary distribution.
//!
//! The target is unnormalized while `q` is a proper density, so all `π/q`
//! ratios rescale `π` by a Laplace-approximation mass estimate over the
//! library, `Ẑ = Σ_k π(θ̂_k) (2π)^{D/2} det(H_k)^{-1/2}`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::ModeLibrary;
use crate::linalg::{
    log_det_from_chol, logsumexp, mvn_log_density, sample_mvn, spd_inverse,
};
use crate::modesearch::{search_new_modes, update_library, ModeSearchConfig, StartDistribution};
use crate::samplers::{whmc_aug_transition, ChainBudget, SamplerConfig, Trace};
use crate::seeding::seeded_rng;
use crate::targets::TargetDensity;

/// Floor for `log q` against underflow.
pub const LOG_Q_FLOOR: f64 = -745.0;

/// Cap on rejection-sampling proposals when drawing from `Q`.
pub const REJECTION_CAP: usize = 100_000;

const LOG_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Clone)]
struct KernelComponent {
    mean: DVector<f64>,
    chol: DMatrix<f64>,
    log_det_cov: f64,
    log_weight: f64,
}

/// Adaptive Gaussian-mixture independence proposal.
///
/// Components sit at the library modes with inverse-Hessian covariances;
/// weights are proportional to visit counts (floored at one visit). The
/// kernel also carries the mixing constant `c` and the target's Laplace
/// scale estimate, both frozen between regenerations.
#[derive(Debug, Clone)]
pub struct IndependenceKernel {
    components: Vec<KernelComponent>,
    mixing_constant: f64,
    visit_counts: Vec<u64>,
    log_target_scale: f64,
    dim: usize,
}

impl IndependenceKernel {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mixing_constant(&self) -> f64 {
        self.mixing_constant
    }

    pub fn visit_counts(&self) -> &[u64] {
        &self.visit_counts
    }

    /// `log Ẑ`, the Laplace mass estimate used to normalize the target.
    pub fn log_target_scale(&self) -> f64 {
        self.log_target_scale
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.log_weight.exp()).collect()
    }

    pub fn component_mean(&self, k: usize) -> &DVector<f64> {
        &self.components[k].mean
    }

    pub fn component_covariance(&self, k: usize) -> DMatrix<f64> {
        &self.components[k].chol * self.components[k].chol.transpose()
    }

    /// Normalized mixture log-density `log q(x)`, floored at
    /// [`LOG_Q_FLOOR`].
    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        let terms: Vec<f64> = self
            .components
            .iter()
            .map(|c| c.log_weight + mvn_log_density(x, &c.mean, &c.chol, c.log_det_cov))
            .collect();
        logsumexp(&terms).max(LOG_Q_FLOOR)
    }

    /// Gradient of `log q`.
    pub fn grad_log_density(&self, x: &DVector<f64>) -> DVector<f64> {
        let terms: Vec<f64> = self
            .components
            .iter()
            .map(|c| c.log_weight + mvn_log_density(x, &c.mean, &c.chol, c.log_det_cov))
            .collect();
        let total = logsumexp(&terms);
        let mut grad = DVector::zeros(self.dim);
        for (c, t) in self.components.iter().zip(&terms) {
            let resp = (t - total).exp();
            if resp > 0.0 {
                // Σ^{-1}(μ - x) via two triangular solves
                let diff = &c.mean - x;
                let y = c
                    .chol
                    .clone()
                    .solve_lower_triangular(&diff)
                    .expect("kernel cholesky is nonsingular");
                let z = c
                    .chol
                    .transpose()
                    .solve_upper_triangular(&y)
                    .expect("kernel cholesky is nonsingular");
                grad += z * resp;
            }
        }
        grad
    }

    /// Draw from the mixture.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let u: f64 = rng.random();
        let mut cum = 0.0;
        let mut idx = self.components.len() - 1;
        for (k, c) in self.components.iter().enumerate() {
            cum += c.log_weight.exp();
            if u < cum {
                idx = k;
                break;
            }
        }
        let c = &self.components[idx];
        sample_mvn(&c.mean, &c.chol, rng)
    }

    /// `ρ(x) = log[π(x)/Ẑ] − log q(x)`, the scale-corrected log ratio.
    pub fn log_target_ratio(&self, target: &dyn TargetDensity, x: &DVector<f64>) -> f64 {
        target.log_density(x) - self.log_target_scale - self.log_density(x)
    }
}

/// Fit the independence kernel to a library.
///
/// Covariances are inverse mode Hessians (a relative ridge is added when a
/// Hessian is numerically singular); weights are proportional to
/// `max(1, visits)`; `Ẑ` is refreshed from the library; the mixing constant
/// `c` is the median of the observed `π/q` ratios at `calibration` points
/// (1 when none are supplied).
pub fn fit_independence_kernel(
    target: &dyn TargetDensity,
    library: &ModeLibrary,
    calibration: &[DVector<f64>],
) -> Result<IndependenceKernel> {
    if library.is_empty() {
        return Err(Error::EmptyLibrary);
    }
    let dim = library.modes()[0].location.len();
    let mut components = Vec::with_capacity(library.len());
    let mut scale_terms = Vec::with_capacity(library.len());
    let weights: Vec<f64> = library
        .visit_counts()
        .iter()
        .map(|&v| (v.max(1)) as f64)
        .collect();
    let total_w: f64 = weights.iter().sum();
    for (mode, w) in library.modes().iter().zip(&weights) {
        let hessian = &mode.hessian;
        let (cov, log_det_h) = match spd_inverse(hessian) {
            Ok(r) => r,
            Err(_) => {
                let ridge = 1e-6 * hessian.trace() / dim as f64;
                let ridged = hessian + DMatrix::identity(dim, dim) * ridge;
                spd_inverse(&ridged)?
            }
        };
        let chol = cov
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite {
                context: "kernel covariance",
            })?
            .l();
        let log_det_cov = log_det_from_chol(&chol);
        components.push(KernelComponent {
            mean: mode.location.clone(),
            chol,
            log_det_cov,
            log_weight: (w / total_w).ln(),
        });
        scale_terms.push(
            target.log_density(&mode.location) + 0.5 * (dim as f64 * LOG_2PI - log_det_h),
        );
    }
    let log_target_scale = logsumexp(&scale_terms);
    let mut kernel = IndependenceKernel {
        components,
        mixing_constant: 1.0,
        visit_counts: library.visit_counts().to_vec(),
        log_target_scale,
        dim,
    };
    if !calibration.is_empty() {
        let mut log_ratios: Vec<f64> = calibration
            .iter()
            .map(|x| kernel.log_target_ratio(target, x))
            .filter(|r| r.is_finite())
            .collect();
        if !log_ratios.is_empty() {
            log_ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mid = log_ratios.len() / 2;
            let median = if log_ratios.len() % 2 == 1 {
                log_ratios[mid]
            } else {
                0.5 * (log_ratios[mid - 1] + log_ratios[mid])
            };
            kernel.mixing_constant = median.exp();
        }
    }
    Ok(kernel)
}

/// The `T`, `S`, `Q` split of the independence kernel, in log space.
#[derive(Debug, Clone, Copy)]
pub struct KernelSplit {
    pub log_t: f64,
    pub log_s: f64,
    pub log_q: f64,
}

/// Evaluate the split at a transition `current → proposed`:
///
/// ```text
/// T(θ'|θ) = q(θ') min{1, (π(θ')/q(θ')) / (π(θ)/q(θ))}
/// S(θ)    = min{1, c / (π(θ)/q(θ))}
/// Q(θ')   = q(θ') min{1, (π(θ')/q(θ')) / c}
/// ```
pub fn compute_t_s_q(
    target: &dyn TargetDensity,
    kernel: &IndependenceKernel,
    current: &DVector<f64>,
    proposed: &DVector<f64>,
) -> KernelSplit {
    let rho_cur = kernel.log_target_ratio(target, current);
    let rho_next = kernel.log_target_ratio(target, proposed);
    let log_q_next = kernel.log_density(proposed);
    let log_c = kernel.mixing_constant.ln();
    KernelSplit {
        log_t: log_q_next + (rho_next - rho_cur).min(0.0),
        log_s: (log_c - rho_cur).min(0.0),
        log_q: log_q_next + (rho_next - log_c).min(0.0),
    }
}

/// Retrospective regeneration probability `r = S·Q/T`, clamped to `[0, 1]`.
pub fn regeneration_probability(split: &KernelSplit) -> f64 {
    (split.log_s + split.log_q - split.log_t).exp().clamp(0.0, 1.0)
}

/// Draw from `Q(·) ∝ q(·) min{1, (π/q)/c}` by rejection sampling from `q`.
pub fn sample_from_q<R: Rng + ?Sized>(
    target: &dyn TargetDensity,
    kernel: &IndependenceKernel,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let log_c = kernel.mixing_constant.ln();
    for _ in 0..REJECTION_CAP {
        let x = kernel.sample(rng);
        let log_accept = (kernel.log_target_ratio(target, &x) - log_c).min(0.0);
        if rng.random::<f64>().ln() < log_accept {
            return Ok(x);
        }
    }
    Err(Error::RejectionCapExceeded { cap: REJECTION_CAP })
}

/// Outcome of one independence-sampler step.
#[derive(Debug, Clone)]
pub struct IndependenceOutcome {
    pub state: DVector<f64>,
    pub accepted: bool,
    pub regenerated: bool,
    /// Regeneration probability of the accepted move (0 when rejected).
    pub regen_probability: f64,
}

/// One independence Metropolis–Hastings step with the retrospective
/// regeneration check. On regeneration the accepted proposal is discarded
/// and the new state is drawn from `Q`.
pub fn independence_step<R: Rng + ?Sized>(
    current: &DVector<f64>,
    target: &dyn TargetDensity,
    kernel: &IndependenceKernel,
    rng: &mut R,
) -> Result<IndependenceOutcome> {
    let proposal = kernel.sample(rng);
    let rho_cur = kernel.log_target_ratio(target, current);
    let rho_prop = kernel.log_target_ratio(target, &proposal);
    let log_alpha = (rho_prop - rho_cur).min(0.0);
    if !(rng.random::<f64>().ln() < log_alpha) {
        return Ok(IndependenceOutcome {
            state: current.clone(),
            accepted: false,
            regenerated: false,
            regen_probability: 0.0,
        });
    }
    let split = compute_t_s_q(target, kernel, current, &proposal);
    let r = regeneration_probability(&split);
    if rng.random::<f64>() < r {
        let fresh = sample_from_q(target, kernel, rng)?;
        Ok(IndependenceOutcome {
            state: fresh,
            accepted: true,
            regenerated: true,
            regen_probability: r,
        })
    } else {
        Ok(IndependenceOutcome {
            state: proposal,
            accepted: true,
            regenerated: false,
            regen_probability: r,
        })
    }
}

/// One regeneration of the hybrid chain.
#[derive(Debug, Clone, Serialize)]
pub struct RegenerationEvent {
    pub iteration: usize,
    pub probability: f64,
    pub library_before: usize,
    pub library_after: usize,
    pub new_modes: Vec<Vec<f64>>,
}

/// Configuration of the hybrid WHMC/independence chain.
#[derive(Debug, Clone)]
pub struct HybridConfig {
    /// Settings for the wormhole (augmented) transitions.
    pub sampler: SamplerConfig,
    /// WHMC trajectories per cycle.
    pub whmc_steps_per_cycle: usize,
    /// Independence proposals per cycle.
    pub independence_steps_per_cycle: usize,
    /// Mode search performed at each regeneration.
    pub search: ModeSearchConfig,
    /// Iterations before visit counting starts.
    pub burn_in: usize,
    /// Mahalanobis radius under a mode's Hessian for visit counting.
    pub visit_radius: f64,
}

impl HybridConfig {
    pub fn new(sampler: SamplerConfig, search: ModeSearchConfig) -> Self {
        Self {
            sampler,
            whmc_steps_per_cycle: 1,
            independence_steps_per_cycle: 1,
            search,
            burn_in: 0,
            visit_radius: 3.0,
        }
    }
}

/// Result of a hybrid run: the trace, the regeneration log, and the final
/// adapted library and kernel.
#[derive(Debug, Clone)]
pub struct HybridOutput {
    pub trace: Trace,
    pub events: Vec<RegenerationEvent>,
    pub library: ModeLibrary,
    pub kernel: IndependenceKernel,
}

fn mahalanobis_sq(x: &DVector<f64>, mode: &crate::geometry::Mode) -> f64 {
    let diff = x - &mode.location;
    (&mode.hessian * &diff).dot(&diff)
}

/// Run the hybrid chain: alternate WHMC trajectories and independence steps,
/// adapt the library and kernel only at regeneration times.
pub fn hybrid_chain(
    initial: &DVector<f64>,
    target: &dyn TargetDensity,
    library: ModeLibrary,
    config: &HybridConfig,
    budget: &ChainBudget,
    seed: u64,
) -> Result<HybridOutput> {
    config.sampler.validate()?;
    if library.is_empty() {
        return Err(Error::EmptyLibrary);
    }
    let mut rng = seeded_rng(seed);
    let start = std::time::Instant::now();
    let d = initial.len();
    let mut library = library;
    let mut kernel = fit_independence_kernel(target, &library, &[])?;
    let mut trace = Trace::default();
    let mut events: Vec<RegenerationEvent> = Vec::new();
    let mut ratio_observations: Vec<DVector<f64>> = Vec::new();

    let world = |z: f64, h: f64| if z >= 0.0 { h } else { -h };
    let z0: f64 = rng.sample(rand_distr::StandardNormal);
    let h = config.sampler.world_offset;
    let mut theta_aug =
        DVector::from_fn(d + 1, |i, _| if i < d { initial[i] } else { world(z0, h) });

    let record = |trace: &mut Trace,
                      library: &mut ModeLibrary,
                      sample: DVector<f64>,
                      accepted: bool,
                      jump: Option<usize>,
                      regen: bool,
                      wall: f64,
                      config: &HybridConfig| {
        if trace.len() >= config.burn_in {
            if let Ok(nearest) = library.nearest_mode(&sample) {
                if mahalanobis_sq(&sample, &library.modes()[nearest])
                    <= config.visit_radius * config.visit_radius
                {
                    library.record_visit(nearest);
                }
            }
        }
        trace.push(sample, accepted, jump, wall, regen);
    };

    'outer: loop {
        for _ in 0..config.whmc_steps_per_cycle {
            if trace.len() >= budget.n_iter {
                break 'outer;
            }
            let (next, accepted, jump) =
                whmc_aug_transition(&theta_aug, target, &library, &config.sampler, &mut rng)?;
            theta_aug = next;
            record(
                &mut trace,
                &mut library,
                theta_aug.rows(0, d).into_owned(),
                accepted,
                jump.map(|j| j.mode),
                false,
                start.elapsed().as_secs_f64() * 1e3,
                config,
            );
            if let Some(limit) = budget.wall_limit {
                if start.elapsed() >= limit {
                    break 'outer;
                }
            }
        }
        for _ in 0..config.independence_steps_per_cycle {
            if trace.len() >= budget.n_iter {
                break 'outer;
            }
            let theta = theta_aug.rows(0, d).into_owned();
            ratio_observations.push(theta.clone());
            let outcome = independence_step(&theta, target, &kernel, &mut rng)?;
            let regenerated = outcome.regenerated;
            if regenerated {
                let library_before = library.len();
                // All adaptation happens here, at the regeneration time.
                let start_dist = StartDistribution::from_samples(&trace.samples, d);
                let new_modes = search_new_modes(
                    target,
                    &kernel,
                    &library,
                    &config.search,
                    &start_dist,
                    &mut rng,
                );
                let new_locations: Vec<Vec<f64>> = new_modes
                    .iter()
                    .map(|m| m.location.as_slice().to_vec())
                    .collect();
                library = update_library(&library, &new_modes);
                kernel = fit_independence_kernel(target, &library, &ratio_observations)?;
                ratio_observations.clear();
                events.push(RegenerationEvent {
                    iteration: trace.len(),
                    probability: outcome.regen_probability,
                    library_before,
                    library_after: library.len(),
                    new_modes: new_locations,
                });
                // chain restarts: auxiliary coordinate is redrawn too
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                for i in 0..d {
                    theta_aug[i] = outcome.state[i];
                }
                theta_aug[d] = world(z, h);
            } else {
                for i in 0..d {
                    theta_aug[i] = outcome.state[i];
                }
            }
            record(
                &mut trace,
                &mut library,
                outcome.state,
                outcome.accepted,
                None,
                regenerated,
                start.elapsed().as_secs_f64() * 1e3,
                config,
            );
            if let Some(limit) = budget.wall_limit {
                if start.elapsed() >= limit {
                    break 'outer;
                }
            }
        }
    }
    Ok(HybridOutput {
        trace,
        events,
        library,
        kernel,
    })
}
