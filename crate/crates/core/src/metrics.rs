//! Evaluation quantities: relative error of mean, mode occupancy, and
//! long-run reference means.

use nalgebra::DVector;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::geometry::ModeLibrary;
use crate::samplers::{run_chain, ChainBudget, SamplerConfig, Trace};
use crate::seeding::derive_seed;
use crate::targets::{GaussianMixtureTarget, TargetDensity};

/// One point of a REM curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemPoint {
    /// Iteration index (1-based count of samples included).
    pub iteration: usize,
    /// Wall-clock mark of the last included sample, in seconds.
    pub seconds: f64,
    /// `‖θ̄ − θ*‖₁ / ‖θ*‖₁` of the running mean.
    pub rem: f64,
}

/// Relative error of the running mean at every recorded wall-clock mark.
pub fn rem(trace: &Trace, reference: &DVector<f64>) -> Result<Vec<RemPoint>> {
    let ref_norm: f64 = reference.iter().map(|v| v.abs()).sum();
    if ref_norm <= 0.0 {
        return Err(Error::ZeroNormReference);
    }
    let mut running = DVector::zeros(reference.len());
    let mut out = Vec::with_capacity(trace.len());
    for (i, sample) in trace.samples.iter().enumerate() {
        running += sample;
        let mean = &running / (i + 1) as f64;
        let err: f64 = (&mean - reference).iter().map(|v| v.abs()).sum();
        out.push(RemPoint {
            iteration: i + 1,
            seconds: trace.wall_ms[i] / 1e3,
            rem: err / ref_norm,
        });
    }
    Ok(out)
}

/// Analytic mean of a Gaussian mixture: `Σ_k w_k μ_k`.
pub fn true_mean_gmm(target: &GaussianMixtureTarget) -> DVector<f64> {
    let mut mean = DVector::zeros(target.dim());
    for (w, m) in target.weights().iter().zip(target.means()) {
        mean += m * *w;
    }
    mean
}

/// Assign each sample to its nearest mode and return normalized counts.
///
/// Distance is Mahalanobis under the mode's Hessian; ties break to the lower
/// mode index.
pub fn mode_occupancy(trace: &Trace, library: &ModeLibrary) -> Vec<f64> {
    occupancy_of_samples(&trace.samples, library)
}

pub fn occupancy_of_samples(samples: &[DVector<f64>], library: &ModeLibrary) -> Vec<f64> {
    let k = library.len();
    let mut counts = vec![0usize; k];
    for s in samples {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (i, mode) in library.modes().iter().enumerate() {
            let diff = s - &mode.location;
            let d = (&mode.hessian * &diff).dot(&diff);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        counts[best] += 1;
    }
    let total = samples.len().max(1) as f64;
    counts.iter().map(|c| *c as f64 / total).collect()
}

/// Pooled mean of several long wormhole chains initialized at the known
/// modes (cycled). Used as the reference `θ*` for targets without an
/// analytic mean. Deterministic given the seed.
pub fn reference_mean_longrun(
    target: &dyn TargetDensity,
    library: &ModeLibrary,
    config: &SamplerConfig,
    n_chains: usize,
    n_iter_per_chain: usize,
    burn_in: usize,
    seed: u64,
) -> Result<DVector<f64>> {
    if library.is_empty() {
        return Err(Error::EmptyLibrary);
    }
    let dim = target.dim();
    let traces: Vec<Result<Trace>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..n_chains)
            .map(|c| {
                let config = *config;
                let lib = library;
                scope.spawn(move || {
                    let start = lib.modes()[c % lib.len()].location.clone();
                    run_chain(
                        &start,
                        target,
                        Some(lib),
                        &config,
                        &ChainBudget::iterations(n_iter_per_chain),
                        derive_seed(seed, c as u64),
                    )
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut total = DVector::zeros(dim);
    let mut count = 0usize;
    for trace in traces {
        let trace = trace?;
        for s in trace.samples.iter().skip(burn_in) {
            total += s;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::InvalidParameter {
            name: "n_iter_per_chain",
            reason: "no post-burn-in samples".into(),
        });
    }
    Ok(total / count as f64)
}

/// Thin REM curve points onto a geometric wall-clock grid (factor 1.3 from
/// `start`), keeping the final point. Iteration-indexed curves stay
/// available through [`rem`] itself.
pub fn rem_on_time_grid(points: &[RemPoint], start: Duration) -> Vec<RemPoint> {
    if points.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut next_mark = start.as_secs_f64();
    for p in points {
        if p.seconds >= next_mark {
            out.push(*p);
            while next_mark <= p.seconds {
                next_mark *= 1.3;
            }
        }
    }
    let last = *points.last().unwrap();
    if out.last() != Some(&last) {
        out.push(last);
    }
    out
}
