//! Metropolis-level transition kernels and the chain driver.
//!
//! Three kernels share the same configuration:
//!
//! * [`hmc_transition`] — baseline HMC with the standard leapfrog.
//! * [`whmc_vf_transition`] — wormhole dynamics through the deterministic
//!   vector field; the acceptance probability carries the accumulated drift
//!   Jacobian determinant, `α = min{1, exp(−ΔH)·|det J|}`.
//! * [`whmc_aug_transition`] — the augmented mirror-world sampler. Each
//!   trajectory rebuilds the mirror network at the nearest mode, allows at
//!   most one jump, and accepts with
//!   `min{1, exp(−H_final + H_initial + ΔE)}` where ΔE is the Hamiltonian
//!   gap across the jump step: the jump's energy discontinuity is reset so
//!   the remaining (continuous) steps alone decide acceptance.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::geometry::{mirror_wormholes, ModeLibrary, WormholeNetwork};
use crate::integrators::{
    generalized_leapfrog_vf, leapfrog_step, stochastic_leapfrog_aug, FixedPointConfig, PhaseState,
};
use crate::linalg::standard_normal_vector;
use crate::seeding::seeded_rng;
use crate::targets::TargetDensity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerVariant {
    Hmc,
    WhmcVf,
    WhmcAug,
}

/// Tuning parameters shared by all transition kernels.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub variant: SamplerVariant,
    /// Leapfrog step size `e`.
    pub step_size: f64,
    /// Leapfrog steps `L` per trajectory.
    pub n_leapfrog: usize,
    /// Wormhole metric eigenvalue ε along the tube.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Mollifier influence factor `F`.
    #[serde(default = "default_influence")]
    pub influence: f64,
    /// Half-distance `h` between the real and mirror worlds.
    #[serde(default = "default_world_offset")]
    pub world_offset: f64,
    #[serde(default)]
    pub fixed_point: FixedPointConfigSerde,
    /// Cap on jumps within one trajectory.
    #[serde(default = "default_max_jumps")]
    pub max_jumps: usize,
}

fn default_epsilon() -> f64 {
    0.03
}
fn default_influence() -> f64 {
    0.3
}
fn default_world_offset() -> f64 {
    1.0
}
fn default_max_jumps() -> usize {
    1
}

/// Serializable mirror of [`FixedPointConfig`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FixedPointConfigSerde {
    pub max_iter: usize,
    pub tolerance: f64,
}

impl Default for FixedPointConfigSerde {
    fn default() -> Self {
        let fp = FixedPointConfig::default();
        Self {
            max_iter: fp.max_iter,
            tolerance: fp.tolerance,
        }
    }
}

impl From<FixedPointConfigSerde> for FixedPointConfig {
    fn from(s: FixedPointConfigSerde) -> Self {
        FixedPointConfig {
            max_iter: s.max_iter,
            tolerance: s.tolerance,
        }
    }
}

impl SamplerConfig {
    pub fn new(variant: SamplerVariant, step_size: f64, n_leapfrog: usize) -> Self {
        Self {
            variant,
            step_size,
            n_leapfrog,
            epsilon: default_epsilon(),
            influence: default_influence(),
            world_offset: default_world_offset(),
            fixed_point: FixedPointConfigSerde::default(),
            max_jumps: default_max_jumps(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.step_size <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "step_size",
                reason: "must be positive".into(),
            });
        }
        if self.n_leapfrog == 0 {
            return Err(Error::InvalidParameter {
                name: "n_leapfrog",
                reason: "must be at least 1".into(),
            });
        }
        if self.epsilon <= 0.0 || self.epsilon >= 1.0 {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                reason: "must lie in (0, 1)".into(),
            });
        }
        if self.influence <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "influence",
                reason: "must be positive".into(),
            });
        }
        if self.world_offset < 0.0 {
            return Err(Error::InvalidParameter {
                name: "world_offset",
                reason: "must be nonnegative".into(),
            });
        }
        Ok(())
    }

    pub fn fixed_point_config(&self) -> FixedPointConfig {
        self.fixed_point.into()
    }
}

/// A jump that fired inside one trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpRecord {
    /// 1-based leapfrog step index.
    pub step: usize,
    /// Destination mode index in the library.
    pub mode: usize,
    /// Hamiltonian gap across the jump step.
    pub energy_gap: f64,
}

/// Baseline HMC transition. Returns the next state and the accept flag.
pub fn hmc_transition<R: Rng + ?Sized>(
    theta: &DVector<f64>,
    target: &dyn TargetDensity,
    config: &SamplerConfig,
    rng: &mut R,
) -> (DVector<f64>, bool) {
    let d = theta.len();
    let v0 = standard_normal_vector(d, rng);
    let h0 = -target.log_density(theta) + 0.5 * v0.norm_squared();
    let mut state = PhaseState {
        position: theta.clone(),
        velocity: v0,
    };
    let mut grad = |x: &DVector<f64>| -target.grad_log_density(x);
    for _ in 0..config.n_leapfrog {
        match leapfrog_step(&state, &mut grad, config.step_size) {
            Ok(s) => state = s,
            Err(_) => return (theta.clone(), false),
        }
    }
    let h1 = -target.log_density(&state.position) + state.kinetic_energy();
    if !h1.is_finite() {
        return (theta.clone(), false);
    }
    let log_alpha = (h0 - h1).min(0.0);
    if rng.random::<f64>().ln() < log_alpha {
        (state.position, true)
    } else {
        (theta.clone(), false)
    }
}

/// Wormhole transition through the deterministic vector field, with the
/// determinant-adjusted acceptance probability.
pub fn whmc_vf_transition<R: Rng + ?Sized>(
    theta: &DVector<f64>,
    target: &dyn TargetDensity,
    network: &WormholeNetwork,
    config: &SamplerConfig,
    rng: &mut R,
) -> (DVector<f64>, bool) {
    let d = theta.len();
    let v0 = standard_normal_vector(d, rng);
    let h0 = -target.log_density(theta) + 0.5 * v0.norm_squared();
    let mut state = PhaseState {
        position: theta.clone(),
        velocity: v0,
    };
    let mut grad = |x: &DVector<f64>| -target.grad_log_density(x);
    let fp = config.fixed_point_config();
    let mut log_jacobian = 0.0;
    for _ in 0..config.n_leapfrog {
        match generalized_leapfrog_vf(&state, &mut grad, network, config.step_size, fp) {
            Ok(step) if step.converged => {
                log_jacobian += step.log_jacobian;
                state = step.state;
            }
            // a failed implicit solve invalidates the proposal
            _ => return (theta.clone(), false),
        }
    }
    let h1 = -target.log_density(&state.position) + state.kinetic_energy();
    if !h1.is_finite() || !log_jacobian.is_finite() {
        return (theta.clone(), false);
    }
    let log_alpha = (h0 - h1 + log_jacobian).min(0.0);
    if rng.random::<f64>().ln() < log_alpha {
        (state.position, true)
    } else {
        (theta.clone(), false)
    }
}

/// Augmented potential `U(θ) + ½ θ_{D+1}²` and its gradient.
pub fn augmented_potential(target: &dyn TargetDensity, x_aug: &DVector<f64>) -> f64 {
    let d = x_aug.len() - 1;
    let x = x_aug.rows(0, d).into_owned();
    -target.log_density(&x) + 0.5 * x_aug[d] * x_aug[d]
}

pub fn augmented_potential_grad(target: &dyn TargetDensity, x_aug: &DVector<f64>) -> DVector<f64> {
    let d = x_aug.len() - 1;
    let x = x_aug.rows(0, d).into_owned();
    let g = target.grad_log_density(&x);
    let mut out = DVector::zeros(d + 1);
    for i in 0..d {
        out[i] = -g[i];
    }
    out[d] = x_aug[d];
    out
}

/// Mirror-world wormhole transition in the augmented `D+1` space.
///
/// `theta_aug` carries the auxiliary coordinate in its last slot; the
/// returned state does too.
pub fn whmc_aug_transition<R: Rng + ?Sized>(
    theta_aug: &DVector<f64>,
    target: &dyn TargetDensity,
    library: &ModeLibrary,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<(DVector<f64>, bool, Option<JumpRecord>)> {
    let d1 = theta_aug.len();
    let v0 = standard_normal_vector(d1, rng);
    let (_, wormholes) = mirror_wormholes(theta_aug, library, config.world_offset)?;
    let u0 = augmented_potential(target, theta_aug);
    let h0 = u0 + 0.5 * v0.norm_squared();
    let mut state = PhaseState {
        position: theta_aug.clone(),
        velocity: v0,
    };
    let mut grad = |x: &DVector<f64>| augmented_potential_grad(target, x);
    let mut jumps = 0usize;
    let mut energy_gap = 0.0;
    let mut jump_record = None;
    for step_idx in 1..=config.n_leapfrog {
        let pre = state.clone();
        let out = match stochastic_leapfrog_aug(
            &state,
            &mut grad,
            &wormholes,
            config.influence,
            config.step_size,
            jumps < config.max_jumps,
            rng,
        ) {
            Ok(o) => o,
            Err(_) => return Ok((theta_aug.clone(), false, None)),
        };
        if let Some(mode) = out.jump {
            let e_before = augmented_potential(target, &pre.position) + pre.kinetic_energy();
            let e_after =
                augmented_potential(target, &out.state.position) + out.state.kinetic_energy();
            let gap = e_after - e_before;
            if !gap.is_finite() {
                return Ok((theta_aug.clone(), false, None));
            }
            energy_gap += gap;
            jumps += 1;
            jump_record = Some(JumpRecord {
                step: step_idx,
                mode,
                energy_gap: gap,
            });
        }
        state = out.state;
    }
    let h1 = augmented_potential(target, &state.position) + state.kinetic_energy();
    if !h1.is_finite() {
        return Ok((theta_aug.clone(), false, None));
    }
    let log_alpha = (h0 - h1 + energy_gap).min(0.0);
    if rng.random::<f64>().ln() < log_alpha {
        Ok((state.position, true, jump_record))
    } else {
        Ok((theta_aug.clone(), false, None))
    }
}

/// Recorded history of one chain: one entry per iteration, positions stored
/// in the original `D` coordinates (the auxiliary coordinate is projected
/// away).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub samples: Vec<DVector<f64>>,
    pub accepted: Vec<bool>,
    /// Destination mode index when the iteration's trajectory jumped.
    pub jumps: Vec<Option<usize>>,
    pub wall_ms: Vec<f64>,
    pub regenerated: Vec<bool>,
}

impl Trace {
    pub fn push(
        &mut self,
        sample: DVector<f64>,
        accepted: bool,
        jump: Option<usize>,
        wall_ms: f64,
        regenerated: bool,
    ) {
        self.samples.push(sample);
        self.accepted.push(accepted);
        self.jumps.push(jump);
        self.wall_ms.push(wall_ms);
        self.regenerated.push(regenerated);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.accepted.is_empty() {
            return 0.0;
        }
        self.accepted.iter().filter(|&&a| a).count() as f64 / self.accepted.len() as f64
    }

    pub fn jump_count(&self) -> usize {
        self.jumps.iter().filter(|j| j.is_some()).count()
    }

    /// CSV layout: `iter,wall_ms,x0..x{D-1},accepted,jumped,regen`.
    /// `jumped` holds the destination mode index or −1.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let d = self.samples.first().map_or(0, |s| s.len());
        let mut header = String::from("iter,wall_ms");
        for i in 0..d {
            header.push_str(&format!(",x{i}"));
        }
        header.push_str(",accepted,jumped,regen");
        writeln!(out, "{header}")?;
        for i in 0..self.len() {
            let mut row = format!("{},{}", i, self.wall_ms[i]);
            for v in self.samples[i].iter() {
                row.push_str(&format!(",{v}"));
            }
            row.push_str(&format!(
                ",{},{},{}",
                self.accepted[i] as u8,
                self.jumps[i].map_or(-1i64, |m| m as i64),
                self.regenerated[i] as u8
            ));
            writeln!(out, "{row}")?;
        }
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)?;
        let headers = rdr.headers()?.clone();
        let n_cols = headers.len();
        if n_cols < 5 {
            return Err(Error::MalformedTrace(format!(
                "expected at least 5 columns, found {n_cols}"
            )));
        }
        let d = n_cols - 5;
        let mut trace = Trace::default();
        for record in rdr.records() {
            let record = record?;
            let parse = |i: usize| -> Result<f64> {
                record[i]
                    .parse::<f64>()
                    .map_err(|e| Error::MalformedTrace(format!("column {i}: {e}")))
            };
            let wall = parse(1)?;
            let sample = DVector::from_fn(d, |i, _| parse(2 + i).unwrap_or(f64::NAN));
            if sample.iter().any(|v| v.is_nan()) {
                return Err(Error::MalformedTrace("non-numeric coordinate".into()));
            }
            let accepted = parse(2 + d)? != 0.0;
            let jumped = parse(3 + d)?;
            let regen = parse(4 + d)? != 0.0;
            trace.push(
                sample,
                accepted,
                if jumped < 0.0 {
                    None
                } else {
                    Some(jumped as usize)
                },
                wall,
                regen,
            );
        }
        Ok(trace)
    }
}

/// Iteration/wall-clock budget; the chain stops at whichever binds first.
#[derive(Debug, Clone, Copy)]
pub struct ChainBudget {
    pub n_iter: usize,
    pub wall_limit: Option<Duration>,
}

impl ChainBudget {
    pub fn iterations(n_iter: usize) -> Self {
        Self {
            n_iter,
            wall_limit: None,
        }
    }

    pub fn with_wall_limit(n_iter: usize, limit: Duration) -> Self {
        Self {
            n_iter,
            wall_limit: Some(limit),
        }
    }
}

/// Drive one chain of the configured sampler.
///
/// The trace is deterministic in iteration space given the seed (wall-clock
/// marks vary run to run). A zero-iteration budget records only the initial
/// state. For the augmented variant the auxiliary coordinate starts at
/// `±world_offset`, the world nearest to a standard normal draw.
pub fn run_chain(
    initial: &DVector<f64>,
    target: &dyn TargetDensity,
    library: Option<&ModeLibrary>,
    config: &SamplerConfig,
    budget: &ChainBudget,
    seed: u64,
) -> Result<Trace> {
    config.validate()?;
    let mut rng = seeded_rng(seed);
    let start = Instant::now();
    let mut trace = Trace::default();
    if !target.log_density(initial).is_finite() {
        return Err(Error::NonFinite {
            context: "initial state density",
        });
    }
    if budget.n_iter == 0 {
        trace.push(initial.clone(), false, None, 0.0, false);
        return Ok(trace);
    }

    match config.variant {
        SamplerVariant::Hmc => {
            let mut theta = initial.clone();
            for _ in 0..budget.n_iter {
                let (next, accepted) = hmc_transition(&theta, target, config, &mut rng);
                theta = next;
                trace.push(
                    theta.clone(),
                    accepted,
                    None,
                    start.elapsed().as_secs_f64() * 1e3,
                    false,
                );
                if let Some(limit) = budget.wall_limit {
                    if start.elapsed() >= limit {
                        break;
                    }
                }
            }
        }
        SamplerVariant::WhmcVf => {
            let library = library.ok_or(Error::EmptyLibrary)?;
            let network = WormholeNetwork::mst(
                library.clone(),
                config.epsilon,
                config.influence,
                config.world_offset,
            )?;
            let mut theta = initial.clone();
            for _ in 0..budget.n_iter {
                let (next, accepted) =
                    whmc_vf_transition(&theta, target, &network, config, &mut rng);
                theta = next;
                trace.push(
                    theta.clone(),
                    accepted,
                    None,
                    start.elapsed().as_secs_f64() * 1e3,
                    false,
                );
                if let Some(limit) = budget.wall_limit {
                    if start.elapsed() >= limit {
                        break;
                    }
                }
            }
        }
        SamplerVariant::WhmcAug => {
            let library = library.ok_or(Error::EmptyLibrary)?;
            if library.is_empty() {
                return Err(Error::EmptyLibrary);
            }
            let d = initial.len();
            // Auxiliary coordinate starts in the world nearest a N(0,1) draw.
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            let world = if z >= 0.0 {
                config.world_offset
            } else {
                -config.world_offset
            };
            let mut theta_aug = DVector::from_fn(d + 1, |i, _| if i < d { initial[i] } else { world });
            for _ in 0..budget.n_iter {
                let (next, accepted, jump) =
                    whmc_aug_transition(&theta_aug, target, library, config, &mut rng)?;
                theta_aug = next;
                trace.push(
                    theta_aug.rows(0, d).into_owned(),
                    accepted,
                    jump.map(|j| j.mode),
                    start.elapsed().as_secs_f64() * 1e3,
                    false,
                );
                if let Some(limit) = budget.wall_limit {
                    if start.elapsed() >= limit {
                        break;
                    }
                }
            }
        }
    }
    Ok(trace)
}
