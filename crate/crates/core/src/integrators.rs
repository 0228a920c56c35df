//! Discrete-time Hamiltonian flows.
//!
//! Three integrators share the kick–drift–kick skeleton:
//!
//! * [`leapfrog_step`] — the standard volume-preserving, time-reversible
//!   leapfrog.
//! * [`generalized_leapfrog_vf`] — adds an external vector field to the drift
//!   through an implicit midpoint-style equation solved by fixed-point
//!   iteration. The step is no longer volume preserving, so it reports the
//!   log-Jacobian of the drift map for the Metropolis correction.
//! * [`stochastic_leapfrog_aug`] — the augmented-space integrator whose drift
//!   is a randomized field: with probability given by the wormhole mollifiers
//!   the drift teleports the state toward a mode in the opposite world,
//!   otherwise it is the ordinary velocity drift.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{vicinity_mollifier, Wormhole, WormholeNetwork};

/// Augmented or plain position–velocity pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub position: DVector<f64>,
    pub velocity: DVector<f64>,
}

impl PhaseState {
    pub fn new(position: DVector<f64>, velocity: DVector<f64>) -> Result<Self> {
        if position.len() != velocity.len() {
            return Err(Error::DimensionMismatch {
                expected: position.len(),
                got: velocity.len(),
            });
        }
        if !position.iter().all(|v| v.is_finite()) || !velocity.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "phase state",
            });
        }
        Ok(Self { position, velocity })
    }

    pub fn dim(&self) -> usize {
        self.position.len()
    }

    /// Kinetic energy `½‖v‖²` (unit mass matrix).
    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.velocity.norm_squared()
    }
}

/// Fixed-point solver settings for the implicit drift equations. The
/// iteration cap is primary; the tolerance is an early exit.
#[derive(Debug, Clone, Copy)]
pub struct FixedPointConfig {
    pub max_iter: usize,
    pub tolerance: f64,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            max_iter: 10,
            tolerance: 1e-10,
        }
    }
}

/// Result of integrating a full trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryOutcome {
    pub final_state: PhaseState,
    /// Accumulated `Σ log|det dT̂_ℓ|` over the steps (0 for the augmented
    /// integrator, whose discontinuities are handled by the energy gap).
    pub log_jacobian: f64,
    /// Step index (1-based) at which a jump fired, if any.
    pub jump_step: Option<usize>,
    /// Hamiltonian discontinuity across the jump step; 0 without a jump.
    pub energy_gap: f64,
    pub fixed_point_converged: bool,
}

fn check_finite(v: &DVector<f64>, context: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { context })
    }
}

/// One standard leapfrog step: half kick, drift, half kick.
pub fn leapfrog_step<G>(
    state: &PhaseState,
    grad_u: &mut G,
    step_size: f64,
) -> Result<PhaseState>
where
    G: FnMut(&DVector<f64>) -> DVector<f64>,
{
    assert!(step_size > 0.0, "step size must be positive");
    let g0 = grad_u(&state.position);
    check_finite(&g0, "gradient")?;
    let v_half = &state.velocity - g0 * (step_size / 2.0);
    let position = &state.position + &v_half * step_size;
    let g1 = grad_u(&position);
    check_finite(&g1, "gradient")?;
    let velocity = v_half - g1 * (step_size / 2.0);
    Ok(PhaseState { position, velocity })
}

/// One generalized leapfrog step with the network's vector field in the
/// drift, plus that step's drift log-Jacobian.
#[derive(Debug, Clone)]
pub struct VfStep {
    pub state: PhaseState,
    pub log_jacobian: f64,
    pub converged: bool,
}

/// Generalized leapfrog with vector field `f`:
///
/// ```text
/// v½   = v − (e/2) ∇U(θ)
/// θ'   = θ + e [ v½ + (f(θ, v½) + f(θ', v½)) / 2 ]     (implicit)
/// v'   = v½ − (e/2) ∇U(θ')
/// ```
///
/// The implicit drift is solved by fixed-point iteration. The drift map's
/// Jacobian determinant is
/// `det [I − (e/2)∇f(θ')]⁻¹ [I + (e/2)∇f(θ)]`, accumulated by the caller
/// across steps for the Metropolis adjustment.
pub fn generalized_leapfrog_vf<G>(
    state: &PhaseState,
    grad_u: &mut G,
    network: &WormholeNetwork,
    step_size: f64,
    fp: FixedPointConfig,
) -> Result<VfStep>
where
    G: FnMut(&DVector<f64>) -> DVector<f64>,
{
    assert!(step_size > 0.0, "step size must be positive");
    let e = step_size;
    let g0 = grad_u(&state.position);
    check_finite(&g0, "gradient")?;
    let v_half = &state.velocity - g0 * (e / 2.0);

    let f_start = network.vector_field(&state.position, &v_half);
    let base = &state.position + (&v_half + &f_start * 0.5) * e;

    // Fixed-point solve of θ' = base + (e/2) f(θ', v½).
    let mut theta_next = state.position.clone();
    let mut converged = false;
    for _ in 0..fp.max_iter {
        let f_next = network.vector_field(&theta_next, &v_half);
        let candidate = &base + &f_next * (e / 2.0);
        let delta = (&candidate - &theta_next).amax();
        theta_next = candidate;
        if delta <= fp.tolerance {
            converged = true;
            break;
        }
    }
    check_finite(&theta_next, "implicit drift")?;

    let jf_start = network.vector_field_jacobian(&state.position, &v_half);
    let jf_next = network.vector_field_jacobian(&theta_next, &v_half);
    let d = state.dim();
    let eye = DMatrix::identity(d, d);
    let det_fwd = (&eye + &jf_start * (e / 2.0)).determinant();
    let det_bwd = (&eye - &jf_next * (e / 2.0)).determinant();
    if det_fwd == 0.0 || det_bwd == 0.0 || !det_fwd.is_finite() || !det_bwd.is_finite() {
        return Err(Error::NonFinite {
            context: "drift jacobian determinant",
        });
    }
    let log_jacobian = det_fwd.abs().ln() - det_bwd.abs().ln();

    let g1 = grad_u(&theta_next);
    check_finite(&g1, "gradient")?;
    let velocity = v_half - g1 * (e / 2.0);
    Ok(VfStep {
        state: PhaseState {
            position: theta_next,
            velocity,
        },
        log_jacobian,
        converged,
    })
}

/// Which branch the randomized drift realized at an evaluation point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldBranch {
    /// The drift is the ordinary velocity.
    Velocity,
    /// The drift teleports toward mode `mode` in the opposite world.
    Jump { mode: usize },
}

/// Realized drift of one stochastic step: branch plus the concrete field
/// values at the two evaluation points. Replaying these values (negated, in
/// swapped roles) reverses the step exactly, which is what the reversibility
/// harness checks.
#[derive(Debug, Clone)]
pub struct DriftRealization {
    pub branch: FieldBranch,
    pub left_value: DVector<f64>,
    pub right_value: DVector<f64>,
}

/// One stochastic augmented-space step.
#[derive(Debug, Clone)]
pub struct AugStep {
    pub state: PhaseState,
    /// Destination mode index if the drift jumped.
    pub jump: Option<usize>,
    pub realization: DriftRealization,
}

/// Sample the drift branch from the wormhole mollifiers at `x`.
///
/// With probability `1 − Σₖ mₖ` (clamped at 0) the drift keeps the velocity;
/// otherwise wormhole `k` is selected with probability `mₖ / max(1, Σ mₖ)`.
fn sample_branch<R: Rng + ?Sized>(
    x: &DVector<f64>,
    wormholes: &[Wormhole],
    influence: f64,
    rng: &mut R,
) -> FieldBranch {
    let dim = x.len();
    let ms: Vec<f64> = wormholes
        .iter()
        .map(|w| vicinity_mollifier(x, w.endpoint_a(), w.endpoint_b(), dim, influence))
        .collect();
    let total: f64 = ms.iter().sum();
    let norm = total.max(1.0);
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for (k, &m) in ms.iter().enumerate() {
        cum += m / norm;
        if u < cum {
            return FieldBranch::Jump { mode: k };
        }
    }
    FieldBranch::Velocity
}

/// One step of the stochastic augmented-space integrator.
///
/// The drift equation `θ' = θ + (e/2)[f̃(θ', v½) + f̃(θ, v½)]` uses a field
/// realization drawn once per step and frozen during the solve. A velocity
/// realization gives the plain drift `θ' = θ + e·v½`. A jump realization
/// evaluates `f̃(θ, v½) = 2(θ̃*ₖ − θ)/e` at the known endpoint and the
/// velocity branch at the unknown one, so the solve lands on
/// `θ' = θ̃*ₖ + (e/2) v½` — a discontinuous move into the opposite world.
/// With `jump_allowed == false` the velocity branch is forced.
pub fn stochastic_leapfrog_aug<G, R>(
    state: &PhaseState,
    grad_u_aug: &mut G,
    wormholes: &[Wormhole],
    influence: f64,
    step_size: f64,
    jump_allowed: bool,
    rng: &mut R,
) -> Result<AugStep>
where
    G: FnMut(&DVector<f64>) -> DVector<f64>,
    R: Rng + ?Sized,
{
    assert!(step_size > 0.0, "step size must be positive");
    let e = step_size;
    let g0 = grad_u_aug(&state.position);
    check_finite(&g0, "gradient")?;
    let v_half = &state.velocity - g0 * (e / 2.0);

    let branch = if jump_allowed && !wormholes.is_empty() {
        sample_branch(&state.position, wormholes, influence, rng)
    } else {
        FieldBranch::Velocity
    };

    let (position, jump, left_value, right_value) = match branch {
        FieldBranch::Velocity => {
            let pos = &state.position + &v_half * e;
            (pos, None, v_half.clone(), v_half.clone())
        }
        FieldBranch::Jump { mode } => {
            let target = wormholes[mode].endpoint_b();
            let left = (target - &state.position) * (2.0 / e);
            let pos = target + &v_half * (e / 2.0);
            (pos, Some(mode), left, v_half.clone())
        }
    };
    check_finite(&position, "drift")?;

    let g1 = grad_u_aug(&position);
    check_finite(&g1, "gradient")?;
    let velocity = &v_half - g1 * (e / 2.0);
    Ok(AugStep {
        state: PhaseState { position, velocity },
        jump,
        realization: DriftRealization {
            branch,
            left_value,
            right_value,
        },
    })
}

/// Replay one stochastic step from recorded drift values: the drift becomes
/// the explicit update `θ' = θ + (e/2)(left + right)`. Used by replay
/// harnesses to run a trajectory backwards through the same realization.
pub fn stochastic_leapfrog_aug_replay<G>(
    state: &PhaseState,
    grad_u_aug: &mut G,
    left_value: &DVector<f64>,
    right_value: &DVector<f64>,
    step_size: f64,
) -> Result<PhaseState>
where
    G: FnMut(&DVector<f64>) -> DVector<f64>,
{
    let e = step_size;
    let g0 = grad_u_aug(&state.position);
    check_finite(&g0, "gradient")?;
    let v_half = &state.velocity - g0 * (e / 2.0);
    let position = &state.position + (left_value + right_value) * (e / 2.0);
    let g1 = grad_u_aug(&position);
    check_finite(&g1, "gradient")?;
    let velocity = v_half - g1 * (e / 2.0);
    Ok(PhaseState { position, velocity })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Mode, ModeLibrary};
    use crate::linalg::{fd_jacobian, standard_normal_vector};
    use crate::seeding::seeded_rng;

    fn zero_grad(x: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(x.len())
    }

    #[test]
    fn zero_gradient_is_pure_drift() {
        let s = PhaseState::new(
            DVector::from_vec(vec![1.0, -2.0]),
            DVector::from_vec(vec![0.5, 0.25]),
        )
        .unwrap();
        let mut g = zero_grad;
        let out = leapfrog_step(&s, &mut g, 0.1).unwrap();
        let expected = &s.position + &s.velocity * 0.1;
        assert!((out.position - expected).amax() < 1e-15);
        assert!((out.velocity - s.velocity).amax() < 1e-15);
    }

    #[test]
    fn harmonic_oscillator_returns_after_one_period() {
        // 1D standard Gaussian: U = θ²/2, exact period 2π.
        let mut grad = |x: &DVector<f64>| x.clone();
        let e = 0.1;
        let steps = (2.0 * std::f64::consts::PI / e).round() as usize;
        let start = PhaseState::new(
            DVector::from_vec(vec![1.2]),
            DVector::from_vec(vec![-0.3]),
        )
        .unwrap();
        let mut s = start.clone();
        for _ in 0..steps {
            s = leapfrog_step(&s, &mut grad, e).unwrap();
        }
        assert!(
            (s.position[0] - start.position[0]).abs() <= 0.05,
            "drifted to {}",
            s.position[0]
        );
    }

    #[test]
    fn leapfrog_is_time_reversible() {
        let mut grad = |x: &DVector<f64>| x.clone() * 0.7;
        let start = PhaseState::new(
            DVector::from_vec(vec![0.4, -1.1, 2.0]),
            DVector::from_vec(vec![1.0, 0.2, -0.5]),
        )
        .unwrap();
        let mut s = start.clone();
        for _ in 0..25 {
            s = leapfrog_step(&s, &mut grad, 0.05).unwrap();
        }
        s.velocity = -s.velocity;
        for _ in 0..25 {
            s = leapfrog_step(&s, &mut grad, 0.05).unwrap();
        }
        assert!((s.position - start.position).amax() < 1e-12);
        assert!((s.velocity + start.velocity).amax() < 1e-12);
    }

    #[test]
    fn leapfrog_preserves_phase_space_volume() {
        // FD Jacobian of the one-step map on a 3D Gaussian has determinant 1.
        let step = |z: &DVector<f64>| -> DVector<f64> {
            let s = PhaseState::new(z.rows(0, 3).into_owned(), z.rows(3, 3).into_owned()).unwrap();
            let mut grad = |x: &DVector<f64>| x.clone();
            let out = leapfrog_step(&s, &mut grad, 0.15).unwrap();
            let mut r = DVector::zeros(6);
            r.rows_mut(0, 3).copy_from(&out.position);
            r.rows_mut(3, 3).copy_from(&out.velocity);
            r
        };
        let mut rng = seeded_rng(4);
        let z = standard_normal_vector(6, &mut rng);
        let j = fd_jacobian(step, &z, 1e-6);
        assert!((j.determinant().abs() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn leapfrog_energy_error_is_third_order_per_step() {
        // One-step energy error scales as O(e³): log-log slope ≥ 2.8.
        let hamiltonian = |s: &PhaseState| 0.5 * s.position.norm_squared() + s.kinetic_energy();
        let start = PhaseState::new(
            DVector::from_vec(vec![1.0, -0.5]),
            DVector::from_vec(vec![0.3, 0.8]),
        )
        .unwrap();
        let h0 = hamiltonian(&start);
        let sizes = [0.2, 0.1, 0.05, 0.025];
        let errs: Vec<f64> = sizes
            .iter()
            .map(|&e| {
                let mut grad = |x: &DVector<f64>| x.clone();
                let s = leapfrog_step(&start, &mut grad, e).unwrap();
                (hamiltonian(&s) - h0).abs().max(1e-300)
            })
            .collect();
        // least-squares slope of log err against log e
        let n = sizes.len() as f64;
        let lx: Vec<f64> = sizes.iter().map(|e| e.ln()).collect();
        let ly: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
        let mx = lx.iter().sum::<f64>() / n;
        let my = ly.iter().sum::<f64>() / n;
        let slope = lx
            .iter()
            .zip(&ly)
            .map(|(x, y)| (x - mx) * (y - my))
            .sum::<f64>()
            / lx.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
        assert!(slope >= 2.8, "slope {slope}, errors {errs:?}");
    }

    #[test]
    fn non_finite_gradient_is_an_error() {
        let s = PhaseState::new(DVector::zeros(1), DVector::zeros(1)).unwrap();
        let mut grad = |_: &DVector<f64>| DVector::from_vec(vec![f64::NAN]);
        assert!(leapfrog_step(&s, &mut grad, 0.1).is_err());
    }

    fn test_network(dim: usize) -> WormholeNetwork {
        let mut a = DVector::zeros(dim);
        let mut b = DVector::zeros(dim);
        a[0] = -2.0;
        b[0] = 2.0;
        a[1] = 0.5;
        b[1] = -0.5;
        let lib = ModeLibrary::new(vec![
            Mode::new(a, DMatrix::identity(dim, dim), 1.0).unwrap(),
            Mode::new(b, DMatrix::identity(dim, dim), 1.0).unwrap(),
        ]);
        WormholeNetwork::mst(lib, 0.03, 0.3, 1.0).unwrap()
    }

    #[test]
    fn vf_step_with_empty_network_matches_leapfrog() {
        let net = WormholeNetwork::empty();
        let s = PhaseState::new(
            DVector::from_vec(vec![0.5, -0.2]),
            DVector::from_vec(vec![1.0, 0.3]),
        )
        .unwrap();
        let mut grad = |x: &DVector<f64>| x.clone();
        let vf = generalized_leapfrog_vf(&s, &mut grad, &net, 0.1, FixedPointConfig::default())
            .unwrap();
        let lf = leapfrog_step(&s, &mut grad, 0.1).unwrap();
        assert!((vf.state.position - lf.position).amax() < 1e-14);
        assert!((vf.state.velocity - lf.velocity).amax() < 1e-14);
        assert_eq!(vf.log_jacobian, 0.0);
        assert!(vf.converged);
    }

    fn tight_fp() -> FixedPointConfig {
        FixedPointConfig {
            max_iter: 200,
            tolerance: 1e-14,
        }
    }

    #[test]
    fn vf_step_log_jacobian_matches_finite_differences() {
        let dim = 5;
        let net = test_network(dim);
        let mut rng = seeded_rng(11);
        for _ in 0..20 {
            let pos = standard_normal_vector(dim, &mut rng) * 1.5;
            let vel = standard_normal_vector(dim, &mut rng);
            let s = PhaseState::new(pos, vel).unwrap();
            let mut grad = |x: &DVector<f64>| x.clone() * 0.5;
            let out = generalized_leapfrog_vf(&s, &mut grad, &net, 0.05, tight_fp()).unwrap();
            assert!(out.converged);
            // FD Jacobian of the full phase-space step map
            let map = |z: &DVector<f64>| -> DVector<f64> {
                let st = PhaseState::new(
                    z.rows(0, dim).into_owned(),
                    z.rows(dim, dim).into_owned(),
                )
                .unwrap();
                let mut g = |x: &DVector<f64>| x.clone() * 0.5;
                let o = generalized_leapfrog_vf(&st, &mut g, &net, 0.05, tight_fp()).unwrap();
                let mut r = DVector::zeros(2 * dim);
                r.rows_mut(0, dim).copy_from(&o.state.position);
                r.rows_mut(dim, dim).copy_from(&o.state.velocity);
                r
            };
            let mut z = DVector::zeros(2 * dim);
            z.rows_mut(0, dim).copy_from(&s.position);
            z.rows_mut(dim, dim).copy_from(&s.velocity);
            let j = fd_jacobian(map, &z, 1e-6);
            let fd_logdet = j.determinant().abs().ln();
            let rel = (out.log_jacobian - fd_logdet).abs() / fd_logdet.abs().max(1e-4);
            assert!(rel < 1e-4, "analytic {} fd {}", out.log_jacobian, fd_logdet);
        }
    }

    #[test]
    fn vf_trajectory_is_time_reversible() {
        let dim = 3;
        let net = test_network(dim);
        let mut rng = seeded_rng(13);
        let fp = FixedPointConfig {
            max_iter: 200,
            tolerance: 1e-13,
        };
        for _ in 0..20 {
            let start = PhaseState::new(
                standard_normal_vector(dim, &mut rng),
                standard_normal_vector(dim, &mut rng),
            )
            .unwrap();
            let mut grad = |x: &DVector<f64>| x.clone() * 0.5;
            let mut s = start.clone();
            for _ in 0..10 {
                s = generalized_leapfrog_vf(&s, &mut grad, &net, 0.05, fp)
                    .unwrap()
                    .state;
            }
            s.velocity = -s.velocity;
            for _ in 0..10 {
                s = generalized_leapfrog_vf(&s, &mut grad, &net, 0.05, fp)
                    .unwrap()
                    .state;
            }
            assert!((s.position - start.position).amax() < 1e-6);
        }
    }

    fn mirror_pair() -> Vec<Wormhole> {
        // one mode at the origin in 1D, worlds at ±1
        let a = DVector::from_vec(vec![0.0, -1.0]);
        let b = DVector::from_vec(vec![0.0, 1.0]);
        vec![Wormhole::new(a, b).unwrap()]
    }

    #[test]
    fn far_from_modes_is_plain_drift() {
        let wormholes = mirror_pair();
        let s = PhaseState::new(
            DVector::from_vec(vec![500.0, -0.5]),
            DVector::from_vec(vec![1.0, 0.2]),
        )
        .unwrap();
        let mut rng = seeded_rng(7);
        let mut grad = zero_grad;
        let out =
            stochastic_leapfrog_aug(&s, &mut grad, &wormholes, 0.3, 0.1, true, &mut rng).unwrap();
        assert!(out.jump.is_none());
        let expected = &s.position + &s.velocity * 0.1;
        assert!((out.state.position - expected).amax() < 1e-12);
    }

    #[test]
    fn jump_lands_at_mode_plus_half_step_velocity() {
        // At the wormhole mouth the mollifier is 1, so the jump branch fires
        // with probability one and the resolved drift is θ̃*ₖ + (e/2)ṽ.
        let wormholes = mirror_pair();
        let s = PhaseState::new(
            DVector::from_vec(vec![0.0, -1.0]),
            DVector::from_vec(vec![0.7, 0.4]),
        )
        .unwrap();
        let mut rng = seeded_rng(3);
        let mut grad = zero_grad;
        let e = 0.1;
        let out =
            stochastic_leapfrog_aug(&s, &mut grad, &wormholes, 0.3, e, true, &mut rng).unwrap();
        assert_eq!(out.jump, Some(0));
        let expected = wormholes[0].endpoint_b() + &s.velocity * (e / 2.0);
        assert!((out.state.position - expected).amax() < 1e-13);
        assert_eq!(out.realization.branch, FieldBranch::Jump { mode: 0 });
    }

    #[test]
    fn jump_displacement_spans_both_worlds() {
        // From a mode at world −h, the jump moves at least 2h − O(e) in the
        // world coordinate.
        let wormholes = mirror_pair();
        let h = 1.0;
        let e = 1e-3;
        let s = PhaseState::new(
            DVector::from_vec(vec![0.0, -h]),
            DVector::from_vec(vec![0.3, -0.8]),
        )
        .unwrap();
        let mut rng = seeded_rng(5);
        let mut grad = zero_grad;
        let out =
            stochastic_leapfrog_aug(&s, &mut grad, &wormholes, 0.3, e, true, &mut rng).unwrap();
        assert_eq!(out.jump, Some(0));
        let world_move = (out.state.position[1] - s.position[1]).abs();
        assert!(world_move >= 2.0 * h - e, "world move {world_move}");
    }

    #[test]
    fn jump_forbidden_forces_the_velocity_branch() {
        let wormholes = mirror_pair();
        let s = PhaseState::new(
            DVector::from_vec(vec![0.0, -1.0]),
            DVector::from_vec(vec![0.7, 0.4]),
        )
        .unwrap();
        let mut rng = seeded_rng(3);
        let mut grad = zero_grad;
        let out =
            stochastic_leapfrog_aug(&s, &mut grad, &wormholes, 0.3, 0.1, false, &mut rng).unwrap();
        assert!(out.jump.is_none());
        let expected = &s.position + &s.velocity * 0.1;
        assert!((out.state.position - expected).amax() < 1e-13);
    }

    #[test]
    fn replay_reverses_a_jumping_step_exactly() {
        let wormholes = mirror_pair();
        let mut grad = |x: &DVector<f64>| x.clone() * 0.3;
        let start = PhaseState::new(
            DVector::from_vec(vec![0.1, -0.9]),
            DVector::from_vec(vec![0.7, 0.4]),
        )
        .unwrap();
        let mut rng = seeded_rng(19);
        let e = 0.1;
        let out =
            stochastic_leapfrog_aug(&start, &mut grad, &wormholes, 0.3, e, true, &mut rng)
                .unwrap();
        // reverse: negate velocity, swap and negate the realized drift values
        let flipped = PhaseState::new(out.state.position.clone(), -out.state.velocity.clone())
            .unwrap();
        let back = stochastic_leapfrog_aug_replay(
            &flipped,
            &mut grad,
            &(-&out.realization.right_value),
            &(-&out.realization.left_value),
            e,
        )
        .unwrap();
        assert!((back.position - &start.position).amax() < 1e-12);
        assert!((back.velocity + &start.velocity).amax() < 1e-12);
    }
}
