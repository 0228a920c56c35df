//! Wormhole Hamiltonian Monte Carlo.
//!
//! HMC explores a single basin of attraction efficiently but almost never
//! crosses the low-probability barriers separating isolated modes. This crate
//! implements a family of samplers that modify the Hamiltonian dynamics so
//! trajectories can tunnel between known modes:
//!
//! * [`geometry`] — wormhole metrics, mollifiers, vicinity functions and the
//!   wormhole networks (minimum spanning tree in the original space, or a
//!   bipartite "mirror world" network through an auxiliary dimension).
//! * [`integrators`] — the leapfrog integrator, its generalized form with an
//!   external vector field (plus the Jacobian bookkeeping the Metropolis
//!   correction needs), and the stochastic augmented-space integrator whose
//!   drift branch can jump across worlds.
//! * [`samplers`] — Metropolis-level transition kernels built on those
//!   integrators, and a chain driver producing [`samplers::Trace`] records.
//! * [`regeneration`] — a hybrid chain alternating wormhole trajectories with
//!   an adaptive Gaussian-mixture independence sampler; regeneration times
//!   identified retrospectively let the kernel adapt without breaking
//!   stationarity.
//! * [`modesearch`] — BFGS search on a (tempered) residual energy surface
//!   that down-weights already-known modes, so new modes are found instead of
//!   rediscovered.
//! * [`targets`] — the benchmark target families (Gaussian mixtures, a
//!   bimodal posterior over mixture locations, planar sensor-network
//!   localization) with synthetic-data generators.
//! * [`metrics`] — relative error of mean (REM), mode occupancy, and
//!   long-run reference means.
//! * [`stats`] — small statistical test helpers (KS, chi-square) used to
//!   validate sampler output.

pub mod error;
pub mod geometry;
pub mod integrators;
pub mod linalg;
pub mod metrics;
pub mod modesearch;
pub mod regeneration;
pub mod samplers;
pub mod seeding;
pub mod stats;
pub mod targets;

pub use error::Error;
pub use geometry::{Mode, ModeLibrary, Wormhole, WormholeNetwork};
pub use integrators::{FixedPointConfig, PhaseState, TrajectoryOutcome};
pub use regeneration::IndependenceKernel;
pub use samplers::{ChainBudget, SamplerConfig, SamplerVariant, Trace};
pub use targets::{
    GaussianMixtureTarget, SensorNetworkTarget, TargetDensity, WellingTarget,
};
