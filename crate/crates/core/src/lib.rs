//! Monte Carlo laboratory for last-progeny-modified branching random walks.
//!
//! A branching random walk (BRW) starts from one particle at the origin; every
//! particle independently produces a random number of children displaced by
//! i.i.d. steps. At the final generation `n` each particle position `S_u` is
//! perturbed by an independent draw `Y_u` from a law `ν` with an exponential
//! tail `ν([x, ∞)) ~ L(x) e^{-θx}`. The crate simulates that model and checks
//! the limit laws of its extremal process against analytic predictions.
//!
//! Layout:
//! - [`cumulant`]: reproduction laws, the log-Laplace transform `κ`, the
//!   critical tilt `θ₀`, the speed `v` and regime classification.
//! - [`perturb`]: the perturbation law, its sampler and the Laplace kernels
//!   `g_φ` and `c_φ(θ)`.
//! - [`engine`]: breadth-first simulation with a pruning ledger, martingales,
//!   centerings and extremal snapshots.
//! - [`spine`]: the tilted random walk of the many-to-one identity.
//! - [`verify`]: theorem constants and statistical verification suites.

pub mod cumulant;
pub mod engine;
mod error;
pub mod perturb;
pub mod quad;
pub mod rng;
pub mod spine;
pub mod stats;
pub mod verify;

pub use cumulant::{
    classify_regime, kappa_profile, speed_v, theta0, CountLaw, CumulantProfile, DisplacementLaw,
    OffspringLaw, Regime, RegimeTag,
};
pub use engine::{
    centering, extremal_snapshot, laplace_pairing, simulate, Centering, ExtremalSnapshot, PruneLedger, SimParams,
    TreeRun, Window,
};
pub use error::{Error, Result};
pub use perturb::{c_phi, g_phi, Perturbation, TailLaw, Tent, TestFunction};
pub use spine::{many_to_one_check, ManyToOneReport, PathFunctional, SpineWalk};
pub use verify::{TheoremId, TheoremTarget, Verdict, VerificationReport};
