use serde::{Deserialize, Serialize};

use crate::cumulant::{kappa_profile, OffspringLaw};
use crate::error::{Error, Result};
use crate::perturb::Perturbation;

/// Tilts tried by the Chernoff bound.
const GRID: usize = 64;
/// Cap on the tilt when the perturbation is a point mass (no tail constraint).
const POINT_MASS_TILT_CAP: f64 = 8.0;

/// What a pruned particle is certified not to reach: perturbed generation-`n`
/// values at or above `floor`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneTarget {
    pub floor: f64,
    pub nu: Perturbation,
}

/// Per-tilt pieces `(t, log C_ν(t), κ(t))` of the many-to-one bound
///
/// `E[#{v ≥ u, |v| = n : S_v + Y_v ≥ y}] ≤ C_ν(t) e^{t(S_u − y) + (n−k)κ(t)}`,
///
/// valid for every `t` with `C_ν(t) = sup_x ν([x,∞))e^{tx} < ∞` and `κ(t) < ∞`.
#[derive(Debug, Clone)]
pub(crate) struct ChernoffBound {
    floor: f64,
    lines: Vec<(f64, f64, f64)>,
}

impl ChernoffBound {
    pub(crate) fn new(law: &OffspringLaw, target: &PruneTarget) -> Result<Self> {
        let sup = law.displacement().theta_sup();
        let cap = match target.nu {
            Perturbation::Tail(t) => t.theta(),
            Perturbation::PointMass { .. } => POINT_MASS_TILT_CAP,
        };
        let t_max = if sup.is_finite() { cap.min(sup * (1.0 - 1e-6)) } else { cap };
        let mut lines = Vec::with_capacity(GRID);
        for j in 1..=GRID {
            let t = t_max * j as f64 / GRID as f64;
            let Some(c) = target.nu.tail_constant(t) else {
                continue;
            };
            let kappa = kappa_profile(law, t)?.kappa;
            lines.push((t, c.ln(), kappa));
        }
        if lines.is_empty() {
            return Err(Error::invalid("eps_prune", "no tilt gives a finite pruning bound"));
        }
        Ok(ChernoffBound {
            floor: target.floor,
            lines,
        })
    }

    /// Position threshold below which a particle with `remaining` generations
    /// to go has bound `< e^{log_tau}`, and the line that certifies it.
    pub(crate) fn threshold(&self, remaining: u32, log_tau: f64) -> (f64, usize) {
        let m = f64::from(remaining);
        let mut best = (f64::NEG_INFINITY, 0);
        for (j, &(t, log_c, kappa)) in self.lines.iter().enumerate() {
            let s = self.floor + (log_tau - log_c - m * kappa) / t;
            if s > best.0 {
                best = (s, j);
            }
        }
        best
    }

    /// Value of line `j` at position `s`.
    #[inline]
    pub(crate) fn eval(&self, j: usize, remaining: u32, s: f64) -> f64 {
        let (t, log_c, kappa) = self.lines[j];
        (log_c + f64::from(remaining) * kappa + t * (s - self.floor)).exp()
    }
}

/// Accumulated additive-martingale weight of pruned particles for one tilt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscardedWeight {
    pub theta: f64,
    /// `Σ e^{θS_u − kκ(θ)}` over pruned `u` at their pruning generation `k`;
    /// the expected loss in `Wₙ(θ)`.
    pub weight: f64,
}

/// Bias accounting for pruning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneLedger {
    pub eps_prune: f64,
    pub discarded_weight: Vec<DiscardedWeight>,
    /// `Σ (kκ′(θ₀) − S_u) e^{θ₀S_u − kκ(θ₀)}` over pruned particles, the
    /// expected loss in `Zₙ`.
    pub discarded_derivative: f64,
    /// Expected number of perturbed generation-`n` descendants of pruned
    /// particles at or above the window floor.
    pub discarded_extremal_bound: f64,
    pub count_pruned: u64,
    /// Generations at which pruning took place.
    pub pruned_generations: Vec<u32>,
}

impl PruneLedger {
    pub(crate) fn new(eps_prune: f64, thetas: &[f64]) -> Self {
        PruneLedger {
            eps_prune,
            discarded_weight: thetas.iter().map(|&theta| DiscardedWeight { theta, weight: 0.0 }).collect(),
            discarded_derivative: 0.0,
            discarded_extremal_bound: 0.0,
            count_pruned: 0,
            pruned_generations: Vec::new(),
        }
    }

    /// Whether the extremal bound is within the configured tolerance.
    pub fn within_tolerance(&self) -> bool {
        self.discarded_extremal_bound <= self.eps_prune
    }

    pub fn weight_for(&self, theta: f64) -> Option<f64> {
        self.discarded_weight.iter().find(|d| d.theta == theta).map(|d| d.weight)
    }
}
