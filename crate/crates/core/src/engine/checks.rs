use serde::{Deserialize, Serialize};

use super::{simulate, SimParams};
use crate::cumulant::{kappa_profile, OffspringLaw};
use crate::error::Result;
use crate::rng::derive_seed;
use crate::stats::{Estimate, Moments};

/// Paired one-step increments of the martingales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub theta: f64,
    pub runs: usize,
    /// `W₂(θ) − W₁(θ)`.
    pub w_increment: Estimate,
    /// `Z₂ − Z₁`, when `θ₀` exists.
    pub z_increment: Option<Estimate>,
}

impl StepReport {
    /// Both increments within `k` standard errors of zero.
    pub fn centred_within(&self, k: f64) -> bool {
        self.w_increment.z_against(0.0).abs() <= k
            && self.z_increment.is_none_or(|z| z.z_against(0.0).abs() <= k)
    }
}

/// Monte Carlo of `E[W₂ − W₁]` and `E[Z₂ − Z₁]` from the same trees.
pub fn martingale_step_check(law: &OffspringLaw, theta: f64, runs: usize, seed: u64) -> Result<StepReport> {
    kappa_profile(law, theta)?;
    let mut params = SimParams::new(2, vec![theta]);
    params.history = true;
    let (mut w, mut z) = (Moments::default(), Moments::default());
    for i in 0..runs {
        let run = simulate(law, &params, None, derive_seed(seed, "step", i as u64))?;
        let (g1, g2) = (&run.history[1], &run.history[2]);
        w.push(g2.w[0] - g1.w[0]);
        if let (Some(a), Some(b)) = (g1.z, g2.z) {
            z.push(b - a);
        }
    }
    Ok(StepReport {
        theta,
        runs,
        w_increment: w.estimate(),
        z_increment: (z.count() > 0).then(|| z.estimate()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cumulant::{theta0, CountLaw, DisplacementLaw};
    use crate::error::Error;

    #[test]
    fn increments_are_centred() {
        let law = OffspringLaw::binary_gaussian();
        let r = martingale_step_check(&law, 1.0, 100_000, 3).unwrap();
        assert!(r.w_increment.z_against(0.0).abs() < 4.0, "{r:?}");
        let t0 = theta0(&law).unwrap().unwrap();
        let r0 = martingale_step_check(&law, t0, 100_000, 4).unwrap();
        assert!(r0.centred_within(4.0), "{r0:?}");
    }

    #[test]
    fn outside_domain_is_rejected() {
        let law = OffspringLaw::new(
            CountLaw::Deterministic { k: 2 },
            DisplacementLaw::ShiftedExponential { rate: 1.0, shift: 0.0 },
        )
        .unwrap();
        assert!(matches!(martingale_step_check(&law, 1.0, 10, 1), Err(Error::Domain { .. })));
    }
}
