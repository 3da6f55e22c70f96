use serde::{Deserialize, Serialize};

use super::{kappa_profile, theta0, OffspringLaw, CRITICAL_BAND};
use crate::error::Result;
use crate::rng::{derive_seed, Stream};
use crate::stats::{Estimate, Moments};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapSign {
    Negative,
    Zero,
    Positive,
}

impl GapSign {
    pub fn of(gap: f64) -> Self {
        if gap.abs() <= CRITICAL_BAND {
            GapSign::Zero
        } else if gap < 0.0 {
            GapSign::Negative
        } else {
            GapSign::Positive
        }
    }
}

/// Monte Carlo diagnostics for the integrability conditions on the first
/// generation. These are estimates only; a finite sample mean says nothing
/// definitive about the finiteness of the expectation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub theta: f64,
    pub gap: f64,
    pub gap_sign: GapSign,
    pub theta0: Option<f64>,
    pub draws: usize,
    /// Estimate of `E[W₁(θ) log₊ W₁(θ)]`.
    pub w_log_w: Option<Estimate>,
    /// Estimate of `E[W₁(θ₀) (log₊ W₁(θ₀))²]`.
    pub w_log2_w_at_theta0: Option<Estimate>,
    /// Estimate of `E[W̄₁ log₊ W̄₁]` with `W̄₁ = Σ (κ′(θ₀) − S_u)₊ e^{θ₀S_u − κ(θ₀)}`.
    pub wbar_log_wbar: Option<Estimate>,
    pub note: String,
}

fn log_plus(x: f64) -> f64 {
    x.max(1.0).ln()
}

pub fn check_conditions(law: &OffspringLaw, theta: f64, mc_budget: usize, seed: u64) -> Result<ConditionReport> {
    let p = kappa_profile(law, theta)?;
    let t0 = theta0(law)?;
    let p0 = t0.map(|t| kappa_profile(law, t)).transpose()?;

    let mut report = ConditionReport {
        theta,
        gap: p.gap,
        gap_sign: GapSign::of(p.gap),
        theta0: t0,
        draws: mc_budget,
        w_log_w: None,
        w_log2_w_at_theta0: None,
        wbar_log_wbar: None,
        note: "Monte Carlo estimates of first-generation moments; not a proof of finiteness".into(),
    };
    if mc_budget == 0 {
        return Ok(report);
    }

    let mut rng = Stream::new(derive_seed(seed, "conditions", 0));
    let mut children = Vec::new();
    let (mut a, mut b, mut c) = (Moments::default(), Moments::default(), Moments::default());
    for _ in 0..mc_budget {
        law.sample_children(&mut rng, &mut children);
        let w1: f64 = children.iter().map(|x| (theta * x - p.kappa).exp()).sum();
        a.push(w1 * log_plus(w1));
        if let Some(p0) = &p0 {
            let w0: f64 = children.iter().map(|x| (p0.theta * x - p0.kappa).exp()).sum();
            b.push(w0 * log_plus(w0).powi(2));
            let wbar: f64 = children
                .iter()
                .map(|x| (p0.kappa_prime - x).max(0.0) * (p0.theta * x - p0.kappa).exp())
                .sum();
            c.push(wbar * log_plus(wbar));
        }
    }
    report.w_log_w = Some(a.estimate());
    if p0.is_some() {
        report.w_log2_w_at_theta0 = Some(b.estimate());
        report.wbar_log_wbar = Some(c.estimate());
    }
    Ok(report)
}
