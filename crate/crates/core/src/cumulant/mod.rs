//! Reproduction laws and the deterministic analysis of the walk: the
//! log-Laplace transform `κ(θ) = log E[Σ_{|u|=1} e^{θS_u}]`, its derivatives,
//! the critical tilt `θ₀`, the speed `v` and regime classification.

mod conditions;
mod law;

pub use conditions::{check_conditions, ConditionReport, GapSign};
pub use law::{CountLaw, DisplacementLaw, OffspringLaw};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::bisect;

/// Absolute tolerance on `θ₀`.
pub const ROOT_TOL: f64 = 1e-10;
/// Width of the band `|θκ′(θ) − κ(θ)| ≤ CRITICAL_BAND` classified as critical.
pub const CRITICAL_BAND: f64 = 1e-8;
const MAX_BISECTIONS: usize = 200;

/// `κ`, `κ′`, `κ″` at one tilt, plus the gap `θκ′(θ) − κ(θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumulantProfile {
    pub theta: f64,
    pub kappa: f64,
    pub kappa_prime: f64,
    pub kappa_double_prime: f64,
    pub gap: f64,
    pub domain_ok: bool,
}

/// Closed-form profile `κ(θ) = log E[N] + log E[e^{θX}]`.
pub fn kappa_profile(law: &OffspringLaw, theta: f64) -> Result<CumulantProfile> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::domain(theta, "tilt must be a positive finite number"));
    }
    let (log_mgf, d1, d2) = law.displacement().log_mgf(theta)?;
    let kappa = law.mean_offspring().ln() + log_mgf;
    Ok(CumulantProfile {
        theta,
        kappa,
        kappa_prime: d1,
        kappa_double_prime: d2,
        gap: theta * d1 - kappa,
        domain_ok: true,
    })
}

fn gap_at(law: &OffspringLaw, theta: f64) -> Result<f64> {
    kappa_profile(law, theta).map(|p| p.gap)
}

/// Unique root of the increasing function `θ ↦ θκ′(θ) − κ(θ)`, or `None`
/// when the gap stays negative on the whole finiteness domain.
pub fn theta0(law: &OffspringLaw) -> Result<Option<f64>> {
    let sup = law.displacement().theta_sup();
    let mut lo = 0.0;
    let mut hi = if sup.is_finite() { 0.5 * sup } else { 1.0 };
    let mut bracketed = false;
    for _ in 0..MAX_BISECTIONS {
        if gap_at(law, hi)? > 0.0 {
            bracketed = true;
            break;
        }
        lo = hi;
        hi = if sup.is_finite() { 0.5 * (hi + sup) } else { 2.0 * hi };
        if !hi.is_finite() || (sup.is_finite() && hi >= sup) {
            break;
        }
    }
    if !bracketed {
        return Ok(None);
    }
    // Gap at 0⁺ is −log E[N] < 0, so `lo = 0` is a valid left end.
    let root = bisect(
        |t| gap_at(law, t).unwrap_or(f64::INFINITY),
        lo,
        hi,
        ROOT_TOL,
        MAX_BISECTIONS,
    );
    Ok(Some(root))
}

/// Speed `v = inf_{θ>0} κ(θ)/θ`.
///
/// `d/dθ (κ/θ) = gap/θ²`, so the infimum sits at `θ₀` when it exists and is
/// approached at the right end of the domain otherwise.
pub fn speed_v(law: &OffspringLaw) -> Result<f64> {
    match theta0(law)? {
        Some(t0) => {
            let p = kappa_profile(law, t0)?;
            Ok(p.kappa / t0)
        }
        None => {
            let sup = law.displacement().theta_sup();
            let t = sup * (1.0 - 1e-12);
            let p = kappa_profile(law, t)?;
            Ok(p.kappa / t)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Subcritical,
    Critical,
    Supercritical,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Subcritical => "subcritical",
            Regime::Critical => "critical",
            Regime::Supercritical => "supercritical",
        })
    }
}

/// Regime selected by the tail exponent of the perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeTag {
    pub regime: Regime,
    pub theta_nu: f64,
    pub theta0: Option<f64>,
    pub predicted_speed: f64,
}

/// Classifies by the sign of `θ_νκ′(θ_ν) − κ(θ_ν)`.
///
/// The predicted speed maximises `κ′(θ) + (κ(θ) − θκ′(θ))/θ_ν` over `θ`, which
/// gives `κ(θ_ν)/θ_ν` below the critical tilt and `κ′(θ₀)` at or above it.
pub fn classify_regime(law: &OffspringLaw, theta_nu: f64) -> Result<RegimeTag> {
    let p = kappa_profile(law, theta_nu)?;
    let t0 = theta0(law)?;
    let regime = if p.gap.abs() <= CRITICAL_BAND {
        Regime::Critical
    } else if p.gap < 0.0 {
        Regime::Subcritical
    } else {
        Regime::Supercritical
    };
    let predicted_speed = match regime {
        Regime::Subcritical => p.kappa / theta_nu,
        Regime::Critical | Regime::Supercritical => {
            let t0 = t0.ok_or_else(|| Error::Regime("θ₀ does not exist for this law".into()))?;
            kappa_profile(law, t0)?.kappa_prime
        }
    };
    Ok(RegimeTag {
        regime,
        theta_nu,
        theta0: t0,
        predicted_speed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN2: f64 = std::f64::consts::LN_2;

    fn sqrt_2ln2() -> f64 {
        (2.0 * LN2).sqrt()
    }

    fn gaussian(mu: f64, sigma2: f64) -> OffspringLaw {
        OffspringLaw::new(CountLaw::Deterministic { k: 2 }, DisplacementLaw::Gaussian { mu, sigma2 }).unwrap()
    }

    fn exp_law(rate: f64) -> OffspringLaw {
        OffspringLaw::new(
            CountLaw::Deterministic { k: 2 },
            DisplacementLaw::ShiftedExponential { rate, shift: 0.0 },
        )
        .unwrap()
    }

    #[test]
    fn binary_gaussian_profile_at_one() {
        let p = kappa_profile(&OffspringLaw::binary_gaussian(), 1.0).unwrap();
        assert!((p.kappa - 1.193_147_180_6).abs() < 1e-10);
        assert!((p.kappa_prime - 1.0).abs() < 1e-15);
        assert!((p.kappa_double_prime - 1.0).abs() < 1e-15);
        assert!((p.gap + 0.193_147_180_6).abs() < 1e-10);
        assert_eq!(p.gap, p.theta * p.kappa_prime - p.kappa);
    }

    #[test]
    fn small_theta_limit_is_log_mean_count() {
        let p = kappa_profile(&OffspringLaw::binary_gaussian(), 1e-8).unwrap();
        assert!((p.kappa - LN2).abs() < 1e-7);
    }

    #[test]
    fn exponential_diverges_at_rate() {
        let err = kappa_profile(&exp_law(1.0), 1.0).unwrap_err();
        assert!(matches!(err, Error::Domain { .. }));
        assert!(kappa_profile(&exp_law(1.0), 1.5).is_err());
    }

    #[test]
    fn non_positive_theta_rejected() {
        assert!(kappa_profile(&OffspringLaw::binary_gaussian(), 0.0).is_err());
        assert!(kappa_profile(&OffspringLaw::binary_gaussian(), -1.0).is_err());
    }

    #[test]
    fn theta0_binary_gaussian() {
        let t0 = theta0(&OffspringLaw::binary_gaussian()).unwrap().unwrap();
        assert!((t0 - 1.177_410_022_6).abs() < 1e-10);
        assert!((t0 - sqrt_2ln2()).abs() < 1e-10);
    }

    #[test]
    fn theta0_ignores_mean_shift() {
        let t0 = theta0(&gaussian(5.0, 1.0)).unwrap().unwrap();
        assert!((t0 - sqrt_2ln2()).abs() < 1e-10);
    }

    #[test]
    fn theta0_shifted_exponential_matches_independent_bisection() {
        // gap(θ) = θ/(1−θ) + ln(1−θ) − ln 2 for rate 1, shift 0.
        let g = |t: f64| t / (1.0 - t) + (1.0 - t).ln() - LN2;
        let (mut lo, mut hi) = (1e-9, 1.0 - 1e-12);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                hi = mid
            } else {
                lo = mid
            }
        }
        let oracle = 0.5 * (lo + hi);
        let t0 = theta0(&exp_law(1.0)).unwrap().expect("root exists below the rate");
        assert!(t0 > 0.0 && t0 < 1.0);
        assert!((t0 - oracle).abs() < 1e-10, "{t0} vs {oracle}");
    }

    #[test]
    fn speed_examples() {
        let v = speed_v(&OffspringLaw::binary_gaussian()).unwrap();
        assert!((v - 1.177_410_022_6).abs() < 1e-9);
        let poisson =
            OffspringLaw::new(CountLaw::Poisson { lambda: 2.0 }, DisplacementLaw::Gaussian { mu: 0.0, sigma2: 1.0 })
                .unwrap();
        assert!((speed_v(&poisson).unwrap() - sqrt_2ln2()).abs() < 1e-9);
        assert!((speed_v(&gaussian(3.0, 1.0)).unwrap() - (3.0 + sqrt_2ln2())).abs() < 1e-9);
    }

    #[test]
    fn speed_equals_kappa_prime_at_theta0() {
        let law = OffspringLaw::binary_gaussian();
        let t0 = theta0(&law).unwrap().unwrap();
        let p = kappa_profile(&law, t0).unwrap();
        assert!((p.kappa / t0 - p.kappa_prime).abs() <= 1e-8);
    }

    #[test]
    fn regime_examples() {
        let law = OffspringLaw::binary_gaussian();
        let sub = classify_regime(&law, 1.0).unwrap();
        assert_eq!(sub.regime, Regime::Subcritical);
        assert!((sub.predicted_speed - 1.193_147_180_6).abs() < 1e-10);

        let crit = classify_regime(&law, 1.177_410_022_6).unwrap();
        assert_eq!(crit.regime, Regime::Critical);
        assert!((crit.predicted_speed - 1.177_410_022_6).abs() < 1e-9);

        let sup = classify_regime(&law, 2.0).unwrap();
        assert_eq!(sup.regime, Regime::Supercritical);
        assert!((sup.predicted_speed - 1.177_410_022_6).abs() < 1e-9);
    }

    #[test]
    fn regime_outside_domain_is_domain_error() {
        assert!(matches!(classify_regime(&exp_law(1.0), 3.0), Err(Error::Domain { .. })));
    }
}
