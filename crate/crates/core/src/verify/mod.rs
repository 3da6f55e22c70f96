//! Theorem constants and statistical checks of the limit laws.
//!
//! Every verdict here derives mechanically from a tolerance stored next to it.

mod report;
mod stability;
mod suites;

pub use report::{ManyToOneSection, VerificationReport, SEED_TAGS};
pub use stability::{speed_check, stabilization_check, SpeedSection, StabilizationSection, StabilityConfig};
pub use suites::{
    laplace_suite, max_law_suite, run_batch, LaplaceRow, LaplaceSection, MaxLawSection, RunRecord, SnapshotBatch,
    SuiteConfig,
};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::cumulant::{classify_regime, kappa_profile, CumulantProfile, OffspringLaw, Regime, CRITICAL_BAND};
pub use crate::engine::{Proxy, TheoremId};
use crate::error::{Error, Result};
use crate::perturb::Perturbation;
use crate::stats::{Estimate, Z95};

/// `E[R^α] = 2^{α/2}Γ(α/2 + 1)` for a Rayleigh variable `R` with unit scale.
pub fn rayleigh_moment(alpha: f64) -> Result<f64> {
    if !(alpha > -2.0) {
        return Err(Error::invalid("alpha", format!("Rayleigh moment needs α > −2 (got {alpha})")));
    }
    Ok((0.5 * alpha).exp2() * gamma(0.5 * alpha + 1.0))
}

/// `c₁ = (κ(θ)/θ − κ′(θ))^α`, defined below the critical tilt.
pub fn c1(profile: &CumulantProfile, alpha: f64) -> Result<f64> {
    if !(profile.gap < -CRITICAL_BAND) {
        return Err(Error::Regime(format!(
            "c₁ needs a subcritical profile (θκ′ − κ = {} at θ = {})",
            profile.gap, profile.theta
        )));
    }
    Ok((profile.kappa / profile.theta - profile.kappa_prime).powf(alpha))
}

/// `c₂ = √(2/(πκ″(θ)))·E[R^α]`, defined at the critical tilt.
pub fn c2(profile: &CumulantProfile, alpha: f64) -> Result<f64> {
    let k2 = profile.kappa_double_prime;
    if profile.gap.abs() > CRITICAL_BAND {
        return Err(Error::Regime(format!(
            "c₂ needs a critical profile (θκ′ − κ = {} at θ = {})",
            profile.gap, profile.theta
        )));
    }
    if !(k2 > 0.0 && k2.is_finite()) {
        return Err(Error::Regime(format!("c₂ needs 0 < κ″ < ∞ (got {k2})")));
    }
    Ok((2.0 / (std::f64::consts::PI * k2)).sqrt() * (2.0 * k2).powf(0.5 * alpha) * gamma(0.5 * alpha + 1.0))
}

/// Whichever of `(c₁, c₂)` the profile admits.
pub fn constants(profile: &CumulantProfile, alpha: f64) -> Result<(Option<f64>, Option<f64>)> {
    let pair = (c1(profile, alpha).ok(), c2(profile, alpha).ok());
    if pair == (None, None) {
        return Err(Error::Regime(format!(
            "neither constant is defined at θ = {} (θκ′ − κ = {})",
            profile.theta, profile.gap
        )));
    }
    Ok(pair)
}

/// What a configuration is predicted to converge to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremTarget {
    pub theorem: TheoremId,
    /// Exponential rate of the limit intensity.
    pub theta: f64,
    pub alpha: f64,
    /// Multiplier of the martingale limit; absent above the critical tilt.
    pub constant: Option<f64>,
    pub proxy: Option<Proxy>,
    pub centering: String,
}

impl TheoremTarget {
    pub fn for_model(law: &OffspringLaw, nu: &Perturbation) -> Result<Self> {
        let Perturbation::Tail(tail) = nu else {
            return Ok(Self::supercritical(law, f64::INFINITY, 0.0));
        };
        let theta = tail.theta();
        let alpha = tail.alpha();
        let regime = classify_regime(law, theta)?;
        let p = kappa_profile(law, theta)?;
        Ok(match regime.regime {
            Regime::Subcritical if alpha == 0.0 => TheoremTarget {
                theorem: TheoremId::ExponentialTail,
                theta,
                alpha,
                constant: Some(1.0),
                proxy: Some(Proxy::W),
                centering: "n·κ(θ)/θ + ln(c)/θ".into(),
            },
            Regime::Subcritical => TheoremTarget {
                theorem: TheoremId::RegularlyVaryingTail,
                theta,
                alpha,
                constant: Some(c1(&p, alpha)?),
                proxy: Some(Proxy::W),
                centering: "n·κ(θ)/θ + ln(L(n))/θ".into(),
            },
            Regime::Critical => TheoremTarget {
                theorem: TheoremId::CriticalTilt,
                theta,
                alpha,
                constant: Some(c2(&p, alpha)?),
                proxy: Some(Proxy::Z),
                centering: "n·κ(θ)/θ + ln(L(√n))/θ − ln(n)/(2θ)".into(),
            },
            Regime::Supercritical => Self::supercritical(law, theta, alpha),
        })
    }

    fn supercritical(_law: &OffspringLaw, theta: f64, alpha: f64) -> Self {
        TheoremTarget {
            theorem: TheoremId::Supercritical,
            theta,
            alpha,
            constant: None,
            proxy: None,
            centering: "n·κ′(θ₀) − 3·ln(n)/(2θ₀)".into(),
        }
    }

    /// Fails unless `(law, nu)` falls under the same theorem with the same
    /// constant to 10⁻¹².
    pub fn check(&self, law: &OffspringLaw, nu: &Perturbation) -> Result<()> {
        let fresh = TheoremTarget::for_model(law, nu)?;
        if fresh.theorem != self.theorem {
            return Err(Error::Regime(format!(
                "target is {} but the configuration falls under {}",
                self.theorem, fresh.theorem
            )));
        }
        match (self.constant, fresh.constant) {
            (Some(a), Some(b)) if (a - b).abs() <= 1e-12 * b.abs().max(1.0) => Ok(()),
            (None, None) => Ok(()),
            (a, b) => Err(Error::Regime(format!("stored constant {a:?} differs from recomputed {b:?}"))),
        }
    }
}

/// Outcome of one check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Inconclusive,
    Fail,
}

impl Verdict {
    /// Worst of a set of verdicts; `Pass` for none.
    pub fn combine(vs: impl IntoIterator<Item = Verdict>) -> Verdict {
        vs.into_iter().max().unwrap_or(Verdict::Pass)
    }

    /// 0 pass, 1 fail, 3 inconclusive.
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Pass => 0,
            Verdict::Fail => 1,
            Verdict::Inconclusive => 3,
        }
    }

    /// Verdict of a negative control, which must fail.
    pub fn as_control(self) -> Verdict {
        match self {
            Verdict::Fail => Verdict::Pass,
            Verdict::Pass => Verdict::Fail,
            Verdict::Inconclusive => Verdict::Inconclusive,
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Inconclusive => "inconclusive",
            Verdict::Fail => "fail",
        })
    }
}

/// Paired comparison rule: inconclusive when the 95% interval of the paired
/// difference is wider than `tol`, otherwise pass when the difference is
/// within `tol` or the two 95% intervals overlap.
pub fn paired_verdict(empirical: &Estimate, predicted: &Estimate, difference: &Estimate, tol: f64) -> Verdict {
    let width = 2.0 * Z95 * difference.se;
    if !(width <= tol) {
        return Verdict::Inconclusive;
    }
    let (a_lo, a_hi) = empirical.ci95();
    let (b_lo, b_hi) = predicted.ci95();
    if difference.mean.abs() <= tol || (a_lo <= b_hi && b_lo <= a_hi) {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

/// Thresholds used by the suites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Bound on the paired Laplace difference.
    pub laplace_abs: f64,
    /// Bound on the sup-distance between empirical and predicted max CDFs.
    pub max_law_sup: f64,
    /// Level of the two-sample KS test.
    pub ks_alpha: f64,
    /// Relative error allowed on the speed.
    pub speed_rel: f64,
}

impl Tolerances {
    /// Defaults: 0.05 on the Laplace difference at the critical tilt, 0.02
    /// elsewhere.
    pub fn for_theorem(theorem: TheoremId) -> Self {
        Tolerances {
            laplace_abs: if theorem == TheoremId::CriticalTilt { 0.05 } else { 0.02 },
            max_law_sup: 0.03,
            ks_alpha: 0.01,
            speed_rel: 0.02,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cumulant::{theta0, CountLaw, DisplacementLaw};
    use crate::perturb::TailLaw;

    fn profile(theta: f64, kappa: f64, d1: f64, d2: f64) -> CumulantProfile {
        CumulantProfile {
            theta,
            kappa,
            kappa_prime: d1,
            kappa_double_prime: d2,
            gap: theta * d1 - kappa,
            domain_ok: true,
        }
    }

    #[test]
    fn c1_binary_gaussian() {
        let p = kappa_profile(&OffspringLaw::binary_gaussian(), 1.0).unwrap();
        let c = c1(&p, -1.0).unwrap();
        // 1/(ln 2 − 1/2); the closed form, not the rounded tabulated value.
        assert!((c - 5.177_398_899_124_18).abs() < 1e-12, "{c}");
    }

    #[test]
    fn c2_unit_curvature() {
        let law = OffspringLaw::binary_gaussian();
        let p = kappa_profile(&law, theta0(&law).unwrap().unwrap()).unwrap();
        assert!((c2(&p, -1.0).unwrap() - 1.0).abs() < 1e-12);
        let synthetic = profile(1.0, 1.0, 1.0, 1.0);
        assert!((c2(&synthetic, -1.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn c2_at_alpha_zero_is_gaussian_density_constant() {
        for k2 in [0.3, 1.0, 4.0] {
            let p = profile(2.0, 2.0, 1.0, k2);
            let want = (2.0 / (std::f64::consts::PI * k2)).sqrt();
            assert!((c2(&p, 0.0).unwrap() - want).abs() < 1e-14);
        }
    }

    #[test]
    fn rayleigh_moments() {
        assert!((rayleigh_moment(0.0).unwrap() - 1.0).abs() < 1e-15);
        // E[R²] = 2 and E[R] = √(π/2).
        assert!((rayleigh_moment(2.0).unwrap() - 2.0).abs() < 1e-13);
        assert!((rayleigh_moment(1.0).unwrap() - (std::f64::consts::PI / 2.0).sqrt()).abs() < 1e-13);
        assert!(rayleigh_moment(-2.0).is_err());
    }

    #[test]
    fn c2_is_curvature_factor_times_rayleigh_moment() {
        let p = profile(1.5, 1.5, 1.0, 0.7);
        for alpha in [-1.5, -1.0, -0.3] {
            let want = (2.0 / (std::f64::consts::PI * 0.7)).sqrt() * 0.7f64.powf(0.5 * alpha) * rayleigh_moment(alpha).unwrap();
            assert!((c2(&p, alpha).unwrap() - want).abs() < 1e-12 * want);
        }
    }

    #[test]
    fn regime_errors() {
        let law = OffspringLaw::binary_gaussian();
        let sub = kappa_profile(&law, 0.8).unwrap();
        let sup = kappa_profile(&law, 2.0).unwrap();
        assert!(matches!(c2(&sub, -1.0), Err(Error::Regime(_))));
        assert!(matches!(c1(&sup, -1.0), Err(Error::Regime(_))));
        assert!(matches!(constants(&sup, -1.0), Err(Error::Regime(_))));
        assert_eq!(constants(&sub, 0.0).unwrap(), (Some(1.0), None));
        assert!(c2(&profile(1.0, 1.0, 1.0, f64::INFINITY), -1.0).is_err());
    }

    #[test]
    fn targets_by_regime() {
        let law = OffspringLaw::binary_gaussian();
        let t0 = theta0(&law).unwrap().unwrap();
        let cases = [
            (TailLaw::new(0.8, 0.0, 1.0).unwrap(), TheoremId::ExponentialTail, Some(Proxy::W)),
            (TailLaw::new(0.8, -1.0, 1.0).unwrap(), TheoremId::RegularlyVaryingTail, Some(Proxy::W)),
            (TailLaw::new(t0, -1.0, 1.0).unwrap(), TheoremId::CriticalTilt, Some(Proxy::Z)),
            (TailLaw::new(2.0, 0.0, 1.0).unwrap(), TheoremId::Supercritical, None),
        ];
        for (tail, id, proxy) in cases {
            let nu = Perturbation::Tail(tail);
            let t = TheoremTarget::for_model(&law, &nu).unwrap();
            assert_eq!((t.theorem, t.proxy), (id, proxy));
            t.check(&law, &nu).unwrap();
        }
        let point = TheoremTarget::for_model(&law, &Perturbation::none()).unwrap();
        assert_eq!(point.theorem, TheoremId::Supercritical);
        assert_eq!(point.constant, None);
    }

    #[test]
    fn stored_constants_recompute() {
        let law = OffspringLaw::new(CountLaw::Poisson { lambda: 3.0 }, DisplacementLaw::Gaussian { mu: 0.0, sigma2: 2.0 }).unwrap();
        let nu = Perturbation::Tail(TailLaw::new(0.5, -0.5, 2.0).unwrap());
        let mut t = TheoremTarget::for_model(&law, &nu).unwrap();
        let p = kappa_profile(&law, 0.5).unwrap();
        assert_eq!(t.constant, Some(c1(&p, -0.5).unwrap()));
        t.check(&law, &nu).unwrap();
        t.constant = t.constant.map(|c| c * (1.0 + 1e-9));
        assert!(t.check(&law, &nu).is_err());
        let other = Perturbation::Tail(TailLaw::new(3.0, 0.0, 1.0).unwrap());
        assert!(matches!(t.check(&law, &other), Err(Error::Regime(_))));
    }

    #[test]
    fn verdict_rules() {
        let e = |mean, se| Estimate { mean, se, count: 100 };
        assert_eq!(paired_verdict(&e(0.5, 0.01), &e(0.51, 0.01), &e(-0.01, 0.003), 0.02), Verdict::Pass);
        assert_eq!(paired_verdict(&e(0.5, 0.001), &e(0.6, 0.001), &e(-0.1, 0.001), 0.02), Verdict::Fail);
        assert_eq!(paired_verdict(&e(0.5, 0.1), &e(0.6, 0.1), &e(-0.1, 0.1), 0.02), Verdict::Inconclusive);
        // Overlapping intervals pass even beyond the tolerance.
        assert_eq!(paired_verdict(&e(0.5, 0.02), &e(0.53, 0.02), &e(-0.03, 0.004), 0.02), Verdict::Pass);
        assert_eq!(Verdict::combine([Verdict::Pass, Verdict::Inconclusive]), Verdict::Inconclusive);
        assert_eq!(Verdict::combine([Verdict::Fail, Verdict::Inconclusive]), Verdict::Fail);
        assert_eq!(Verdict::combine([]), Verdict::Pass);
        assert_eq!(Verdict::Pass.as_control(), Verdict::Fail);
        assert_eq!(Verdict::Fail.exit_code(), 1);
    }
}
