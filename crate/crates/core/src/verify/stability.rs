use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{TheoremId, TheoremTarget, Verdict};
use crate::cumulant::{classify_regime, speed_v, theta0, OffspringLaw};
use crate::engine::{centering, extremal_snapshot, simulate_in, SimParams, Window, Workspace};
use crate::error::{Error, Result};
use crate::perturb::Perturbation;
use crate::rng::derive_seed;
use crate::stats::{estimate, ks_critical_two_sample, ks_two_sample, linear_fit, Estimate, Z95};

/// Engine settings for experiments that only need the centred perturbed maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityConfig {
    pub law: OffspringLaw,
    pub nu: Perturbation,
    pub runs: usize,
    /// Centred floor below which particles may be pruned.
    pub floor: f64,
    pub budget: usize,
    pub eps_prune: f64,
    pub prune_above: Option<usize>,
    pub seed: u64,
}

impl StabilityConfig {
    /// `max(S_u + Y_u) − mₙ` over `runs` trees, in run order. Trees use seeds
    /// `derive_seed(derive_seed(seed, tag, n), "tree", i)`.
    pub fn centred_maxima(&self, n: u32, tag: &str) -> Result<(f64, Vec<f64>)> {
        let c = centering(&self.law, &self.nu, n)?;
        let window = Window::new(self.floor, self.floor + 1.0)?;
        let target = c.prune_target(&self.nu, &window);
        let params = SimParams {
            budget: self.budget,
            eps_prune: self.eps_prune,
            prune_above: self.prune_above,
            derivative: false,
            ..SimParams::new(n, Vec::new())
        };
        let base = derive_seed(self.seed, tag, u64::from(n));
        let maxima = (0..self.runs as u64)
            .into_par_iter()
            .map_init(Workspace::default, |ws, i| {
                let run = simulate_in(ws, &self.law, &params, Some(&target), derive_seed(base, "tree", i))?;
                let snap = extremal_snapshot(&run, &self.nu, &c, window, derive_seed(base, "snapshot", i))?;
                ws.recycle(run);
                Ok(snap.perturbed_max_centered)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((c.m_n, maxima))
    }
}

/// Linear growth of the perturbed maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedSection {
    pub n_list: Vec<u32>,
    pub runs: usize,
    /// Mean of `max(S_u + Y_u)` at each `n`.
    pub mean_max: Vec<Estimate>,
    /// `mₙ − n·v`, removed before the fit.
    pub sublinear: Vec<f64>,
    pub slope: f64,
    pub slope_se: f64,
    pub predicted_speed: f64,
    pub relative_error: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

/// Regresses the mean perturbed maximum, minus the known sublinear part of
/// the centering, on `n`.
///
/// Inconclusive when the 95% interval of the slope is wider than
/// `tolerance·v`.
pub fn speed_check(cfg: &StabilityConfig, n_list: &[u32], tolerance: f64) -> Result<SpeedSection> {
    if n_list.len() < 3 || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("n_list", "need at least three increasing generations"));
    }
    let v = match cfg.nu {
        Perturbation::Tail(t) => classify_regime(&cfg.law, t.theta())?.predicted_speed,
        Perturbation::PointMass { .. } => speed_v(&cfg.law)?,
    };
    let mut mean_max = Vec::with_capacity(n_list.len());
    let mut sublinear = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let (m_n, maxima) = cfg.centred_maxima(n, "speed")?;
        let e = estimate(maxima.iter().copied());
        mean_max.push(Estimate {
            mean: e.mean + m_n,
            ..e
        });
        sublinear.push(m_n - f64::from(n) * v);
    }
    let xs: Vec<f64> = n_list.iter().map(|&n| f64::from(n)).collect();
    let ys: Vec<f64> = mean_max.iter().zip(&sublinear).map(|(e, s)| e.mean - s).collect();
    let (slope, _) = linear_fit(&xs, &ys);
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope_se = xs
        .iter()
        .zip(&mean_max)
        .map(|(x, e)| ((x - mx) / sxx * e.se).powi(2))
        .sum::<f64>()
        .sqrt();
    let relative_error = (slope - v).abs() / v.abs();
    let verdict = if 2.0 * Z95 * slope_se > tolerance * v.abs() {
        Verdict::Inconclusive
    } else if relative_error <= tolerance {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(SpeedSection {
        n_list: n_list.to_vec(),
        runs: cfg.runs,
        mean_max,
        sublinear,
        slope,
        slope_se,
        predicted_speed: v,
        relative_error,
        tolerance,
        verdict,
    })
}

/// Two-sample KS comparison of centred perturbed maxima at `n` and `2n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilizationSection {
    pub n: u32,
    pub runs: usize,
    pub ks: f64,
    pub alpha: f64,
    pub critical_value: f64,
    pub verdict: Verdict,
    /// KS statistic with the `−3·ln(n)/(2θ₀)` term left out of both centerings.
    pub control_ks: f64,
    pub control_verdict: Verdict,
    /// Samples at `n` and `2n`; kept out of the report body.
    #[serde(skip)]
    pub samples: [Vec<f64>; 2],
}

impl StabilizationSection {
    /// Verdict with the control required to fail.
    pub fn overall(&self) -> Verdict {
        Verdict::combine([self.verdict, self.control_verdict.as_control()])
    }
}

/// Distributional stabilization of the centred perturbed maximum above the
/// critical tilt, where the limit object cannot be sampled directly.
pub fn stabilization_check(cfg: &StabilityConfig, n: u32, alpha: f64) -> Result<StabilizationSection> {
    let target = TheoremTarget::for_model(&cfg.law, &cfg.nu)?;
    if target.theorem != TheoremId::Supercritical {
        return Err(Error::Regime(format!(
            "stabilization needs the supercritical regime, got {}",
            target.theorem
        )));
    }
    let t0 = theta0(&cfg.law)?.ok_or_else(|| Error::Regime("θ₀ does not exist".into()))?;
    let (_, short) = cfg.centred_maxima(n, "stabilization")?;
    let (_, long) = cfg.centred_maxima(2 * n, "stabilization")?;
    let critical_value = ks_critical_two_sample(short.len(), long.len(), alpha);
    let ks = ks_two_sample(&short, &long);
    let drop_log = |xs: &[f64], k: u32| -> Vec<f64> {
        let shift = 1.5 / t0 * f64::from(k).ln();
        xs.iter().map(|x| x - shift).collect()
    };
    let control_ks = ks_two_sample(&drop_log(&short, n), &drop_log(&long, 2 * n));
    let judge = |d: f64| if d < critical_value { Verdict::Pass } else { Verdict::Fail };
    Ok(StabilizationSection {
        n,
        runs: cfg.runs,
        ks,
        alpha,
        critical_value,
        verdict: judge(ks),
        control_ks,
        control_verdict: judge(control_ks),
        samples: [short, long],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturb::TailLaw;
    use crate::stats::ks_critical_two_sample;

    fn cfg(nu: Perturbation, runs: usize, seed: u64) -> StabilityConfig {
        StabilityConfig {
            law: OffspringLaw::binary_gaussian(),
            nu,
            runs,
            floor: -5.0,
            budget: 1 << 20,
            eps_prune: 1e-3,
            prune_above: Some(1 << 12),
            seed,
        }
    }

    fn steep() -> Perturbation {
        Perturbation::Tail(TailLaw::new(2.0, 0.0, 1.0).unwrap())
    }

    #[test]
    fn same_generation_twice_rarely_rejects() {
        let mut rejections = 0;
        for meta in 0..20 {
            let a = cfg(steep(), 400, 1000 + meta).centred_maxima(8, "a").unwrap().1;
            let b = cfg(steep(), 400, 2000 + meta).centred_maxima(8, "a").unwrap().1;
            if ks_two_sample(&a, &b) >= ks_critical_two_sample(400, 400, 0.05) {
                rejections += 1;
            }
        }
        assert!(rejections <= 2, "{rejections} of 20 rejected");
    }

    #[test]
    fn stabilizes_with_log_correction() {
        let s = stabilization_check(&cfg(steep(), 600, 4), 8, 0.01).unwrap();
        assert_eq!(s.verdict, Verdict::Pass, "{s:?}");
        assert_eq!(s.control_verdict, Verdict::Fail, "{s:?}");
        assert_eq!(s.overall(), Verdict::Pass);
    }

    #[test]
    fn stabilization_requires_supercritical_regime() {
        let sub = Perturbation::Tail(TailLaw::new(0.8, 0.0, 1.0).unwrap());
        assert!(matches!(stabilization_check(&cfg(sub, 10, 1), 6, 0.01), Err(Error::Regime(_))));
    }

    #[test]
    fn speed_of_plain_walk() {
        let s = speed_check(&cfg(Perturbation::none(), 300, 9), &[10, 15, 20], 0.02).unwrap();
        assert!((s.predicted_speed - (2.0 * std::f64::consts::LN_2).sqrt()).abs() < 1e-8);
        assert_ne!(s.verdict, Verdict::Fail, "{s:?}");
        assert!(s.relative_error < 0.02, "{s:?}");
    }

    #[test]
    fn speed_rejects_short_lists() {
        assert!(speed_check(&cfg(Perturbation::none(), 10, 1), &[10, 15], 0.02).is_err());
        assert!(speed_check(&cfg(Perturbation::none(), 10, 1), &[10, 15, 15], 0.02).is_err());
    }
}
