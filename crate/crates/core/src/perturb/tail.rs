use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Perturbation law with survival function `min(1, c·x^α e^{−θx})`.
///
/// The law is supported on `[x_star, ∞)` where `x_star` is the last point at
/// which `c·x^α e^{−θx}` crosses 1; its survival is continuous, so the law is
/// atomless. For `α = 0` the factor `L ≡ c` is defined on the whole line and
/// `x_star = ln(c)/θ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TailSpec", into = "TailSpec")]
pub struct TailLaw {
    theta: f64,
    alpha: f64,
    c: f64,
    x_star: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TailSpec {
    theta: f64,
    alpha: f64,
    c: f64,
}

impl TryFrom<TailSpec> for TailLaw {
    type Error = Error;

    fn try_from(s: TailSpec) -> Result<Self> {
        TailLaw::new(s.theta, s.alpha, s.c)
    }
}

impl From<TailLaw> for TailSpec {
    fn from(t: TailLaw) -> Self {
        TailSpec {
            theta: t.theta,
            alpha: t.alpha,
            c: t.c,
        }
    }
}

/// Solves `h(x) = 0` for `h` strictly decreasing on `[lo, ∞)` with `h(lo) ≥ 0`,
/// by Newton steps safeguarded with bisection.
fn solve_decreasing<H, D>(h: H, dh: D, lo: f64, guess: f64) -> f64
where
    H: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let mut lo = lo;
    let mut hi = guess.max(lo + 1.0);
    let mut step = hi - lo;
    while h(hi) > 0.0 {
        lo = hi;
        step *= 2.0;
        hi = lo + step;
    }
    let mut x = guess.clamp(lo, hi);
    for _ in 0..200 {
        let hx = h(x);
        if hx == 0.0 {
            return x;
        }
        if hx > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - hx / dh(x);
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 1e-14 * x.abs().max(1.0) || hi - lo <= 1e-15 * x.abs().max(1.0) {
            return next;
        }
        x = next;
    }
    x
}

impl TailLaw {
    pub fn new(theta: f64, alpha: f64, c: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::invalid("tail.theta", format!("must be positive and finite (got {theta})")));
        }
        if !alpha.is_finite() {
            return Err(Error::invalid("tail.alpha", "must be finite"));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::invalid("tail.c", format!("must be positive and finite (got {c})")));
        }
        let log_c = c.ln();
        let x_star = if alpha == 0.0 {
            log_c / theta
        } else {
            let ell = |x: f64| log_c + alpha * x.ln() - theta * x;
            let dell = |x: f64| alpha / x - theta;
            if alpha < 0.0 {
                // ℓ decreases from +∞ on (0, ∞); find a left end with ℓ ≥ 0.
                let mut lo = 1.0;
                while ell(lo) < 0.0 {
                    lo *= 0.5;
                }
                solve_decreasing(ell, dell, lo, lo)
            } else {
                let peak = alpha / theta;
                if ell(peak) < 0.0 {
                    return Err(Error::invalid(
                        "tail.c",
                        format!(
                            "c·x^α e^(-θx) never reaches 1 (peak {:.4e} at x={peak:.4}); the law would have an atom",
                            ell(peak).exp()
                        ),
                    ));
                }
                solve_decreasing(ell, dell, peak, peak + 1.0 / theta)
            }
        };
        Ok(TailLaw {
            theta,
            alpha,
            c,
            x_star,
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn x_star(&self) -> f64 {
        self.x_star
    }

    /// Slowly varying factor `L(x) = c·x^α` (constant `c` when `α = 0`).
    pub fn l(&self, x: f64) -> f64 {
        if self.alpha == 0.0 {
            self.c
        } else {
            self.c * x.powf(self.alpha)
        }
    }

    /// `log(c·x^α e^{−θx})`, valid for `x > x_star`.
    #[inline]
    fn log_tail(&self, x: f64) -> f64 {
        if self.alpha == 0.0 {
            self.c.ln() - self.theta * x
        } else {
            self.c.ln() + self.alpha * x.ln() - self.theta * x
        }
    }

    /// `ν([x, ∞))`.
    #[inline]
    pub fn survival(&self, x: f64) -> f64 {
        if x <= self.x_star {
            1.0
        } else {
            self.log_tail(x).exp()
        }
    }

    /// Density of `ν`, zero below `x_star`.
    pub fn density(&self, x: f64) -> f64 {
        if x <= self.x_star {
            0.0
        } else {
            self.log_tail(x).exp() * (self.theta - self.alpha / x)
        }
    }

    /// Smallest `x` with `survival(x) ≤ u`, for `u ∈ (0, 1]`.
    pub fn quantile(&self, u: f64) -> f64 {
        debug_assert!(u > 0.0 && u <= 1.0);
        if u >= 1.0 {
            return self.x_star;
        }
        let target = u.ln();
        if self.alpha == 0.0 {
            return ((self.c.ln() - target) / self.theta).max(self.x_star);
        }
        let h = |x: f64| self.log_tail(x) - target;
        let dh = |x: f64| self.alpha / x - self.theta;
        let guess = self.x_star + (-target) / self.theta;
        solve_decreasing(h, dh, self.x_star, guess)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u = 1.0 - rng.random::<f64>();
        self.quantile(u)
    }

    /// `sup_x ν([x, ∞)) e^{tilt·x}`, finite when `tilt < θ`, or `tilt = θ` and `α ≤ 0`.
    pub fn tail_constant(&self, tilt: f64) -> Option<f64> {
        if tilt > self.theta || (tilt == self.theta && self.alpha > 0.0) {
            return None;
        }
        let at = if self.alpha > 0.0 {
            self.x_star.max(self.alpha / (self.theta - tilt))
        } else {
            self.x_star
        };
        Some((self.log_tail(at) + tilt * at).exp().max((tilt * self.x_star).exp()))
    }
}

/// Law of the final-generation perturbation `Y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum Perturbation {
    Tail(TailLaw),
    /// Dirac mass; `at = 0` recovers the plain walk.
    PointMass { at: f64 },
}

impl Perturbation {
    pub fn none() -> Self {
        Perturbation::PointMass { at: 0.0 }
    }

    pub fn tail(&self) -> Option<&TailLaw> {
        match self {
            Perturbation::Tail(t) => Some(t),
            Perturbation::PointMass { .. } => None,
        }
    }

    /// Left end of the support.
    pub fn lower_bound(&self) -> f64 {
        match self {
            Perturbation::Tail(t) => t.x_star(),
            Perturbation::PointMass { at } => *at,
        }
    }

    #[inline]
    pub fn survival(&self, x: f64) -> f64 {
        match self {
            Perturbation::Tail(t) => t.survival(x),
            Perturbation::PointMass { at } => {
                if x <= *at {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    #[inline]
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            Perturbation::Tail(t) => t.quantile(u),
            Perturbation::PointMass { at } => *at,
        }
    }

    pub fn sample(&self, rng: &mut Stream) -> f64 {
        self.quantile(rng.open_unit())
    }

    pub fn tail_constant(&self, tilt: f64) -> Option<f64> {
        match self {
            Perturbation::Tail(t) => t.tail_constant(tilt),
            Perturbation::PointMass { at } => Some((tilt * at).exp()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, LN_2};

    const OMEGA: f64 = 0.567_143_290_409_783_8;

    #[test]
    fn survival_examples() {
        let t = TailLaw::new(1.0, -1.0, 1.0).unwrap();
        assert_eq!(t.survival(0.0), 1.0);
        assert!((t.survival(1.0) - 0.367_879_441_2).abs() < 1e-10);
        let e = TailLaw::new(1.0, 0.0, 1.0).unwrap();
        assert!((e.survival(10.0) - (-10.0f64).exp()).abs() < 1e-18);
    }

    #[test]
    fn x_star_is_omega_constant() {
        let t = TailLaw::new(1.0, -1.0, 1.0).unwrap();
        assert!((t.x_star() - OMEGA).abs() < 1e-13);
        assert!((t.quantile(1.0) - 0.567_143_290_4).abs() < 1e-10);
    }

    #[test]
    fn quantile_examples() {
        let t = TailLaw::new(1.0, -1.0, 1.0).unwrap();
        assert!((t.quantile(1.0 / E) - 1.0).abs() < 1e-12);
        let e = TailLaw::new(1.0, 0.0, 1.0).unwrap();
        assert!((e.quantile(0.5) - LN_2).abs() < 1e-14);
    }

    #[test]
    fn positive_alpha_cuts_after_the_peak() {
        let t = TailLaw::new(1.0, 2.0, 5.0).unwrap();
        assert!(t.x_star() > 2.0);
        let f = |x: f64| 5.0 * x * x * (-x).exp();
        assert!((f(t.x_star()) - 1.0).abs() < 1e-12);
        assert!(TailLaw::new(1.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn small_c_exponential_has_negative_cutoff() {
        let t = TailLaw::new(2.0, 0.0, 0.25).unwrap();
        assert!((t.x_star() - 0.25f64.ln() / 2.0).abs() < 1e-15);
        assert!((t.survival(t.x_star() + 1e-9) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn tail_constant_bounds_survival() {
        for (theta, alpha, c, tilt) in [(1.0, -1.0, 1.0, 1.0), (2.0, 0.0, 1.0, 1.2), (1.0, 2.0, 5.0, 0.8), (0.8, -1.5, 3.0, 0.5)] {
            let t = TailLaw::new(theta, alpha, c).unwrap();
            let cst = t.tail_constant(tilt).unwrap();
            for i in 0..4000 {
                let x = -5.0 + i as f64 * 0.01;
                assert!(t.survival(x) * (tilt * x).exp() <= cst * (1.0 + 1e-12), "x={x}");
            }
        }
        assert!(TailLaw::new(1.0, 2.0, 5.0).unwrap().tail_constant(1.0).is_none());
    }

    #[test]
    fn point_mass_behaves_like_a_dirac() {
        let p = Perturbation::PointMass { at: 0.5 };
        assert_eq!(p.survival(0.5), 1.0);
        assert_eq!(p.survival(0.5001), 0.0);
        assert_eq!(p.quantile(0.3), 0.5);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(TailLaw::new(0.0, 0.0, 1.0).is_err());
        assert!(TailLaw::new(1.0, 0.0, -1.0).is_err());
        assert!(TailLaw::new(1.0, f64::NAN, 1.0).is_err());
    }
}
