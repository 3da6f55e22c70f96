use rand::Rng;
use rand_distr::{Distribution, Exp1, Geometric, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Law of the number of children.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum CountLaw {
    Deterministic { k: u32 },
    Poisson { lambda: f64 },
    /// Geometric on `{1, 2, …}` with the given mean.
    Geometric { mean: f64 },
}

/// Law of one child's displacement from its parent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum DisplacementLaw {
    Gaussian { mu: f64, sigma2: f64 },
    Uniform { a: f64, b: f64 },
    /// `shift + Exp(rate)`.
    ShiftedExponential { rate: f64, shift: f64 },
}

impl CountLaw {
    pub fn mean(&self) -> f64 {
        match *self {
            CountLaw::Deterministic { k } => f64::from(k),
            CountLaw::Poisson { lambda } => lambda,
            CountLaw::Geometric { mean } => mean,
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = |field: &str, x: f64| {
            if x.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(field, "must be finite"))
            }
        };
        match *self {
            CountLaw::Deterministic { k } if k < 2 => Err(Error::invalid(
                "count_law.params.k",
                format!("deterministic count must be at least 2 (got {k})"),
            )),
            CountLaw::Poisson { lambda } => {
                finite("count_law.params.lambda", lambda)?;
                if lambda > 1.0 {
                    Ok(())
                } else {
                    Err(Error::invalid(
                        "count_law.params.lambda",
                        format!("mean offspring must exceed 1 (got {lambda})"),
                    ))
                }
            }
            CountLaw::Geometric { mean } => {
                finite("count_law.params.mean", mean)?;
                if mean > 1.0 {
                    Ok(())
                } else {
                    Err(Error::invalid(
                        "count_law.params.mean",
                        format!("mean offspring must exceed 1 (got {mean})"),
                    ))
                }
            }
            _ => Ok(()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        match *self {
            CountLaw::Deterministic { k } => k,
            CountLaw::Poisson { lambda } => {
                let d = Poisson::new(lambda).expect("validated λ");
                let x: f64 = d.sample(rng);
                x as u32
            }
            CountLaw::Geometric { mean } => {
                let d = Geometric::new(1.0 / mean).expect("validated mean");
                1 + d.sample(rng).min(u64::from(u32::MAX - 1)) as u32
            }
        }
    }
}

impl DisplacementLaw {
    fn validate(&self) -> Result<()> {
        let finite = |field: &str, x: f64| {
            if x.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(field, "must be finite"))
            }
        };
        match *self {
            DisplacementLaw::Gaussian { mu, sigma2 } => {
                finite("displacement_law.params.mu", mu)?;
                finite("displacement_law.params.sigma2", sigma2)?;
                if sigma2 > 0.0 {
                    Ok(())
                } else {
                    Err(Error::invalid(
                        "displacement_law.params.sigma2",
                        format!("variance must be positive (got {sigma2})"),
                    ))
                }
            }
            DisplacementLaw::Uniform { a, b } => {
                finite("displacement_law.params.a", a)?;
                finite("displacement_law.params.b", b)?;
                if b > a {
                    Ok(())
                } else {
                    Err(Error::invalid(
                        "displacement_law.params.b",
                        format!("need a < b (got a={a}, b={b})"),
                    ))
                }
            }
            DisplacementLaw::ShiftedExponential { rate, shift } => {
                finite("displacement_law.params.rate", rate)?;
                finite("displacement_law.params.shift", shift)?;
                if rate > 0.0 {
                    Ok(())
                } else {
                    Err(Error::invalid(
                        "displacement_law.params.rate",
                        format!("rate must be positive (got {rate})"),
                    ))
                }
            }
        }
    }

    /// Supremum of the finiteness domain of `θ ↦ E[e^{θX}]` on `(0, ∞)`.
    pub fn theta_sup(&self) -> f64 {
        match *self {
            DisplacementLaw::ShiftedExponential { rate, .. } => rate,
            _ => f64::INFINITY,
        }
    }

    /// `(log E[e^{θX}], d/dθ, d²/dθ²)`.
    pub fn log_mgf(&self, theta: f64) -> Result<(f64, f64, f64)> {
        match *self {
            DisplacementLaw::Gaussian { mu, sigma2 } => Ok((
                mu * theta + 0.5 * sigma2 * theta * theta,
                mu + sigma2 * theta,
                sigma2,
            )),
            DisplacementLaw::Uniform { a, b } => {
                let h = b - a;
                let t = theta * h;
                let (log_ratio, d1, d2) = uniform_log_ratio(t);
                Ok((theta * a + log_ratio, a + h * d1, h * h * d2))
            }
            DisplacementLaw::ShiftedExponential { rate, shift } => {
                if theta >= rate {
                    return Err(Error::domain(
                        theta,
                        format!("E[e^(θX)] diverges for shifted exponential at θ ≥ rate = {rate}"),
                    ));
                }
                let r = rate - theta;
                Ok((theta * shift - (-theta / rate).ln_1p(), shift + 1.0 / r, 1.0 / (r * r)))
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            DisplacementLaw::Gaussian { mu, .. } => mu,
            DisplacementLaw::Uniform { a, b } => 0.5 * (a + b),
            DisplacementLaw::ShiftedExponential { rate, shift } => shift + 1.0 / rate,
        }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sampler().sample(rng)
    }

    /// Sampler with derived constants hoisted out of the hot loop.
    pub(crate) fn sampler(&self) -> DisplacementSampler {
        match *self {
            DisplacementLaw::Gaussian { mu, sigma2 } => DisplacementSampler::Gaussian { mu, sd: sigma2.sqrt() },
            DisplacementLaw::Uniform { a, b } => DisplacementSampler::Uniform { a, width: b - a },
            DisplacementLaw::ShiftedExponential { rate, shift } => {
                DisplacementSampler::Exponential { shift, scale: 1.0 / rate }
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum DisplacementSampler {
    Gaussian { mu: f64, sd: f64 },
    Uniform { a: f64, width: f64 },
    Exponential { shift: f64, scale: f64 },
}

impl DisplacementSampler {
    #[inline(always)]
    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            DisplacementSampler::Gaussian { mu, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mu + sd * z
            }
            DisplacementSampler::Uniform { a, width } => a + width * rng.random::<f64>(),
            DisplacementSampler::Exponential { shift, scale } => {
                let e: f64 = Exp1.sample(rng);
                shift + e * scale
            }
        }
    }
}

/// `log((e^t − 1)/t)` and its first two derivatives in `t`.
fn uniform_log_ratio(t: f64) -> (f64, f64, f64) {
    if t.abs() < 1e-4 {
        let t2 = t * t;
        (
            t / 2.0 + t2 / 24.0 - t2 * t2 / 2880.0,
            0.5 + t / 12.0 - t2 * t / 720.0,
            1.0 / 12.0 - t2 / 240.0,
        )
    } else {
        let e = (-t).exp();
        let one_minus = -(-t).exp_m1();
        // log((e^t − 1)/t) = t + log(1 − e^{−t}) − log t
        let log_ratio = t + (-e).ln_1p() - t.ln();
        let d1 = 1.0 / one_minus - 1.0 / t;
        let d2 = 1.0 / (t * t) - e / (one_minus * one_minus);
        (log_ratio, d1, d2)
    }
}

/// Product-form reproduction law: a random number of children, each displaced
/// by an independent draw of the displacement law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LawSpec", into = "LawSpec")]
pub struct OffspringLaw {
    count: CountLaw,
    displacement: DisplacementLaw,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LawSpec {
    count_law: CountLaw,
    displacement_law: DisplacementLaw,
}

impl TryFrom<LawSpec> for OffspringLaw {
    type Error = Error;

    fn try_from(spec: LawSpec) -> Result<Self> {
        OffspringLaw::new(spec.count_law, spec.displacement_law)
    }
}

impl From<OffspringLaw> for LawSpec {
    fn from(law: OffspringLaw) -> Self {
        LawSpec {
            count_law: law.count,
            displacement_law: law.displacement,
        }
    }
}

impl OffspringLaw {
    /// Rejects laws with mean offspring `≤ 1` or a degenerate displacement.
    pub fn new(count: CountLaw, displacement: DisplacementLaw) -> Result<Self> {
        count.validate()?;
        displacement.validate()?;
        Ok(OffspringLaw {
            count,
            displacement,
        })
    }

    /// Two children with standard Gaussian displacements.
    pub fn binary_gaussian() -> Self {
        OffspringLaw::new(
            CountLaw::Deterministic { k: 2 },
            DisplacementLaw::Gaussian { mu: 0.0, sigma2: 1.0 },
        )
        .expect("valid")
    }

    pub fn count(&self) -> &CountLaw {
        &self.count
    }

    pub fn displacement(&self) -> &DisplacementLaw {
        &self.displacement
    }

    pub fn mean_offspring(&self) -> f64 {
        self.count.mean()
    }

    /// Fixed offspring count, when the count law is deterministic.
    pub fn fixed_count(&self) -> Option<u32> {
        match self.count {
            CountLaw::Deterministic { k } => Some(k),
            _ => None,
        }
    }

    /// Draws one sibling group's displacements into `out` (cleared first).
    pub fn sample_children<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        out.clear();
        let k = self.count.sample(rng);
        out.extend((0..k).map(|_| self.displacement.sample(rng)));
    }
}
