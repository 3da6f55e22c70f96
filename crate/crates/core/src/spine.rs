//! The tilted random walk behind the many-to-one identity
//!
//! `E[Σ_{|u|=n} e^{θS_u − nκ(θ)} f(S_{u₁}, …, S_{uₙ})] = E[f(T₁, …, Tₙ)]`,
//!
//! and a Monte Carlo check of that identity against exact trees.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cumulant::{kappa_profile, CumulantProfile, DisplacementLaw, OffspringLaw};
use crate::error::{Error, Result};
use crate::rng::{child_label, derive_seed, root_label, Stream};
use crate::stats::Moments;

/// Largest tree generation the exact side accepts.
pub const MAX_GENERATIONS: u32 = 12;
/// Particle cap for one exact tree.
pub const MAX_TREE_PARTICLES: usize = 1 << 22;

/// Random walk whose step has law `E[Σ_{|u|=1} 1{S_u ∈ dx} e^{θx − κ(θ)}]`.
///
/// For a product-form law the count factor cancels and the step is the
/// displacement law exponentially tilted by `θ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpineWalk {
    law: OffspringLaw,
    profile: CumulantProfile,
}

impl SpineWalk {
    pub fn new(law: &OffspringLaw, theta: f64) -> Result<Self> {
        Ok(SpineWalk {
            law: *law,
            profile: kappa_profile(law, theta)?,
        })
    }

    pub fn theta(&self) -> f64 {
        self.profile.theta
    }

    /// `E[T₁] = κ′(θ)`.
    pub fn mean_step(&self) -> f64 {
        self.profile.kappa_prime
    }

    /// One draw of `T₁`.
    pub fn step<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let theta = self.profile.theta;
        match *self.law.displacement() {
            DisplacementLaw::Gaussian { mu, sigma2 } => {
                let z: f64 = StandardNormal.sample(rng);
                mu + theta * sigma2 + sigma2.sqrt() * z
            }
            DisplacementLaw::Uniform { a, b } => {
                // Inverse CDF of the density ∝ e^{θx} on [a, b], written from the
                // right end so that large θ(b − a) cannot overflow.
                let u = 1.0 - rng.random::<f64>();
                b + (u + (1.0 - u) * (-theta * (b - a)).exp()).ln() / theta
            }
            DisplacementLaw::ShiftedExponential { rate, shift } => {
                let e: f64 = Exp1.sample(rng);
                shift + e / (rate - theta)
            }
        }
    }

    /// `(T₁, …, Tₙ)` into `out`.
    pub fn path<R: Rng + ?Sized>(&self, n: u32, rng: &mut R, out: &mut Vec<f64>) {
        out.clear();
        let mut t = 0.0;
        for _ in 0..n {
            t += self.step(rng);
            out.push(t);
        }
    }
}

/// Bounded path functionals with values in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum PathFunctional {
    Zero,
    One,
    /// `1{x_n ≤ level}`.
    FinalAtMost { level: f64 },
    /// `1{max_k x_k ≤ level}`.
    MaxAtMost { level: f64 },
}

impl PathFunctional {
    pub fn eval(&self, path: &[f64]) -> f64 {
        let indicator = |b: bool| if b { 1.0 } else { 0.0 };
        match *self {
            PathFunctional::Zero => 0.0,
            PathFunctional::One => 1.0,
            PathFunctional::FinalAtMost { level } => indicator(path.last().is_some_and(|&x| x <= level)),
            PathFunctional::MaxAtMost { level } => indicator(path.iter().all(|&x| x <= level)),
        }
    }
}

/// Both sides of the identity with standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManyToOneReport {
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    pub rhs_se: f64,
    pub z: f64,
}

struct TreeWalker<'a, F> {
    law: &'a OffspringLaw,
    profile: CumulantProfile,
    n: u32,
    f: &'a F,
    path: Vec<f64>,
    visited: usize,
    total: f64,
    bad_value: Option<f64>,
}

impl<F: Fn(&[f64]) -> f64> TreeWalker<'_, F> {
    fn visit(&mut self, label: u64, pos: f64) -> Result<()> {
        let depth = self.path.len() as u32;
        if depth == self.n {
            let v = (self.f)(&self.path);
            if !(0.0..=1.0).contains(&v) {
                self.bad_value = Some(v);
            }
            self.total += (self.profile.theta * pos - f64::from(self.n) * self.profile.kappa).exp() * v;
            return Ok(());
        }
        let mut rng = Stream::reproduction(label);
        let k = self.law.count().sample(&mut rng);
        self.visited += k as usize;
        if self.visited > MAX_TREE_PARTICLES {
            return Err(Error::Budget {
                generation: depth + 1,
                population: self.visited,
                budget: MAX_TREE_PARTICLES,
            });
        }
        // Same draw order as the breadth-first engine: count, then displacements.
        let disp = self.law.displacement().sampler();
        let children: Vec<f64> = (0..k).map(|_| pos + disp.sample(&mut rng)).collect();
        for (r, &c) in children.iter().enumerate() {
            self.path.push(c);
            self.visit(child_label(label, r as u32), c)?;
            self.path.pop();
        }
        Ok(())
    }
}

/// Monte Carlo estimate of both sides of the identity for a path functional `f`
/// with values in `[0, 1]`, from `tree_runs` exact trees and `spine_runs`
/// walks.
pub fn many_to_one_check<F>(
    law: &OffspringLaw,
    theta: f64,
    n: u32,
    f: &F,
    tree_runs: usize,
    spine_runs: usize,
    seed: u64,
) -> Result<ManyToOneReport>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if n == 0 || n > MAX_GENERATIONS {
        return Err(Error::invalid("n", format!("must lie in 1..={MAX_GENERATIONS} (got {n})")));
    }
    if tree_runs < 2 || spine_runs < 2 {
        return Err(Error::invalid("runs", "need at least two runs per side"));
    }
    let walk = SpineWalk::new(law, theta)?;
    let lhs: Vec<f64> = (0..tree_runs as u64)
        .into_par_iter()
        .map(|i| {
            let mut w = TreeWalker {
                law,
                profile: walk.profile,
                n,
                f,
                path: Vec::with_capacity(n as usize),
                visited: 1,
                total: 0.0,
                bad_value: None,
            };
            w.visit(root_label(derive_seed(seed, "many_to_one_tree", i)), 0.0)?;
            match w.bad_value {
                Some(v) => Err(Error::invalid("f", format!("must take values in [0, 1] (got {v})"))),
                None => Ok(w.total),
            }
        })
        .collect::<Result<_>>()?;
    let rhs: Vec<f64> = (0..spine_runs as u64)
        .into_par_iter()
        .map_init(Vec::new, |path, i| {
            let mut rng = Stream::new(derive_seed(seed, "many_to_one_spine", i));
            walk.path(n, &mut rng, path);
            f(path)
        })
        .collect();
    if let Some(v) = rhs.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::invalid("f", format!("must take values in [0, 1] (got {v})")));
    }
    let l = lhs.into_iter().collect::<Moments>().estimate();
    let r = rhs.into_iter().collect::<Moments>().estimate();
    let pooled = (l.se * l.se + r.se * r.se).sqrt();
    let diff = l.mean - r.mean;
    let z = if pooled > 0.0 {
        diff / pooled
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY.copysign(diff)
    };
    Ok(ManyToOneReport {
        lhs: l.mean,
        lhs_se: l.se,
        rhs: r.mean,
        rhs_se: r.se,
        z,
    })
}
