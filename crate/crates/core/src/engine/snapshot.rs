use serde::{Deserialize, Serialize};

use super::{PruneTarget, TreeRun};
use crate::cumulant::{classify_regime, kappa_profile, speed_v, OffspringLaw, Regime, RegimeTag};
use crate::error::{Error, Result};
use crate::perturb::{c_phi, Perturbation, TestFunction};
use crate::rng::Stream;

/// Distance by which the window floor must sit below the support of a test
/// function.
pub const COVERAGE_MARGIN: f64 = 0.25;

/// Limit law that a configuration falls under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoremId {
    /// Subcritical tilt, `L` constant: `PPP(θW∞(θ)e^{−θx}dx)`.
    ExponentialTail,
    /// Subcritical tilt, `L(x) = c·x^α`: `PPP(c₁θW∞(θ)e^{−θx}dx)`.
    RegularlyVaryingTail,
    /// Tilt at `θ₀`: `PPP(c₂θZ∞e^{−θx}dx)`.
    CriticalTilt,
    /// Tilt above `θ₀`: the perturbed extremal process of the walk itself.
    Supercritical,
}

impl std::fmt::Display for TheoremId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TheoremId::ExponentialTail => "exponential_tail",
            TheoremId::RegularlyVaryingTail => "regularly_varying_tail",
            TheoremId::CriticalTilt => "critical_tilt",
            TheoremId::Supercritical => "supercritical",
        })
    }
}

/// Reporting window for centred atoms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
}

impl Window {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid("window", format!("need finite lo < hi (got [{lo}, {hi}])")));
        }
        Ok(Window { lo, hi })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Deterministic shift `mₙ` of the extremal process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centering {
    pub n: u32,
    pub m_n: f64,
    pub theorem: TheoremId,
    pub regime: RegimeTag,
    pub warnings: Vec<String>,
}

impl Centering {
    /// Same centering moved by `delta`; used for negative controls.
    pub fn shifted(&self, delta: f64) -> Self {
        let mut c = self.clone();
        c.m_n += delta;
        c.warnings.push(format!("centering shifted by {delta}"));
        c
    }

    /// Absolute floor of `window`.
    pub fn floor(&self, window: &Window) -> f64 {
        self.m_n + window.lo
    }

    pub fn prune_target(&self, nu: &Perturbation, window: &Window) -> PruneTarget {
        PruneTarget {
            floor: self.floor(window),
            nu: *nu,
        }
    }
}

/// Regime-dependent centering for `n ≥ 2` generations.
///
/// The tail exponent of `ν` selects the regime. A point-mass `ν` has no tail and
/// is centred like the walk itself.
pub fn centering(law: &OffspringLaw, nu: &Perturbation, n: u32) -> Result<Centering> {
    if n < 2 {
        return Err(Error::invalid("n", format!("centering needs n ≥ 2 (got {n})")));
    }
    let nf = f64::from(n);
    let mut warnings = Vec::new();
    let supercritical = |regime: RegimeTag| -> Result<(f64, TheoremId, RegimeTag)> {
        let t0 = regime
            .theta0
            .ok_or_else(|| Error::Regime("θ₀ does not exist for this law".into()))?;
        let p0 = kappa_profile(law, t0)?;
        Ok((nf * p0.kappa_prime - 1.5 / t0 * nf.ln(), TheoremId::Supercritical, regime))
    };
    let (m_n, theorem, regime) = match nu {
        Perturbation::PointMass { .. } => {
            let v = speed_v(law)?;
            let t0 = crate::cumulant::theta0(law)?;
            supercritical(RegimeTag {
                regime: Regime::Supercritical,
                theta_nu: f64::INFINITY,
                theta0: t0,
                predicted_speed: v,
            })?
        }
        Perturbation::Tail(tail) => {
            let theta = tail.theta();
            let regime = classify_regime(law, theta)?;
            let p = kappa_profile(law, theta)?;
            let linear = nf * p.kappa / theta;
            match regime.regime {
                Regime::Subcritical if tail.alpha() == 0.0 => {
                    (linear + tail.c().ln() / theta, TheoremId::ExponentialTail, regime)
                }
                Regime::Subcritical => (linear + tail.l(nf).ln() / theta, TheoremId::RegularlyVaryingTail, regime),
                Regime::Critical => {
                    if !(tail.alpha() > -2.0 && tail.alpha() < 0.0) {
                        warnings.push(format!(
                            "α = {} lies outside (−2, 0); the critical limit law is not established there",
                            tail.alpha()
                        ));
                    }
                    let m = linear + tail.l(nf.sqrt()).ln() / theta - nf.ln() / (2.0 * theta);
                    (m, TheoremId::CriticalTilt, regime)
                }
                Regime::Supercritical => supercritical(regime)?,
            }
        }
    };
    Ok(Centering {
        n,
        m_n,
        theorem,
        regime,
        warnings,
    })
}

/// Perturbed extremal process of one tree, centred and cut to a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremalSnapshot {
    pub regime: RegimeTag,
    pub theorem: TheoremId,
    pub m_n: f64,
    pub window: Window,
    /// `S_u + Y_u − mₙ` inside the window, in decreasing order.
    pub atoms: Vec<f64>,
    /// `Mₙ − mₙ` over retained particles.
    pub raw_max_centered: f64,
    /// `max(S_u + Y_u) − mₙ` over retained particles.
    pub perturbed_max_centered: f64,
    /// `Wₙ(θ_ν)`, when `θ_ν` was tracked.
    pub w_proxy: Option<f64>,
    /// `Zₙ`, when `θ₀` exists.
    pub z_proxy: Option<f64>,
    pub population: usize,
    pub tree_seed: u64,
    pub snapshot_seed: u64,
    pub extremal_bound: f64,
}

/// Draws one perturbation per retained final particle and centres by `mₙ`.
///
/// Each particle owns a uniform `U` from its perturbation stream and
/// `Y = quantile(U)`. Since `Y ≥ t` exactly when `U ≤ ν([t, ∞))`, the quantile
/// is only solved for particles that can land in the window or beat the
/// running maximum, which keeps both the atoms and the maximum exact.
pub fn extremal_snapshot(
    run: &TreeRun,
    nu: &Perturbation,
    centering: &Centering,
    window: Window,
    snapshot_seed: u64,
) -> Result<ExtremalSnapshot> {
    if centering.n != run.n {
        return Err(Error::invalid(
            "centering",
            format!("computed for n = {} but the tree has n = {}", centering.n, run.n),
        ));
    }
    let m_n = centering.m_n;
    let floor = m_n + window.lo;
    let ceiling = m_n + window.hi;
    let raw_max = run.max_n().unwrap_or(f64::NEG_INFINITY);
    let mut best = raw_max + nu.lower_bound();
    let mut atoms = Vec::new();
    for (&s, &label) in run.final_positions.iter().zip(&run.final_labels) {
        let y = match nu {
            Perturbation::PointMass { at } => *at,
            Perturbation::Tail(t) => {
                let u = Stream::perturbation(label, snapshot_seed).open_unit();
                if u > t.survival(floor.min(best) - s) {
                    continue;
                }
                t.quantile(u)
            }
        };
        let value = s + y;
        best = best.max(value);
        if value >= floor && value <= ceiling {
            atoms.push(value - m_n);
        }
    }
    atoms.sort_by(|a, b| b.total_cmp(a));
    let w_proxy = match nu {
        Perturbation::Tail(t) => run.w_n(t.theta()),
        Perturbation::PointMass { .. } => None,
    };
    Ok(ExtremalSnapshot {
        regime: centering.regime,
        theorem: centering.theorem,
        m_n,
        window,
        atoms,
        raw_max_centered: raw_max - m_n,
        perturbed_max_centered: best - m_n,
        w_proxy,
        z_proxy: run.z_n(),
        population: run.population(),
        tree_seed: run.seed,
        snapshot_seed,
        extremal_bound: run.ledger.discarded_extremal_bound,
    })
}

/// Finite-`n` stand-in for the martingale limit in the predicted intensity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Proxy {
    W,
    Z,
}

impl Proxy {
    /// Proxy value of a snapshot, clamped at 0. The limits are non-negative
    /// but `Zₙ` is not, and a negative value would push the predicted Laplace
    /// term above 1 (and overflow it for the rare runs far ahead of `mₙ`).
    pub fn intensity(self, snap: &ExtremalSnapshot) -> Result<f64> {
        match self {
            Proxy::W => snap.w_proxy,
            Proxy::Z => snap.z_proxy,
        }
        .map(|q| q.max(0.0))
        .ok_or_else(|| Error::Regime(format!("snapshot has no {self:?} proxy")))
    }
}

/// A test function together with everything needed to predict its Laplace
/// term: `exp(−c·c_φ(θ)·proxy)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceProbe {
    pub phi: TestFunction,
    pub c_phi: f64,
    pub constant: f64,
    pub proxy: Proxy,
}

impl LaplaceProbe {
    pub fn new(phi: TestFunction, theta: f64, constant: f64, proxy: Proxy) -> Result<Self> {
        let c = c_phi(&phi, theta)?;
        Ok(LaplaceProbe {
            phi,
            c_phi: c,
            constant,
            proxy,
        })
    }

    /// `(exp(−Σ φ(atoms)), exp(−c·c_φ(θ)·max(proxy, 0)))`.
    pub fn pair(&self, snap: &ExtremalSnapshot) -> Result<(f64, f64)> {
        let Some((lo, hi)) = self.phi.support() else {
            return Ok((1.0, 1.0));
        };
        if snap.window.lo > lo - COVERAGE_MARGIN || snap.window.hi < hi {
            return Err(Error::Window(format!(
                "window [{}, {}] must contain [{}, {}] with margin {COVERAGE_MARGIN} below",
                snap.window.lo, snap.window.hi, lo, hi
            )));
        }
        let empirical = (-snap.atoms.iter().map(|&a| self.phi.eval(a)).sum::<f64>()).exp();
        if self.constant == 0.0 {
            return Ok((empirical, 1.0));
        }
        let proxy = self.proxy.intensity(snap)?;
        Ok((empirical, (-self.constant * self.c_phi * proxy).exp()))
    }
}

/// One-off form of [`LaplaceProbe::pair`].
pub fn laplace_pairing(
    snap: &ExtremalSnapshot,
    phi: &TestFunction,
    theta: f64,
    constant: f64,
    proxy: Proxy,
) -> Result<(f64, f64)> {
    LaplaceProbe::new(phi.clone(), theta, constant, proxy)?.pair(snap)
}

/// JSON sidecar written next to a snapshot CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotSidecar {
    pub run_id: u64,
    pub m_n: f64,
    pub w_proxy: Option<f64>,
    pub z_proxy: Option<f64>,
    pub mn_centered: f64,
    pub perturbed_max_centered: f64,
    pub population: usize,
    pub atoms: usize,
    pub ledger_extremal_bound: f64,
    pub ledger_count_pruned: u64,
    pub tree_seed: u64,
    pub snapshot_seed: u64,
}

impl SnapshotSidecar {
    pub fn new(run_id: u64, snap: &ExtremalSnapshot, run: &TreeRun) -> Self {
        SnapshotSidecar {
            run_id,
            m_n: snap.m_n,
            w_proxy: snap.w_proxy,
            z_proxy: snap.z_proxy,
            mn_centered: snap.raw_max_centered,
            perturbed_max_centered: snap.perturbed_max_centered,
            population: snap.population,
            atoms: snap.atoms.len(),
            ledger_extremal_bound: run.ledger.discarded_extremal_bound,
            ledger_count_pruned: run.ledger.count_pruned,
            tree_seed: snap.tree_seed,
            snapshot_seed: snap.snapshot_seed,
        }
    }
}
