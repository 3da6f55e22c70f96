use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{paired_verdict, Proxy, TheoremId, TheoremTarget, Verdict};
use crate::cumulant::OffspringLaw;
use crate::engine::{
    centering, extremal_snapshot, simulate_in, Centering, ExtremalSnapshot, LaplaceProbe, SimParams, SnapshotSidecar,
    Window, Workspace,
};
use crate::error::{Error, Result};
use crate::perturb::{Perturbation, TestFunction};
use crate::rng::derive_seed;
use crate::stats::{estimate, Estimate, Moments, Z95};

/// Trees behind a Laplace or max-law suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub law: OffspringLaw,
    pub nu: Perturbation,
    pub n: u32,
    pub runs: usize,
    pub window: Window,
    pub budget: usize,
    pub eps_prune: f64,
    pub prune_above: Option<usize>,
    /// Shift added to `mₙ` before anything else; nonzero only to run a
    /// deliberately corrupted suite.
    #[serde(default)]
    pub centering_offset: f64,
    /// Further shift added to `mₙ` for the negative control.
    pub control_shift: f64,
    pub seed: u64,
}

/// One tree seen through the true centering and through the corrupted one.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub sidecar: SnapshotSidecar,
    pub snapshot: ExtremalSnapshot,
    pub control: ExtremalSnapshot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotBatch {
    pub target: TheoremTarget,
    pub centering: Centering,
    pub control_centering: Centering,
    pub records: Vec<RunRecord>,
}

impl SnapshotBatch {
    /// Largest per-run extremal bound from the pruning ledgers.
    pub fn max_extremal_bound(&self) -> f64 {
        self.records.iter().map(|r| r.snapshot.extremal_bound).fold(0.0, f64::max)
    }

    pub fn pruned_runs(&self) -> usize {
        self.records.iter().filter(|r| r.sidecar.ledger_count_pruned > 0).count()
    }
}

/// Simulates `cfg.runs` trees in parallel and snapshots each of them.
///
/// Run `i` uses tree seed `derive_seed(seed, "tree", i)` and snapshot seed
/// `derive_seed(seed, "snapshot", i)`; results are collected in run order, so
/// the batch does not depend on the number of worker threads.
pub fn run_batch(target: &TheoremTarget, cfg: &SuiteConfig) -> Result<SnapshotBatch> {
    target.check(&cfg.law, &cfg.nu)?;
    if cfg.runs < 2 {
        return Err(Error::invalid("runs", "need at least two runs"));
    }
    let mut centring = centering(&cfg.law, &cfg.nu, cfg.n)?;
    if cfg.centering_offset != 0.0 {
        centring = centring.shifted(cfg.centering_offset);
    }
    let control = centring.shifted(cfg.control_shift);
    let prune_target = centring.prune_target(&cfg.nu, &cfg.window);
    let control_target = control.prune_target(&cfg.nu, &cfg.window);
    if control_target.floor < prune_target.floor {
        return Err(Error::invalid("control_shift", "must be non-negative"));
    }
    let params = SimParams {
        thetas: match (target.proxy, cfg.nu) {
            (Some(Proxy::W), Perturbation::Tail(t)) => vec![t.theta()],
            _ => Vec::new(),
        },
        budget: cfg.budget,
        eps_prune: cfg.eps_prune,
        prune_above: cfg.prune_above,
        derivative: target.proxy == Some(Proxy::Z),
        ..SimParams::new(cfg.n, Vec::new())
    };
    let records = (0..cfg.runs as u64)
        .into_par_iter()
        .map_init(Workspace::default, |ws, i| {
            let run = simulate_in(ws, &cfg.law, &params, Some(&prune_target), derive_seed(cfg.seed, "tree", i))?;
            let snap_seed = derive_seed(cfg.seed, "snapshot", i);
            let snapshot = extremal_snapshot(&run, &cfg.nu, &centring, cfg.window, snap_seed)?;
            let control = extremal_snapshot(&run, &cfg.nu, &control, cfg.window, snap_seed)?;
            let sidecar = SnapshotSidecar::new(i, &snapshot, &run);
            ws.recycle(run);
            Ok(RunRecord {
                sidecar,
                snapshot,
                control,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SnapshotBatch {
        target: target.clone(),
        centering: centring,
        control_centering: control,
        records,
    })
}

/// Paired comparison for one test function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceRow {
    pub phi: TestFunction,
    pub c_phi: f64,
    /// Mean of `exp(−Σ φ(atoms))`.
    pub empirical: Estimate,
    /// Mean of `exp(−c·c_φ(θ)·max(proxy, 0))` over the same trees.
    pub predicted: Estimate,
    /// Mean of the per-tree differences `empirical − predicted`.
    pub difference: Estimate,
    pub z: f64,
    pub ci_width: f64,
    pub verdict: Verdict,
    /// Same comparison with the centering moved by the control shift.
    pub control_difference: Estimate,
    pub control_verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceSection {
    pub theorem: TheoremId,
    pub n: u32,
    pub runs: usize,
    pub m_n: f64,
    pub control_shift: f64,
    pub tolerance: f64,
    pub rows: Vec<LaplaceRow>,
    /// Worst row verdict, with every control required to fail.
    pub verdict: Verdict,
}

/// `[empirical, predicted, difference]` estimates from per-tree pairs.
fn paired(snaps: impl Iterator<Item = Result<(f64, f64)>>) -> Result<[Estimate; 3]> {
    let mut m = [Moments::default(); 3];
    for p in snaps {
        let (e, q) = p?;
        m[0].push(e);
        m[1].push(q);
        m[2].push(e - q);
    }
    Ok(m.map(|x| x.estimate()))
}

/// Paired Laplace comparison for each test function, with a corrupted-centering
/// control per function.
pub fn laplace_suite(batch: &SnapshotBatch, phis: &[TestFunction], tolerance: f64) -> Result<LaplaceSection> {
    let target = &batch.target;
    let (Some(constant), Some(proxy)) = (target.constant, target.proxy) else {
        return Err(Error::Regime(format!("no Laplace prediction for the {} regime", target.theorem)));
    };
    let mut rows = Vec::with_capacity(phis.len());
    for phi in phis {
        let probe = LaplaceProbe::new(phi.clone(), target.theta, constant, proxy)?;
        let [empirical, predicted, difference] = paired(batch.records.iter().map(|r| probe.pair(&r.snapshot)))?;
        let [control_emp, control_pred, control_difference] = paired(batch.records.iter().map(|r| probe.pair(&r.control)))?;
        rows.push(LaplaceRow {
            phi: phi.clone(),
            c_phi: probe.c_phi,
            z: difference.z_against(0.0),
            ci_width: 2.0 * Z95 * difference.se,
            verdict: paired_verdict(&empirical, &predicted, &difference, tolerance),
            control_verdict: paired_verdict(&control_emp, &control_pred, &control_difference, tolerance),
            empirical,
            predicted,
            difference,
            control_difference,
        });
    }
    let verdict = Verdict::combine(rows.iter().flat_map(|r| [r.verdict, r.control_verdict.as_control()]));
    Ok(LaplaceSection {
        theorem: target.theorem,
        n: batch.centering.n,
        runs: batch.records.len(),
        m_n: batch.centering.m_n,
        control_shift: batch.control_centering.m_n - batch.centering.m_n,
        tolerance,
        rows,
        verdict,
    })
}

/// Empirical against predicted law of the centred perturbed maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxLawSection {
    pub theorem: TheoremId,
    pub runs: usize,
    pub grid: Vec<f64>,
    pub empirical_cdf: Vec<f64>,
    /// Mean over trees of `exp(−c·max(proxy, 0)·e^{−θx})`.
    pub predicted_cdf: Vec<f64>,
    pub sup_distance: f64,
    pub argmax: f64,
    pub tolerance: f64,
    /// Dvoretzky–Kiefer–Wolfowitz 95% band of the empirical CDF; the verdict is
    /// inconclusive when it exceeds the tolerance.
    pub dkw_band: f64,
    /// `max(1 − F̂, 1 − F)` at the right end of the grid.
    pub upper_end_gap: f64,
    /// Whether `F̂ ≥ F − 0.05` at the left end of the grid.
    pub lower_end_ok: bool,
    pub verdict: Verdict,
    pub control_sup_distance: f64,
    pub control_verdict: Verdict,
}

fn ecdf(sorted: &[f64], x: f64) -> f64 {
    sorted.partition_point(|&v| v <= x) as f64 / sorted.len() as f64
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

/// Max-law comparison on an increasing grid at or above the window floor.
pub fn max_law_suite(batch: &SnapshotBatch, grid: &[f64], tolerance: f64) -> Result<MaxLawSection> {
    let target = &batch.target;
    let (Some(constant), Some(proxy)) = (target.constant, target.proxy) else {
        return Err(Error::Regime(format!("no max-law prediction for the {} regime", target.theorem)));
    };
    if grid.is_empty() || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("grid", "must be a non-empty increasing list"));
    }
    let lo = batch.records.first().map_or(f64::NEG_INFINITY, |r| r.snapshot.window.lo);
    if grid[0] < lo {
        return Err(Error::Window(format!("grid starts at {} below the window floor {lo}", grid[0])));
    }
    let proxies = batch
        .records
        .iter()
        .map(|r| proxy.intensity(&r.snapshot))
        .collect::<Result<Vec<_>>>()?;
    let maxima = sorted(batch.records.iter().map(|r| r.snapshot.perturbed_max_centered).collect());
    let control = sorted(batch.records.iter().map(|r| r.control.perturbed_max_centered).collect());
    let predicted_cdf: Vec<f64> = grid
        .iter()
        .map(|&x| {
            let scale = constant * (-target.theta * x).exp();
            estimate(proxies.iter().map(|q| (-scale * q).exp())).mean
        })
        .collect();
    let empirical_cdf: Vec<f64> = grid.iter().map(|&x| ecdf(&maxima, x)).collect();
    let sup = |emp: &mut dyn Iterator<Item = f64>| {
        emp.zip(&predicted_cdf)
            .zip(grid)
            .map(|((e, p), &x)| ((e - p).abs(), x))
            .fold((0.0, grid[0]), |a, b| if b.0 > a.0 { b } else { a })
    };
    let (sup_distance, argmax) = sup(&mut empirical_cdf.iter().copied());
    let (control_sup_distance, _) = sup(&mut grid.iter().map(|&x| ecdf(&control, x)));
    let runs = batch.records.len();
    let dkw_band = ((2.0 / 0.05f64).ln() / (2.0 * runs as f64)).sqrt();
    let judge = |d: f64| {
        if dkw_band > tolerance {
            Verdict::Inconclusive
        } else if d <= tolerance {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    };
    let last = grid.len() - 1;
    Ok(MaxLawSection {
        theorem: target.theorem,
        runs,
        upper_end_gap: (1.0 - empirical_cdf[last]).max(1.0 - predicted_cdf[last]),
        lower_end_ok: empirical_cdf[0] >= predicted_cdf[0] - 0.05,
        verdict: judge(sup_distance),
        control_verdict: judge(control_sup_distance),
        grid: grid.to_vec(),
        empirical_cdf,
        predicted_cdf,
        sup_distance,
        argmax,
        tolerance,
        dkw_band,
        control_sup_distance,
    })
}

impl MaxLawSection {
    /// Verdict with the control required to fail.
    pub fn overall(&self) -> Verdict {
        Verdict::combine([self.verdict, self.control_verdict.as_control()])
    }
}
