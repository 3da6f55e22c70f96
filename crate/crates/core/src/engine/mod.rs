//! Breadth-first simulation of the branching random walk.
//!
//! Only the current generation is held in memory, as flat arrays of positions
//! and genealogical labels. Each particle draws its offspring from a stream
//! keyed by its own label, so the tree is a pure function of the seed no matter
//! how the generation is split into chunks. When a generation grows past
//! `prune_above`, particles whose many-to-one bound on reaching the window floor
//! is negligible are dropped and their expected contribution is written to a
//! [`PruneLedger`].

mod checks;
mod prune;
mod snapshot;

pub use checks::{martingale_step_check, StepReport};
pub use prune::{DiscardedWeight, PruneLedger, PruneTarget};
pub use snapshot::{
    centering, extremal_snapshot, laplace_pairing, Centering, ExtremalSnapshot, LaplaceProbe, Proxy, SnapshotSidecar,
    TheoremId, Window, COVERAGE_MARGIN,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cumulant::{kappa_profile, theta0, CumulantProfile, OffspringLaw};
use crate::error::{Error, Result};
use crate::rng::{child_label, root_label, Stream};
use prune::ChernoffBound;

/// Particles per parallel work unit. Fixed so reductions are order-stable.
const CHUNK: usize = 1 << 12;

/// Smallest admissible memory budget.
pub const MIN_BUDGET: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub n: u32,
    /// Tilts at which `Wₖ(θ)` is tracked.
    pub thetas: Vec<f64>,
    /// Hard cap on the retained population of any generation.
    pub budget: usize,
    pub eps_prune: f64,
    /// Population above which pruning is attempted; defaults to `budget`.
    #[serde(default)]
    pub prune_above: Option<usize>,
    /// Record martingales at every generation instead of only the last.
    #[serde(default)]
    pub history: bool,
    /// Track `Zₖ` at `θ₀`.
    #[serde(default = "yes")]
    pub derivative: bool,
}

fn yes() -> bool {
    true
}

impl SimParams {
    pub fn new(n: u32, thetas: Vec<f64>) -> Self {
        SimParams {
            n,
            thetas,
            budget: 1 << 24,
            eps_prune: 1e-3,
            prune_above: None,
            history: false,
            derivative: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("n", "need at least one generation"));
        }
        if self.budget < MIN_BUDGET {
            return Err(Error::invalid("budget", format!("must be at least {MIN_BUDGET} (got {})", self.budget)));
        }
        if !(self.eps_prune > 0.0 && self.eps_prune.is_finite()) {
            return Err(Error::invalid("eps_prune", format!("must be positive (got {})", self.eps_prune)));
        }
        Ok(())
    }
}

/// Statistics of one generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: u32,
    pub population: usize,
    /// `Mₖ` over retained particles; absent after extinction.
    pub max: Option<f64>,
    /// `Wₖ(θ)` in the order of [`SimParams::thetas`].
    pub w: Vec<f64>,
    /// `Zₖ` at `θ₀`, when `θ₀` exists and the derivative martingale is tracked.
    pub z: Option<f64>,
}

/// One realisation of the tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeRun {
    pub law: OffspringLaw,
    pub n: u32,
    pub seed: u64,
    pub thetas: Vec<f64>,
    pub theta0: Option<f64>,
    /// Generation 0, the last generation, and every generation in between
    /// when history was requested.
    pub history: Vec<GenerationStats>,
    pub ledger: PruneLedger,
    pub extinct: bool,
    #[serde(skip)]
    pub final_positions: Vec<f64>,
    #[serde(skip)]
    pub final_labels: Vec<u64>,
}

impl TreeRun {
    pub fn last(&self) -> &GenerationStats {
        self.history.last().expect("generation 0 is always recorded")
    }

    pub fn generation(&self, k: u32) -> Option<&GenerationStats> {
        self.history.iter().find(|g| g.generation == k)
    }

    /// `Wₙ(θ)` for a tracked tilt.
    pub fn w_n(&self, theta: f64) -> Option<f64> {
        let i = self.thetas.iter().position(|&t| t == theta)?;
        self.last().w.get(i).copied()
    }

    pub fn z_n(&self) -> Option<f64> {
        self.last().z
    }

    pub fn max_n(&self) -> Option<f64> {
        self.last().max
    }

    pub fn population(&self) -> usize {
        self.last().population
    }

    pub fn valid(&self) -> bool {
        self.ledger.within_tolerance()
    }
}

struct Trackers {
    profiles: Vec<CumulantProfile>,
    critical: Option<CumulantProfile>,
}

impl Trackers {
    fn stats(&self, k: u32, pos: &[f64]) -> GenerationStats {
        let max = chunked(pos, |c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        let kf = f64::from(k);
        let w = self
                .profiles
            .iter()
                .map(|p| {
                let shift = kf * p.kappa;
                chunked(pos, |c| c.iter().map(|&s| (p.theta * s - shift).exp()).sum::<f64>())
                    .into_iter()
                    .sum()
            })
            .collect();
        let z = self.critical.as_ref().map(|p| {
            let (drift, shift) = (kf * p.kappa_prime, kf * p.kappa);
            chunked(pos, |c| c.iter().map(|&s| (drift - s) * (p.theta * s - shift).exp()).sum::<f64>())
                .into_iter()
                .sum()
        });
        GenerationStats {
            generation: k,
            population: pos.len(),
            max: (!pos.is_empty()).then_some(max),
            w,
            z,
        }
    }
}

/// Applies `f` to fixed-size chunks, in parallel, returning results in order.
fn chunked<T: Send, F>(xs: &[f64], f: F) -> Vec<T>
where
    F: Fn(&[f64]) -> T + Sync + Send,
{
    if xs.len() <= CHUNK {
        vec![f(xs)]
    } else {
        xs.par_chunks(CHUNK).map(f).collect()
    }
}

/// Writes the children of `pos` into `out_pos`/`out_lab`, which are sized to
/// hold exactly that many.
fn fill_children(law: &OffspringLaw, pos: &[f64], lab: &[u64], out_pos: &mut [f64], out_lab: &mut [u64]) {
    let count = law.count();
    let disp = law.displacement().sampler();
    let mut o = 0;
    for (&s, &l) in pos.iter().zip(lab) {
        let mut rng = Stream::reproduction(l);
        let k = count.sample(&mut rng) as usize;
        for (r, (p, q)) in out_pos[o..o + k].iter_mut().zip(&mut out_lab[o..o + k]).enumerate() {
            *p = s + disp.sample(&mut rng);
            *q = child_label(l, r as u32);
        }
        o += k;
    }
    debug_assert_eq!(o, out_pos.len());
}

/// Sequential form of [`fill_children`] that appends instead of overwriting.
fn push_children(law: &OffspringLaw, pos: &[f64], lab: &[u64], out_pos: &mut Vec<f64>, out_lab: &mut Vec<u64>) {
    let count = law.count();
    let disp = law.displacement().sampler();
    let hint = (pos.len() as f64 * law.mean_offspring() * 1.05) as usize;
    out_pos.reserve(hint);
    out_lab.reserve(hint);
    for (&s, &l) in pos.iter().zip(lab) {
        let mut rng = Stream::reproduction(l);
        let k = count.sample(&mut rng);
        for r in 0..k {
            out_pos.push(s + disp.sample(&mut rng));
            out_lab.push(child_label(l, r));
        }
    }
}

/// Number of children of each chunk of parents.
fn chunk_sizes(law: &OffspringLaw, lab: &[u64]) -> Vec<usize> {
    match law.fixed_count() {
        Some(k) => lab.chunks(CHUNK).map(|c| c.len() * k as usize).collect(),
        None => {
            let count = law.count();
            let sizes = |c: &[u64]| {
                c.iter()
                    .map(|&l| count.sample(&mut Stream::reproduction(l)) as usize)
                    .sum::<usize>()
            };
            if lab.len() <= CHUNK {
                vec![sizes(lab)]
            } else {
                lab.par_chunks(CHUNK).map(sizes).collect()
            }
        }
    }
}

/// Replaces `out` with the next generation of `(pos, lab)`, reusing its storage.
fn reproduce(law: &OffspringLaw, pos: &[f64], lab: &[u64], out_pos: &mut Vec<f64>, out_lab: &mut Vec<u64>) {
    out_pos.clear();
    out_lab.clear();
    if pos.len() <= CHUNK || rayon::current_num_threads() == 1 {
        push_children(law, pos, lab, out_pos, out_lab);
        return;
    }
    let sizes = chunk_sizes(law, lab);
    let total = sizes.iter().sum();
    out_pos.resize(total, 0.0);
    out_lab.resize(total, 0);
    let mut jobs = Vec::with_capacity(sizes.len());
    let (mut rest_pos, mut rest_lab) = (&mut out_pos[..], &mut out_lab[..]);
    for (i, &size) in sizes.iter().enumerate() {
        let (p, tail_p) = rest_pos.split_at_mut(size);
        let (l, tail_l) = rest_lab.split_at_mut(size);
        let from = i * CHUNK;
        let to = (from + CHUNK).min(pos.len());
        jobs.push((&pos[from..to], &lab[from..to], p, l));
        rest_pos = tail_p;
        rest_lab = tail_l;
    }
    jobs.into_par_iter()
        .for_each(|(pp, pl, op, ol)| fill_children(law, pp, pl, op, ol));
}

/// Reusable particle storage. Passing the same workspace to successive
/// [`simulate_in`] calls, and handing finished runs back with
/// [`Workspace::recycle`], avoids reallocating generation buffers.
#[derive(Debug, Default)]
pub struct Workspace {
    pos: Vec<f64>,
    lab: Vec<u64>,
    next_pos: Vec<f64>,
    next_lab: Vec<u64>,
}

impl Workspace {
    /// Takes back the final-generation buffers of a run that is no longer needed.
    pub fn recycle(&mut self, run: TreeRun) {
        if run.final_positions.capacity() > self.pos.capacity() {
            self.pos = run.final_positions;
            self.lab = run.final_labels;
        }
    }
}

struct Pruner<'a> {
    bound: ChernoffBound,
    trackers: &'a Trackers,
    n: u32,
    eps: f64,
}

impl Pruner<'_> {
    /// Drops every particle whose bound is below `eps/(n·N_k)`; the extremal
    /// ledger therefore grows by at most `eps/n` per generation.
    fn prune(&self, k: u32, pos: &mut Vec<f64>, lab: &mut Vec<u64>, ledger: &mut PruneLedger) {
        let remaining = self.n - k;
        let log_tau = (self.eps / (f64::from(self.n) * pos.len() as f64)).ln();
        let (s_star, line) = self.bound.threshold(remaining, log_tau);
        let kf = f64::from(k);
        let mut keep = 0;
        let mut pruned = 0u64;
        for i in 0..pos.len() {
            let s = pos[i];
            if s < s_star {
                pruned += 1;
                ledger.discarded_extremal_bound += self.bound.eval(line, remaining, s);
                for (d, p) in ledger.discarded_weight.iter_mut().zip(&self.trackers.profiles) {
                    d.weight += (p.theta * s - kf * p.kappa).exp();
                }
                if let Some(p) = &self.trackers.critical {
                    ledger.discarded_derivative += (kf * p.kappa_prime - s) * (p.theta * s - kf * p.kappa).exp();
                }
            } else {
                pos[keep] = s;
                lab[keep] = lab[i];
                keep += 1;
            }
        }
        pos.truncate(keep);
        lab.truncate(keep);
        if pruned > 0 {
            ledger.count_pruned += pruned;
            ledger.pruned_generations.push(k);
        }
    }
}

/// Simulates one tree from a single particle at the origin.
///
/// With `target` set, generations larger than `prune_above` are pruned against
/// the target floor. Without it the simulation is exact and fails with
/// [`Error::Budget`] once a generation exceeds the budget.
pub fn simulate(law: &OffspringLaw, params: &SimParams, target: Option<&PruneTarget>, seed: u64) -> Result<TreeRun> {
    simulate_in(&mut Workspace::default(), law, params, target, seed)
}

/// [`simulate`] with caller-provided storage.
pub fn simulate_in(
    ws: &mut Workspace,
    law: &OffspringLaw,
    params: &SimParams,
    target: Option<&PruneTarget>,
    seed: u64,
) -> Result<TreeRun> {
    params.validate()?;
    let profiles = params
        .thetas
        .iter()
        .map(|&t| kappa_profile(law, t))
        .collect::<Result<Vec<_>>>()?;
    let t0 = theta0(law)?;
    let critical = match t0 {
        Some(t) if params.derivative => Some(kappa_profile(law, t)?),
        _ => None,
    };
    let trackers = Trackers { profiles, critical };
    let pruner = target
        .map(|t| {
            Ok::<_, Error>(Pruner {
                bound: ChernoffBound::new(law, t)?,
                trackers: &trackers,
                n: params.n,
                eps: params.eps_prune,
            })
        })
        .transpose()?;
    let prune_above = params.prune_above.unwrap_or(params.budget);

    let mut ledger = PruneLedger::new(params.eps_prune, &params.thetas);
    let mut pos = std::mem::take(&mut ws.pos);
    let mut lab = std::mem::take(&mut ws.lab);
    let mut next_pos = std::mem::take(&mut ws.next_pos);
    let mut next_lab = std::mem::take(&mut ws.next_lab);
    pos.clear();
    pos.push(0.0);
    lab.clear();
    lab.push(root_label(seed));
    let mut history = vec![trackers.stats(0, &pos)];
    let mut extinct = false;
    for k in 1..=params.n {
        reproduce(law, &pos, &lab, &mut next_pos, &mut next_lab);
        std::mem::swap(&mut pos, &mut next_pos);
        std::mem::swap(&mut lab, &mut next_lab);
        if let Some(p) = &pruner {
            if pos.len() > prune_above {
                p.prune(k, &mut pos, &mut lab, &mut ledger);
            }
        }
        if pos.len() > params.budget {
            return Err(Error::Budget {
                generation: k,
                population: pos.len(),
                budget: params.budget,
            });
        }
        if pos.is_empty() {
            extinct = true;
            history.push(trackers.stats(k, &pos));
            break;
        }
        if params.history || k == params.n {
            history.push(trackers.stats(k, &pos));
        }
    }
    ws.next_pos = next_pos;
    ws.next_lab = next_lab;
    Ok(TreeRun {
        law: *law,
        n: params.n,
        seed,
        thetas: params.thetas.clone(),
        theta0: t0,
        history,
        ledger,
        extinct,
        final_positions: pos,
        final_labels: lab,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cumulant::{CountLaw, DisplacementLaw};
    use crate::perturb::{Perturbation, TailLaw};
    use crate::rng::derive_seed;
    use crate::stats::Moments;

    fn bg() -> OffspringLaw {
        OffspringLaw::binary_gaussian()
    }

    #[test]
    fn generation_zero_is_exact() {
        let run = simulate(&bg(), &SimParams::new(3, vec![0.5, 1.0]), None, 1).unwrap();
        let g0 = &run.history[0];
        assert_eq!(g0.w, vec![1.0, 1.0]);
        assert_eq!(g0.z, Some(0.0));
        assert_eq!(g0.max, Some(0.0));
    }

    #[test]
    fn binary_counts_are_exact() {
        let run = simulate(&bg(), &SimParams::new(10, vec![1.0]), None, 7).unwrap();
        assert_eq!(run.population(), 1024);
        assert_eq!(run.final_positions.len(), 1024);
        assert!(!run.extinct);
    }

    #[test]
    fn one_generation_matches_formula() {
        let run = simulate(&bg(), &SimParams::new(1, vec![1.0]), None, 3).unwrap();
        let kappa = std::f64::consts::LN_2 + 0.5;
        let w: f64 = run.final_positions.iter().map(|x| (x - kappa).exp()).sum();
        assert!((run.w_n(1.0).unwrap() - w).abs() < 1e-15);
    }

    #[test]
    fn w1_has_unit_mean_and_z1_zero_mean() {
        let law = bg();
        let t0 = theta0(&law).unwrap().unwrap();
        let params = SimParams::new(1, vec![1.0]);
        let (mut w, mut z) = (Moments::default(), Moments::default());
        for i in 0..100_000 {
            let run = simulate(&law, &params, None, derive_seed(11, "tree", i)).unwrap();
            w.push(run.w_n(1.0).unwrap());
            z.push(run.z_n().unwrap());
        }
        assert!(w.estimate().z_against(1.0).abs() < 3.0, "{:?}", w.estimate());
        assert!(z.estimate().z_against(0.0).abs() < 3.0, "{:?}", z.estimate());
        assert!(t0 > 1.0);
    }

    #[test]
    fn history_tracks_every_generation() {
        let mut params = SimParams::new(6, vec![1.0]);
        params.history = true;
        let run = simulate(&bg(), &params, None, 5).unwrap();
        assert_eq!(run.history.len(), 7);
        for (k, g) in run.history.iter().enumerate() {
            assert_eq!(g.generation, k as u32);
            assert_eq!(g.population, 1 << k);
        }
    }

    #[test]
    fn exact_budget_overflow_is_an_error() {
        let mut params = SimParams::new(12, vec![1.0]);
        params.budget = 2000;
        assert!(matches!(
            simulate(&bg(), &params, None, 1),
            Err(Error::Budget { generation: 11, .. })
        ));
    }

    #[test]
    fn thread_count_does_not_change_the_tree() {
        let mut params = SimParams::new(15, vec![0.8, 1.0]);
        params.history = true;
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| simulate(&bg(), &params, None, 99).unwrap());
        let b = four.install(|| simulate(&bg(), &params, None, 99).unwrap());
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.final_positions, b.final_positions);
    }

    #[test]
    fn pruned_run_keeps_a_subset_and_accounts_for_the_rest() {
        let law = bg();
        let nu = Perturbation::Tail(TailLaw::new(2.0, 0.0, 1.0).unwrap());
        let mut params = SimParams::new(14, vec![1.0]);
        let exact = simulate(&law, &params, None, 4).unwrap();
        params.budget = 1 << 13;
        let target = PruneTarget { floor: 12.0, nu };
        let pruned = simulate(&law, &params, Some(&target), 4).unwrap();
        assert!(pruned.ledger.count_pruned > 0);
        assert_eq!(pruned.ledger.pruned_generations, vec![14]);
        assert_eq!(pruned.population() as u64 + pruned.ledger.count_pruned, 1 << 14);
        assert!(pruned.ledger.discarded_extremal_bound <= params.eps_prune);
        let labels: std::collections::HashSet<u64> = exact.final_labels.iter().copied().collect();
        assert!(pruned.final_labels.iter().all(|l| labels.contains(l)));
        let gap = exact.w_n(1.0).unwrap() - pruned.w_n(1.0).unwrap();
        let d = pruned.ledger.weight_for(1.0).unwrap();
        assert!((gap - d).abs() <= 1e-12 * exact.w_n(1.0).unwrap(), "{gap} vs {d}");
    }

    #[test]
    fn geometric_counts_never_go_extinct() {
        let law = OffspringLaw::new(CountLaw::Geometric { mean: 1.5 }, DisplacementLaw::Uniform { a: -1.0, b: 1.0 }).unwrap();
        let run = simulate(&law, &SimParams::new(8, vec![0.5]), None, 2).unwrap();
        assert!(!run.extinct && run.population() >= 1);
    }

    #[test]
    fn poisson_extinction_is_flagged() {
        let law = OffspringLaw::new(CountLaw::Poisson { lambda: 1.05 }, DisplacementLaw::Gaussian { mu: 0.0, sigma2: 1.0 })
            .unwrap();
        let extinct = (0..200)
            .filter(|&i| simulate(&law, &SimParams::new(8, vec![0.5]), None, i).unwrap().extinct)
            .count();
        assert!(extinct > 0);
    }
}
