use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context};
use lpmbrw::cumulant::{classify_regime, kappa_profile, speed_v, theta0, CumulantProfile, RegimeTag};
use lpmbrw::engine::{centering, extremal_snapshot, simulate, Centering, SimParams, SnapshotSidecar, TreeRun};
use lpmbrw::rng::{derive_seed, Stream};
use lpmbrw::spine::many_to_one_check;
use lpmbrw::verify::{
    c1, c2, laplace_suite, max_law_suite, run_batch, speed_check, stabilization_check, ManyToOneSection,
    StabilityConfig, SuiteConfig, TheoremTarget, Tolerances, Verdict, VerificationReport,
};
use lpmbrw::{OffspringLaw, Perturbation};
use serde::Serialize;

use crate::config::{ManyToOneSpec, RunConfig};
use crate::manifest::{verify_manifest, OutputDir};

/// Deterministic analysis of a configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Analysis {
    pub config_hash: String,
    pub law: OffspringLaw,
    pub tail: Perturbation,
    pub theta0: Option<f64>,
    pub speed_v: f64,
    pub profile_at_theta0: Option<CumulantProfile>,
    pub profile_at_theta_nu: Option<CumulantProfile>,
    pub regime: Option<RegimeTag>,
    pub target: TheoremTarget,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub centering: Option<Centering>,
}

impl Analysis {
    pub fn text(&self) -> String {
        let mut s = String::new();
        let w = &mut s;
        let _ = writeln!(w, "config hash: {}", self.config_hash);
        match self.theta0 {
            Some(t) => {
                let _ = writeln!(w, "θ₀ = {t:.10}");
            }
            None => {
                let _ = writeln!(w, "θ₀ does not exist");
            }
        }
        let _ = writeln!(w, "v = {:.10}", self.speed_v);
        if let Some(p) = &self.profile_at_theta_nu {
            let _ = writeln!(
                w,
                "κ(θ_ν) = {:.10}, κ′(θ_ν) = {:.10}, κ″(θ_ν) = {:.10}, θ_νκ′ − κ = {:.10} at θ_ν = {}",
                p.kappa, p.kappa_prime, p.kappa_double_prime, p.gap, p.theta
            );
        }
        match &self.regime {
            Some(r) => {
                let _ = writeln!(w, "regime: {} (predicted speed {:.10})", r.regime, r.predicted_speed);
            }
            None => {
                let _ = writeln!(w, "regime: supercritical (point-mass perturbation)");
            }
        }
        let _ = writeln!(w, "theorem: {} (centering {})", self.target.theorem, self.target.centering);
        if let Some(c) = self.c1 {
            let _ = writeln!(w, "c₁ = {c:.10}");
        }
        if let Some(c) = self.c2 {
            let _ = writeln!(w, "c₂ = {c:.10}");
        }
        if let Some(c) = &self.centering {
            let _ = writeln!(w, "mₙ = {:.10} at n = {}", c.m_n, c.n);
            for warning in &c.warnings {
                let _ = writeln!(w, "warning: {warning}");
            }
        }
        s
    }
}

fn check_override(cfg: &RunConfig, target: &TheoremTarget) -> anyhow::Result<()> {
    match cfg.regime_override {
        Some(id) if id != target.theorem => {
            bail!("regime mismatch: regime_override is {id} but the configuration falls under {}", target.theorem)
        }
        _ => Ok(()),
    }
}

pub fn analyze(cfg: &RunConfig) -> anyhow::Result<Analysis> {
    let target = TheoremTarget::for_model(&cfg.law, &cfg.tail)?;
    check_override(cfg, &target)?;
    let t0 = theta0(&cfg.law)?;
    let profile_at_theta0 = t0.map(|t| kappa_profile(&cfg.law, t)).transpose()?;
    let (profile_at_theta_nu, regime) = match cfg.tail {
        Perturbation::Tail(t) => (
            Some(kappa_profile(&cfg.law, t.theta())?),
            Some(classify_regime(&cfg.law, t.theta())?),
        ),
        Perturbation::PointMass { .. } => (None, None),
    };
    let alpha = cfg.tail.tail().map_or(0.0, |t| t.alpha());
    let (k1, k2) = match &profile_at_theta_nu {
        Some(p) => (c1(p, alpha).ok(), c2(p, alpha).ok()),
        None => (None, None),
    };
    Ok(Analysis {
        config_hash: cfg.hash(),
        law: cfg.law,
        tail: cfg.tail,
        theta0: t0,
        speed_v: speed_v(&cfg.law)?,
        profile_at_theta0,
        profile_at_theta_nu,
        regime,
        target,
        c1: k1,
        c2: k2,
        centering: cfg.n.map(|n| centering(&cfg.law, &cfg.tail, n)).transpose()?,
    })
}

pub fn cmd_analyze(cfg: &RunConfig, out: &Path) -> anyhow::Result<(Analysis, i32)> {
    let start = Instant::now();
    let a = analyze(cfg)?;
    let mut dir = OutputDir::create(out)?;
    dir.write_json("config.json", cfg)?;
    dir.write_json("analysis.json", &a)?;
    dir.finish("analyze", a.config_hash.clone(), cfg.seed, start.elapsed().as_secs_f64(), BTreeMap::new())?;
    Ok((a, 0))
}

#[derive(Serialize)]
struct AtomRow {
    run_id: u64,
    atom_rank: usize,
    centered_value: f64,
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| anyhow::anyhow!("csv: {e}"))
}

#[derive(Serialize)]
struct SimulationSidecar<'a> {
    config_hash: &'a str,
    snapshot: SnapshotSidecar,
    centering: &'a Centering,
    window: lpmbrw::Window,
    atoms_in_window: usize,
    valid: bool,
    run: &'a TreeRun,
}

/// Simulates `runs` trees. Each gets a CSV of every retained final particle,
/// perturbed and centred, before windowing, plus a JSON sidecar.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> anyhow::Result<i32> {
    let start = Instant::now();
    let n = cfg.require_n()?;
    let hash = cfg.hash();
    let centring = centering(&cfg.law, &cfg.tail, n)?;
    let target = centring.prune_target(&cfg.tail, &cfg.window);
    let mut thetas = cfg.thetas.clone();
    if let Perturbation::Tail(t) = cfg.tail {
        if !thetas.contains(&t.theta()) {
            thetas.push(t.theta());
        }
    }
    let params = SimParams {
        budget: cfg.budget,
        eps_prune: cfg.eps_prune,
        prune_above: cfg.prune_above,
        history: true,
        ..SimParams::new(n, thetas)
    };
    let mut dir = OutputDir::create(out)?;
    dir.write_json("config.json", cfg)?;
    for i in 0..cfg.runs as u64 {
        let run = simulate(&cfg.law, &params, Some(&target), derive_seed(cfg.seed, "tree", i))
            .with_context(|| format!("run {i}"))?;
        let snap_seed = derive_seed(cfg.seed, "snapshot", i);
        let snap = extremal_snapshot(&run, &cfg.tail, &centring, cfg.window, snap_seed)?;
        let mut values: Vec<f64> = run
            .final_positions
            .iter()
            .zip(&run.final_labels)
            .map(|(&s, &l)| s + cfg.tail.quantile(Stream::perturbation(l, snap_seed).open_unit()) - centring.m_n)
            .collect();
        values.sort_by(|a, b| b.total_cmp(a));
        let rows = values.iter().enumerate().map(|(k, &v)| AtomRow {
            run_id: i,
            atom_rank: k,
            centered_value: v,
        });
        dir.write(&format!("snapshots/run_{i:05}.csv"), &csv_bytes(rows)?)?;
        let sidecar = SimulationSidecar {
            config_hash: &hash,
            snapshot: SnapshotSidecar::new(i, &snap, &run),
            centering: &centring,
            window: cfg.window,
            atoms_in_window: snap.atoms.len(),
            valid: run.valid(),
            run: &run,
        };
        dir.write_json(&format!("snapshots/run_{i:05}.json"), &sidecar)?;
    }
    dir.finish("simulate", hash, cfg.seed, start.elapsed().as_secs_f64(), BTreeMap::new())?;
    Ok(0)
}

fn many_to_one_section(spec: &ManyToOneSpec, cfg: &RunConfig) -> anyhow::Result<ManyToOneSection> {
    let f = spec.functional;
    let r = many_to_one_check(
        &cfg.law,
        spec.theta,
        spec.n,
        &|p: &[f64]| f.eval(p),
        spec.tree_runs,
        spec.spine_runs,
        cfg.seed,
    )?;
    Ok(ManyToOneSection::new(
        spec.theta,
        spec.n,
        serde_json::to_string(&spec.functional)?,
        r,
        spec.z_threshold,
    ))
}

#[derive(Serialize)]
struct CdfRow {
    x: f64,
    empirical: f64,
    predicted: f64,
}

#[derive(Serialize)]
struct SampleRow {
    generation: u32,
    rank: usize,
    value: f64,
    ecdf: f64,
}

/// Builds the report for the suites selected in `cfg`, writing data files
/// into `dir` as it goes.
pub fn build_report(cfg: &RunConfig, dir: &mut OutputDir) -> anyhow::Result<VerificationReport> {
    let s = cfg.suites;
    if !(s.laplace || s.max_law || s.speed || s.stabilization || s.many_to_one) {
        bail!("invalid parameter `suites`: no suite selected");
    }
    let target = TheoremTarget::for_model(&cfg.law, &cfg.tail)?;
    check_override(cfg, &target)?;
    let tol = cfg.tolerances.unwrap_or_else(|| Tolerances::for_theorem(target.theorem));
    let mut report = VerificationReport::new(cfg.hash(), cfg.seed);
    report.target = Some(target.clone());
    report.tolerances = Some(tol);
    if s.laplace || s.max_law {
        let suite = SuiteConfig {
            law: cfg.law,
            nu: cfg.tail,
            n: cfg.require_n()?,
            runs: cfg.runs,
            window: cfg.window,
            budget: cfg.budget,
            eps_prune: cfg.eps_prune,
            prune_above: cfg.prune_above,
            centering_offset: cfg.centering_offset,
            control_shift: cfg.control_shift,
            seed: cfg.seed,
        };
        let batch = run_batch(&target, &suite)?;
        report.notes.extend(batch.centering.warnings.iter().cloned());
        report.notes.push(format!(
            "{} of {} runs pruned; largest extremal ledger bound {:.3e} (eps_prune {})",
            batch.pruned_runs(),
            batch.records.len(),
            batch.max_extremal_bound(),
            cfg.eps_prune
        ));
        let atoms = batch.records.iter().flat_map(|r| {
            r.snapshot.atoms.iter().enumerate().map(move |(k, &v)| AtomRow {
                run_id: r.sidecar.run_id,
                atom_rank: k,
                centered_value: v,
            })
        });
        dir.write("snapshots/atoms.csv", &csv_bytes(atoms)?)?;
        dir.write("snapshots/runs.csv", &csv_bytes(batch.records.iter().map(|r| &r.sidecar))?)?;
        if s.laplace {
            report.laplace = Some(laplace_suite(&batch, &cfg.phis, tol.laplace_abs)?);
        }
        if s.max_law {
            let m = max_law_suite(&batch, &cfg.grid, tol.max_law_sup)?;
            let rows = m.grid.iter().zip(&m.empirical_cdf).zip(&m.predicted_cdf).map(|((&x, &e), &p)| CdfRow {
                x,
                empirical: e,
                predicted: p,
            });
            dir.write("ecdf/max_law.csv", &csv_bytes(rows)?)?;
            report.max_law = Some(m);
        }
    }
    let stability = StabilityConfig {
        law: cfg.law,
        nu: cfg.tail,
        runs: cfg.runs,
        floor: cfg.window.lo,
        budget: cfg.budget,
        eps_prune: cfg.eps_prune,
        prune_above: cfg.prune_above,
        seed: cfg.seed,
    };
    if s.speed {
        let list = cfg.n_list.as_deref().context("invalid parameter `n_list`: the speed suite needs it")?;
        report.speed = Some(speed_check(&stability, list, tol.speed_rel)?);
    }
    if s.stabilization {
        let st = stabilization_check(&stability, cfg.require_n()?, tol.ks_alpha)?;
        let mut rows = Vec::new();
        for (g, sample) in [st.n, 2 * st.n].into_iter().zip(&st.samples) {
            let mut v = sample.clone();
            v.sort_by(f64::total_cmp);
            let len = v.len() as f64;
            rows.extend(v.into_iter().enumerate().map(|(k, value)| SampleRow {
                generation: g,
                rank: k,
                value,
                ecdf: (k + 1) as f64 / len,
            }));
        }
        dir.write("ecdf/stabilization.csv", &csv_bytes(rows)?)?;
        report.stabilization = Some(st);
    }
    if s.many_to_one {
        let spec = cfg.many_to_one.as_ref().context("invalid parameter `many_to_one`: the suite needs it")?;
        report.many_to_one = Some(many_to_one_section(spec, cfg)?);
    }
    Ok(report.finish())
}

fn write_report(
    cfg: &RunConfig,
    mut dir: OutputDir,
    report: &VerificationReport,
    command: &str,
    start: Instant,
) -> anyhow::Result<i32> {
    dir.write_json("report.json", report)?;
    dir.write("report.md", report.to_markdown().as_bytes())?;
    let verdicts = report
        .verdicts()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .chain([("overall".to_string(), report.overall)])
        .collect();
    dir.finish(command, report.config_hash.clone(), cfg.seed, start.elapsed().as_secs_f64(), verdicts)?;
    Ok(report.overall.exit_code())
}

pub fn cmd_verify(cfg: &RunConfig, out: &Path) -> anyhow::Result<(VerificationReport, i32)> {
    let start = Instant::now();
    let mut dir = OutputDir::create(out)?;
    dir.write_json("config.json", cfg)?;
    let report = build_report(cfg, &mut dir)?;
    let code = write_report(cfg, dir, &report, "verify", start)?;
    Ok((report, code))
}

pub fn cmd_many2one(cfg: &RunConfig, out: &Path) -> anyhow::Result<(VerificationReport, i32)> {
    let start = Instant::now();
    let spec = cfg.many_to_one.as_ref().context("invalid parameter `many_to_one`: many2one needs it")?;
    let mut dir = OutputDir::create(out)?;
    dir.write_json("config.json", cfg)?;
    let mut report = VerificationReport::new(cfg.hash(), cfg.seed);
    report.many_to_one = Some(many_to_one_section(spec, cfg)?);
    let report = report.finish();
    let code = write_report(cfg, dir, &report, "many2one", start)?;
    Ok((report, code))
}

/// Checks the manifest of `out` and re-renders its report.
pub fn cmd_report(out: &Path) -> anyhow::Result<(String, i32)> {
    verify_manifest(out)?;
    let text = std::fs::read_to_string(out.join("report.json")).context("reading report.json")?;
    let report: VerificationReport = serde_json::from_str(&text)?;
    let overall = Verdict::combine(report.verdicts().into_iter().map(|(_, v)| v));
    if overall != report.overall {
        bail!("report.json overall verdict {} disagrees with its sections ({overall})", report.overall);
    }
    Ok((report.to_markdown(), overall.exit_code()))
}
