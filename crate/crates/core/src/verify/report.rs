use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{
    LaplaceSection, MaxLawSection, SpeedSection, StabilizationSection, TheoremTarget, Tolerances, Verdict,
};
use crate::spine::ManyToOneReport;

/// Purpose tags fed to `derive_seed(master, tag, index)`.
pub const SEED_TAGS: &[&str] = &["tree", "snapshot", "speed", "stabilization", "many_to_one_tree", "many_to_one_spine"];

/// Many-to-one check with its `|z|` threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManyToOneSection {
    pub theta: f64,
    pub n: u32,
    pub functional: String,
    pub result: ManyToOneReport,
    pub z_threshold: f64,
    pub verdict: Verdict,
}

impl ManyToOneSection {
    pub fn new(theta: f64, n: u32, functional: String, result: ManyToOneReport, z_threshold: f64) -> Self {
        let verdict = if result.z.abs() <= z_threshold {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        ManyToOneSection {
            theta,
            n,
            functional,
            result,
            z_threshold,
            verdict,
        }
    }
}

/// Self-contained outcome of a verification run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub tool_version: String,
    pub config_hash: String,
    pub master_seed: u64,
    /// How every stream seed was derived from `master_seed`.
    pub seed_scheme: String,
    pub seed_tags: Vec<String>,
    pub target: Option<TheoremTarget>,
    pub tolerances: Option<Tolerances>,
    pub laplace: Option<LaplaceSection>,
    pub max_law: Option<MaxLawSection>,
    pub speed: Option<SpeedSection>,
    pub stabilization: Option<StabilizationSection>,
    pub many_to_one: Option<ManyToOneSection>,
    pub notes: Vec<String>,
    pub overall: Verdict,
}

impl VerificationReport {
    pub fn new(config_hash: impl Into<String>, master_seed: u64) -> Self {
        VerificationReport {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash.into(),
            master_seed,
            seed_scheme: "derive_seed(master, tag, index) = mix64(mix64(master ^ fnv1a(tag)) + (index + 1)·0x9E3779B97F4A7C15)"
                .into(),
            seed_tags: SEED_TAGS.iter().map(|s| s.to_string()).collect(),
            target: None,
            tolerances: None,
            laplace: None,
            max_law: None,
            speed: None,
            stabilization: None,
            many_to_one: None,
            notes: Vec::new(),
            overall: Verdict::Pass,
        }
    }

    /// Section verdicts, negative controls included.
    pub fn verdicts(&self) -> Vec<(&'static str, Verdict)> {
        let mut v = Vec::new();
        if let Some(s) = &self.laplace {
            v.push(("laplace", s.verdict));
        }
        if let Some(s) = &self.max_law {
            v.push(("max_law", s.overall()));
        }
        if let Some(s) = &self.speed {
            v.push(("speed", s.verdict));
        }
        if let Some(s) = &self.stabilization {
            v.push(("stabilization", s.overall()));
        }
        if let Some(s) = &self.many_to_one {
            v.push(("many_to_one", s.verdict));
        }
        v
    }

    /// Recomputes `overall` from the sections.
    pub fn finish(mut self) -> Self {
        self.overall = Verdict::combine(self.verdicts().into_iter().map(|(_, v)| v));
        self
    }

    pub fn to_markdown(&self) -> String {
        let mut md = String::new();
        let w = &mut md;
        let _ = writeln!(w, "# Verification report\n");
        let _ = writeln!(w, "- overall: **{}**", self.overall);
        let _ = writeln!(w, "- config hash: `{}`", self.config_hash);
        let _ = writeln!(w, "- master seed: {}", self.master_seed);
        let _ = writeln!(w, "- seeds: `{}` with tags {}", self.seed_scheme, self.seed_tags.join(", "));
        let _ = writeln!(w, "- tool version: {}", self.tool_version);
        if let Some(t) = &self.target {
            let _ = writeln!(
                w,
                "- target: {} (θ = {}, α = {}, constant = {}, proxy = {}, centering {})",
                t.theorem,
                t.theta,
                t.alpha,
                t.constant.map_or("none".into(), |c| format!("{c:.10}")),
                t.proxy.map_or("none".into(), |p| format!("{p:?}")),
                t.centering
            );
        }
        if let Some(t) = &self.tolerances {
            let _ = writeln!(
                w,
                "- tolerances: Laplace |difference| ≤ {}, max-law sup-distance ≤ {}, KS level {}, speed relative error ≤ {}",
                t.laplace_abs, t.max_law_sup, t.ks_alpha, t.speed_rel
            );
            let _ = writeln!(
                w,
                "  (artifact choices covering proxy error and finite-n bias; a result is inconclusive when its 95% interval is wider than the tolerance)"
            );
        }
        if let Some(s) = &self.laplace {
            let _ = writeln!(
                w,
                "\n## Laplace functionals ({}, n = {}, {} runs, mₙ = {:.6}): {}\n",
                s.theorem, s.n, s.runs, s.m_n, s.verdict
            );
            let _ = writeln!(
                w,
                "| φ | c_φ | empirical | predicted | difference | 95% CI width | z | verdict | control difference | control |"
            );
            let _ = writeln!(w, "|---|---|---|---|---|---|---|---|---|---|");
            for r in &s.rows {
                let phi = describe_phi(&r.phi);
                let _ = writeln!(
                    w,
                    "| {phi} | {:.5} | {:.4} ± {:.4} | {:.4} ± {:.4} | {:+.4} ± {:.4} | {:.4} | {:+.2} | {} | {:+.4} | {} |",
                    r.c_phi,
                    r.empirical.mean,
                    r.empirical.se,
                    r.predicted.mean,
                    r.predicted.se,
                    r.difference.mean,
                    r.difference.se,
                    r.ci_width,
                    r.z,
                    r.verdict,
                    r.control_difference.mean,
                    r.control_verdict
                );
            }
        }
        if let Some(s) = &self.max_law {
            let _ = writeln!(w, "\n## Maximum law ({}, {} runs): {}\n", s.theorem, s.runs, s.overall());
            let _ = writeln!(
                w,
                "- sup-distance {:.4} at x = {} (tolerance {}, DKW band {:.4}): {}",
                s.sup_distance, s.argmax, s.tolerance, s.dkw_band, s.verdict
            );
            let _ = writeln!(w, "- control sup-distance {:.4}: {}", s.control_sup_distance, s.control_verdict);
            let _ = writeln!(w, "- right-end gap {:.2e}; left-end conservative: {}", s.upper_end_gap, s.lower_end_ok);
        }
        if let Some(s) = &self.speed {
            let _ = writeln!(w, "\n## Speed ({} runs per n): {}\n", s.runs, s.verdict);
            let _ = writeln!(
                w,
                "- n = {:?}; slope {:.5} ± {:.5} against predicted {:.5}; relative error {:.4} (tolerance {})",
                s.n_list, s.slope, s.slope_se, s.predicted_speed, s.relative_error, s.tolerance
            );
        }
        if let Some(s) = &self.stabilization {
            let _ = writeln!(w, "\n## Stabilization (n = {} vs {}, {} runs each): {}\n", s.n, 2 * s.n, s.runs, s.overall());
            let _ = writeln!(
                w,
                "- KS {:.4} against critical value {:.4} at level {}: {}",
                s.ks, s.critical_value, s.alpha, s.verdict
            );
            let _ = writeln!(w, "- control KS without the log correction {:.4}: {}", s.control_ks, s.control_verdict);
        }
        if let Some(s) = &self.many_to_one {
            let r = &s.result;
            let _ = writeln!(w, "\n## Many-to-one (θ = {}, n = {}, f = {}): {}\n", s.theta, s.n, s.functional, s.verdict);
            let _ = writeln!(
                w,
                "- tree side {:.5} ± {:.5}; spine side {:.5} ± {:.5}; z = {:+.3} (threshold {})",
                r.lhs, r.lhs_se, r.rhs, r.rhs_se, r.z, s.z_threshold
            );
        }
        if !self.notes.is_empty() {
            let _ = writeln!(w, "\n## Notes\n");
            for n in &self.notes {
                let _ = writeln!(w, "- {n}");
            }
        }
        md
    }
}

fn describe_phi(phi: &crate::perturb::TestFunction) -> String {
    let parts: Vec<String> = phi
        .pieces()
        .iter()
        .map(|t| format!("tent({}, {}, {})", t.center(), t.half_width(), t.height()))
        .collect();
    if parts.is_empty() {
        "0".into()
    } else {
        parts.join(" + ")
    }
}
