//! JSON run configuration.
//!
//! Every field except `law` has a default, so a minimal config is
//!
//! ```json
//! {"law": {"count_law": {"kind": "deterministic", "params": {"k": 2}},
//!          "displacement_law": {"kind": "gaussian", "params": {"mu": 0, "sigma2": 1}}},
//!  "tail": {"kind": "tail", "params": {"theta": 0.8, "alpha": 0, "c": 1}},
//!  "n": 12, "runs": 1000}
//! ```

use std::path::Path;

use anyhow::{bail, Context};
use lpmbrw::engine::Window;
use lpmbrw::spine::PathFunctional;
use lpmbrw::verify::{TheoremId, Tolerances};
use lpmbrw::{OffspringLaw, Perturbation, TestFunction};
use serde::{Deserialize, Serialize};

/// Which verification suites `verify` runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteSelection {
    pub laplace: bool,
    pub max_law: bool,
    pub speed: bool,
    pub stabilization: bool,
    pub many_to_one: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManyToOneSpec {
    pub theta: f64,
    pub n: u32,
    pub functional: PathFunctional,
    pub tree_runs: usize,
    pub spine_runs: usize,
    #[serde(default = "three")]
    pub z_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub law: OffspringLaw,
    /// Perturbation law; a point mass at 0 leaves the walk unperturbed.
    #[serde(default = "Perturbation::none")]
    pub tail: Perturbation,
    /// Theorem the run is expected to fall under; a mismatch is a config error.
    #[serde(default)]
    pub regime_override: Option<TheoremId>,
    #[serde(default)]
    pub n: Option<u32>,
    #[serde(default)]
    pub n_list: Option<Vec<u32>>,
    #[serde(default = "one_run")]
    pub runs: usize,
    /// Extra tilts at which `simulate` tracks the additive martingale.
    #[serde(default)]
    pub thetas: Vec<f64>,
    #[serde(default = "default_window")]
    pub window: Window,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_eps")]
    pub eps_prune: f64,
    #[serde(default)]
    pub prune_above: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub suites: SuiteSelection,
    #[serde(default = "default_phis")]
    pub phis: Vec<TestFunction>,
    #[serde(default = "default_grid")]
    pub grid: Vec<f64>,
    /// Overrides the regime defaults.
    #[serde(default)]
    pub tolerances: Option<Tolerances>,
    #[serde(default)]
    pub centering_offset: f64,
    #[serde(default = "unit_shift")]
    pub control_shift: f64,
    #[serde(default)]
    pub many_to_one: Option<ManyToOneSpec>,
}

fn three() -> f64 {
    3.0
}

fn one_run() -> usize {
    1
}

fn default_window() -> Window {
    Window { lo: -1.5, hi: 6.0 }
}

fn default_budget() -> usize {
    1 << 24
}

fn default_eps() -> f64 {
    1e-3
}

fn unit_shift() -> f64 {
    1.0
}

/// Three tents supported inside `[−1, 2]`.
pub fn default_phis() -> Vec<TestFunction> {
    [(0.0, 1.0, 1.0), (1.0, 1.0, 0.5), (0.5, 1.5, 1.0)]
        .into_iter()
        .map(|(c, w, h)| TestFunction::tent(c, w, h).expect("valid tent"))
        .collect()
}

/// `−1, −0.75, …, 10`.
pub fn default_grid() -> Vec<f64> {
    (0..=44).map(|i| -1.0 + 0.25 * f64::from(i)).collect()
}

impl RunConfig {
    pub fn new(law: OffspringLaw, tail: Perturbation) -> Self {
        RunConfig {
            law,
            tail,
            regime_override: None,
            n: None,
            n_list: None,
            runs: one_run(),
            thetas: Vec::new(),
            window: default_window(),
            budget: default_budget(),
            eps_prune: default_eps(),
            prune_above: None,
            seed: 0,
            output_dir: None,
            suites: SuiteSelection::default(),
            phis: default_phis(),
            grid: default_grid(),
            tolerances: None,
            centering_offset: 0.0,
            control_shift: unit_shift(),
            many_to_one: None,
        }
    }

    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks that serde cannot express.
    pub fn validate(&self) -> anyhow::Result<()> {
        Window::new(self.window.lo, self.window.hi)?;
        if self.runs == 0 {
            bail!("invalid parameter `runs`: must be positive");
        }
        if let Some(list) = &self.n_list {
            if list.windows(2).any(|w| w[0] >= w[1]) {
                bail!("invalid parameter `n_list`: must be increasing");
            }
        }
        if !(self.eps_prune > 0.0) {
            bail!("invalid parameter `eps_prune`: must be positive");
        }
        Ok(())
    }

    pub fn require_n(&self) -> anyhow::Result<u32> {
        self.n.context("invalid parameter `n`: this command needs `n`")
    }

    /// SHA-256 of the compact JSON form with `output_dir` cleared, so that the
    /// hash names the experiment rather than where it was written.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        crate::manifest::sha256_hex(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use lpmbrw::TailLaw;

    #[test]
    fn minimal_config_gets_defaults() {
        let text = r#"{"law": {"count_law": {"kind": "deterministic", "params": {"k": 2}},
                       "displacement_law": {"kind": "gaussian", "params": {"mu": 0, "sigma2": 1}}}}"#;
        let c = RunConfig::from_json(text).unwrap();
        assert_eq!(c, RunConfig::new(OffspringLaw::binary_gaussian(), Perturbation::none()));
    }

    #[test]
    fn negative_variance_names_the_field() {
        let text = r#"{"law": {"count_law": {"kind": "deterministic", "params": {"k": 2}},
                       "displacement_law": {"kind": "gaussian", "params": {"mu": 0, "sigma2": -1}}}}"#;
        let e = RunConfig::from_json(text).unwrap_err().to_string();
        assert!(e.contains("sigma2"), "{e}");
    }

    #[test]
    fn hash_ignores_output_dir() {
        let mut c = RunConfig::new(OffspringLaw::binary_gaussian(), Perturbation::Tail(TailLaw::new(0.8, 0.0, 1.0).unwrap()));
        let h = c.hash();
        assert_eq!(h.len(), 64);
        c.output_dir = Some("elsewhere".into());
        assert_eq!(c.hash(), h);
        c.seed = 1;
        assert_ne!(c.hash(), h);
    }

    #[test]
    fn rejects_bad_windows_and_unknown_fields() {
        let mut c = RunConfig::new(OffspringLaw::binary_gaussian(), Perturbation::none());
        c.window = Window { lo: 1.0, hi: 0.0 };
        assert!(RunConfig::from_json(&c.to_json()).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&RunConfig::new(OffspringLaw::binary_gaussian(), Perturbation::none()).to_json()).unwrap();
        v["bogus"] = 1.into();
        assert!(RunConfig::from_json(&v.to_string()).is_err());
    }
}
