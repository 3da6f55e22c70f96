//! Shared fixtures for the benchmarks.

use lpmbrw::engine::{centering, PruneTarget, Window};
use lpmbrw::{OffspringLaw, Perturbation, TailLaw};

pub fn law() -> OffspringLaw {
    OffspringLaw::binary_gaussian()
}

/// Exponential tail below the critical tilt.
pub fn subcritical_tail() -> Perturbation {
    Perturbation::Tail(TailLaw::new(0.8, 0.0, 1.0).expect("valid tail"))
}

/// Exponential tail above the critical tilt.
pub fn supercritical_tail() -> Perturbation {
    Perturbation::Tail(TailLaw::new(2.0, 0.0, 1.0).expect("valid tail"))
}

/// Pruning target for generation `n` with centred floor `lo`.
pub fn prune_target(nu: &Perturbation, n: u32, lo: f64) -> PruneTarget {
    let c = centering(&law(), nu, n).expect("centering");
    c.prune_target(nu, &Window::new(lo, lo + 1.0).expect("window"))
}
