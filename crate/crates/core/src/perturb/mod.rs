//! Perturbation law `ν`, test functions, and the Laplace kernels
//! `g_φ(x) = −log ∫ e^{−φ(x+y)} ν(dy)` and `c_φ(θ) = ∫ θe^{−θz}(1 − e^{−φ(z)}) dz`.

mod tail;
mod testfn;

pub use tail::{Perturbation, TailLaw};
pub use testfn::{Tent, TestFunction};

use crate::error::{Error, Result};
use crate::quad::integrate;

/// `∫ (1 − e^{−φ(x+y)}) ν(dy)`, computed to relative accuracy so that it stays
/// meaningful deep in the tail where it is of order `e^{θx}`.
fn hit_mass(nu: &TailLaw, phi: &TestFunction, x: f64) -> f64 {
    let Some((lo, hi)) = phi.support() else {
        return 0.0;
    };
    let a = (lo - x).max(nu.x_star());
    let b = hi - x;
    if !(b > a) {
        return 0.0;
    }
    let breaks: Vec<f64> = phi.quadrature_breaks().into_iter().map(|k| k - x).collect();
    integrate(
        |y| -(-phi.eval(x + y)).exp_m1() * nu.density(y),
        a,
        b,
        &breaks,
        1e-300,
        1e-13,
    )
    .value
}

/// `g_φ(x)`; lies in `[0, sup φ]`.
pub fn g_phi(nu: &Perturbation, phi: &TestFunction, x: f64) -> f64 {
    match nu {
        Perturbation::PointMass { at } => phi.eval(x + at),
        Perturbation::Tail(t) => {
            let mass = hit_mass(t, phi, x).min(1.0);
            -(-mass).ln_1p()
        }
    }
}

/// `c_φ(θ)`.
pub fn c_phi(phi: &TestFunction, theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::invalid("theta", format!("must be positive (got {theta})")));
    }
    let Some((lo, hi)) = phi.support() else {
        return Ok(0.0);
    };
    Ok(integrate(
        |z| theta * (-theta * z).exp() * -(-phi.eval(z)).exp_m1(),
        lo,
        hi,
        &phi.quadrature_breaks(),
        1e-14,
        1e-14,
    )
    .value)
}

/// `g_φ(x) e^{−θx} / (L(−x) c_φ(θ))`, which tends to 1 as `x → −∞`.
pub fn tail_asymptote_ratio(nu: &TailLaw, phi: &TestFunction, x: f64) -> Result<f64> {
    if !(x < 0.0) {
        return Err(Error::invalid("x", format!("must be negative (got {x})")));
    }
    let c = c_phi(phi, nu.theta())?;
    if c == 0.0 {
        return Err(Error::invalid("phi", "c_φ(θ) vanishes for φ ≡ 0"));
    }
    let g = g_phi(&Perturbation::Tail(*nu), phi, x);
    Ok(g * (-nu.theta() * x).exp() / (nu.l(-x) * c))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tent() -> TestFunction {
        TestFunction::tent(0.0, 1.0, 1.0).unwrap()
    }

    /// Composite Simpson rule on a uniform grid; independent of the adaptive rule.
    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn zero_test_function_gives_zero_kernels() {
        let nu = Perturbation::Tail(TailLaw::new(1.0, -1.0, 1.0).unwrap());
        for x in [-30.0, -1.0, 0.0, 2.0] {
            assert_eq!(g_phi(&nu, &TestFunction::zero(), x), 0.0);
        }
        assert_eq!(c_phi(&TestFunction::zero(), 1.0).unwrap(), 0.0);
    }

    #[test]
    fn point_mass_probe_returns_phi() {
        let probe = Perturbation::PointMass { at: 0.0 };
        for x in [-2.0, -0.3, 0.0, 0.7, 5.0] {
            assert_eq!(g_phi(&probe, &tent(), x), tent().eval(x));
        }
    }

    #[test]
    fn c_phi_tall_tent_against_simpson() {
        let phi = TestFunction::tent(0.0, 1.0, 1e6).unwrap();
        let got = c_phi(&phi, 1.0).unwrap();
        let f = |z: f64| (-z).exp() * (1.0 - (-1e6 * (1.0 - z.abs())).exp());
        // Split at the kinks and resolve the boundary layers of width 1e-6.
        let oracle = simpson(f, -1.0, -1.0 + 1e-4, 20_000)
            + simpson(f, -1.0 + 1e-4, 0.0, 200_000)
            + simpson(f, 0.0, 1.0 - 1e-4, 200_000)
            + simpson(f, 1.0 - 1e-4, 1.0, 20_000);
        assert!((got - oracle).abs() < 1e-6, "{got} vs {oracle}");
    }

    #[test]
    fn c_phi_two_rules_agree() {
        let got = c_phi(&tent(), 1.0).unwrap();
        let f = |z: f64| (-z).exp() * (1.0 - (-(1.0 - z.abs())).exp());
        let oracle = simpson(f, -1.0, 0.0, 20_000) + simpson(f, 0.0, 1.0, 20_000);
        assert!((got - oracle).abs() < 1e-10, "{got} vs {oracle}");
        assert!((got - 0.807_321_752_472_359_2).abs() < 1e-12);
    }

    #[test]
    fn c_phi_bounded_by_exponential_mass() {
        let phi = TestFunction::tent(0.5, 2.0, 3.0).unwrap();
        let c = c_phi(&phi, 0.7).unwrap();
        let cap = (-0.7f64 * -1.5).exp() - (-0.7f64 * 2.5).exp();
        assert!(c > 0.0 && c <= cap);
    }

    #[test]
    fn g_phi_bounded_by_sup_phi() {
        let nu = Perturbation::Tail(TailLaw::new(1.0, -1.0, 1.0).unwrap());
        let phi = TestFunction::tent(0.0, 1.0, 2.0).unwrap();
        for i in 0..120 {
            let x = -50.0 + i as f64 * 0.5;
            let g = g_phi(&nu, &phi, x);
            assert!((0.0..=2.0).contains(&g), "x={x} g={g}");
        }
    }

    #[test]
    fn g_phi_asymptote_at_minus_thirty_alpha_zero() {
        let t = TailLaw::new(1.0, 0.0, 1.0).unwrap();
        let g = g_phi(&Perturbation::Tail(t), &tent(), -30.0);
        let c = c_phi(&tent(), 1.0).unwrap();
        assert!(((30.0f64).exp() * g / t.l(30.0) / c - 1.0).abs() < 0.01);
    }

    #[test]
    fn asymptote_ratio_exponential_tail() {
        let t = TailLaw::new(1.0, 0.0, 1.0).unwrap();
        let r = tail_asymptote_ratio(&t, &tent(), -40.0).unwrap();
        assert!((r - 1.0).abs() < 1e-3, "ratio {r}");
    }

    #[test]
    fn asymptote_ratio_alpha_minus_one_matches_independent_quadrature() {
        // Independent Simpson evaluation of e^{40}·∫ψ(z) p(z+40) dz / (L(40)c_φ),
        // p(y) = e^{-y}(1/y)(1 + 1/y).
        let psi = |z: f64| 1.0 - (-(1.0 - z.abs()).max(0.0)).exp();
        let num = |z: f64| psi(z) * (-z).exp() / (40.0 + z) * (1.0 + 1.0 / (40.0 + z));
        let den = |z: f64| psi(z) * (-z).exp();
        let oracle = 40.0 * (simpson(num, -1.0, 0.0, 20_000) + simpson(num, 0.0, 1.0, 20_000))
            / (simpson(den, -1.0, 0.0, 20_000) + simpson(den, 0.0, 1.0, 20_000));
        let t = TailLaw::new(1.0, -1.0, 1.0).unwrap();
        let r = tail_asymptote_ratio(&t, &tent(), -40.0).unwrap();
        assert!((r - oracle).abs() < 1e-9, "{r} vs {oracle}");
        // The slowly varying factor leaves an O(1/|x|) correction.
        assert!((r - 1.029_959).abs() < 1e-5);
    }

    #[test]
    fn asymptote_ratio_trend_is_monotone() {
        let t = TailLaw::new(1.0, -1.0, 1.0).unwrap();
        let r50 = tail_asymptote_ratio(&t, &tent(), -50.0).unwrap();
        let r20 = tail_asymptote_ratio(&t, &tent(), -20.0).unwrap();
        assert!((r50 - 1.0).abs() <= (r20 - 1.0).abs() * 1.05);
    }

    #[test]
    fn asymptote_ratio_requires_negative_x() {
        let t = TailLaw::new(1.0, 0.0, 1.0).unwrap();
        assert!(tail_asymptote_ratio(&t, &tent(), 0.5).is_err());
    }
}
