//! Properties of the limit targets and of the Laplace suite.

use lpmbrw::cumulant::{kappa_profile, CountLaw, DisplacementLaw, OffspringLaw};
use lpmbrw::engine::Window;
use lpmbrw::verify::{laplace_suite, rayleigh_moment, run_batch, SuiteConfig};
use lpmbrw::{theta0, Perturbation, TailLaw, TestFunction, TheoremId, TheoremTarget};
use proptest::prelude::*;

fn law() -> impl Strategy<Value = OffspringLaw> {
    let count = prop_oneof![
        (2u32..5).prop_map(|k| CountLaw::Deterministic { k }),
        (1.2..5.0f64).prop_map(|lambda| CountLaw::Poisson { lambda }),
    ];
    let step = prop_oneof![
        (-2.0..2.0f64, 0.2..3.0f64).prop_map(|(mu, sigma2)| DisplacementLaw::Gaussian { mu, sigma2 }),
        (-2.0..0.0f64, 0.2..3.0f64).prop_map(|(a, w)| DisplacementLaw::Uniform { a, b: a + w }),
    ];
    (count, step).prop_map(|(c, d)| OffspringLaw::new(c, d).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Stored constants equal the closed forms evaluated on a fresh profile.
    #[test]
    fn constants_recompute_from_the_profile(law in law(), frac in 0.2..0.95f64, alpha in -1.9..0.0f64) {
        let t0 = theta0(&law).unwrap().unwrap();
        let theta = frac * t0;
        let nu = Perturbation::Tail(TailLaw::new(theta, alpha, 1.0).unwrap());
        let target = TheoremTarget::for_model(&law, &nu).unwrap();
        let p = kappa_profile(&law, theta).unwrap();
        let expected = (p.kappa / theta - p.kappa_prime).powf(alpha);
        prop_assert!(matches!(target.theorem, TheoremId::ExponentialTail | TheoremId::RegularlyVaryingTail));
        prop_assert!((target.constant.unwrap() - expected).abs() <= 1e-12 * expected.max(1.0));
        target.check(&law, &nu).unwrap();

        let critical = Perturbation::Tail(TailLaw::new(t0, alpha, 1.0).unwrap());
        let target = TheoremTarget::for_model(&law, &critical).unwrap();
        prop_assert_eq!(target.theorem, TheoremId::CriticalTilt);
        let k2 = kappa_profile(&law, t0).unwrap().kappa_double_prime;
        let expected = (2.0 / (std::f64::consts::PI * k2)).sqrt() * k2.powf(0.5 * alpha) * rayleigh_moment(alpha).unwrap();
        prop_assert!((target.constant.unwrap() - expected).abs() <= 1e-12 * expected.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Raising `φ` pointwise can only lower `exp(−⟨ℰ, φ⟩)`, run by run.
    #[test]
    fn laplace_mean_decreases_in_phi(seed in any::<u64>(), centre in -1.0..2.0f64, width in 0.3..2.0f64, h in 0.1..1.0f64) {
        let cfg = SuiteConfig {
            law: OffspringLaw::binary_gaussian(),
            nu: Perturbation::Tail(TailLaw::new(0.8, 0.0, 1.0).unwrap()),
            n: 8,
            runs: 60,
            window: Window::new(-3.5, 6.0).unwrap(),
            budget: 1 << 20,
            eps_prune: 1e-3,
            prune_above: None,
            centering_offset: 0.0,
            control_shift: 1.0,
            seed,
        };
        let target = TheoremTarget::for_model(&cfg.law, &cfg.nu).unwrap();
        let batch = run_batch(&target, &cfg).unwrap();
        let nested = [
            TestFunction::tent(centre, 0.5 * width, 0.5 * h).unwrap(),
            TestFunction::tent(centre, width, h).unwrap(),
            TestFunction::tent(centre, width, 2.0 * h).unwrap(),
        ];
        let s = laplace_suite(&batch, &nested, 0.02).unwrap();
        for w in s.rows.windows(2) {
            prop_assert!(w[0].empirical.mean >= w[1].empirical.mean);
            prop_assert!(w[0].predicted.mean >= w[1].predicted.mean);
        }
    }
}
