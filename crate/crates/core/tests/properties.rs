use perpetual_core::green::{self, Coefficient};
use perpetual_core::homogenization::{corrector, diffusivity_bounds, effective_diffusivity, multiscale_diffusivity};
use perpetual_core::martingale::{self, BracketEnvelope};
use perpetual_core::potential::MIN_GRID_POINTS;
use perpetual_core::sde::{self, PathRunner, Sequential, SimulationPlan};
use perpetual_core::{Harmonic, MultiScalePotential, PeriodicPotential, ScaleSchedule, TrigSeries};
use proptest::prelude::*;

fn harmonic() -> impl Strategy<Value = Harmonic> {
    (1u32..5, -0.6f64..0.6, -0.6f64..0.6).prop_map(|(k, a, b)| Harmonic::new(k, a, b))
}

fn potential() -> impl Strategy<Value = PeriodicPotential> {
    prop::collection::vec(harmonic(), 1..4).prop_map(|h| PeriodicPotential::new(h).unwrap())
}

fn model() -> impl Strategy<Value = MultiScalePotential> {
    (prop::collection::vec(potential(), 1..4), prop::collection::vec(3u64..12, 4)).prop_map(|(pots, ratios)| {
        let n = pots.len() - 1;
        MultiScalePotential::new(pots, false, ScaleSchedule::explicit(ratios).unwrap(), n).unwrap()
    })
}

/// Runs paths in reverse order, in blocks, to stand in for an arbitrary scheduler.
struct Shuffled;

impl PathRunner for Shuffled {
    fn map_paths<T, F>(&self, count: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        let mut out: Vec<(u64, T)> = (0..count).rev().map(|i| (i, f(i))).collect();
        out.sort_by_key(|p| p.0);
        out.into_iter().map(|p| p.1).collect()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn potential_is_additive_over_scales(m in model(), x in -200.0f64..200.0) {
        let n = m.n_max();
        let whole = m.eval_potential(x, 0, n).unwrap();
        let mut parts = 0.0;
        for k in 0..=n {
            parts += m.eval_potential(x, k, k).unwrap();
        }
        prop_assert!((whole - parts).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences(m in model(), x in -200.0f64..200.0) {
        let n = m.n_max();
        let h = 1e-5;
        let fd = (m.eval_potential(x + h, 0, n).unwrap() - m.eval_potential(x - h, 0, n).unwrap()) / (2.0 * h);
        let g = m.eval_gradient(x, 0, n).unwrap();
        prop_assert!((fd - g).abs() < 1e-5 * (1.0 + g.abs()), "{fd} vs {g}");
    }

    #[test]
    fn diffusivity_invariances(u in potential(), shift in 0.0f64..1.0, c in -3.0f64..3.0, r in 2u32..6) {
        let s = u.series();
        let d = effective_diffusivity(s).value;
        prop_assert!(d > 0.0 && d <= 1.0);
        for other in [s.translated(shift), s.scaled(-1.0), s.with_constant(c)] {
            prop_assert!((effective_diffusivity(&other).value - d).abs() < 1e-10);
        }
        let fine: Vec<Harmonic> = s.harmonics().iter().map(|h| Harmonic::new(h.frequency * r, h.cos, h.sin)).collect();
        let compressed = TrigSeries::new(s.mean(), fine).unwrap();
        prop_assert!((effective_diffusivity(&compressed).value - d).abs() < 1e-10);
    }

    #[test]
    fn multiscale_diffusivity_within_bounds(m in model()) {
        let c = m.model_constants(MIN_GRID_POINTS).unwrap().conservative();
        for n in 0..=m.n_max() {
            let d = multiscale_diffusivity(&m, n).unwrap().value;
            let (lo, hi) = diffusivity_bounds(n + 1, &c, m.schedule()).unwrap();
            prop_assert!(lo <= d && d <= hi, "n = {n}: {lo} <= {d} <= {hi}");
        }
    }

    #[test]
    fn corrector_is_a_harmonic_coordinate(u in potential(), x in -5.0f64..5.0, period in 1.0f64..4.0) {
        let f = corrector(&u, period).unwrap();
        prop_assert!((f.value(x + period) - f.value(x) - period).abs() < 1e-9);
        prop_assert!(f.value(x + 1e-3) > f.value(x));
        let h = 1e-5;
        let fd = (f.value(x + h) - f.value(x - h)) / (2.0 * h);
        prop_assert!((fd - f.derivative(x)).abs() < 1e-5 * f.derivative(x).max(1.0));
        prop_assert!(f.value(0.0).abs() < 1e-12);
    }

    #[test]
    fn tiger_ratio_at_most_three(values in prop::collection::vec(0.01f64..100.0, 1..16), x in 0.001f64..0.999, y in 0.001f64..0.999) {
        prop_assume!(x != y);
        let c = Coefficient::uniform(values).unwrap();
        let r = green::tiger_ratio(&c, x, y).unwrap();
        prop_assert!((1.0..=3.0 + 1e-9).contains(&r), "{r}");
        let g = green::green_value(&c, x, y).unwrap();
        prop_assert!((g - green::green_value(&c, y, x).unwrap()).abs() <= 1e-12 * g.max(1e-300));
    }

    #[test]
    fn green_stability_exponent_three(
        values in prop::collection::vec(0.1f64..10.0, 8),
        factors in prop::collection::vec(0.25f64..4.0, 8),
        pairs in prop::collection::vec((0.001f64..0.999, 0.001f64..0.999), 1..20),
    ) {
        let lam = Coefficient::uniform(values.clone()).unwrap();
        let mu = Coefficient::uniform(values.iter().zip(&factors).map(|(v, f)| v * f).collect()).unwrap();
        let rep = green::stability_ratio(&lam, &mu, &pairs).unwrap();
        prop_assert_eq!(rep.violations, 0);
    }

    #[test]
    fn laplace_bound_dominates_gaussian(f2 in 0.1f64..3.0, excess in 0.0f64..3.0, t0 in 0.0f64..5.0, t in 0.0f64..50.0, frac in -0.999f64..0.999) {
        let env = BracketEnvelope::new(f2 + excess, f2, t0).unwrap();
        let limit = env.lambda_limit();
        let lambda = if limit.is_finite() { frac * limit } else { 4.0 * frac };
        let bound = martingale::laplace_bound(&env, lambda, t).unwrap();
        prop_assert!(martingale::saturating_laplace(&env, lambda, t) <= bound * (1.0 + 1e-12));
        let g = env.g(lambda);
        prop_assert!((1.0..=2.0).contains(&g));
    }

    #[test]
    fn tail_and_bracket_bounds_dominate(f2 in 0.1f64..3.0, excess in 0.01f64..3.0, t0 in 0.01f64..5.0, t in 0.5f64..50.0, xf in 0.0f64..0.999, nf in 0.001f64..0.999) {
        let env = BracketEnvelope::new(f2 + excess, f2, t0).unwrap();
        let x = xf * t / martingale::tail_constant(&env);
        prop_assert!(martingale::saturating_tail(&env, x, t) <= martingale::tail_bound(&env, x, t).unwrap() * (1.0 + 1e-12));
        let nu = nf * env.nu_limit();
        prop_assert!(martingale::saturating_bracket_exp(&env, nu, t) <= martingale::bracket_exp_bound(&env, nu, t).unwrap());
    }

    #[test]
    fn lemma_holds(y in -0.3678f64..-0.001, mu in 0.0f64..200.0) {
        let (lhs, rhs) = martingale::lemma_series(y, mu).unwrap();
        prop_assert!(lhs <= rhs, "{lhs} > {rhs}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn paths_do_not_depend_on_scheduling(seed in any::<u64>()) {
        let m = MultiScalePotential::self_similar(PeriodicPotential::sine(1, 1.0), ScaleSchedule::geometric(4).unwrap(), 1).unwrap();
        let plan = SimulationPlan::new(0.01, 64, seed, 2.0, 1);
        let a = sde::simulate_positions(&m, &plan, &[0.5, 2.0], &Sequential).unwrap();
        let b = sde::simulate_positions(&m, &plan, &[0.5, 2.0], &Shuffled).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn euler_weak_error_shrinks_with_the_step() {
    // for V ≡ 0 the scheme is exact in law, so E[y_t²] = t up to Monte Carlo noise
    let zero = MultiScalePotential::zero(ScaleSchedule::geometric(4).unwrap(), 0).unwrap();
    let m = sde::simulate_msd(&zero, &SimulationPlan::new(0.01, 20_000, 11, 1.0, 0), &[1.0], &Sequential).unwrap();
    assert!((m.mean[0] - 1.0).abs() < 4.0 * m.std_error[0]);
    // with a drift the bias in E[y_t²] is first order in dt; common random numbers
    // over a dyadic refinement are not available, so compare against a fine step
    let sin =
        MultiScalePotential::self_similar(PeriodicPotential::sine(1, 0.5), ScaleSchedule::geometric(4).unwrap(), 0)
            .unwrap();
    let run =
        |dt: f64| sde::simulate_msd(&sin, &SimulationPlan::new(dt, 20_000, 5, 1.0, 0), &[1.0], &Sequential).unwrap();
    let (fine, coarse) = (run(0.0005), run(0.01));
    let noise = 4.0 * (fine.std_error[0].powi(2) + coarse.std_error[0].powi(2)).sqrt();
    assert!((fine.mean[0] - coarse.mean[0]).abs() < noise + 0.02, "{} vs {}", fine.mean[0], coarse.mean[0]);
}
