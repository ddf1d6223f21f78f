use poolsel_core::benchlab::{gen_synthetic_ensemble, TrueEnsembleSpec};
use poolsel_core::em::build_observations;
use poolsel_core::{collect_noninterpretable, fit_em, solve_filter, EmConfig, EmFit, ObservationSet};
use proptest::prelude::*;

fn arb_obs() -> impl Strategy<Value = ObservationSet> {
    (1usize..6, 1usize..9, 0u32..6).prop_flat_map(|(ns, ni, nt)| {
        let cells = ns * ni;
        (
            proptest::collection::vec(any::<bool>(), cells),
            proptest::collection::vec(0..=nt, cells),
        )
            .prop_map(move |(r, c)| ObservationSet {
                solvers: (0..ns).map(|k| format!("s{k}")).collect(),
                instances: (0..ni).map(|k| format!("i{k}")).collect(),
                tests: (0..nt).map(|k| format!("t{k}")).collect(),
                c: c.iter().zip(&r).map(|(&c, &r)| if r { c } else { 0 }).collect(),
                z: (0..cells).map(|k| k as f64).collect(),
                r,
            })
    })
}

fn assert_monotone(fit: &EmFit) {
    let trace = &fit.diagnostics.loglik_trace;
    assert!(fit.diagnostics.iterations <= 100);
    assert_eq!(trace.len(), fit.diagnostics.iterations + 1);
    for (k, w) in trace.windows(2).enumerate() {
        assert!(w[1] >= w[0] - 1e-9, "iteration {k}: {} -> {}", w[0], w[1]);
    }
}

fn ensemble_obs(seed: u64, ns: usize, ni: usize, nt: usize) -> ObservationSet {
    let spec = TrueEnsembleSpec::reference(ns, ni, nt, 0.2, seed).unwrap();
    let (res, _) = gen_synthetic_ensemble(&spec).unwrap();
    let f = solve_filter(&collect_noninterpretable(&res)).unwrap();
    build_observations(&res, &f).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn log_posterior_never_decreases(obs in arb_obs()) {
        let fit = fit_em(&obs, &EmConfig::default()).unwrap();
        assert_monotone(&fit);
        prop_assert!(fit.diagnostics.final_loglik.is_finite());
    }

    #[test]
    fn posteriors_are_probabilities(obs in arb_obs()) {
        let fit = fit_em(&obs, &EmConfig::default()).unwrap();
        let p = &fit.posteriors;
        prop_assert!(p.q.iter().chain(&p.w).all(|v| (0.0..=1.0).contains(v)));
        let eps = EmConfig::default().clamp_eps;
        let th = &fit.params;
        let probs = std::iter::once(&th.lambda).chain(&th.alpha).chain(&th.beta).chain(&th.gamma);
        for v in probs {
            prop_assert!(*v >= eps && *v <= 1.0 - eps);
        }
    }

    #[test]
    fn instance_order_does_not_matter(obs in arb_obs(), key in any::<u64>()) {
        let ni = obs.n_instances();
        let mut perm: Vec<usize> = (0..ni).collect();
        perm.sort_by_key(|&i| (i as u64).wrapping_mul(key | 1).rotate_left(17));
        let cfg = EmConfig::default();
        let a = fit_em(&obs, &cfg).unwrap();
        let b = fit_em(&obs.permute_instances(&perm), &cfg).unwrap();
        // Summation order differs after a permutation; along flat directions of
        // the likelihood a 1e-8 relative stopping rule only pins θ to ~1e-4.
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-4;
        prop_assert!(close(a.params.lambda, b.params.lambda));
        for s in 0..obs.n_solvers() {
            prop_assert!(close(a.params.alpha[s], b.params.alpha[s]));
            prop_assert!(close(a.params.beta[s], b.params.beta[s]));
            prop_assert!(close(a.params.gamma[s], b.params.gamma[s]));
        }
        for (k, &j) in perm.iter().enumerate() {
            prop_assert!(close(b.posteriors.q[k], a.posteriors.q[j]));
        }
    }
}

#[test]
fn monotone_on_reference_ensembles() {
    for seed in 0..12 {
        let fit = fit_em(&ensemble_obs(seed, 20, 40, 10), &EmConfig::default()).unwrap();
        assert_monotone(&fit);
    }
}

#[test]
fn valid_class_passes_more_tests() {
    for seed in 0..12 {
        let th = fit_em(&ensemble_obs(seed, 20, 40, 10), &EmConfig::default()).unwrap().params;
        assert!(th.true_positive_rate() >= th.false_positive_rate(), "seed {seed}: {th:?}");
    }
}

#[test]
fn fits_are_deterministic() {
    let obs = ensemble_obs(3, 15, 30, 8);
    let cfg = EmConfig::default();
    assert_eq!(fit_em(&obs, &cfg).unwrap(), fit_em(&obs, &cfg).unwrap());
}
