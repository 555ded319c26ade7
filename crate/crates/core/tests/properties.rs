use geoha_core::inference::{bayesian_update, noisy_or, EvidenceItem, EvidenceVector};
use geoha_core::learner::{adaptive_rate, update_cpt, CptEntry, LearnerConfig};
use geoha_core::policy::{decide, Decision, DecisionState, Thresholds};
use proptest::prelude::*;

const CASES: u32 = 1000;

fn prob() -> impl Strategy<Value = f64> {
    0.0..=1.0f64
}

fn learner_cfg() -> impl Strategy<Value = LearnerConfig> {
    (0.0..0.9f64, 1u64..50).prop_map(|(a, n)| LearnerConfig::new(a, n).unwrap())
}

fn evidence(ratios: &[f64]) -> EvidenceVector {
    EvidenceVector::new(
        ratios
            .iter()
            .enumerate()
            .map(|(i, &r)| EvidenceItem {
                metric: format!("m{i}"),
                likelihood_ratio: r,
            })
            .collect(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    #[test]
    fn noisy_or_bounds(base in prob(), ps in prop::collection::vec(prob(), 0..20)) {
        let p = noisy_or(base, ps.iter().copied());
        prop_assert!((0.0..=1.0).contains(&p));
        let max = ps.iter().copied().fold(base, f64::max);
        prop_assert!(p >= max - 1e-12);
    }

    #[test]
    fn noisy_or_monotone(base in prob(), ps in prop::collection::vec(prob(), 1..20), i in any::<prop::sample::Index>(), bump in prob()) {
        let before = noisy_or(base, ps.iter().copied());
        let mut raised = ps.clone();
        let k = i.index(raised.len());
        raised[k] = raised[k] + (1.0 - raised[k]) * bump;
        prop_assert!(noisy_or(base, raised.iter().copied()) >= before - 1e-12);
        // adding a cause never lowers the result
        prop_assert!(noisy_or(base, ps.iter().copied().chain([bump])) >= before - 1e-12);
    }

    #[test]
    fn noisy_or_permutation_invariant(
        (base, ps, shuffled) in (prob(), prop::collection::vec(prob(), 0..20))
            .prop_flat_map(|(b, ps)| (Just(b), Just(ps.clone()), Just(ps).prop_shuffle()))
    ) {
        let a = noisy_or(base, ps.iter().copied());
        let b = noisy_or(base, shuffled.iter().copied());
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn adaptive_rate_monotone_and_capped(cfg in learner_cfg(), n in 0u64..1000) {
        let a0 = adaptive_rate(n, &cfg);
        let a1 = adaptive_rate(n + 1, &cfg);
        prop_assert!(a1 >= a0);
        prop_assert!(a0 >= cfg.alpha_base - 1e-12);
        prop_assert!(a1 < 0.9);
    }

    #[test]
    fn update_is_convex_combination(cfg in learner_cfg(), p in prob(), n in 0u64..100, ratio in prob()) {
        let next = update_cpt(&CptEntry { probability: p, n_obs: n }, ratio, &cfg).unwrap();
        let (lo, hi) = (p.min(ratio), p.max(ratio));
        prop_assert!(next.probability >= lo - 1e-12 && next.probability <= hi + 1e-12);
        prop_assert_eq!(next.n_obs, n + 1);
    }

    #[test]
    fn neutral_evidence_is_identity(p in prob(), k in 0usize..10) {
        let post = bayesian_update(p, &evidence(&vec![1.0; k]));
        prop_assert!((post - p).abs() < 1e-12);
    }

    #[test]
    fn posterior_monotone_in_likelihood(p in prob(), ratios in prop::collection::vec(0.2..5.0f64, 1..8), i in any::<prop::sample::Index>(), factor in 1.0..3.0f64) {
        let base = bayesian_update(p, &evidence(&ratios));
        let mut stronger = ratios.clone();
        let k = i.index(stronger.len());
        stronger[k] *= factor;
        let post = bayesian_update(p, &evidence(&stronger));
        prop_assert!(post >= base - 1e-12);
        prop_assert!((0.0..=1.0).contains(&post));
    }

    #[test]
    fn no_flap_inside_band(
        c_fp in 1.0..10.0f64,
        c_fn in 1.0..10.0f64,
        start_on in any::<bool>(),
        fractions in prop::collection::vec(prob(), 1..50),
    ) {
        let th = Thresholds::from_costs(c_fp, c_fn, 0.05);
        prop_assume!(th.is_ok());
        let th = th.unwrap();
        let initial = if start_on { Decision::Switchover } else { Decision::Standby };
        let mut state = DecisionState { decision: initial, previous: initial, since: 0.0 };
        for (i, f) in fractions.iter().enumerate() {
            let posterior = th.lower() + f * (th.upper() - th.lower());
            state = decide(posterior, &state, &th, i as f64 + 1.0);
            prop_assert_eq!(state.decision, initial);
            prop_assert!(!state.transitioned());
        }
    }

    #[test]
    fn strict_boundaries(c_fp in 1.0..10.0f64, c_fn in 1.0..10.0f64, delta in 0.0..0.05f64, start_on in any::<bool>()) {
        let th = Thresholds::from_costs(c_fp, c_fn, delta);
        prop_assume!(th.is_ok());
        let th = th.unwrap();
        let initial = if start_on { Decision::Switchover } else { Decision::Standby };
        let state = DecisionState { decision: initial, previous: initial, since: 0.0 };
        // exactly on a boundary keeps the previous decision
        prop_assert_eq!(decide(th.upper(), &state, &th, 1.0).decision, initial);
        prop_assert_eq!(decide(th.lower(), &state, &th, 1.0).decision, initial);
        let eps = 1e-9;
        prop_assert_eq!(decide(th.upper() + eps, &state, &th, 1.0).decision, Decision::Switchover);
        prop_assert_eq!(decide(th.lower() - eps, &state, &th, 1.0).decision, Decision::Standby);
    }
}
