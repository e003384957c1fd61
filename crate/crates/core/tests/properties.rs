use proptest::prelude::*;

use delayshare::falsify::{check_conditional_markov, check_payoff_identity, check_policy_independence};
use delayshare::filter::{chained_beliefs, children, initial_realizations, oracle_beliefs, OtherSpace};
use delayshare::info::{enumerate_reachable, InfoRealization};
use delayshare::model::{random_model, RandomShape};
use delayshare::oracle::{brute_force_best_response, enumerate_atoms, enumerate_cost, follow, verify_pbp};
use delayshare::{pbp_sweep, solve_best_response, validate_model, verify_value_dominance, ModelSpec, StrategyProfile};

/// Shapes kept small enough that full enumeration stays in milliseconds.
fn shape() -> impl Strategy<Value = RandomShape> {
    prop_oneof![
        (1usize..=2, 1usize..=2).prop_map(|(delay, horizon)| RandomShape {
            agents: 2,
            delay: delay.min(horizon),
            horizon,
            state_size: 2,
            obs_size: 2,
            act_size: 2,
        }),
        (1usize..=3).prop_map(|delay| RandomShape {
            agents: 2,
            delay,
            horizon: 3,
            state_size: 2,
            obs_size: 2,
            act_size: 2,
        }),
        (1usize..=2).prop_map(|delay| RandomShape {
            agents: 3,
            delay,
            horizon: 2,
            state_size: 2,
            obs_size: 2,
            act_size: 2,
        }),
        (1usize..=3, 1usize..=3).prop_map(|(delay, horizon)| RandomShape {
            agents: 1,
            delay: delay.min(horizon),
            horizon,
            state_size: 3,
            obs_size: 2,
            act_size: 2,
        }),
    ]
}

fn instance() -> impl Strategy<Value = (ModelSpec, StrategyProfile)> {
    (any::<u64>(), any::<u64>(), shape()).prop_map(|(ms, gs, shape)| {
        let spec = random_model(ms, shape);
        let g = StrategyProfile::random(&spec, gs).unwrap();
        (spec, g)
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn random_models_are_valid((spec, _g) in instance()) {
        prop_assert!(validate_model(&spec).is_empty());
    }

    #[test]
    fn atoms_form_a_probability_measure((spec, g) in instance()) {
        let atoms = enumerate_atoms(&spec, spec.horizon, follow(&spec, &g)).unwrap();
        let total: f64 = atoms.iter().map(|a| a.mass).sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
        prop_assert!(atoms.iter().all(|a| a.mass > 0.0));
    }

    #[test]
    fn recursion_matches_bayes_oracle((spec, g) in instance(), k_raw in 0usize..3) {
        let k = k_raw % spec.agents;
        let chained = chained_beliefs(&spec, &g, k, spec.horizon).unwrap();
        for (t, level) in chained.iter().enumerate() {
            let oracle = oracle_beliefs(&spec, &g, k, t).unwrap();
            prop_assert_eq!(oracle.len(), level.len());
            for (info, xi) in level {
                let sum: f64 = xi.probs.iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-10);
                prop_assert!(xi.probs.iter().all(|&p| p >= 0.0));
                let gap = xi.max_abs_diff(&oracle[info]);
                prop_assert!(gap <= 1e-10, "t={} {} gap {}", t, info.key(), gap);
            }
        }
    }

    #[test]
    fn successor_probabilities_sum_to_one((spec, g) in instance(), u in 0usize..2) {
        for k in 0..spec.agents {
            for (info, xi, _) in initial_realizations(&spec, k).unwrap() {
                let total: f64 = children(&spec, &info, &xi, &g, u).unwrap().iter().map(|c| c.prob).sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn payoff_identity_holds((spec, g) in instance()) {
        let report = check_payoff_identity(&spec, &g).unwrap();
        prop_assert!(report.max_gap <= 1e-10, "{:?}", report);
    }

    #[test]
    fn posterior_ignores_own_strategy((spec, g) in instance(), seed in any::<u64>()) {
        let other = StrategyProfile::random(&spec, seed).unwrap().agents[0].clone();
        let report = check_policy_independence(&spec, &g, &g.with_agent(0, other), 0).unwrap();
        prop_assert_eq!(report.max_gap, 0.0);
    }

    #[test]
    fn posterior_is_conditionally_markov((spec, g) in instance()) {
        let report = check_conditional_markov(&spec, &g, 0).unwrap();
        prop_assert!(report.max_gap <= 1e-10, "{:?}", report.witness);
    }

    #[test]
    fn keys_and_encodings_round_trip((spec, g) in instance(), t_raw in 0usize..4) {
        let t = t_raw % (spec.horizon + 1);
        for r in enumerate_reachable(&spec, &g, 0, t).unwrap() {
            let back = InfoRealization::parse_key(&r.info.key(), 0, spec.delay).unwrap();
            prop_assert_eq!(&back, &r.info);
            let space = OtherSpace::new(&spec, 0, t);
            for lam in &r.others {
                prop_assert_eq!(&space.decode(space.encode(lam)), lam);
            }
        }
    }

    #[test]
    fn strategy_json_round_trip((spec, g) in instance()) {
        let back = StrategyProfile::from_json_str(&spec, &g.to_json_string()).unwrap();
        prop_assert_eq!(back, g);
    }

    #[test]
    fn model_json_round_trip((spec, _g) in instance()) {
        let back = ModelSpec::from_json_str(&spec.to_json_string()).unwrap();
        prop_assert_eq!(back, spec);
    }
}

proptest! {
    // brute-force oracles dominate the run time
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn best_response_matches_brute_force((spec, g) in instance(), k_raw in 0usize..3) {
        let k = k_raw % spec.agents;
        let (table, best) = solve_best_response(&spec, k, &g).unwrap();
        let achieved = enumerate_cost(&spec, &g.with_agent(k, best.clone())).unwrap();
        prop_assert!((table.initial_value() - achieved).abs() <= 1e-10);
        prop_assert!(table.initial_value() <= enumerate_cost(&spec, &g).unwrap() + 1e-12);
        if let Ok((brute, _)) = brute_force_best_response(&spec, &g, k) {
            prop_assert!((table.initial_value() - brute).abs() <= 1e-10);
        }
        let report = verify_value_dominance(&spec, k, &g, &table, &best).unwrap();
        prop_assert!(report.violations.is_empty());
        prop_assert!(report.max_abs_gap <= 1e-10);
        let alt = g.agents[k].clone();
        let report = verify_value_dominance(&spec, k, &g, &table, &alt).unwrap();
        prop_assert!(report.violations.is_empty(), "{:?}", report.violations);
    }

    #[test]
    fn sweep_is_monotone_and_certified((spec, g) in instance()) {
        let sweep = pbp_sweep(&spec, &g, 32).unwrap();
        prop_assert!(sweep.trace.windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(sweep.trace.len(), 1 + sweep.rounds * spec.agents);
        if sweep.converged {
            if let Ok(cert) = verify_pbp(&spec, &sweep.profile) {
                prop_assert!(cert.certified, "{:?}", cert);
            }
        }
    }
}
