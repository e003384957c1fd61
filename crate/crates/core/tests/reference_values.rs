//! Values frozen from an independent full-history enumeration that shares no
//! code with the crate, plus small hand-derived cases.

use delayshare::filter::{belief_update, classical_filter_update, initial_belief};
use delayshare::oracle::{brute_force_best_response, enumerate_cost};
use delayshare::{canonical_instance, cost_via_beliefs, pbp_sweep, solve_best_response, CommonInfo, StrategyProfile};

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn initial_belief_canon_2a() {
    // agent 0 sees y=0: joint (x, y^1) ∝ 0.6·0.8·{0.8, 0.2}, 0.4·0.2·{0.2, 0.8}
    let spec = canonical_instance("CANON-2A").unwrap();
    let xi = initial_belief(&spec, 0, 0).unwrap();
    let expected = [24.0 / 35.0, 6.0 / 35.0, 1.0 / 35.0, 4.0 / 35.0];
    for (p, e) in xi.probs.iter().zip(expected) {
        assert!(close(*p, e, 1e-15), "{:?}", xi.probs);
    }
}

#[test]
fn constant_profile_costs() {
    let frozen = [("CANON-2A", 2.0585, 2.5705), ("CANON-2B", 2.0585, 2.5705)];
    for (name, zero, one) in frozen {
        let spec = canonical_instance(name).unwrap();
        for (a, expected) in [(0, zero), (1, one)] {
            let g = StrategyProfile::constant(&spec, a);
            assert!(close(enumerate_cost(&spec, &g).unwrap(), expected, 1e-12), "{name} constant {a}");
            for k in 0..2 {
                assert!(close(cost_via_beliefs(&spec, &g, k).unwrap(), expected, 1e-12));
            }
        }
    }
    let spec = canonical_instance("CANON-1").unwrap();
    let g = StrategyProfile::constant(&spec, 0);
    assert!(close(enumerate_cost(&spec, &g).unwrap(), 2.2445, 1e-12));
}

#[test]
fn best_response_against_constant_partner() {
    for (name, expected) in [("CANON-2A", 1.45444), ("CANON-2B", 1.615311)] {
        let spec = canonical_instance(name).unwrap();
        let g = StrategyProfile::constant(&spec, 0);
        let (table, _) = solve_best_response(&spec, 0, &g).unwrap();
        assert!(close(table.initial_value(), expected, 1e-12), "{name}: {}", table.initial_value());
        let (brute, _) = brute_force_best_response(&spec, &g, 0).unwrap();
        assert!(close(brute, expected, 1e-12));
    }
}

#[test]
fn single_agent_optimum() {
    // K = 1: a best response is globally optimal, so one sweep reaches it
    let spec = canonical_instance("CANON-1").unwrap();
    let sweep = pbp_sweep(&spec, &StrategyProfile::constant(&spec, 0), 32).unwrap();
    assert!(sweep.converged);
    let cost = enumerate_cost(&spec, &sweep.profile).unwrap();
    assert!(close(cost, 1.442725, 1e-12), "{cost}");
    assert!(close(sweep.trace[1], 1.442725, 1e-12));
    let (brute, _) = brute_force_best_response(&spec, &StrategyProfile::constant(&spec, 0), 0).unwrap();
    assert!(close(brute, 1.442725, 1e-12));
}

#[test]
fn identity_dynamics_with_perfect_observation() {
    let mut spec = canonical_instance("CANON-1").unwrap();
    for t in 0..spec.horizon {
        spec.transition[t] = vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0];
    }
    for per_t in &mut spec.observation {
        per_t[0] = vec![1.0, 0.0, 0.0, 1.0];
    }
    let g = StrategyProfile::constant(&spec, 0);
    let xi = initial_belief(&spec, 0, 1).unwrap();
    let delta = CommonInfo { t: 1, obs: vec![vec![1]], acts: vec![vec![0]] };
    let next = belief_update(&spec, &xi, &delta, &g, 0, 1).unwrap();
    assert_eq!(next.x_marginal(), vec![0.0, 1.0]);
    assert_eq!(classical_filter_update(&spec, 0, &[0.0, 1.0], 0, 1).unwrap(), vec![0.0, 1.0]);
}

#[test]
fn symmetric_model_keeps_uniform_marginal() {
    let mut spec = canonical_instance("CANON-2A").unwrap().with_uninformative_observations();
    spec.init_dist = vec![0.5, 0.5];
    for t in 0..spec.horizon {
        // doubly stochastic for every joint action
        spec.transition[t] = (0..8).flat_map(|_| [0.3, 0.7]).collect();
        for row in spec.transition[t].chunks_mut(8).skip(1) {
            for pair in row.chunks_mut(2) {
                pair.swap(0, 1);
            }
        }
    }
    assert!(delayshare::validate_model(&spec).is_empty());
    let g = StrategyProfile::constant(&spec, 0);
    let xi = initial_belief(&spec, 0, 0).unwrap();
    let delta = CommonInfo { t: 1, obs: vec![vec![0], vec![1]], acts: vec![vec![0], vec![0]] };
    let next = belief_update(&spec, &xi, &delta, &g, 0, 1).unwrap();
    for p in next.x_marginal() {
        assert!(close(p, 0.5, 1e-15));
    }
}
