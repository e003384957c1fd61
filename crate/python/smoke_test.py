"""Smoke test for the delayshare Python bindings.

Build and run from the repository root:

    cargo build --release -p delayshare-python
    cp target/release/libdelayshare_py.so python/delayshare_py.so
    python3 python/smoke_test.py
"""

import json
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import delayshare_py as ds  # noqa: E402


def close(a, b, tol=ds.TOL_COMPARE):
    return abs(a - b) <= tol


def main():
    model = ds.Model.canonical("CANON-2A")
    assert (model.agents, model.delay, model.horizon) == (2, 1, 2), model
    assert model.validate() == []
    assert ds.Model.from_json(model.to_json()).to_json() == model.to_json()

    zero = ds.Strategy.constant(model, 0)
    cost = ds.enumerate_cost(model, zero)
    assert close(cost, 2.0585, 1e-12), cost
    for k in range(model.agents):
        assert close(ds.cost_via_beliefs(model, zero, k), cost)

    post = ds.initial_posterior(model, 0, 0)
    probs = [p for _, _, p in post["support"]]
    assert close(sum(probs), 1.0) and close(probs[0], 24 / 35), post

    value, best = ds.solve_best_response(model, zero, 0)
    brute, _ = ds.brute_force_best_response(model, zero, 0)
    assert close(value, brute), (value, brute)
    assert close(ds.enumerate_cost(model, best), value)

    profile, trace, converged = ds.pbp_sweep(model, zero)
    assert converged and all(b <= a for a, b in zip(trace, trace[1:])), trace
    assert ds.verify_pbp(model, profile)["certified"]

    b_model = ds.Model.canonical("CANON-2B")
    report = ds.check_conditional_independence(b_model, ds.Strategy.constant(b_model, 0), 0, 1)
    assert report["max_gap"] > 0.01, report["max_gap"]
    flat = ds.check_conditional_independence(b_model.uninformative(), ds.Strategy.constant(b_model, 0), 0, 1)
    assert flat["max_gap"] <= 1e-12

    other = zero.with_agent_from(0, ds.Strategy.random(model, 7))
    assert ds.check_policy_independence(model, zero, other, 0)["max_gap"] == 0.0
    assert ds.check_conditional_markov(model, zero, 0)["max_gap"] <= ds.TOL_COMPARE
    assert ds.check_k1_reduction(ds.Model.canonical("CANON-1"))["max_gap"] <= 1e-12

    code, rep = ds.run("falsify", "CANON-2B")
    assert code == 0 and rep["pass"], code
    assert set(rep) == {"command", "model", "results", "gaps", "tolerances", "pass"}

    try:
        ds.solve_best_response(model, zero, 5)
    except ValueError:
        pass
    else:
        raise AssertionError("out-of-range agent accepted")

    print(json.dumps({"cost": cost, "best_response": value, "pbp_cost": trace[-1], "ci_gap": report["max_gap"]}))
    print("smoke test passed")


if __name__ == "__main__":
    main()
