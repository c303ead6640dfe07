"""Smoke test for the Python bindings: python python/smoke_test.py"""

import json
import math
import tempfile
from pathlib import Path

import ivbounds


def main():
    cfg = ivbounds.EstimatorConfig(0.04, 0.01)
    scenario = ivbounds.Scenario.low_dim(2.0, 2.0)
    policy = ivbounds.GmmPolicy.gaussian([0.0, 0.0], 0.5)
    data = scenario.sample(policy, 40, seed=3)
    assert len(data) == 40

    query = ivbounds.Query.partial_derivative(0, [0.0, 0.0])
    bounds = ivbounds.query_bounds(data, query, cfg)
    assert bounds.lower <= bounds.upper
    assert math.isclose(bounds.gap, ivbounds.dataset_gap(data, query, cfg), rel_tol=1e-8, abs_tol=1e-8)
    assert scenario.true_query(query) == 2.0
    print(bounds)

    z = policy.sample(5, seed=1)
    assert len(z) == 5 and all(len(v) == 2 for v in z)
    assert len(policy.score(z[0])) == 1 + 2 + 2

    try:
        ivbounds.EstimatorConfig(-1.0, 0.01)
    except ValueError as e:
        print("rejected:", e)
    else:
        raise AssertionError("negative lambda_c accepted")

    config = {
        "scenario": {"kind": "low_dim", "d_z": 2, "d_x": 2, "alpha": 2, "beta": 2, "x_star": [0, 0]},
        "query": {"kind": "partial_derivative", "index": 0, "x_star": [0, 0]},
        "estimator": {"lambda_c": 0.04, "lambda_s": 0.01, "rho": 1},
        "strategy": {"name": "all", "T": 4, "batches": 4},
        "run": {"n": 30, "n_seeds": 2, "master_seed": 5},
    }
    with tempfile.TemporaryDirectory() as out:
        rows = ivbounds.run_experiment(json.dumps(config), out)
        assert {r["strategy"] for r in rows} == {"adaptive", "aee", "ee", "random"}
        assert (Path(out) / "raw.csv").exists()
    print(f"{len(rows)} summary rows; ok")


if __name__ == "__main__":
    main()
