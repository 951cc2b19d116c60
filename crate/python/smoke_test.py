"""Smoke test for the aloq_py extension.

Build first:
    cargo build --release -p aloq-py
    cp target/release/libaloq_py.so python/aloq_py.so
then run `python3 python/smoke_test.py` from the repository root.
"""

import json
import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import aloq_py  # noqa: E402


def close(a, b, tol):
    return abs(a - b) <= tol * max(1.0, abs(b))


def check_tasks():
    assert aloq_py.fsre1(0.0, -0.5) == 0.0
    expected = 75.0 * math.exp(-1.0) + math.sin(2.0) * math.sin(-1.35)
    assert close(aloq_py.fsre1(1.0, -0.5), expected, 1e-12)
    assert close(aloq_py.fsre2(0.0, 0.0), 42.0, 1e-12)

    for name in aloq_py.TASK_NAMES:
        task = aloq_py.Task(name, seed=1)
        lower, upper = task.policy_bounds
        mid = [(a + b) / 2 for a, b in zip(lower, upper)]
        assert math.isfinite(task.exact_fbar(mid)), name
        assert 0.0 <= task.sre_probability(mid) <= 1.0, name
        json.loads(task.constants())

    try:
        aloq_py.Task("no-such-task")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown task accepted")


def check_gp():
    policies = [[0.1], [0.5], [0.9], [0.3]]
    envs = [[0.2], [0.7], [0.4], [0.9]]
    returns = [1.0, -0.5, 0.3, 0.8]
    gp = aloq_py.Gp(policies, envs, returns, 1.0, [0.3, 0.4], 1e-6)

    mean, cov = gp.predict(policies, envs)
    for m, y in zip(mean, returns):
        assert close(m, y, 1e-3)
    assert all(cov[i][i] >= 0.0 for i in range(len(cov)))

    points = [[0.1], [0.5], [0.9]]
    weights = [0.2, 0.5, 0.3]
    pm, pc = gp.predict([[0.4]] * 3, points)
    want_mean = sum(w * m for w, m in zip(weights, pm))
    want_var = sum(wi * wj * pc[i][j] for i, wi in enumerate(weights) for j, wj in enumerate(weights))
    got_mean, got_var = gp.fbar_moments([0.4], points, weights)
    assert close(got_mean, want_mean, 1e-10)
    assert close(got_var, want_var, 1e-10)

    after = gp.lookahead_variance([0.4], [0.5], points, weights)
    assert 0.0 <= after <= got_var + 1e-12
    assert 0 <= gp.select_theta([0.4], points, weights) < len(points)


def check_direct_and_sampler():
    target = [0.2, 0.7, 0.45]
    x, value, evals = aloq_py.direct_maximize(
        lambda z: -sum((a - b) ** 2 for a, b in zip(z, target)), 3, budget=500
    )
    assert evals <= 500
    assert max(abs(a - b) for a, b in zip(x, target)) < 1e-2
    assert value <= 0.0

    draws = aloq_py.slice_sample(lambda z: -0.5 * z[0] ** 2, [0.0], 2000, seed=3)
    xs = [d[0] for d in draws]
    mean = sum(xs) / len(xs)
    var = sum((v - mean) ** 2 for v in xs) / len(xs)
    assert abs(mean) < 0.15 and abs(var - 1.0) < 0.2

    warped = aloq_py.beta_warp([0.0, 0.5, 1.0], [1.0, 2.0, 0.5], [1.0, 2.0, 0.5])
    assert warped[0] == 0.0 and close(warped[1], 0.5, 1e-12) and warped[2] == 1.0


def check_run():
    task = aloq_py.Task("fsre2")
    trace = aloq_py.run(task, "aloq", budget=16, seed=0, chain="reduced")
    assert len(trace) == 16
    assert trace.phases[:8] == ["init"] * 8
    assert trace.phases[8:] == ["explore", "intensify"] * 4
    assert len(trace.final_policy) == 1
    again = aloq_py.run(task, "aloq", budget=16, seed=0, chain="reduced")
    assert again.values == trace.values
    assert again.incumbents == trace.incumbents

    with tempfile.TemporaryDirectory() as tmp:
        paths = aloq_py.run_experiment("fsre1", ["naive", "rq-aloq"], [0, 1], 12, tmp, timing=False)
        assert len(paths) == 4
        summary = json.loads(aloq_py.aggregate(tmp))
        assert len(summary["finals"]) == 2
        assert summary["missing"] == []


def main():
    check_tasks()
    check_gp()
    check_direct_and_sampler()
    check_run()
    print("smoke test passed")


if __name__ == "__main__":
    main()
