"""Smoke tests for the muxinfer python module: the bindings must agree with
numpy on the kernels and reproduce the cost-model numbers."""

import json
import math
import sys
import tempfile
from pathlib import Path

import numpy as np

import muxinfer as mx


def approx(a, b, tol=1e-5):
    return abs(a - b) <= tol


def test_matmul_matches_numpy():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(5, 7)).astype(np.float32)
    b = rng.normal(size=(7, 3)).astype(np.float32)
    got = mx.matmul(a, b)
    assert np.allclose(got, a @ b, atol=1e-5)


def test_softmax_rows_sum_to_one():
    x = np.array([[1.0, 0.5], [0.0, 0.0]], dtype=np.float32)
    p = mx.softmax(x)
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-6)
    assert approx(p[0, 0], 0.62246, 1e-4)


def test_cosine_distance_bounds():
    e = mx.l2_normalize(np.array([3.0, 4.0], dtype=np.float32))
    assert approx(float(e[0]), 0.6) and approx(float(e[1]), 0.8)
    assert approx(mx.cosine_distance(e, e), 1.0, 1e-6)
    assert approx(mx.cosine_distance(e, -e), 0.0, 1e-6)


def test_pair_coefficient_cases():
    assert mx.pair_coefficient(1, 1, 1) == 1
    assert mx.pair_coefficient(0, 1, 1) == -1
    assert mx.pair_coefficient(0, 2, 1) == 0


def test_mux_weights_probability():
    meta = np.array([1.0], dtype=np.float32)
    v = np.array([[1.0], [1.0]], dtype=np.float32)
    w, logits = mx.mux_weights(meta, v, [1.0, 2.0])
    assert approx(float(logits[0]), 1.0, 1e-6) and approx(float(logits[1]), 0.5, 1e-6)
    assert approx(float(w.sum()), 1.0, 1e-6)
    assert approx(float(w[0]), 0.62246, 1e-4)


def test_router_selection():
    w = np.array([0.4, 0.35, 0.25], dtype=np.float32)
    assert mx.select_ensemble(w, 0.288) == [0, 1]
    assert mx.select_single(w, [1.0, 1.0, 1.0]) == 0
    assert mx.offload_decision(0.51) and not mx.offload_decision(0.5)


def test_cost_replay():
    profile = mx.published_mobile_cloud_profile()
    hybrid = mx.cost_hybrid(profile, 0.68)
    assert approx(hybrid.latency_ms, 10.12, 1e-9)
    assert approx(hybrid.energy_mj, 55.36, 1e-9)
    assert approx(mx.replay_table2_expected_gflops(), 5.605814, 1e-4)


def test_generate_planted_is_deterministic():
    a = mx.generate_planted(classes=10, samples=32, seed=5)
    b = mx.generate_planted(classes=10, samples=32, seed=5)
    assert np.array_equal(a["inputs"], b["inputs"])
    assert a["labels"] == b["labels"]
    assert a["inputs"].shape == (32, 1, 16, 16)
    assert all(0 <= h <= 3 for h in a["hardness"])


def test_count_flops():
    arch = {
        "id": "probe",
        "input": [1, 1, 10],
        "classes": 0,
        "layers": [{"type": "flatten"}, {"type": "dense", "in": 10, "out": 10}],
    }
    assert mx.count_flops_json(json.dumps(arch)) == 200


def test_simulate_pipeline_entry_point():
    with tempfile.TemporaryDirectory() as tmp:
        mx.run_simulate("", tmp)
        report = json.loads((Path(tmp) / "reports" / "simulate.json").read_text())
        assert report["table2"]["printed_flops"] == 5.75e9
        assert report["table1"]["identity_residual"] <= 1e-9


def main():
    tests = [(name, fn) for name, fn in sorted(globals().items()) if name.startswith("test_")]
    failures = 0
    for name, fn in tests:
        try:
            fn()
            print(f"[PASS] {name}")
        except Exception as exc:  # noqa: BLE001
            failures += 1
            print(f"[FAIL] {name}: {exc}")
    print(f"{len(tests) - failures}/{len(tests)} python smoke tests passed")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
