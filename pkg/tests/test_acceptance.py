"""End-to-end acceptance checks, one test per criterion.

Run with ``pytest tests/test_acceptance.py -v`` or as a script; either way a
PASS/FAIL line per criterion is printed.
"""

import sys
import time

import numpy as np
import pytest

from vcm.alignment import compute_lattice
from vcm.checks import gradient_check, identity_check, oracle_check, random_emissions, worked_example_check
from vcm.concepts import merge_segments, merge_segments_arrays, merge_segments_loop, SelectionMask
from vcm.flops import FlopsProfile, reduction_ratio
from vcm.length import LengthConfig, epsilon, estimate_length
from vcm.trainer import TrainConfig, train_logits

pytestmark = pytest.mark.acceptance


def _best_time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def _interleaved_best(fns, rounds):
    """Best time per callable, alternating between them so load drift hits all alike."""
    best = [float("inf")] * len(fns)
    for _ in range(rounds):
        for i, fn in enumerate(fns):
            best[i] = min(best[i], _best_time(fn, 1))
    return best


def test_criterion_1_worked_lattice(report):
    res = worked_example_check()
    elapsed = _best_time(worked_example_check, 20)
    total_ok = abs(res["total_prob"] - 0.715) <= 1e-3
    ok = res["cells_matching"] == 40 and total_ok and elapsed < 1e-3
    report(1, "worked 8x5 forward table", ok,
           f"{res['cells_matching']}/40 cells, p={res['total_prob']:.6f}, {elapsed * 1e3:.3f} ms")
    assert ok


def test_criterion_2_oracle(report):
    start = time.perf_counter()
    res = oracle_check(range(1, 13), trials=100, seed=2)
    elapsed = time.perf_counter() - start
    ok = res["max_rel_err"] <= 1e-9 and elapsed < 30
    report(2, "lattice vs exhaustive enumeration", ok,
           f"{res['cases']} cases, max rel err {res['max_rel_err']:.2e}, {elapsed:.2f} s")
    assert ok


def test_criterion_3_gradient(report):
    start = time.perf_counter()
    res = gradient_check(50, max_M=10, seed=3, h=1e-5)
    elapsed = time.perf_counter() - start
    ok = res["max_rel_err"] <= 1e-4 and elapsed < 10
    report(3, "analytic vs finite-difference gradient", ok,
           f"max rel err {res['max_rel_err']:.2e}, {elapsed:.2f} s")
    assert ok


def test_criterion_4_identities(report):
    res = identity_check(200, max_M=64, seed=4)
    ok = res["max_route_rel_err"] <= 1e-9 and res["max_gamma_row_err"] <= 1e-9
    report(4, "three probability routes and posterior rows", ok,
           f"route {res['max_route_rel_err']:.2e}, gamma rows {res['max_gamma_row_err']:.2e}")
    assert ok


def test_criterion_5_segment_merge(report):
    seg = merge_segments(np.array([[2.0], [4.0], [6.0], [8.0]]),
                         SelectionMask([1, 1, 0, 1], [0.25, 0.75, 0.5, 1.0]))
    hand_ok = np.array_equal(seg.concepts, [[3.5], [8.0]]) and seg.spans.tolist() == [[1, 2], [4, 4]]

    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(1000):
        B, M, d = rng.integers(1, 5), rng.integers(1, 40), rng.integers(1, 6)
        x = rng.normal(size=(B, M, d))
        mask = rng.random((B, M)) < 0.6
        scores = rng.random((B, M))
        for fast, slow in zip(merge_segments_arrays(x, mask, scores), merge_segments_loop(x, mask, scores)):
            assert np.array_equal(fast[1], slow[1])
            if fast[0].size:
                worst = max(worst, float(np.abs(fast[0] - slow[0]).max()))
    loop_ok = worst <= 1e-12

    x = rng.normal(size=(32, 4096, 64))
    mask = rng.random((32, 4096)) < 0.5
    scores = rng.random((32, 4096))
    t_fast, t_loop = _interleaved_best([lambda: merge_segments_arrays(x, mask, scores),
                                        lambda: merge_segments_loop(x, mask, scores)], 3)
    speedup = t_loop / t_fast
    ok = hand_ok and loop_ok and speedup >= 10
    report(5, "segment merge", ok, f"hand {hand_ok}, loop gap {worst:.1e}, "
           f"{t_loop * 1e3:.0f} ms loop vs {t_fast * 1e3:.1f} ms batched = {speedup:.1f}x")
    assert ok


def test_criterion_6_length_and_weight(report):
    L = estimate_length(576, -35, LengthConfig(S=0.25))
    eps = [epsilon(0.0), epsilon(0.5), epsilon(1.0)]
    ok = (L == 144 and abs(eps[0] - 0.2000454) <= 1e-6 and eps[1] == 0.7
          and abs(eps[2] - 1.1999546) <= 1e-6)
    report(6, "length estimate and loss weight", ok,
           f"L={L}, eps=({eps[0]:.7f}, {eps[1]}, {eps[2]:.7f})")
    assert ok


def test_criterion_7_flops_ratio(report):
    R = reduction_ratio(FlopsProfile(T=32, d=4096, scale=1 / 8))
    closed = (3 / 8 + 1 / 512) / (25 / 8)
    ok = abs(R - closed) <= 1e-9 and 1 - R >= 0.85
    report(7, "FLOPs reduction ratio", ok, f"R={R:.10f}, closed form {closed:.10f}")
    assert ok


def test_criterion_8_training(report):
    start = time.perf_counter()
    passed = 0
    for seed in range(10):
        trace = train_logits(TrainConfig(M=64, L=8, lr=0.1, max_steps=2000, seed=seed))
        if trace.decoded_runs == 8 and trace.losses[-1] < trace.losses[0]:
            passed += 1
    elapsed = time.perf_counter() - start
    ok = passed >= 9 and elapsed < 30
    report(8, "training demo", ok, f"{passed}/10 seeds, {elapsed:.1f} s")
    assert ok


def test_criterion_9_performance(report):
    rng = np.random.default_rng(9)
    ladder = [1024, 2048, 4096, 8192]
    cases = {M: random_emissions(rng, M) for M in ladder}
    best = _interleaved_best([lambda em=cases[M]: compute_lattice(em, 512, mode="log") for M in ladder], 5)
    times = dict(zip(ladder, best))
    ratios = [times[b] / times[a] for a, b in zip(ladder, ladder[1:])]
    ok = times[4096] < 1.0 and max(ratios) <= 2.5
    report(9, "log-space lattice runtime", ok,
           f"M=4096 {times[4096]:.3f} s, doubling ratios {', '.join(f'{r:.2f}' for r in ratios)}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
