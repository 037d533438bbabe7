"""Acceptance suite: every release criterion, one test each, with a printed
pass/fail line per criterion (run with ``pytest tests/test_acceptance.py -s``).

The statistical criteria are deterministic checks at the pinned seed below;
the heavy cells (1, 2, 3, 10) each run within their stated wall-clock
budgets on a few cores. The optional large-p variant of criterion 3 runs
only when SLED_FULL_ACCEPTANCE=1 is set.
"""

import json
import math
import os
import time

import numpy as np
import pytest

from sled import (
    Scenario,
    SparsityBudget,
    adjacency,
    fantope_projection,
    fps_admm,
    power_study,
    sample,
    sparse_eig_exact,
)
from sled.cli import main
from sled.simgen import draw_repetition
from sled.sparse_eig import constrained_pmd, constrained_pmd_batch
from sled.streams import stream

ACCEPTANCE_SEED = 20260808
# The solver's inner loops hold the GIL between vectorized calls, so extra
# threads slow the small-p cells down; criterion 7 covers thread-count
# invariance separately. Override with SLED_THREADS when on big hardware.
THREADS = max(1, int(os.environ.get("SLED_THREADS", "1")))
FULL = os.environ.get("SLED_FULL_ACCEPTANCE") == "1"


def _report(criterion: str, passed: bool, detail: str, started: float):
    line = (f"CRITERION {criterion}: {'PASS' if passed else 'FAIL'} "
            f"[{time.perf_counter() - started:.1f}s] {detail}")
    print(line, flush=True)
    assert passed, line


def test_criterion_01_table_power_block_diagonal():
    started = time.perf_counter()
    sc = Scenario(base_kind="block_diagonal", diff_kind="sparse_block",
                  noise="normal", n=100, m=100, p=100, c=0.3,
                  n_permutations=100, reps=50, seed=ACCEPTANCE_SEED)
    table = power_study(sc, methods=("sled", "frobenius", "max"),
                        alpha=0.05, threads=THREADS)
    power = {row.method: row.power for row in table.rows}
    passed = (power["sled"] >= 0.90 and power["frobenius"] >= 0.80
              and power["max"] >= 0.75)
    _report("1", passed,
            f"block-diagonal cell power: sled={power['sled']:.2f} (>=0.90), "
            f"frobenius={power['frobenius']:.2f} (>=0.80), "
            f"max={power['max']:.2f} (>=0.75)", started)


def test_criterion_02_size_calibration():
    started = time.perf_counter()
    # c is unstated for this cell; 0.3 matches the simulation protocol and
    # keeps the budget off the single-coordinate floor, where zero-diagonal
    # relationship kinds would degenerate.
    sc = Scenario(base_kind="exp_decay", diff_kind="none", noise="normal",
                  n=50, m=50, p=50, c=0.3, n_permutations=100, reps=200,
                  seed=ACCEPTANCE_SEED + 1)
    table = power_study(sc, methods=("sled", "frobenius", "max"),
                        alpha=0.05, threads=THREADS)
    sizes = {row.method: row.power for row in table.rows}
    passed = all(0.02 <= v <= 0.10 for v in sizes.values())
    _report("2", passed,
            "null rejection rates in [0.02, 0.10]: "
            + ", ".join(f"{m}={v:.3f}" for m, v in sizes.items()), started)


def test_criterion_03_exp_decay_power_and_max_gap():
    started = time.perf_counter()
    sc = Scenario(base_kind="exp_decay", diff_kind="sparse_block",
                  noise="normal", n=100, m=100, p=100, c=0.3,
                  n_permutations=100, reps=50, seed=ACCEPTANCE_SEED + 2)
    table = power_study(sc, methods=("sled", "max"), alpha=0.05, threads=THREADS)
    power = {row.method: row.power for row in table.rows}
    passed = power["sled"] >= 0.90 and power["sled"] > power["max"]
    _report("3", passed,
            f"exp-decay cell: sled={power['sled']:.2f} (>=0.90) vs "
            f"max={power['max']:.2f} (strictly below)", started)


@pytest.mark.skipif(not FULL, reason="set SLED_FULL_ACCEPTANCE=1 for the p=500 cell")
def test_criterion_03_full_p500_gap():
    started = time.perf_counter()
    sc = Scenario(base_kind="exp_decay", diff_kind="sparse_block",
                  noise="normal", n=100, m=100, p=500, c=0.3,
                  n_permutations=100, reps=50, seed=ACCEPTANCE_SEED + 2)
    table = power_study(sc, methods=("sled", "max"), alpha=0.05, threads=THREADS)
    power = {row.method: row.power for row in table.rows}
    passed = power["sled"] >= 0.9 and power["max"] <= 0.5
    _report("3-full", passed,
            f"p=500 cell: sled={power['sled']:.2f} (>=0.9), "
            f"max={power['max']:.2f} (<=0.5)", started)


def test_criterion_04_upper_bound_zero_violations():
    started = time.perf_counter()
    rng = stream(ACCEPTANCE_SEED + 3)
    by_p: dict[int, list[np.ndarray]] = {}
    for _ in range(500):
        p = int(rng.integers(5, 51))
        scale = float(rng.uniform(0.05, 50.0))
        a = rng.normal(size=(p, p)) * scale
        by_p.setdefault(p, []).append((a + a.T) / 2)
    violations = 0
    checked = 0
    for p, mats in sorted(by_p.items()):
        stack = np.stack(mats)
        maxabs = np.abs(stack).reshape(len(mats), -1).max(axis=1)
        for c in (0.1, 0.3, 0.5):
            budget = SparsityBudget.from_c(c, p)
            for res, bound in zip(constrained_pmd_batch(stack, budget),
                                  budget.r * maxabs + 1e-8):
                checked += 1
                violations += res.value > bound
    _report("4", violations == 0,
            f"value <= R*max|entry| + 1e-8 on {checked} solves "
            f"({violations} violations)", started)


def test_criterion_05_exact_oracle_bracketing():
    started = time.perf_counter()
    rng = stream(ACCEPTANCE_SEED + 4)
    relax_fail = 0
    quality_fail = 0
    for _ in range(200):
        p = int(rng.integers(4, 9))
        r_int = int(rng.integers(1, min(4, p)))
        a = rng.normal(size=(p, p))
        a = (a + a.T) / 2
        exact_val, _ = sparse_eig_exact(a, r_int)
        budget = SparsityBudget.from_sparsity(r_int, p)
        fps = fps_admm(a, budget, tol=1e-6, max_iter=6000)
        relax_fail += exact_val > fps.value + 1e-3
        pmd = constrained_pmd(a, budget, tol=1e-9, max_iter=1000)
        # quality gate: within 20% of the exact value on the exact value's
        # scale (the plain 0.8x ratio flips direction when the value is
        # negative, which happens on all-negative-leading instances)
        quality_fail += pmd.value < exact_val - 0.2 * abs(exact_val)
    passed = relax_fail == 0 and quality_fail == 0
    _report("5", passed,
            f"200 small instances: relaxation dominance violations={relax_fail}, "
            f"solver-quality (>=0.8x exact) violations={quality_fail}", started)


def test_criterion_06_toy_block_exact():
    started = time.perf_counter()
    d = np.zeros((6, 6))
    d[:3, :3] = 0.5
    val, support = sparse_eig_exact(d, 3)
    passed = abs(val - 1.5) <= 1e-10 and support == (0, 1, 2)
    _report("6", passed,
            f"uniform 0.5 block (s=3, p=6): value={val!r}, support={support}",
            started)


def test_criterion_07_thread_determinism_via_cli(tmp_path):
    started = time.perf_counter()
    sc = Scenario(base_kind="block_diagonal", diff_kind="sparse_block",
                  noise="normal", n=100, m=100, p=100, c=0.3,
                  n_permutations=100, reps=1, seed=ACCEPTANCE_SEED + 5)
    _, x, y = draw_repetition(sc, rep=0)
    from sled import write_matrix

    x_path = tmp_path / "x.csv"
    y_path = tmp_path / "y.csv"
    write_matrix(x, x_path)
    write_matrix(y, y_path)
    payloads = []
    for threads in ("1", "2", "8"):
        out = tmp_path / f"result_t{threads}.json"
        code = main(["test", str(x_path), str(y_path), "--no-header",
                     "--kind", "covariance", "--c", "0.3", "-B", "100",
                     "--seed", "17", "--threads", threads,
                     "--include-null-stats", "--reproducible",
                     "--out", str(out)])
        assert code == 0
        payloads.append(out.read_bytes())
    identical = payloads[0] == payloads[1] == payloads[2]
    p_value = json.loads(payloads[0])["result"]["p_value"]
    _report("7", identical and p_value <= 0.05,
            f"threads 1/2/8 result JSON byte-identical={identical} "
            f"(p-value {p_value} rejects the block alternative)", started)


def test_criterion_08_fantope_projection_suite():
    started = time.perf_counter()
    rng = stream(ACCEPTANCE_SEED + 6)
    worst_trace = 0.0
    worst_eig_low, worst_eig_high = 0.0, 0.0
    worst_drift = 0.0
    for _ in range(200):
        p = int(rng.integers(2, 40))
        m = rng.normal(size=(p, p)) * float(rng.uniform(0.1, 20.0))
        m = (m + m.T) / 2
        h = fantope_projection(m)
        w = np.linalg.eigvalsh(h)
        worst_trace = max(worst_trace, abs(float(np.trace(h)) - 1.0))
        worst_eig_low = max(worst_eig_low, max(0.0, -float(w[0])))
        worst_eig_high = max(worst_eig_high, max(0.0, float(w[-1]) - 1.0))
        worst_drift = max(worst_drift,
                          float(np.linalg.norm(fantope_projection(h) - h)))
    passed = (worst_trace <= 1e-10 and worst_eig_low <= 1e-10
              and worst_eig_high <= 1e-10 and worst_drift <= 1e-10)
    _report("8", passed,
            f"200 projections: |trace-1|<={worst_trace:.2e}, "
            f"eig bounds overshoot<={max(worst_eig_low, worst_eig_high):.2e}, "
            f"idempotency drift<={worst_drift:.2e} (all <=1e-10)", started)


def test_criterion_09_sampler_moments():
    started = time.perf_counter()
    n = 50_000
    eye = np.eye(1)
    # Fourth central moments from the distributions' kurtosis:
    # normal 3; centered Gamma(4, 0.5) has excess 6/4; t(12) excess 6/8 with
    # variance 1.2; centered NB(mean 2, dispersion 2) excess 6/2 + 1/4.
    spec = {
        "normal": (1.0, 3.0),
        "gamma": (1.0, 4.5),
        "t12": (1.2, 5.4),
        "negbin": (4.0, 100.0),
    }
    details = []
    passed = True
    for i, (noise, (var, mu4)) in enumerate(spec.items()):
        z = sample(eye, n, noise, stream(ACCEPTANCE_SEED + 7, i)).values.ravel()
        mean_tol = 3.0 * math.sqrt(var / n)
        var_tol = 3.0 * math.sqrt((mu4 - var * var) / n)
        ok = abs(z.mean()) <= mean_tol and abs(z.var() - var) <= var_tol
        passed &= ok
        details.append(f"{noise}: mean={z.mean():+.4f} (tol {mean_tol:.4f}), "
                       f"var={z.var():.4f} (target {var} tol {var_tol:.4f})")
    _report("9", passed, "; ".join(details), started)


def test_criterion_10_adjacency_pathway():
    # The case-control co-expression analysis itself needs restricted data
    # and stays out of scope; the adjacency pathway is validated by size
    # calibration plus a synthetic block-difference power check instead.
    started = time.perf_counter()
    size_sc = Scenario(base_kind="exp_decay", diff_kind="none", noise="normal",
                       n=50, m=50, p=50, c=0.3, n_permutations=100, reps=200,
                       seed=ACCEPTANCE_SEED + 8, kind=adjacency(3.0))
    size_table = power_study(size_sc, methods=("sled",), alpha=0.05,
                             threads=THREADS)
    size = size_table.rows[0].power

    power_sc = Scenario(base_kind="exp_decay", diff_kind="sparse_block",
                        noise="normal", n=100, m=100, p=100, c=0.3,
                        n_permutations=100, reps=25, seed=ACCEPTANCE_SEED + 9,
                        kind=adjacency(3.0))
    power_table = power_study(power_sc, methods=("sled",), alpha=0.05,
                              threads=THREADS)
    detection = power_table.rows[0].power

    passed = 0.02 <= size <= 0.10 and detection >= 0.8
    _report("10", passed,
            f"adjacency(beta=3): size={size:.3f} (in [0.02, 0.10]), "
            f"synthetic block-difference detection={detection:.2f} (>=0.8)",
            started)
