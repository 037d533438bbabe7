"""Baseline two-sample statistics and the shared permutation scaffold.

Two classical alternatives to the spectral statistic: the squared Frobenius
norm of the differential matrix (dense alternative) and the normalized
maximal entry discrepancy of the two covariance estimates (sparse, strong
single-entry alternative). Both are calibrated with the same permutation
engine as the spectral test so that power comparisons are like for like.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .engine import (
    _CHUNK,
    DataMatrix,
    RelationshipKind,
    _relationship_values,
    _statistic_batch,
    p_value_strict,
)
from .errors import DegenerateVariance, DimensionMismatch
from .sparse_eig import SparsityBudget
from .streams import stream

METHODS = ("sled", "frobenius", "max")


def frobenius_statistic(diff: np.ndarray) -> float:
    """Sum of squared entries of the differential matrix."""
    diff = np.asarray(diff, dtype=float)
    return float(np.sum(diff * diff))


def _covariance_moments(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-group covariance and the empirical variance of its cross products.

    theta[i, j] is the variance over samples of the centered products
    (x_ki - mean_i)(x_kj - mean_j); tiny negative values from cancellation
    are clipped to zero.
    """
    n = values.shape[0]
    c = values - values.mean(axis=0)
    sigma = c.T @ c / n
    csq = c * c
    theta = csq.T @ csq / n - sigma * sigma
    return sigma, np.maximum(theta, 0.0)


def max_statistic(x: DataMatrix, y: DataMatrix) -> float:
    """Largest variance-normalized squared entry difference of the covariances.

    Each entry's squared difference is scaled by the sum of the two groups'
    per-entry sampling variances; the statistic is the maximum over entries.
    """
    if x.p != y.p:
        raise DimensionMismatch(f"feature counts differ: {x.p} vs {y.p}")
    if x.n < 2 or y.n < 2:
        raise ValueError("need at least 2 samples per group")
    s1, t1 = _covariance_moments(x.values)
    s2, t2 = _covariance_moments(y.values)
    denom = t1 / x.n + t2 / y.n
    if np.any(denom == 0.0):
        raise DegenerateVariance("an entry pair has zero sampling variance in both groups")
    return float(np.max((s1 - s2) ** 2 / denom))


@dataclass
class MethodOutcome:
    """Observed statistic, null statistics, and p-value for one method."""

    statistic: float
    null_stats: np.ndarray
    p_value: float
    leverage: np.ndarray | None = None
    negated: bool = False
    n_nonconverged: int = 0


@dataclass
class MultiMethodResult:
    """Per-method outcomes computed on one shared set of permutations."""

    outcomes: dict[str, MethodOutcome] = field(default_factory=dict)

    def p_values(self) -> dict[str, float]:
        return {m: o.p_value for m, o in self.outcomes.items()}


def permutation_pvalues(x: DataMatrix, y: DataMatrix, kind: RelationshipKind,
                        budget: SparsityBudget, methods, n_permutations: int,
                        seed: int, threads: int = 1, solver: str = "pmd",
                        tol: float = 1e-6, max_iter: int = 100,
                        rho: float = 1.0) -> MultiMethodResult:
    """Calibrate several statistics against one shared permutation null.

    Every method sees the identical pseudo-groupings: replicate ``b`` draws
    its permutation from the stream ``(seed, b)``, exactly as the
    single-method permutation test does, so the spectral method's numbers are
    bit-identical between the two entry points. The max-entry statistic is
    always computed on covariances of the raw pseudo-groups; the others use
    ``kind``.
    """
    methods = list(methods)
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ValueError(f"unknown methods: {unknown}")
    if n_permutations < 1:
        raise ValueError("n_permutations must be at least 1")
    if x.p != y.p:
        raise DimensionMismatch(f"feature counts differ: {x.p} vs {y.p}")
    if x.n + y.n < 4:
        raise ValueError("need at least 4 pooled samples")

    pooled = np.vstack([x.values, y.values])
    n, total = x.n, x.n + y.n
    want_diff = "sled" in methods or "frobenius" in methods

    def chunk(indices: range) -> dict:
        # One batch of replicates: the pseudo-groupings come from the same
        # per-replicate streams as the single-method test, so shared and
        # standalone runs agree bit for bit.
        out: dict[str, list] = {m: [] for m in methods}
        diffs = np.empty((len(indices), x.p, x.p)) if want_diff else None
        for i, b in enumerate(indices):
            perm = stream(seed, b).permutation(total)
            g1, g2 = pooled[perm[:n]], pooled[perm[n:]]
            if want_diff:
                diffs[i] = (_relationship_values(g2, kind)
                            - _relationship_values(g1, kind))
            if "max" in methods:
                out["max"].append(max_statistic(DataMatrix(g1), DataMatrix(g2)))
        if want_diff:
            if "frobenius" in methods:
                out["frobenius"] = [frobenius_statistic(d) for d in diffs]
            if "sled" in methods:
                stats, _, flags = _statistic_batch(diffs, budget, solver,
                                                   tol, max_iter, rho)
                out["sled"] = stats
                out["sled_nonconverged"] = [sum(1 for ok in flags if not ok)]
        return out

    if threads <= 1:
        parts = [chunk(c) for c in _chunks(n_permutations)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(chunk, _chunks(n_permutations)))

    observed_diff = None
    if want_diff:
        observed_diff = (_relationship_values(y.values, kind)
                         - _relationship_values(x.values, kind))

    result = MultiMethodResult()
    for m in methods:
        null = np.array([t for part in parts for t in part[m]])
        if m == "sled":
            stats, winners, _ = _statistic_batch(observed_diff[None], budget,
                                                 solver, tol, max_iter, rho)
            t_obs, win = stats[0], winners[0]
            bad = sum(part["sled_nonconverged"][0] for part in parts)
            result.outcomes[m] = MethodOutcome(
                statistic=t_obs, null_stats=null,
                p_value=p_value_strict(null, t_obs),
                leverage=win.leverage, negated=win.negated, n_nonconverged=bad)
        else:
            if m == "frobenius":
                t_obs = frobenius_statistic(observed_diff)
            else:
                t_obs = max_statistic(x, y)
            result.outcomes[m] = MethodOutcome(
                statistic=t_obs, null_stats=null,
                p_value=p_value_strict(null, t_obs))
    return result


def _chunks(n_permutations: int) -> list[range]:
    return [range(lo, min(lo + _CHUNK, n_permutations))
            for lo in range(0, n_permutations, _CHUNK)]
