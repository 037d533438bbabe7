"""Two-sample testing engine: differential matrices, the test statistic,
the permutation test, and leverage-based feature ranking.

The statistic of a differential matrix is the larger absolute budgeted
leading eigenvalue of the matrix and its negation, so signal of either sign
is captured. Significance comes from a permutation null: pooled samples are
reassigned to pseudo-groups and the whole pipeline (centering, relationship
estimation, solve) is re-run per replicate.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFeature, DimensionMismatch
from .sparse_eig import (
    SparseEigenResult,
    SparsityBudget,
    _sphere_l1_argmax,
    constrained_pmd_batch,
    fps_admm,
    symmetrize,
)
from .streams import stream

SOLVERS = ("pmd", "fps")

# Permutation replicates are solved in fixed-size batches; the chunking
# depends only on the replicate count, never on the worker count, which keeps
# results bit-identical for any number of threads.
_CHUNK = 32


@dataclass(frozen=True)
class RelationshipKind:
    """Which p-by-p relationship matrix is estimated from a sample.

    ``covariance`` is the mean-centered second moment with 1/n normalization,
    ``correlation`` the Pearson matrix, and ``adjacency`` the entrywise power
    ``|R_ij|**beta`` of the correlations with a zero diagonal (larger beta
    gives a sparser weighted network).
    """

    name: str
    beta: float | None = None

    def __post_init__(self):
        if self.name not in ("covariance", "correlation", "adjacency"):
            raise ValueError(f"unknown relationship kind: {self.name!r}")
        if self.name == "adjacency":
            if self.beta is None or not self.beta > 0:
                raise ValueError("adjacency requires beta > 0")
        elif self.beta is not None:
            raise ValueError(f"beta is only meaningful for adjacency, not {self.name}")


COVARIANCE = RelationshipKind("covariance")
CORRELATION = RelationshipKind("correlation")


def adjacency(beta: float) -> RelationshipKind:
    return RelationshipKind("adjacency", float(beta))


@dataclass(frozen=True)
class DataMatrix:
    """An n-by-p samples-by-features matrix of finite real measurements.

    Treated as immutable once constructed; instances may be shared freely
    across threads.
    """

    values: np.ndarray
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.size == 0:
            raise ValueError("values must be a nonempty 2-d array")
        if not np.isfinite(values).all():
            raise ValueError("values must all be finite")
        object.__setattr__(self, "values", values)
        if self.feature_names is not None:
            names = tuple(str(s) for s in self.feature_names)
            if len(names) != values.shape[1]:
                raise ValueError("feature_names length must equal the feature count")
            if len(set(names)) != len(names):
                raise ValueError("feature_names must be unique")
            object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class PermutationTestResult:
    """Outcome of one permutation test.

    ``p_value`` counts strictly larger null statistics, exactly
    ``mean(null_stats > statistic)``. ``n_nonconverged`` counts replicates
    whose solver did not converge; their statistics still enter the null set
    (resampling them would bias it).
    """

    statistic: float
    null_stats: np.ndarray
    p_value: float
    leverage: np.ndarray
    negated: bool
    n_permutations: int
    seed: int
    n_nonconverged: int = 0


def _relationship_values(values: np.ndarray, kind: RelationshipKind) -> np.ndarray:
    n = values.shape[0]
    centered = values - values.mean(axis=0)
    if kind.name == "covariance":
        return symmetrize(centered.T @ centered / n)
    sd = np.sqrt(np.mean(centered * centered, axis=0))
    zero = np.flatnonzero(sd == 0.0)
    if zero.size:
        raise DegenerateFeature(int(zero[0]))
    z = centered / sd
    corr = symmetrize(z.T @ z / n)
    if kind.name == "correlation":
        return corr
    adj = np.abs(corr) ** kind.beta
    np.fill_diagonal(adj, 0.0)
    return adj


def relationship_matrix(x: DataMatrix, kind: RelationshipKind) -> np.ndarray:
    """Estimate the p-by-p relationship matrix of one sample.

    Covariances use 1/n normalization after subtracting column means (raw
    data are not mean-zero). Correlation and adjacency raise
    ``DegenerateFeature`` when a feature is constant.
    """
    if x.n < 2:
        raise ValueError("need at least 2 samples to estimate a relationship matrix")
    return _relationship_values(x.values, kind)


def differential_matrix(x: DataMatrix, y: DataMatrix, kind: RelationshipKind) -> np.ndarray:
    """Relationship matrix of ``y`` minus that of ``x``."""
    if x.p != y.p:
        raise DimensionMismatch(f"feature counts differ: {x.p} vs {y.p}")
    return relationship_matrix(y, kind) - relationship_matrix(x, kind)


def _fps_solve(diff: np.ndarray, budget: SparsityBudget,
               tol: float, max_iter: int, rho: float) -> SparseEigenResult:
    sol = fps_admm(diff, budget, rho=rho, tol=tol, max_iter=max_iter)
    w, q = np.linalg.eigh(sol.h)
    top = q[:, -1]
    if top[int(np.argmax(np.abs(top)))] < 0:
        top = -top
    # Report a budget-feasible direction for ranking; the value stays the
    # relaxation's objective.
    v = _sphere_l1_argmax(top, budget.sqrt_r)
    return SparseEigenResult(value=sol.value, vector=v, negated=False,
                             leverage=v * v, iterations=sol.iterations,
                             converged=sol.converged)


def _statistic_batch(diffs: np.ndarray, budget: SparsityBudget, solver: str,
                     tol: float, max_iter: int, rho: float):
    """Statistics of a stack of differential matrices.

    Solves the whole stack and its negation in one batched call (the default
    solver's updates vectorize across matrices) and picks, per matrix, the
    sign whose absolute value wins; ties resolve to the original sign.
    Returns parallel lists of statistics, winning results, and flags saying
    whether both signed solves converged.
    """
    diffs = np.asarray(diffs, dtype=float)
    k = diffs.shape[0]
    if solver == "pmd":
        solved = constrained_pmd_batch(np.concatenate([diffs, -diffs]), budget,
                                       tol=tol, max_iter=max_iter)
    elif solver == "fps":
        solved = [_fps_solve(d, budget, tol, max_iter, rho) for d in diffs]
        solved += [_fps_solve(-d, budget, tol, max_iter, rho) for d in diffs]
    else:
        raise ValueError(f"unknown solver: {solver!r}")
    stats, winners, all_converged = [], [], []
    for i in range(k):
        pos, neg = solved[i], solved[k + i]
        if abs(neg.value) > abs(pos.value):
            winner = SparseEigenResult(value=neg.value, vector=neg.vector,
                                       negated=True, leverage=neg.leverage,
                                       iterations=neg.iterations,
                                       converged=neg.converged)
        else:
            winner = pos
        stats.append(abs(winner.value))
        winners.append(winner)
        all_converged.append(pos.converged and neg.converged)
    return stats, winners, all_converged


def _statistic_both_signs(diff, budget, solver, tol, max_iter, rho):
    stats, winners, flags = _statistic_batch(np.asarray(diff, dtype=float)[None],
                                             budget, solver, tol, max_iter, rho)
    return stats[0], winners[0], flags[0]


def sled_statistic(diff: np.ndarray, budget: SparsityBudget, solver: str = "pmd",
                   tol: float = 1e-6, max_iter: int = 100,
                   rho: float = 1.0) -> tuple[float, SparseEigenResult]:
    """Test statistic of a differential matrix.

    Solves the budgeted eigenvalue problem on the matrix and its negation and
    returns the larger absolute value, together with the winning solution
    (``negated`` records which sign won; ties go to the original sign).
    """
    t, winner, _ = _statistic_both_signs(diff, budget, solver, tol, max_iter, rho)
    return t, winner


def p_value_strict(null_stats: np.ndarray, statistic: float) -> float:
    """Fraction of null statistics strictly larger than the observed one."""
    null_stats = np.asarray(null_stats, dtype=float)
    return float(np.count_nonzero(null_stats > statistic) / null_stats.size)


def add_one_p_value(null_stats: np.ndarray, statistic: float) -> float:
    """Valid-by-construction variant: ``(1 + #{null >= stat}) / (B + 1)``."""
    null_stats = np.asarray(null_stats, dtype=float)
    return float((1 + np.count_nonzero(null_stats >= statistic)) / (null_stats.size + 1))


def permutation_test(x: DataMatrix, y: DataMatrix, kind: RelationshipKind,
                     budget: SparsityBudget, n_permutations: int, seed: int,
                     threads: int = 1, solver: str = "pmd", tol: float = 1e-6,
                     max_iter: int = 100, rho: float = 1.0) -> PermutationTestResult:
    """Permutation test for equality of two relationship matrices.

    Pools the rows of ``x`` then ``y``; replicate ``b`` draws a uniform
    permutation from its own random stream ``(seed, b)``, assigns the first
    ``x.n`` rows to pseudo-group 1 and the rest to pseudo-group 2, and
    re-runs the full statistic pipeline. Streams depend only on the replicate
    index, so results are bit-identical for any ``threads``.
    """
    if n_permutations < 1:
        raise ValueError("n_permutations must be at least 1")
    if x.p != y.p:
        raise DimensionMismatch(f"feature counts differ: {x.p} vs {y.p}")
    if x.n + y.n < 4:
        raise ValueError("need at least 4 pooled samples")

    observed = differential_matrix(x, y, kind)
    t_obs, win, _ = _statistic_both_signs(observed, budget, solver, tol, max_iter, rho)

    pooled = np.vstack([x.values, y.values])
    n, total = x.n, x.n + y.n

    def chunk(indices: range) -> tuple[list[float], int]:
        diffs = np.empty((len(indices), x.p, x.p))
        for i, b in enumerate(indices):
            perm = stream(seed, b).permutation(total)
            diffs[i] = (_relationship_values(pooled[perm[n:]], kind)
                        - _relationship_values(pooled[perm[:n]], kind))
        stats, _, flags = _statistic_batch(diffs, budget, solver, tol, max_iter, rho)
        return stats, sum(1 for ok in flags if not ok)

    chunks = [range(lo, min(lo + _CHUNK, n_permutations))
              for lo in range(0, n_permutations, _CHUNK)]
    if threads <= 1:
        outcomes = [chunk(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(chunk, chunks))

    null = np.array([t for stats, _ in outcomes for t in stats])
    bad = sum(nbad for _, nbad in outcomes)

    return PermutationTestResult(
        statistic=t_obs,
        null_stats=null,
        p_value=p_value_strict(null, t_obs),
        leverage=win.leverage,
        negated=win.negated,
        n_permutations=n_permutations,
        seed=int(seed),
        n_nonconverged=bad,
    )


def rank_features(result: PermutationTestResult,
                  cumulative_cut: float = 0.999) -> tuple[list[int], list[int]]:
    """Split features into primary and secondary tiers by leverage.

    Indices are sorted by descending leverage (ties by ascending index).
    Primary is the shortest prefix whose leverage sum reaches
    ``cumulative_cut``; secondary is every remaining index with strictly
    positive leverage. All-zero leverage yields two empty lists.
    """
    if not (0.0 < cumulative_cut <= 1.0):
        raise ValueError("cumulative_cut must lie in (0, 1]")
    lev = np.asarray(result.leverage, dtype=float)
    if float(lev.sum()) == 0.0:
        return [], []
    order = np.argsort(-lev, kind="stable")
    sorted_lev = lev[order]
    n_positive = int(np.count_nonzero(sorted_lev > 0))
    csum = np.cumsum(sorted_lev)
    k = int(np.searchsorted(csum, cumulative_cut, side="left")) + 1
    k = min(k, n_positive)
    primary = [int(i) for i in order[:k]]
    secondary = [int(i) for i in order[k:n_positive]]
    return primary, secondary
