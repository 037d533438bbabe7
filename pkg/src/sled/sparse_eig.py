"""Sparse leading-eigenvalue solvers for symmetric matrices.

The central quantity is the budgeted leading eigenvalue: the maximum of
``v' A v`` over unit vectors whose sparsity is capped by a budget. Three
routes are provided:

* ``constrained_pmd``: an alternating rank-one decomposition under an L1 cap,
  lifted to positive semidefinite by a diagonal shift. Fast, nonconvex, the
  default solver.
* ``fps_admm``: a convex relaxation over the trace-one spectral box
  intersected with an entrywise L1 ball, solved by ADMM. Slower, with a
  guaranteed-dominant optimum.
* ``sparse_eig_exact``: brute-force support enumeration, usable only on
  small instances; serves as the reference the others are compared against.

All solvers are pure functions of their arguments and are safe to call
concurrently.
"""

from dataclasses import dataclass
from itertools import combinations
from math import comb, isfinite, sqrt

import numpy as np

from .errors import InstanceTooLarge

# Slack applied when checking whether a normalized direction already meets the
# L1 cap without thresholding.
_L1_SLACK = 1e-10
# Requested accuracy of the bisected threshold, as |l1(v) - target|.
_BISECT_TOL = 1e-8
_BISECT_MAX_ITER = 60

_POWER_INIT_ITERS = 200


def symmetrize(m: np.ndarray) -> np.ndarray:
    """Return ``(m + m.T) / 2`` so symmetry holds exactly, entry by entry."""
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + m.T)


@dataclass(frozen=True)
class SparsityBudget:
    """Sparsity budget for the L1-relaxed eigenvalue problems.

    ``sqrt_r`` caps the L1 norm of the unit eigenvector and ``r == sqrt_r**2``
    caps the entrywise L1 norm of the relaxation's matrix variable. Budgets
    below one coordinate would make the feasible set empty and budgets above
    ``sqrt(p)`` are vacuous, so ``sqrt_r`` is kept inside ``[1, sqrt(p)]``.
    """

    c: float
    p: int
    sqrt_r: float
    r: float

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be a positive integer")
        if not (0.0 < self.c <= 1.0):
            raise ValueError("c must lie in (0, 1]")
        if not (1.0 - 1e-12 <= self.sqrt_r <= sqrt(self.p) + 1e-12):
            raise ValueError("sqrt_r must lie in [1, sqrt(p)]")
        if abs(self.sqrt_r * self.sqrt_r - self.r) > 1e-12 * max(1.0, self.r):
            raise ValueError("r must equal sqrt_r squared")

    @classmethod
    def from_c(cls, c: float, p: int) -> "SparsityBudget":
        """Budget with ``sqrt_r = c * sqrt(p)``, clamped into ``[1, sqrt(p)]``."""
        if not (0.0 < c <= 1.0):
            raise ValueError("c must lie in (0, 1]")
        if p < 1:
            raise ValueError("p must be a positive integer")
        sqrt_r = float(min(max(c * sqrt(p), 1.0), sqrt(p)))
        return cls(c=float(c), p=int(p), sqrt_r=sqrt_r, r=sqrt_r * sqrt_r)

    @classmethod
    def from_sparsity(cls, r: float, p: int) -> "SparsityBudget":
        """Budget targeting ``r`` nonzero coordinates (so ``sqrt_r = sqrt(r)``)."""
        if not (1.0 <= r <= p):
            raise ValueError("r must lie in [1, p]")
        sqrt_r = sqrt(r)
        return cls(c=min(1.0, sqrt_r / sqrt(p)), p=int(p), sqrt_r=sqrt_r, r=float(r))


@dataclass(frozen=True)
class SparseEigenResult:
    """Solution of a budgeted leading-eigenvalue problem.

    ``leverage`` is the vector of squared coordinates of the unit solution
    vector; it sums to one and ranks features by their contribution.
    ``negated`` records whether the solution came from the negated input
    (set by the statistic layer, never by the solvers themselves).
    """

    value: float
    vector: np.ndarray
    negated: bool
    leverage: np.ndarray
    iterations: int
    converged: bool


@dataclass(frozen=True)
class PmdSolution:
    """Raw output of the alternating rank-one solve: ``value = u' A v``."""

    u: np.ndarray
    v: np.ndarray
    value: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class FpsSolution:
    """Raw output of the convex-relaxation solve: ``value = tr(A H)``."""

    value: float
    h: np.ndarray
    iterations: int
    converged: bool


def soft_threshold(x: np.ndarray, delta: float) -> np.ndarray:
    """Shrink each entry toward zero by ``delta``, clipping at zero."""
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - delta, 0.0)


def psd_shift(a: np.ndarray) -> float:
    """Smallest Gershgorin-certified shift ``d`` with ``a + d*I`` PSD.

    Uses the Gershgorin lower bound ``min_i (a_ii - sum_{j != i} |a_ij|)``
    instead of an eigensolve: O(p^2) and any valid bound on the most negative
    eigenvalue serves, since downstream identities hold for every large-enough
    shift.
    """
    a = np.asarray(a, dtype=float)
    diag = np.diag(a)
    radius = np.abs(a).sum(axis=1) - np.abs(diag)
    bound = float(np.min(diag - radius))
    return max(0.0, -bound)


def _tied_support_vector(x: np.ndarray, sqrt_r: float) -> np.ndarray:
    """L1-capped maximizer of <x, v> when |x| has exact ties at its maximum.

    With k tied coordinates and sqrt_r < sqrt(k) the soft-threshold path
    cannot meet the cap, but any unit vector supported on the ties with
    L1 norm exactly sqrt_r is optimal. This picks the lowest-index ties:
    m = floor(sqrt_r^2) coordinates at a common weight plus one remainder.
    """
    r = sqrt_r * sqrt_r
    m = int(np.floor(r + 1e-12))
    abs_x = np.abs(x)
    top = float(abs_x.max())
    tied = np.flatnonzero(abs_x >= top * (1.0 - 1e-12))
    v = np.zeros_like(x)
    if m >= tied.size:
        weights = np.full(tied.size, 1.0 / sqrt(tied.size))
        v[tied] = weights
    else:
        # Solve m*a + b = sqrt_r, m*a^2 + b^2 = 1 with 0 <= b <= a.
        disc = m * (m + 1 - r)
        a = (sqrt_r * m + sqrt(max(disc, 0.0))) / (m * (m + 1))
        b = sqrt_r - m * a
        v[tied[:m]] = a
        v[tied[m]] = max(b, 0.0)
    v *= np.sign(x + (x == 0))  # sign of zero entries is irrelevant (weight 0)
    return v / np.linalg.norm(v)


def _row_norms(x: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("rp,rp->r", x, x))


def _sphere_l1_argmax_batch(x: np.ndarray, sqrt_r: float) -> np.ndarray:
    """Row-wise maximizer of ``<x_r, v>`` over unit vectors with
    ``||v||_1 <= sqrt_r``.

    The inner update of the alternating solver, evaluated for a whole batch
    at once: soft-threshold and renormalize, the threshold bisected per row
    (at most 60 halvings of ``[0, max |x_r|]``) until the L1 norm lands
    within 1e-8 of the cap. Rows whose unthresholded direction already meets
    the cap pass through; zero rows fall back to the first basis vector; rows
    whose cap is unreachable because of exact ties at the maximum get the
    tied-support construction.
    """
    x = np.asarray(x, dtype=float)
    nrows, p = x.shape
    v = np.zeros_like(x)
    norms = _row_norms(x)
    zero = norms == 0.0
    if zero.any():
        v[zero, 0] = 1.0
    easy = ~zero
    v[easy] = x[easy] / norms[easy, None]
    need = easy & (np.abs(v).sum(axis=1) > sqrt_r + _L1_SLACK)
    if not need.any():
        return v

    rows = np.flatnonzero(need)
    xa = np.abs(x[rows])
    sg = np.sign(x[rows])
    k = rows.size
    lo = np.zeros(k)
    hi = xa.max(axis=1)
    done = np.zeros(k, dtype=bool)
    final_mid = np.full(k, np.nan)
    feasible_mid = np.full(k, np.nan)
    for _ in range(_BISECT_MAX_ITER):
        mid = 0.5 * (lo + hi)
        w = xa - mid[:, None]
        np.maximum(w, 0.0, out=w)
        ns2 = np.einsum("rp,rp->r", w, w)
        l1 = w.sum(axis=1)
        alive = ns2 > 0.0
        ratio = np.divide(l1, np.sqrt(np.where(alive, ns2, 1.0)),
                          out=np.full(k, np.inf), where=alive)
        open_ = ~done
        hit = open_ & alive & (np.abs(ratio - sqrt_r) <= _BISECT_TOL)
        final_mid[hit] = mid[hit]
        done |= hit
        open_ = ~done
        big = open_ & alive & (ratio > sqrt_r)
        lo[big] = mid[big]
        small = open_ & ~big
        feasible_mid[small & alive] = mid[small & alive]
        hi[small] = mid[small]
        if done.all():
            break

    # Rows that never hit the target keep their last feasible threshold;
    # rows with none (exact ties at the max) take the tied-support fallback.
    fallback = ~done & np.isnan(feasible_mid)
    final_mid[~done] = feasible_mid[~done]
    solved = ~fallback
    if solved.any():
        w = xa[solved] - final_mid[solved, None]
        np.maximum(w, 0.0, out=w)
        w *= sg[solved]
        v[rows[solved]] = w / _row_norms(w)[:, None]
    for i in np.flatnonzero(fallback):
        v[rows[i]] = _tied_support_vector(x[rows[i]], sqrt_r)
    return v


def _sphere_l1_argmax(x: np.ndarray, sqrt_r: float) -> np.ndarray:
    """Single-vector convenience wrapper over the batched inner update."""
    return _sphere_l1_argmax_batch(np.asarray(x, dtype=float)[None, :], sqrt_r)[0]


def _power_init_batch(stack: np.ndarray, iters: int = _POWER_INIT_ITERS) -> np.ndarray:
    """Leading-eigenvector estimates by fixed power iterations from all-ones.

    Deterministic warm start near each matrix's dense optimum. A row whose
    iterate lands in the kernel restarts from its heaviest diagonal axis; if
    that is also annihilated the axis itself is kept.
    """
    nrows, p, _ = stack.shape
    x = np.full((nrows, p), 1.0 / sqrt(p))
    frozen = np.zeros(nrows, dtype=bool)
    for _ in range(iters):
        y = np.matmul(stack, x[..., None])[..., 0]
        ny = _row_norms(y)
        dead = (ny == 0.0) & ~frozen
        for r in np.flatnonzero(dead):
            axis = int(np.argmax(np.diag(stack[r])))
            e = np.zeros(p)
            e[axis] = 1.0
            yr = stack[r] @ e
            nyr = float(np.linalg.norm(yr))
            if nyr == 0.0:
                x[r] = e
                frozen[r] = True
            else:
                y[r] = yr
                ny[r] = nyr
        if frozen.any():
            live = ~frozen
            x[live] = y[live] / ny[live, None]
        else:
            x = y / ny[:, None]
    return x


def _pmd_alternate(stack: np.ndarray, u0: np.ndarray, budget: SparsityBudget,
                   tol: float, max_iter: int):
    """Alternating L1-capped sweeps from given start vectors, one row each.

    A sweep updates ``v`` from ``A u`` and ``u`` from ``A v``; a row stops at
    the first sweep whose value moves at most ``tol * (1 + |value|)``.
    Converged rows drop out of the batch.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    nrows, p, _ = stack.shape
    out_u = np.empty((nrows, p))
    out_v = np.empty((nrows, p))
    out_val = np.zeros(nrows)
    out_iter = np.full(nrows, max_iter, dtype=int)
    out_conv = np.zeros(nrows, dtype=bool)
    if nrows == 0:
        return out_u, out_v, out_val, out_iter, out_conv

    active = np.arange(nrows)
    a = stack
    u = u0
    prev = np.zeros(nrows)
    for sweep in range(1, max_iter + 1):
        v = _sphere_l1_argmax_batch(np.matmul(a, u[..., None])[..., 0], budget.sqrt_r)
        av = np.matmul(a, v[..., None])[..., 0]
        u = _sphere_l1_argmax_batch(av, budget.sqrt_r)
        value = np.einsum("rp,rp->r", u, av)
        settled = np.abs(value - prev) <= tol * (1.0 + np.abs(value))
        if settled.any():
            idx = active[settled]
            out_u[idx] = u[settled]
            out_v[idx] = v[settled]
            out_val[idx] = value[settled]
            out_iter[idx] = sweep
            out_conv[idx] = True
            keep = ~settled
            if not keep.any():
                return out_u, out_v, out_val, out_iter, out_conv
            active = active[keep]
            a = np.ascontiguousarray(a[keep])
            u = u[keep]
            prev = value[keep]
        else:
            prev = value
    out_u[active] = u
    out_v[active] = v[~settled] if settled.any() else v
    out_val[active] = prev
    return out_u, out_v, out_val, out_iter, out_conv


def _basis_starts(stack: np.ndarray) -> np.ndarray:
    """One-hot start on each matrix's heaviest diagonal axis."""
    nrows, p, _ = stack.shape
    starts = np.zeros((nrows, p))
    heaviest = np.argmax(np.diagonal(stack, axis1=-2, axis2=-1), axis=-1)
    starts[np.arange(nrows), heaviest] = 1.0
    return starts


def _pmd_batch(stack: np.ndarray, budget: SparsityBudget, tol: float,
               max_iter: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Alternating L1-capped rank-one solve for a stack of PSD matrices.

    Returns ``(u, v, value, iterations, converged)`` arrays, one row per
    matrix. The alternation is nonconvex, so each matrix is solved from two
    deterministic starts, the dense power-method estimate and the heaviest
    diagonal axis, and the run with the larger final value wins (ties go to
    the power start). The dense start alone stalls in the wrong basin on a
    few percent of indefinite instances when the budget is near one
    coordinate; the axis start covers exactly that regime.
    """
    nrows = stack.shape[0]
    if nrows == 0:
        return _pmd_alternate(stack, np.empty((0, stack.shape[-1])), budget,
                              tol, max_iter)
    starts = np.concatenate([_power_init_batch(stack), _basis_starts(stack)])
    u, v, value, iterations, converged = _pmd_alternate(
        np.concatenate([stack, stack]), starts, budget, tol, max_iter)
    axis_wins = value[nrows:] > value[:nrows]
    pick = np.where(axis_wins, np.arange(nrows) + nrows, np.arange(nrows))
    return u[pick], v[pick], value[pick], iterations[pick], converged[pick]


def pmd_rank_one(a: np.ndarray, budget: SparsityBudget,
                 tol: float = 1e-6, max_iter: int = 100) -> PmdSolution:
    """Alternating rank-one decomposition of a PSD matrix under an L1 cap.

    Maximizes ``u' A v`` over vectors with ``||.||_2 <= 1`` and
    ``||.||_1 <= budget.sqrt_r`` by alternating closed-form updates, run from
    two deterministic warm starts (dense power estimate and heaviest diagonal
    axis) with the better final value kept. For PSD input the two factors
    coincide at the optimum, which is what the constrained wrapper relies on.
    PSD-ness is the caller's responsibility.

    Stops when the value changes by at most ``tol * (1 + |value|)`` between
    sweeps; otherwise returns the last iterate with ``converged=False``.
    """
    a = np.asarray(a, dtype=float)
    u, v, value, iterations, converged = _pmd_batch(a[None], budget, tol, max_iter)
    return PmdSolution(u=u[0], v=v[0], value=float(value[0]),
                       iterations=int(iterations[0]), converged=bool(converged[0]))


def psd_shift_batch(stack: np.ndarray) -> np.ndarray:
    """Per-matrix Gershgorin shifts, the batched form of ``psd_shift``."""
    diag = np.diagonal(stack, axis1=-2, axis2=-1)
    radius = np.abs(stack).sum(axis=-1) - np.abs(diag)
    bound = (diag - radius).min(axis=-1)
    return np.maximum(0.0, -bound)


def constrained_pmd_batch(stack: np.ndarray, budget: SparsityBudget,
                          tol: float = 1e-6, max_iter: int = 100) -> list[SparseEigenResult]:
    """Budgeted leading eigenvalues of a stack of symmetric matrices.

    The batched core of ``constrained_pmd``: each matrix is lifted to PSD by
    its own diagonal shift, the stack is solved jointly, and the shifts are
    subtracted back out.
    """
    stack = np.asarray(stack, dtype=float)
    p = stack.shape[-1]
    shifts = psd_shift_batch(stack)
    shifted = stack.copy()
    ii = np.arange(p)
    shifted[:, ii, ii] += shifts[:, None]
    _, v, value, iterations, converged = _pmd_batch(shifted, budget, tol, max_iter)
    return [
        SparseEigenResult(value=float(value[r] - shifts[r]), vector=v[r],
                          negated=False, leverage=v[r] * v[r],
                          iterations=int(iterations[r]), converged=bool(converged[r]))
        for r in range(stack.shape[0])
    ]


def constrained_pmd(a: np.ndarray, budget: SparsityBudget,
                    tol: float = 1e-6, max_iter: int = 100) -> SparseEigenResult:
    """Budgeted leading eigenvalue of an arbitrary symmetric matrix.

    Lifts the input to PSD with a diagonal shift, runs the alternating
    solver there, and subtracts the shift back out; the unit-norm constraint
    makes the two objectives differ by exactly the shift.
    """
    a = np.asarray(a, dtype=float)
    return constrained_pmd_batch(a[None], budget, tol=tol, max_iter=max_iter)[0]


def _fantope_theta(eigvals: np.ndarray, tol: float = 1e-13, max_iter: int = 200) -> float:
    """Root of ``sum_i clip(w_i - theta, 0, 1) = 1``; monotone, so bisection."""
    lo = float(eigvals.min()) - 1.0   # clip sum = p >= 1
    hi = float(eigvals.max())         # clip sum = 0 <= 1
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        s = float(np.clip(eigvals - mid, 0.0, 1.0).sum())
        if abs(s - 1.0) <= tol:
            return mid
        if s > 1.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-16 * max(1.0, abs(lo), abs(hi)):
            break
    return 0.5 * (lo + hi)


def fantope_projection(m: np.ndarray) -> np.ndarray:
    """Frobenius-nearest matrix with eigenvalues in [0, 1] summing to one.

    The feasible set is the convex hull of the rank-one projection matrices.
    Projection happens in the eigenbasis: eigenvalues are shifted by a scalar
    found by bisection and clipped into [0, 1] so they sum to one.
    """
    m = symmetrize(m)
    w, q = np.linalg.eigh(m)
    theta = _fantope_theta(w)
    clipped = np.clip(w - theta, 0.0, 1.0)
    return symmetrize((q * clipped) @ q.T)


def _l1_ball_project(m: np.ndarray, radius: float) -> np.ndarray:
    """Entrywise projection onto ``{Z: sum |Z_ij| <= radius}``.

    Soft-thresholding with the exact threshold found by the sort-and-scan
    rule, so the projected point meets the radius exactly when the input
    lies outside the ball.
    """
    flat = np.abs(m).ravel()
    total = float(flat.sum())
    if total <= radius:
        return m.copy()
    w = np.sort(flat)[::-1]
    csum = np.cumsum(w)
    k = np.arange(1, w.size + 1)
    candidates = w - (csum - radius) / k
    kstar = int(np.nonzero(candidates > 0)[0][-1])
    delta = (csum[kstar] - radius) / (kstar + 1)
    return soft_threshold(m, delta)


def fps_admm(a: np.ndarray, budget: SparsityBudget, rho: float = 1.0,
             tol: float = 1e-6, max_iter: int = 500) -> FpsSolution:
    """Convex relaxation of the budgeted eigenvalue problem, solved by ADMM.

    Maximizes ``tr(A H)`` over trace-one matrices with eigenvalues in [0, 1]
    and entrywise L1 norm at most ``budget.r``. The two constraint sets are
    split consensus-style: one block is handled by ``fantope_projection``,
    the other by the entrywise L1-ball projection, with a scaled dual update
    in between. Stops when both the primal residual ``||H - Z||_F`` and the
    dual residual ``rho * ||Z_k - Z_{k-1}||_F`` drop below ``tol``; on
    ``max_iter`` exhaustion the last spectrally feasible iterate is returned
    with ``converged=False``.
    """
    a = np.asarray(a, dtype=float)
    p = a.shape[0]
    z = np.zeros((p, p))
    u = np.zeros((p, p))
    a_over_rho = a / rho
    h = z
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        h = fantope_projection(z - u + a_over_rho)
        z_new = _l1_ball_project(h + u, budget.r)
        primal = float(np.linalg.norm(h - z_new))
        dual = rho * float(np.linalg.norm(z_new - z))
        z = z_new
        u = u + h - z
        if primal <= tol and dual <= tol:
            converged = True
            break
    value = float(np.sum(a * h))
    return FpsSolution(value=value, h=h, iterations=iterations, converged=converged)


def sparse_eig_exact(a: np.ndarray, r: int) -> tuple[float, tuple[int, ...]]:
    """Exact budgeted leading eigenvalue by support enumeration.

    Scans every support of size ``r`` (interlacing makes smaller supports
    redundant) and takes the top eigenvalue of the principal submatrix.
    Guarded against combinatorial blowup; intended for oracles and small
    instances only. Ties resolve to the lexicographically first support.
    """
    a = np.asarray(a, dtype=float)
    p = a.shape[0]
    if not (isinstance(r, (int, np.integer)) and r >= 1):
        raise ValueError("r must be a positive integer")
    r = int(min(r, p))
    if r == p:
        w = np.linalg.eigvalsh(a)
        return float(w[-1]), tuple(range(p))
    if p > 20 or comb(p, r) > 200_000:
        raise InstanceTooLarge(f"support enumeration over C({p}, {r}) supports refused")
    best = -np.inf
    best_support: tuple[int, ...] = ()
    for support in combinations(range(p), r):
        sub = a[np.ix_(support, support)]
        val = float(np.linalg.eigvalsh(sub)[-1])
        if val > best:
            best = val
            best_support = support
    if not isfinite(best):
        raise ValueError("matrix entries must be finite")
    return best, best_support
