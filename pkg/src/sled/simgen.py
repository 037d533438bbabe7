"""Simulation scenarios and the Monte Carlo power harness.

Scenarios are built in three steps: a structured base matrix with a random
diagonal rescaling, a differential matrix (a block of uniform entries or a
soft-sparse rank-one spike), and a diagonal inflation making both population
covariances comfortably positive definite. Samples are the symmetric square
root of a covariance applied to i.i.d. noise from one of four distributions.

Every repetition of a power study draws from its own random stream derived
from (seed, repetition index), so results are reproducible for any worker
count.
"""

import csv
import io as _io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import log, sqrt

import numpy as np

from .competitors import METHODS, permutation_pvalues
from .engine import COVARIANCE, DataMatrix, RelationshipKind
from .errors import SledError
from .sparse_eig import SparsityBudget, symmetrize
from .streams import derive_seed, stream

BASE_KINDS = ("noisy_diagonal", "block_diagonal", "exp_decay")
DIFF_KINDS = ("sparse_block", "spiked", "none")
NOISE_KINDS = ("normal", "gamma", "t12", "negbin")

# Stream tags so data generation and permutation seeding never collide.
_DATA, _PERM, _LAMBDA = 0, 1, 2


@dataclass(frozen=True)
class Scenario:
    """One cell of a simulation grid.

    ``diff_kind="none"`` forces equal population covariances (a size
    calibration cell). ``redraw_lambda`` controls whether the diagonal
    rescaling is drawn fresh per repetition (default) or once per scenario;
    ``pd_shift_only_if_needed`` switches the diagonal inflation from the
    literal ``|min eigenvalue| + 0.05`` rule to ``max(0, -min) + 0.05``.
    """

    base_kind: str
    diff_kind: str
    noise: str
    n: int
    m: int
    p: int
    c: float
    n_permutations: int
    reps: int
    seed: int
    kind: RelationshipKind = COVARIANCE
    redraw_lambda: bool = True
    pd_shift_only_if_needed: bool = False

    def __post_init__(self):
        if self.base_kind not in BASE_KINDS:
            raise ValueError(f"base_kind must be one of {BASE_KINDS}")
        if self.diff_kind not in DIFF_KINDS:
            raise ValueError(f"diff_kind must be one of {DIFF_KINDS}")
        if self.noise not in NOISE_KINDS:
            raise ValueError(f"noise must be one of {NOISE_KINDS}")
        for name in ("n", "m", "p", "n_permutations", "reps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if not (0.0 < self.c <= 1.0):
            raise ValueError("c must lie in (0, 1]")


@dataclass(frozen=True)
class ScenarioMatrices:
    """Population matrices of one repetition plus their symmetric square roots."""

    sigma1: np.ndarray
    sigma2: np.ndarray
    diff: np.ndarray
    sqrt1: np.ndarray
    sqrt2: np.ndarray


def base_covariance(kind: str, p: int, rng: np.random.Generator,
                    lam: np.ndarray | None = None) -> np.ndarray:
    """Structured base matrix with a random diagonal rescaling.

    The correlation-like template is one of: identity plus Bernoulli(0.05)
    off-diagonal noise (mirrored for symmetry), 0.55 within consecutive
    10-wide diagonal blocks, or the decay ``0.5 ** |i - j|``. The template is
    conjugated by the square root of a diagonal matrix with Unif(0.5, 2.5)
    entries; pass ``lam`` to pin that diagonal (tests use the identity).
    """
    if kind not in BASE_KINDS:
        raise ValueError(f"kind must be one of {BASE_KINDS}")
    if kind == "block_diagonal" and p < 10:
        raise ValueError("block_diagonal needs p >= 10 (at least one block)")
    if lam is None:
        lam = rng.uniform(0.5, 2.5, p)
    else:
        lam = np.asarray(lam, dtype=float)
    if kind == "noisy_diagonal":
        delta = np.zeros((p, p))
        iu = np.triu_indices(p, k=1)
        delta[iu] = rng.binomial(1, 0.05, iu[0].size).astype(float)
        delta = delta + delta.T
        np.fill_diagonal(delta, 1.0)
    elif kind == "block_diagonal":
        delta = np.zeros((p, p))
        for k in range(p // 10):
            delta[10 * k:10 * (k + 1), 10 * k:10 * (k + 1)] = 0.55
        np.fill_diagonal(delta, 1.0)
    else:
        idx = np.arange(p)
        delta = 0.5 ** np.abs(np.subtract.outer(idx, idx)).astype(float)
    s = np.sqrt(lam)
    return delta * np.outer(s, s)


def differential(kind: str, sigma_star: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Differential matrix scaled to the base matrix's largest variance.

    ``sparse_block`` fills the leading s-by-s block (s = floor(0.1 p)) with
    Unif(d/2, 2d) draws, upper triangle mirrored, where
    ``d = 0.5 * sqrt(max_j sigma*_jj * log p)``. ``spiked`` returns
    ``d * v v'`` for a soft-sparse unit vector: floor(0.2 p) support indices
    drawn without replacement, the first floor(0.1 p) of them N(1, 0.01) and
    the rest N(0.1, 0.01), with ``d = 4 * sqrt(max_j sigma*_jj * log p)``.
    Logs are natural. The block placement is fixed to the leading indices:
    the tests are feature-permutation covariant, so placement cannot matter,
    and fixing it aids reproducibility.
    """
    sigma_star = np.asarray(sigma_star, dtype=float)
    p = sigma_star.shape[0]
    if kind == "none":
        return np.zeros((p, p))
    if kind not in DIFF_KINDS:
        raise ValueError(f"kind must be one of {DIFF_KINDS}")
    if p < 10:
        raise ValueError("differential matrices need p >= 10")
    top_var = float(np.max(np.diag(sigma_star)))
    if kind == "sparse_block":
        d = 0.5 * sqrt(top_var * log(p))
        s = int(np.floor(0.1 * p))
        block = np.zeros((s, s))
        iu = np.triu_indices(s)
        block[iu] = rng.uniform(d / 2, 2 * d, iu[0].size)
        block = block + np.triu(block, k=1).T
        out = np.zeros((p, p))
        out[:s, :s] = block
        return out
    d = 4.0 * sqrt(top_var * log(p))
    k = int(np.floor(0.2 * p))
    k_strong = int(np.floor(0.1 * p))
    support = rng.choice(p, size=k, replace=False)
    v = np.zeros(p)
    v[support[:k_strong]] = rng.normal(1.0, 0.1, k_strong)
    v[support[k_strong:]] = rng.normal(0.1, 0.1, k - k_strong)
    v /= np.linalg.norm(v)
    return d * np.outer(v, v)


def _sym_sqrt(m: np.ndarray) -> np.ndarray:
    """Symmetric square root via eigendecomposition.

    Eigenvalues are clipped at zero before the root: inputs can be
    numerically semidefinite right at the inflation cushion.
    """
    w, q = np.linalg.eigh(symmetrize(m))
    w = np.clip(w, 0.0, None)
    return symmetrize((q * np.sqrt(w)) @ q.T)


def enforce_pd(sigma_star: np.ndarray, diff: np.ndarray,
               shift_only_if_needed: bool = False) -> ScenarioMatrices:
    """Inflate the diagonal so both population covariances are safely PD.

    The default shift is ``|min(eigmin(S), eigmin(S + D))| + 0.05``, applied
    unconditionally (so an already-PD base is inflated too); with
    ``shift_only_if_needed`` the shift is ``max(0, -min eig) + 0.05``.
    """
    sigma_star = np.asarray(sigma_star, dtype=float)
    diff = np.asarray(diff, dtype=float)
    if sigma_star.shape != diff.shape:
        raise ValueError("sigma_star and diff must have the same shape")
    low = min(float(np.linalg.eigvalsh(sigma_star)[0]),
              float(np.linalg.eigvalsh(symmetrize(sigma_star + diff))[0]))
    shift = (max(0.0, -low) if shift_only_if_needed else abs(low)) + 0.05
    eye = np.eye(sigma_star.shape[0])
    sigma1 = sigma_star + shift * eye
    sigma2 = sigma_star + diff + shift * eye
    return ScenarioMatrices(sigma1=sigma1, sigma2=sigma2, diff=diff,
                            sqrt1=_sym_sqrt(sigma1), sqrt2=_sym_sqrt(sigma2))


def sample(sqrt_sigma: np.ndarray, n: int, noise: str,
           rng: np.random.Generator) -> DataMatrix:
    """Draw ``n`` rows of ``sqrt_sigma @ z`` with i.i.d. noise coordinates.

    Noise is standard normal; Gamma(shape 4, scale 0.5) minus its mean 2;
    Student t with 12 degrees of freedom; or negative binomial with mean 2
    and dispersion 2 (variance mu + mu^2/phi = 4) minus its mean.
    """
    p = sqrt_sigma.shape[0]
    if noise == "normal":
        z = rng.standard_normal((n, p))
    elif noise == "gamma":
        z = rng.gamma(4.0, 0.5, (n, p)) - 2.0
    elif noise == "t12":
        z = rng.standard_t(12, (n, p))
    elif noise == "negbin":
        z = rng.negative_binomial(2, 0.5, (n, p)).astype(float) - 2.0
    else:
        raise ValueError(f"noise must be one of {NOISE_KINDS}")
    return DataMatrix(z @ sqrt_sigma)


def draw_repetition(scenario: Scenario, rep: int,
                    lam: np.ndarray | None = None) -> tuple[ScenarioMatrices, DataMatrix, DataMatrix]:
    """Generate the matrices and both samples of one repetition."""
    rng = stream(scenario.seed, _DATA, rep)
    sigma_star = base_covariance(scenario.base_kind, scenario.p, rng, lam=lam)
    diff = differential(scenario.diff_kind, sigma_star, rng)
    mats = enforce_pd(sigma_star, diff,
                      shift_only_if_needed=scenario.pd_shift_only_if_needed)
    x = sample(mats.sqrt1, scenario.n, scenario.noise, rng)
    y = sample(mats.sqrt2, scenario.m, scenario.noise, rng)
    return mats, x, y


def _wilson_interval(successes: int, trials: int, z: float = 1.959964) -> tuple[float, float]:
    if trials == 0:
        return 0.0, 1.0
    phat = successes / trials
    denom = 1 + z * z / trials
    center = (phat + z * z / (2 * trials)) / denom
    half = z * sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)


@dataclass(frozen=True)
class PowerRow:
    """Power estimate of one method in one scenario cell."""

    scenario: Scenario
    method: str
    power: float
    ci_low: float
    ci_high: float
    failures: int
    rejections: int
    successes: int


_CSV_SCENARIO_FIELDS = ("base_kind", "diff_kind", "noise", "n", "m", "p", "c",
                        "n_permutations", "reps", "seed", "kind")
_CSV_COLUMNS = _CSV_SCENARIO_FIELDS + ("method", "power", "ci_low", "ci_high", "failures")


def _kind_token(kind: RelationshipKind) -> str:
    if kind.name == "adjacency":
        return f"adjacency:{kind.beta!r}"
    return kind.name


def _scenario_cells(scenario: Scenario) -> list:
    cells = [getattr(scenario, f) for f in _CSV_SCENARIO_FIELDS[:-1]]
    cells.append(_kind_token(scenario.kind))
    return cells


@dataclass
class PowerTable:
    """Per-method rejection rates, serializable as CSV and JSON."""

    rows: list[PowerRow] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = _io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(_CSV_COLUMNS)
        for row in self.rows:
            cells = _scenario_cells(row.scenario)
            cells += [row.method, repr(row.power), repr(row.ci_low),
                      repr(row.ci_high), row.failures]
            writer.writerow(cells)
        return buf.getvalue()

    def to_json(self) -> str:
        payload = []
        for row in self.rows:
            entry = dict(zip(_CSV_SCENARIO_FIELDS, _scenario_cells(row.scenario)))
            entry.update(method=row.method, power=row.power, ci_low=row.ci_low,
                         ci_high=row.ci_high, failures=row.failures,
                         rejections=row.rejections, successes=row.successes)
            payload.append(entry)
        return json.dumps(payload, indent=2) + "\n"


def power_study(scenario: Scenario, methods=("sled",), alpha: float = 0.05,
                threads: int = 1, solver: str = "pmd") -> PowerTable:
    """Empirical rejection rate of each method over seeded repetitions.

    Each repetition generates fresh matrices and samples from its own stream,
    then calibrates all requested methods against one shared permutation
    null. A repetition that raises a data error is dropped as a failure for
    every requested method (the permutations are shared, so a partial
    repetition would not be comparable); failed repetitions leave the power
    denominator.
    """
    methods = list(methods)
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ValueError(f"unknown methods: {unknown}")
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    budget = SparsityBudget.from_c(scenario.c, scenario.p)
    shared_lam = None
    if not scenario.redraw_lambda:
        shared_lam = stream(scenario.seed, _LAMBDA).uniform(0.5, 2.5, scenario.p)

    def one_rep(rep: int) -> dict[str, float | None]:
        _, x, y = draw_repetition(scenario, rep, lam=shared_lam)
        try:
            res = permutation_pvalues(
                x, y, scenario.kind, budget, methods,
                scenario.n_permutations, seed=derive_seed(scenario.seed, _PERM, rep),
                threads=1, solver=solver)
        except SledError:
            return {m: None for m in methods}
        return res.p_values()

    if threads <= 1:
        outcomes = [one_rep(r) for r in range(scenario.reps)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(one_rep, range(scenario.reps)))

    table = PowerTable()
    for m in methods:
        pvals = [o[m] for o in outcomes]
        failures = sum(1 for v in pvals if v is None)
        good = [v for v in pvals if v is not None]
        rejections = sum(1 for v in good if v < alpha)
        power = rejections / len(good) if good else 0.0
        lo, hi = _wilson_interval(rejections, len(good))
        table.rows.append(PowerRow(scenario=scenario, method=m, power=power,
                                   ci_low=lo, ci_high=hi, failures=failures,
                                   rejections=rejections, successes=len(good)))
    return table
