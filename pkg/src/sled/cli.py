"""Command-line driver: two-sample testing, scenario simulation, power studies.

Exit codes: 0 success, 2 validation or usage error, 3 data error (unreadable
or malformed inputs, degenerate features). ``--version`` reports the pinned
random-generator identifier alongside the tool version.
"""

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .competitors import METHODS, permutation_pvalues
from .engine import (
    CORRELATION,
    COVARIANCE,
    DataMatrix,
    PermutationTestResult,
    RelationshipKind,
    add_one_p_value,
    adjacency,
    permutation_test,
    rank_features,
)
from .errors import DimensionMismatch, SledError
from .matrix_io import (
    MatrixFile,
    ResultDocument,
    Stopwatch,
    align_by_name,
    read_matrix,
    write_matrix,
    write_result,
)
from .simgen import (
    BASE_KINDS,
    DIFF_KINDS,
    NOISE_KINDS,
    PowerTable,
    Scenario,
    draw_repetition,
    power_study,
)
from .sparse_eig import SparsityBudget
from .streams import RNG_KIND

_VERSION_LINE = f"sled {__version__} (rng={RNG_KIND})"

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_DATA = 3


def _default_threads() -> int:
    env = os.environ.get("SLED_THREADS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def _infer_format(path: str, override: str | None) -> str:
    if override:
        return override
    return "tsv" if str(path).endswith(".tsv") else "csv"


def _feature_labels(names, p: int) -> list[str]:
    if names is not None:
        return list(names)
    return [f"f{i}" for i in range(p)]


def _build_kind(kind_name: str, beta: float | None) -> RelationshipKind:
    if kind_name == "adjacency":
        if beta is None:
            raise ValueError("--beta is required with --kind adjacency")
        return adjacency(beta)
    if beta is not None:
        raise ValueError("--beta is only valid with --kind adjacency")
    return {"covariance": COVARIANCE, "correlation": CORRELATION}[kind_name]


def _add_io_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--format", choices=("csv", "tsv"), default=None,
                     help="input format (default: by file extension)")
    sub.add_argument("--no-header", action="store_true",
                     help="inputs carry no feature-name header row")
    sub.add_argument("--orientation", choices=("samples", "features"), default="samples",
                     help="whether rows are samples (default) or features")
    sub.add_argument("--align-by-name", action="store_true",
                     help="match features of the two inputs by header name "
                          "instead of position")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sled",
        description="Two-sample tests for high-dimensional covariance and "
                    "relationship matrices via sparse leading eigenvalues. "
                    "Exit codes: 0 success, 2 validation or usage error, "
                    "3 data error.")
    parser.add_argument("--version", action="version", version=_VERSION_LINE)
    subs = parser.add_subparsers(dest="command", required=True)

    test = subs.add_parser(
        "test", help="compare two sample matrices",
        description="Run the permutation test comparing the relationship "
                    "matrices of two sample files (exit 0 ok, 2 validation "
                    "error, 3 data error).")
    test.add_argument("x_file", help="group-1 sample matrix")
    test.add_argument("y_file", help="group-2 sample matrix")
    test.add_argument("--method", choices=METHODS, default="sled")
    test.add_argument("--kind", choices=("covariance", "correlation", "adjacency"),
                      default="correlation",
                      help="relationship matrix to compare (default correlation)")
    test.add_argument("--beta", type=float, default=None,
                      help="adjacency exponent (requires --kind adjacency)")
    test.add_argument("--c", type=float, default=0.1,
                      help="sparsity parameter; the eigenvector L1 budget is "
                           "c*sqrt(p) (default 0.1)")
    test.add_argument("-B", "--permutations", type=int, default=1000,
                      help="number of permutation replicates (default 1000)")
    test.add_argument("--seed", type=int, default=0)
    test.add_argument("--threads", type=int, default=None,
                      help="worker threads (default $SLED_THREADS or 1); never "
                           "changes numeric output")
    test.add_argument("--solver", choices=("pmd", "fps"), default="pmd")
    test.add_argument("--alpha", type=float, default=0.05)
    test.add_argument("--cumulative-cut", type=float, default=0.999,
                      help="cumulative leverage split between primary and "
                           "secondary features (default 0.999)")
    test.add_argument("--add-one", action="store_true",
                      help="report the (1 + #{null >= stat}) / (B + 1) p-value "
                           "instead of the strict-inequality one")
    test.add_argument("--top", type=int, default=10,
                      help="print this many top-leverage features")
    test.add_argument("--out", default=None, help="write the result JSON here")
    test.add_argument("--include-null-stats", action="store_true",
                      help="embed all null statistics in the result JSON")
    test.add_argument("--reproducible", action="store_true",
                      help="omit the execution block (threads, wall clock) so "
                           "outputs of identical runs are byte-identical")
    _add_io_flags(test)

    sim = subs.add_parser(
        "simulate", help="emit one simulated scenario draw",
        description="Draw one (sigma1, sigma2, X, Y) realization of a "
                    "simulation scenario and write them as CSV files.")
    sim.add_argument("--base", choices=BASE_KINDS, required=True)
    sim.add_argument("--diff", choices=DIFF_KINDS, default="sparse_block")
    sim.add_argument("--noise", choices=NOISE_KINDS, default="normal")
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--m", type=int, required=True)
    sim.add_argument("--p", type=int, required=True)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out-dir", required=True)
    sim.add_argument("--fixed-lambda", action="store_true",
                     help="pin the diagonal rescaling across repetitions")
    sim.add_argument("--pd-shift-only-if-needed", action="store_true",
                     help="inflate the diagonal only when the base matrix is "
                          "not already positive definite")

    power = subs.add_parser(
        "power", help="run a power study over a scenario grid",
        description="Run every scenario cell of a grid CSV and write the "
                    "power table. Grid columns: base_kind, diff_kind, noise, "
                    "n, m, p, c, B, reps, seed, and optionally kind and beta.")
    power.add_argument("grid_file")
    power.add_argument("--methods", default="sled,frobenius,max",
                       help="comma-separated methods (default all three)")
    power.add_argument("--alpha", type=float, default=0.05)
    power.add_argument("--solver", choices=("pmd", "fps"), default="pmd")
    power.add_argument("--threads", type=int, default=None)
    power.add_argument("--out-csv", default=None, help="write the power table CSV here")
    power.add_argument("--out-json", default=None, help="write the power table JSON here")
    power.add_argument("--pd-shift-only-if-needed", action="store_true")
    power.add_argument("--fixed-lambda", action="store_true")
    return parser


def _load_matrices(args) -> tuple[DataMatrix, DataMatrix]:
    x = read_matrix(MatrixFile(args.x_file, fmt=_infer_format(args.x_file, args.format),
                               has_header=not args.no_header,
                               orientation=args.orientation))
    y = read_matrix(MatrixFile(args.y_file, fmt=_infer_format(args.y_file, args.format),
                               has_header=not args.no_header,
                               orientation=args.orientation))
    if args.align_by_name:
        x, y = align_by_name(x, y)
    return x, y


def _cmd_test(args) -> int:
    threads = args.threads if args.threads is not None else _default_threads()
    kind = _build_kind(args.kind, args.beta)
    if args.permutations < 1:
        raise ValueError("-B/--permutations must be at least 1")
    if not (0.0 < args.alpha < 1.0):
        raise ValueError("--alpha must lie in (0, 1)")

    x, y = _load_matrices(args)
    if x.p != y.p:
        raise DimensionMismatch(f"feature counts differ: {x.p} vs {y.p}")
    budget = SparsityBudget.from_c(args.c, x.p)
    if args.method == "sled" and args.kind != "covariance" and budget.sqrt_r <= 1.0:
        # With a single-coordinate budget the statistic reduces to the largest
        # diagonal difference, identically zero for these kinds.
        print(f"warning: c={args.c} allows only one coordinate at p={x.p}; "
              f"the {args.kind} differential has a zero diagonal, so the "
              "statistic degenerates. Increase --c.", file=sys.stderr)

    config = {
        "method": args.method,
        "kind": args.kind,
        "beta": args.beta,
        "c": args.c,
        "sqrt_r": budget.sqrt_r,
        "r": budget.r,
        "n_permutations": args.permutations,
        "seed": args.seed,
        "solver": args.solver,
        "alpha": args.alpha,
        "add_one": args.add_one,
        "cumulative_cut": args.cumulative_cut,
        "align_by_name": args.align_by_name,
        "x_file": str(args.x_file),
        "y_file": str(args.y_file),
        "format": _infer_format(args.x_file, args.format),
        "has_header": not args.no_header,
        "orientation": args.orientation,
    }

    with Stopwatch() as watch:
        if args.method == "sled":
            result = permutation_test(x, y, kind, budget, args.permutations,
                                      seed=args.seed, threads=threads,
                                      solver=args.solver)
        else:
            multi = permutation_pvalues(x, y, kind, budget, [args.method],
                                        args.permutations, seed=args.seed,
                                        threads=threads, solver=args.solver)
            o = multi.outcomes[args.method]
            result = PermutationTestResult(
                statistic=o.statistic, null_stats=o.null_stats,
                p_value=o.p_value, leverage=np.zeros(x.p), negated=False,
                n_permutations=args.permutations, seed=args.seed)

    if args.add_one:
        p_value = add_one_p_value(result.null_stats, result.statistic)
    else:
        p_value = result.p_value

    labels = _feature_labels(x.feature_names, x.p)
    primary, secondary = rank_features(result, cumulative_cut=args.cumulative_cut)
    doc = ResultDocument.from_result(
        result, config=config, tool_version=_VERSION_LINE,
        primary=[labels[i] for i in primary],
        secondary=[labels[i] for i in secondary],
        null_stats=args.include_null_stats,
        threads=None if args.reproducible else threads,
        wall_seconds=None if args.reproducible else round(watch.seconds, 6))
    doc.p_value = float(p_value)

    if args.out:
        write_result(doc, args.out)

    verdict = "reject" if p_value < args.alpha else "do not reject"
    print(f"method={args.method} kind={args.kind} p-value={p_value:.6g} "
          f"statistic={result.statistic:.6g} ({verdict} at alpha={args.alpha})")
    if args.method == "sled" and primary:
        order = primary + secondary
        print(f"top features by leverage (primary tier: {len(primary)}):")
        for i in order[:max(0, args.top)]:
            tier = "primary" if i in primary else "secondary"
            print(f"  {labels[i]}  leverage={result.leverage[i]:.6g}  [{tier}]")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    scenario = Scenario(base_kind=args.base, diff_kind=args.diff, noise=args.noise,
                        n=args.n, m=args.m, p=args.p, c=0.1, n_permutations=1,
                        reps=1, seed=args.seed,
                        redraw_lambda=not args.fixed_lambda,
                        pd_shift_only_if_needed=args.pd_shift_only_if_needed)
    mats, x, y = draw_repetition(scenario, rep=0)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(DataMatrix(mats.sigma1), out / "sigma1.csv")
    write_matrix(DataMatrix(mats.sigma2), out / "sigma2.csv")
    write_matrix(x, out / "x.csv")
    write_matrix(y, out / "y.csv")
    print(f"wrote sigma1.csv sigma2.csv x.csv y.csv to {out}")
    return EXIT_OK


def _parse_grid(path: str, args) -> list[Scenario]:
    import csv as _csv

    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise SledError(f"cannot read grid file {path}: {exc}") from exc
    reader = _csv.DictReader(text.splitlines())
    scenarios = []
    for row in reader:
        if not row or all(not v for v in row.values()):
            continue
        kind_name = (row.get("kind") or "covariance").strip()
        beta = row.get("beta")
        kind = _build_kind(kind_name, float(beta) if beta else None)
        scenarios.append(Scenario(
            base_kind=row["base_kind"].strip(),
            diff_kind=row["diff_kind"].strip(),
            noise=row["noise"].strip(),
            n=int(row["n"]), m=int(row["m"]), p=int(row["p"]),
            c=float(row["c"]),
            n_permutations=int(row.get("B") or row["n_permutations"]),
            reps=int(row["reps"]), seed=int(row["seed"]),
            kind=kind,
            redraw_lambda=not args.fixed_lambda,
            pd_shift_only_if_needed=args.pd_shift_only_if_needed))
    return scenarios


def _cmd_power(args) -> int:
    threads = args.threads if args.threads is not None else _default_threads()
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ValueError(f"unknown methods: {unknown}")
    try:
        scenarios = _parse_grid(args.grid_file, args)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed grid file: {exc}") from exc
    if not scenarios:
        raise ValueError("grid file contains no scenario rows")

    table = PowerTable()
    failed_cells = 0
    for i, scenario in enumerate(scenarios):
        try:
            cell = power_study(scenario, methods=methods, alpha=args.alpha,
                               threads=threads, solver=args.solver)
        except SledError as exc:
            failed_cells += 1
            print(f"cell {i}: FAILED ({exc})", file=sys.stderr)
            continue
        table.rows.extend(cell.rows)
        for row in cell.rows:
            print(f"cell {i} [{scenario.base_kind}/{scenario.diff_kind}/"
                  f"{scenario.noise} p={scenario.p}] {row.method}: "
                  f"power={row.power:.3f} [{row.ci_low:.3f}, {row.ci_high:.3f}] "
                  f"failures={row.failures}")
    if args.out_csv:
        Path(args.out_csv).write_text(table.to_csv(), encoding="utf-8")
    if args.out_json:
        Path(args.out_json).write_text(table.to_json(), encoding="utf-8")
    if failed_cells == len(scenarios):
        print("all cells failed", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {"test": _cmd_test, "simulate": _cmd_simulate, "power": _cmd_power}
    try:
        return handlers[args.command](args)
    except (ValueError, DimensionMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SledError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
