"""File ingestion and result persistence.

Matrices travel as CSV or TSV with an optional header row of feature names;
results are a JSON document with a fixed key order and a schema version.
Floats are serialized in shortest round-trip decimal form (``repr``), so
write-parse-write cycles are byte-identical and values survive exactly.
"""

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .engine import DataMatrix, PermutationTestResult
from .errors import NonNumericCell, ParseError, RaggedRows

RESULT_SCHEMA_VERSION = 1

_DELIMITERS = {"csv": ",", "tsv": "\t"}


@dataclass(frozen=True)
class MatrixFile:
    """Where and how to read a sample matrix.

    ``orientation="samples"`` means rows are samples (the native layout);
    ``"features"`` inputs are transposed on load. A header row, when present,
    provides the feature names in either orientation.
    """

    path: str
    fmt: str = "csv"
    has_header: bool = True
    orientation: str = "samples"

    def __post_init__(self):
        if self.fmt not in _DELIMITERS:
            raise ValueError("fmt must be 'csv' or 'tsv'")
        if self.orientation not in ("samples", "features"):
            raise ValueError("orientation must be 'samples' or 'features'")


def read_matrix(spec: MatrixFile) -> DataMatrix:
    """Parse a delimited numeric matrix into a DataMatrix.

    Raises ``RaggedRows`` when rows disagree on cell count and
    ``NonNumericCell`` (naming the cell) when a cell is not a finite real.
    Row and column indices in errors are 1-based positions in the file.
    """
    delim = _DELIMITERS[spec.fmt]
    path = Path(spec.path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(spec.path, message=f"cannot read file: {exc}") from exc
    lines = text.splitlines()
    while lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError(spec.path, message="file is empty")

    names: tuple[str, ...] | None = None
    start = 0
    if spec.has_header:
        names = tuple(cell.strip() for cell in lines[0].split(delim))
        start = 1
        if not lines[start:]:
            raise ParseError(spec.path, message="no data rows after header")

    width = None
    rows = []
    for i, line in enumerate(lines[start:], start=start + 1):
        cells = line.split(delim)
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise RaggedRows(spec.path, row=i,
                             message=f"expected {width} cells, found {len(cells)}")
        parsed = np.empty(len(cells))
        for j, cell in enumerate(cells):
            try:
                value = float(cell)
            except ValueError:
                raise NonNumericCell(spec.path, row=i, col=j + 1,
                                     message=f"cell {cell.strip()!r} is not numeric") from None
            if not np.isfinite(value):
                raise NonNumericCell(spec.path, row=i, col=j + 1,
                                     message=f"cell {cell.strip()!r} is not finite")
            parsed[j] = value
        rows.append(parsed)

    values = np.vstack(rows)
    if names is not None and len(names) != width:
        raise RaggedRows(spec.path, row=1,
                         message=f"header has {len(names)} cells, rows have {width}")
    if spec.orientation == "features":
        values = values.T
    return DataMatrix(values, feature_names=names)


def write_matrix(matrix: DataMatrix, path, fmt: str = "csv") -> None:
    """Write a DataMatrix in the echo format read back by ``read_matrix``."""
    delim = _DELIMITERS[fmt]
    lines = []
    if matrix.feature_names is not None:
        lines.append(delim.join(matrix.feature_names))
    for row in matrix.values:
        lines.append(delim.join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def align_by_name(x: DataMatrix, y: DataMatrix) -> tuple[DataMatrix, DataMatrix]:
    """Restrict both matrices to their shared feature names, in x's order."""
    if x.feature_names is None or y.feature_names is None:
        raise ParseError("<memory>", message="align-by-name requires headers in both inputs")
    y_pos = {name: j for j, name in enumerate(y.feature_names)}
    shared = [name for name in x.feature_names if name in y_pos]
    if not shared:
        raise ParseError("<memory>", message="no shared feature names between inputs")
    xi = [x.feature_names.index(name) for name in shared]
    yi = [y_pos[name] for name in shared]
    return (DataMatrix(x.values[:, xi], feature_names=tuple(shared)),
            DataMatrix(y.values[:, yi], feature_names=tuple(shared)))


@dataclass
class ResultDocument:
    """Everything one test run persists: config echo, outcome, rankings.

    ``execution`` (thread count and wall-clock seconds) is the only part that
    can differ between reruns of the same configuration; dropping it (the
    CLI's ``--reproducible``) makes outputs byte-comparable.
    """

    tool_version: str
    config: dict
    statistic: float
    p_value: float
    negated: bool
    n_permutations: int
    seed: int
    n_nonconverged: int
    leverage: list[float]
    primary_features: list[str]
    secondary_features: list[str]
    null_stats: list[float] | None = None
    threads: int | None = None
    wall_seconds: float | None = None

    @classmethod
    def from_result(cls, result: PermutationTestResult, config: dict,
                    tool_version: str, primary: list[str], secondary: list[str],
                    null_stats: bool = False, threads: int | None = None,
                    wall_seconds: float | None = None) -> "ResultDocument":
        return cls(
            tool_version=tool_version,
            config=dict(config),
            statistic=float(result.statistic),
            p_value=float(result.p_value),
            negated=bool(result.negated),
            n_permutations=int(result.n_permutations),
            seed=int(result.seed),
            n_nonconverged=int(result.n_nonconverged),
            leverage=[float(v) for v in result.leverage],
            primary_features=list(primary),
            secondary_features=list(secondary),
            null_stats=[float(v) for v in result.null_stats] if null_stats else None,
            threads=threads,
            wall_seconds=wall_seconds,
        )

    def to_dict(self) -> dict:
        doc = {
            "schema_version": RESULT_SCHEMA_VERSION,
            "tool_version": self.tool_version,
            "config": self.config,
            "result": {
                "statistic": self.statistic,
                "p_value": self.p_value,
                "negated": self.negated,
                "n_permutations": self.n_permutations,
                "seed": self.seed,
                "n_nonconverged": self.n_nonconverged,
                "leverage": self.leverage,
                "null_stats": self.null_stats,
            },
            "ranked_features": {
                "primary": self.primary_features,
                "secondary": self.secondary_features,
            },
        }
        if self.threads is not None or self.wall_seconds is not None:
            doc["execution"] = {"threads": self.threads, "wall_seconds": self.wall_seconds}
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ResultDocument":
        if doc.get("schema_version") != RESULT_SCHEMA_VERSION:
            raise ParseError("<json>", message="unsupported result schema version")
        result = doc["result"]
        execution = doc.get("execution", {})
        return cls(
            tool_version=doc["tool_version"],
            config=doc["config"],
            statistic=result["statistic"],
            p_value=result["p_value"],
            negated=result["negated"],
            n_permutations=result["n_permutations"],
            seed=result["seed"],
            n_nonconverged=result["n_nonconverged"],
            leverage=result["leverage"],
            primary_features=doc["ranked_features"]["primary"],
            secondary_features=doc["ranked_features"]["secondary"],
            null_stats=result["null_stats"],
            threads=execution.get("threads"),
            wall_seconds=execution.get("wall_seconds"),
        )


def render_result(doc: ResultDocument) -> str:
    """Serialize with a fixed key order; two renders of one doc are identical."""
    return json.dumps(doc.to_dict(), indent=2, allow_nan=False) + "\n"


def write_result(doc: ResultDocument, path) -> None:
    try:
        Path(path).write_text(render_result(doc), encoding="utf-8")
    except OSError as exc:
        raise ParseError(str(path), message=f"cannot write result: {exc}") from exc


def read_result(path) -> ResultDocument:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(str(path), message=f"cannot read result: {exc}") from exc
    return ResultDocument.from_dict(json.loads(text))


class Stopwatch:
    """Minimal wall-clock timer for the execution block."""

    def __enter__(self):
        self._start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self._start
        return False
