"""Dataset ingestion, preprocessing, subsampling and synthetic data.

Matrices are feature-by-record (``d x n``), matching :class:`DatasetMatrix`.
The preprocessing recipe is: one-hot expand categorical features, scale each
feature row by its largest absolute entry, then scale every record by one
global factor so the largest column norm is 1.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .linalg import DatasetMatrix, ParameterError
from .rng import make_rng

SYNTHETIC_SPECTRUM = (0.5, 0.30, 0.04, 0.03, 0.02, 0.01, 0.004, 0.003, 0.001, 0.001)

CONTINUOUS = "continuous"


class DataError(ValueError):
    """Malformed input data (unknown category, schema mismatch, bad CSV)."""


@dataclass
class Feature:
    name: str
    kind: str  # "continuous" or "categorical"
    values: list
    arity: int | None = None


@dataclass
class RawTable:
    """Named feature columns before expansion; one entry per record."""

    features: list[Feature]

    def __post_init__(self):
        lengths = {len(f.values) for f in self.features}
        if len(lengths) > 1:
            raise DataError(f"features have different record counts: {sorted(lengths)}")
        for f in self.features:
            if f.kind == CONTINUOUS:
                continue
            if f.kind != "categorical" or f.arity is None:
                raise DataError(f"feature {f.name!r}: categorical features need an arity")
            observed = len(set(f.values))
            if observed != f.arity:
                raise DataError(f"feature {f.name!r} declares arity {f.arity} "
                                f"but has {observed} distinct values")

    @property
    def rows(self) -> int:
        return len(self.features[0].values) if self.features else 0

    @classmethod
    def from_schema(cls, columns: dict[str, list], schema: dict[str, int | str]) -> "RawTable":
        feats = []
        for name, spec in schema.items():
            if name not in columns:
                raise DataError(f"schema names missing column {name!r}")
            if spec == CONTINUOUS:
                feats.append(Feature(name, CONTINUOUS, [float(v) for v in columns[name]]))
            else:
                feats.append(Feature(name, "categorical", list(columns[name]), int(spec)))
        return cls(feats)


@dataclass
class PreprocessReport:
    input_dims: int
    output_d: int
    expansion: dict[str, list[int]] = field(default_factory=dict)
    levels: dict[str, list] = field(default_factory=dict)
    row_scales: list[float] = field(default_factory=list)
    column_scale: float = 1.0
    row_rule: str = "max-abs"

    def to_json(self, **kwargs) -> str:
        return json.dumps(asdict(self), default=str, **kwargs)


class OneHotExpander:
    """Learns category levels from a table and expands tables with them."""

    def __init__(self):
        self.levels: dict[str, list] | None = None

    def fit(self, table: RawTable) -> "OneHotExpander":
        self.levels = {}
        for f in table.features:
            if f.kind != CONTINUOUS:
                self.levels[f.name] = sorted(set(f.values), key=_level_key)
        return self

    def transform(self, table: RawTable) -> tuple[np.ndarray, PreprocessReport]:
        if self.levels is None:
            raise RuntimeError("call fit() first")
        blocks = []
        expansion = {}
        row = 0
        for f in table.features:
            if f.kind == CONTINUOUS:
                blocks.append(np.asarray(f.values, dtype=float)[None, :])
                expansion[f.name] = [row]
                row += 1
                continue
            levels = self.levels.get(f.name)
            if levels is None:
                raise DataError(f"feature {f.name!r} was not seen at fit time")
            lookup = {v: i for i, v in enumerate(levels)}
            block = np.zeros((len(levels), table.rows))
            for j, v in enumerate(f.values):
                if v not in lookup:
                    raise DataError(f"feature {f.name!r}: unseen category {v!r}")
                block[lookup[v], j] = 1.0
            blocks.append(block)
            expansion[f.name] = list(range(row, row + len(levels)))
            row += len(levels)
        x = np.vstack(blocks) if blocks else np.zeros((0, table.rows))
        report = PreprocessReport(input_dims=len(table.features), output_d=x.shape[0],
                                  expansion=expansion, levels=dict(self.levels))
        return x, report


def _level_key(v):
    try:
        return (0, float(v), "")
    except (TypeError, ValueError):
        return (1, 0.0, str(v))


def one_hot_expand(table: RawTable) -> tuple[np.ndarray, PreprocessReport]:
    return OneHotExpander().fit(table).transform(table)


def normalize(matrix, report: PreprocessReport | None = None) -> tuple[DatasetMatrix, PreprocessReport]:
    x = np.array(matrix, dtype=float, copy=True)
    if x.ndim != 2 or x.size == 0:
        raise ParameterError("normalize needs a nonempty 2-D matrix")
    row_max = np.max(np.abs(x), axis=1)
    scales = np.where(row_max > 0, row_max, 1.0)
    x /= scales[:, None]
    col_max = float(np.max(np.linalg.norm(x, axis=0)))
    col_scale = 1.0 / col_max if col_max > 0 else 1.0
    x *= col_scale
    if report is None:
        report = PreprocessReport(input_dims=x.shape[0], output_d=x.shape[0])
    report.row_scales = [float(s) for s in scales]
    report.column_scale = col_scale
    return DatasetMatrix(x, provenance={"preprocess": "normalize"}), report


def subsample(data: DatasetMatrix, m: int, seed) -> DatasetMatrix:
    """``m`` distinct records drawn uniformly without replacement."""
    if not 1 <= m <= data.n:
        raise ParameterError(f"subsample size must lie in [1, {data.n}], got {m}")
    rng = make_rng(seed)
    idx = rng.choice(data.n, size=m, replace=False)
    prov = dict(data.provenance, subsample_of=data.n)
    return DatasetMatrix(data.entries[:, idx], norm_bound=data.norm_bound, provenance=prov)


def random_orthogonal(d: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


def synthetic_gaussian(n: int, spectrum=SYNTHETIC_SPECTRUM, seed=0, basis: str = "identity",
                       clip: bool = True) -> DatasetMatrix:
    """``n`` draws from ``N(0, Q diag(spectrum) Q^T)``.

    With ``clip=True`` records with norm above 1 are rescaled to unit norm
    and the clipped fraction is kept in ``provenance``.  ``clip=False``
    returns the raw Gaussian data without the unit-norm check (the data is
    then flagged unbounded).
    """
    lam = np.asarray(spectrum, dtype=float)
    if lam.ndim != 1 or lam.size < 1:
        raise ParameterError("spectrum must be a nonempty vector")
    if np.any(lam < 0) or np.any(np.diff(lam) > 0):
        raise ParameterError("spectrum must be nonnegative and nonincreasing")
    rng = make_rng(seed)
    d = lam.size
    x = np.sqrt(lam)[:, None] * rng.standard_normal((d, n))
    if basis == "random-orthogonal":
        x = random_orthogonal(d, rng) @ x
    elif basis != "identity":
        raise ParameterError(f"unknown basis {basis!r}")
    prov = {"source": "synthetic", "basis": basis, "spectrum": lam.tolist()}
    if not clip:
        prov["clip_fraction"] = 0.0
        return DatasetMatrix(x, norm_bound=None, provenance=prov)
    norms = np.linalg.norm(x, axis=0)
    over = norms > 1.0
    x[:, over] /= norms[over]
    prov["clip_fraction"] = float(np.mean(over))
    return DatasetMatrix(x, provenance=prov)


# ---------------------------------------------------------------------------
# file formats


def read_table(csv_path, schema_path) -> RawTable:
    """CSV (header row, comma separated, UTF-8) plus a JSON schema sidecar.

    The schema maps column name to ``"continuous"`` or an integer arity;
    columns not named in the schema are ignored.
    """
    schema = json.loads(Path(schema_path).read_text(encoding="utf-8"))
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{csv_path}: missing header row")
        columns: dict[str, list] = {name: [] for name in reader.fieldnames}
        for row in reader:
            for name in reader.fieldnames:
                columns[name].append(row[name])
    return RawTable.from_schema(columns, schema)


def load_dataset(csv_path, schema_path) -> tuple[DatasetMatrix, PreprocessReport]:
    x, report = one_hot_expand(read_table(csv_path, schema_path))
    return normalize(x, report)


def write_dataset_csv(data: DatasetMatrix, path) -> None:
    """One CSV row per record (column of ``X``), header ``x0..x{d-1}``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i}" for i in range(data.d)])
        for col in data.entries.T:
            writer.writerow([repr(float(v)) for v in col])


def read_dataset_csv(path, norm_bound: float | None = 1.0) -> DatasetMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    return DatasetMatrix(np.array(rows, dtype=float).T, norm_bound=norm_bound)
