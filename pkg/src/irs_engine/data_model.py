"""Labeled datasets: ingestion, validation and factor discretization.

A :class:`LabeledDataset` pairs a real-valued code matrix (one column per
latent feature) with a matrix of discrete factor realization indices.  Every
score in the engine is computed over one of these.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ValidationError

STRATEGIES = ("discrete", "equal_width", "quantile")
DEFAULT_STRATEGY = "quantile"
DEFAULT_BINS = 10

FACTOR_PREFIX = "g_"
CODE_PREFIX = "z_"

_NPY_DTYPES = ("<f4", "<f8", "<i4", "<i8")


@dataclass(frozen=True)
class FactorBinning:
    """How one factor column is mapped onto realization indices."""

    name: Optional[str] = None
    strategy: str = "discrete"
    bins: int = DEFAULT_BINS
    edges: tuple = ()

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValidationError(
                f"unknown discretization strategy {self.strategy!r} "
                f"(expected one of {', '.join(STRATEGIES)})"
            )
        if self.strategy != "discrete" and self.bins < 2:
            raise ValidationError(
                f"factor {self.name!r}: bin count must be >= 2, got {self.bins}"
            )
        if any(b <= a for a, b in zip(self.edges, self.edges[1:])):
            raise ValidationError(f"factor {self.name!r}: edges not strictly increasing")


@dataclass(frozen=True)
class DiscretizationPlan:
    """Per-factor binning strategies.

    Factors are matched by name when names are available, otherwise by
    position.  Factors without an entry are passed through when their values
    are integral and quantile-binned into ``default_bins`` bins otherwise.
    """

    factors: tuple = ()
    default_bins: int = DEFAULT_BINS

    @classmethod
    def from_dict(cls, doc: dict) -> "DiscretizationPlan":
        if not isinstance(doc, dict) or "factors" not in doc:
            raise ValidationError("discretization plan must be an object with a 'factors' list")
        entries = []
        for pos, item in enumerate(doc["factors"]):
            if not isinstance(item, dict):
                raise ValidationError(f"plan factors[{pos}] must be an object")
            bins = item.get("bins", DEFAULT_BINS)
            if not isinstance(bins, int) or isinstance(bins, bool):
                raise ValidationError(f"plan factors[{pos}].bins must be an integer")
            entries.append(
                FactorBinning(
                    name=item.get("name"),
                    strategy=item.get("strategy", DEFAULT_STRATEGY),
                    bins=bins,
                )
            )
        return cls(factors=tuple(entries), default_bins=doc.get("default_bins", DEFAULT_BINS))

    @classmethod
    def from_json(cls, path) -> "DiscretizationPlan":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(
                f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
            ) from exc
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return {
            "factors": [
                {"name": f.name, "strategy": f.strategy, "bins": f.bins, "edges": list(f.edges)}
                for f in self.factors
            ]
        }

    def entry_for(self, position: int, name: Optional[str]) -> Optional[FactorBinning]:
        named = [f for f in self.factors if f.name is not None]
        if named and name is not None:
            for f in named:
                if f.name == name:
                    return f
            return None
        if position < len(self.factors):
            return self.factors[position]
        return None


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """N rows of codes (N x K') paired with factor realizations (N x K).

    Arrays are made read-only on construction; instances can be shared
    between workers.
    """

    codes: np.ndarray
    factors: np.ndarray
    factor_cardinalities: tuple
    factor_names: Optional[tuple] = None
    feature_names: Optional[tuple] = None
    plan: Optional[DiscretizationPlan] = field(default=None, repr=False)

    def __post_init__(self):
        codes = np.array(self.codes, dtype=np.float64, copy=True)
        factors = np.array(self.factors, copy=True)
        if codes.ndim == 1:
            codes = codes[:, None]
        if factors.ndim == 1:
            factors = factors[:, None]
        if codes.ndim != 2 or factors.ndim != 2:
            raise ValidationError("codes and factors must be 2-D matrices")
        if codes.shape[0] != factors.shape[0]:
            raise ValidationError(
                f"row-count mismatch: codes has {codes.shape[0]} rows, factors has {factors.shape[0]}"
            )
        if codes.shape[0] < 1:
            raise ValidationError("dataset must contain at least one row")
        if not np.all(np.isfinite(codes)):
            bad = np.argwhere(~np.isfinite(codes))[0]
            raise ValidationError(f"non-finite code value at row {bad[0]}, column {bad[1]}")
        if not np.issubdtype(factors.dtype, np.integer):
            if not np.all(np.isfinite(factors)) or np.any(factors != np.round(factors)):
                raise ValidationError("factor matrix must hold integer realization indices")
        factors = factors.astype(np.int64)
        cards = tuple(int(c) for c in self.factor_cardinalities)
        if len(cards) != factors.shape[1]:
            raise ValidationError(
                f"expected {factors.shape[1]} factor cardinalities, got {len(cards)}"
            )
        for i, card in enumerate(cards):
            col = factors[:, i]
            if card < 1 or col.min() < 0 or col.max() >= card:
                raise ValidationError(f"factor column {i} has indices outside [0, {card})")
            if np.unique(col).size != card:
                raise ValidationError(f"factor column {i}: cardinality {card} is not tight")
        for names, width, what in (
            (self.factor_names, factors.shape[1], "factor_names"),
            (self.feature_names, codes.shape[1], "feature_names"),
        ):
            if names is not None and len(names) != width:
                raise ValidationError(f"{what} has {len(names)} entries, expected {width}")
        codes.setflags(write=False)
        factors.setflags(write=False)
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "factor_cardinalities", cards)
        if self.factor_names is not None:
            object.__setattr__(self, "factor_names", tuple(self.factor_names))
        if self.feature_names is not None:
            object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n_rows(self) -> int:
        return self.codes.shape[0]

    @property
    def n_factors(self) -> int:
        return self.factors.shape[1]

    @property
    def n_features(self) -> int:
        return self.codes.shape[1]

    def permuted(self, order) -> "LabeledDataset":
        """Same dataset with rows reordered by ``order``."""
        order = np.asarray(order)
        return LabeledDataset(
            self.codes[order], self.factors[order], self.factor_cardinalities,
            self.factor_names, self.feature_names, self.plan,
        )

    def with_codes(self, codes) -> "LabeledDataset":
        codes = np.asarray(codes, dtype=np.float64)
        names = self.feature_names
        if names is not None and (codes.ndim != 2 or codes.shape[1] != len(names)):
            names = None
        return LabeledDataset(
            codes, self.factors, self.factor_cardinalities, self.factor_names, names, self.plan
        )


def canonicalize(column) -> tuple[np.ndarray, np.ndarray]:
    """Map values to 0..card-1 in sorted-value order; returns (indices, values)."""
    values, idx = np.unique(np.asarray(column), return_inverse=True)
    return idx.reshape(-1).astype(np.int64), values


def equal_width_edges(column: np.ndarray, bins: int) -> np.ndarray:
    lo, hi = float(column.min()), float(column.max())
    return np.linspace(lo, hi, bins + 1)[1:-1]


def quantile_edges(column: np.ndarray, bins: int) -> np.ndarray:
    """Inclusive upper edges of equal-mass bins over the distinct values.

    Each edge is an observed value; rows equal to an edge fall into the lower
    bin.  With at least ``bins`` distinct values every bin receives at least
    one distinct value, hence at least one row.
    """
    values, counts = np.unique(column, return_counts=True)
    n_distinct = values.size
    if n_distinct <= bins:
        return values[:-1].astype(np.float64)
    cum = np.cumsum(counts)
    n = cum[-1]
    j = np.arange(1, bins)
    pos = np.searchsorted(cum, j * n / bins, side="left")
    pos = np.maximum.accumulate(np.maximum(pos, j - 1) - j) + j  # strictly increasing
    pos = np.minimum(pos, n_distinct - 1 - (bins - j))
    return values[pos].astype(np.float64)


def discretize_column(column, entry: FactorBinning) -> tuple[np.ndarray, FactorBinning]:
    column = np.asarray(column, dtype=np.float64)
    if entry.strategy == "discrete":
        idx, values = canonicalize(column)
        return idx, FactorBinning(entry.name, "discrete", entry.bins, ())
    if entry.strategy == "equal_width":
        edges = equal_width_edges(column, entry.bins)
    else:
        edges = quantile_edges(column, entry.bins)
    edges = np.unique(edges)
    raw = np.searchsorted(edges, column, side="left")
    idx, _ = canonicalize(raw)
    return idx, FactorBinning(entry.name, entry.strategy, entry.bins, tuple(float(e) for e in edges))


def _is_integral(column: np.ndarray) -> bool:
    return bool(np.all(np.isfinite(column)) and np.all(column == np.round(column)))


def ingest(
    codes,
    factors,
    plan: Optional[DiscretizationPlan] = None,
    factor_names: Optional[Sequence[str]] = None,
    feature_names: Optional[Sequence[str]] = None,
) -> LabeledDataset:
    """Validate raw arrays and discretize factor columns into a dataset."""
    try:
        codes = np.asarray(codes, dtype=np.float64)
        raw_factors = np.asarray(factors, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"unparseable input: {exc}") from exc
    if codes.ndim == 1:
        codes = codes[:, None]
    if raw_factors.ndim == 1:
        raw_factors = raw_factors[:, None]
    if codes.ndim != 2 or raw_factors.ndim != 2:
        raise ValidationError("codes and factors must be 2-D matrices")
    if codes.shape[0] != raw_factors.shape[0]:
        raise ValidationError(
            f"row-count mismatch: codes has {codes.shape[0]} rows, factors has {raw_factors.shape[0]}"
        )
    if not np.all(np.isfinite(codes)):
        bad = np.argwhere(~np.isfinite(codes))[0]
        raise ValidationError(f"non-finite code value at row {bad[0]}, column {bad[1]}")
    if not np.all(np.isfinite(raw_factors)):
        raise ValidationError("non-finite factor value")

    plan = plan or DiscretizationPlan()
    out = np.empty(raw_factors.shape, dtype=np.int64)
    used = []
    cards = []
    for i in range(raw_factors.shape[1]):
        name = factor_names[i] if factor_names is not None else None
        column = raw_factors[:, i]
        entry = plan.entry_for(i, name)
        if entry is None:
            if _is_integral(column):
                entry = FactorBinning(name, "discrete")
            else:
                entry = FactorBinning(name, DEFAULT_STRATEGY, plan.default_bins)
        if np.unique(column).size < 2:
            label = name if name is not None else i
            raise ValidationError(
                f"factor {label!r} is constant; a constant factor admits no intervention contrast"
            )
        idx, applied = discretize_column(column, entry)
        out[:, i] = idx
        cards.append(int(idx.max()) + 1)
        used.append(applied)
    return LabeledDataset(
        codes,
        out,
        tuple(cards),
        None if factor_names is None else tuple(factor_names),
        None if feature_names is None else tuple(feature_names),
        DiscretizationPlan(tuple(used), plan.default_bins),
    )


def is_fully_crossed(d: LabeledDataset) -> bool:
    """True iff every full factor tuple occurs exactly once."""
    if d.n_rows != math.prod(d.factor_cardinalities):
        return False
    return np.unique(d.factors, axis=0).shape[0] == d.n_rows


# -- file formats -----------------------------------------------------------


def read_csv_table(path, columns: Optional[Sequence[str]] = None, prefix: Optional[str] = None):
    """Read a headed CSV and return ``(matrix, names)`` for the selected columns.

    Columns are chosen by explicit list, else by ``prefix``, else all columns
    are used.
    """
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise ValidationError(f"{path}: empty file, header row required")
            header = [h.strip() for h in header]
            rows = [r for r in reader if r]
    except UnicodeDecodeError as exc:
        raise ValidationError(f"{path}: not valid UTF-8") from exc
    if columns is not None:
        missing = [c for c in columns if c not in header]
        if missing:
            raise ValidationError(f"{path}: columns not found: {', '.join(missing)}")
        chosen = list(columns)
    elif prefix is not None and any(h.startswith(prefix) for h in header):
        chosen = [h for h in header if h.startswith(prefix)]
    else:
        chosen = header
    pos = [header.index(c) for c in chosen]
    data = np.empty((len(rows), len(pos)), dtype=np.float64)
    for r, row in enumerate(rows):
        if len(row) != len(header):
            raise ValidationError(f"{path}: line {r + 2} has {len(row)} fields, expected {len(header)}")
        for c, p in enumerate(pos):
            try:
                data[r, c] = float(row[p])
            except ValueError as exc:
                raise ValidationError(
                    f"{path}: line {r + 2}, column {header[p]!r}: cannot parse {row[p]!r}"
                ) from exc
    return data, chosen


def read_npy(path) -> np.ndarray:
    """Read a 2-D array from an NPY v1.0 file, enforcing the accepted subset."""
    path = Path(path)
    with path.open("rb") as fh:
        try:
            version = np.lib.format.read_magic(fh)
        except ValueError as exc:
            raise ValidationError(f"{path}: not an NPY file ({exc})") from exc
        if version != (1, 0):
            raise ValidationError(f"{path}: NPY version {version[0]}.{version[1]} unsupported, need 1.0")
        try:
            shape, fortran_order, dtype = np.lib.format.read_array_header_1_0(fh)
        except ValueError as exc:
            raise ValidationError(f"{path}: bad NPY header ({exc})") from exc
        if dtype.str not in _NPY_DTYPES:
            raise ValidationError(f"{path}: dtype {dtype.str!r} unsupported")
        if fortran_order:
            raise ValidationError(f"{path}: fortran_order arrays unsupported")
        if len(shape) != 2:
            raise ValidationError(f"{path}: expected a 2-D array, got shape {shape}")
        count = int(np.prod(shape))
        data = np.fromfile(fh, dtype=dtype, count=count)
        if data.size != count:
            raise ValidationError(f"{path}: truncated array data")
    return data.reshape(shape)


def write_npy(path, array: np.ndarray) -> None:
    array = np.ascontiguousarray(array)
    if array.dtype.str not in _NPY_DTYPES:
        array = array.astype("<f8")
    with Path(path).open("wb") as fh:
        np.lib.format.write_array(fh, array, version=(1, 0), allow_pickle=False)


def write_csv_table(path, matrix: np.ndarray, names: Sequence[str], integer: bool = False) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for row in matrix:
            writer.writerow([str(int(v)) if integer else repr(float(v)) for v in row])


def load_matrix(path, columns=None, prefix=None):
    """Load a CSV or NPY matrix; NPY columns are named by ``prefix`` + index."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    if path.suffix.lower() == ".npy":
        data = read_npy(path)
        names = [f"{prefix or ''}{i}" for i in range(data.shape[1])]
        if columns is not None:
            idx = [names.index(c) for c in columns]
            return data[:, idx], list(columns)
        return data, names
    return read_csv_table(path, columns, prefix)


def load_dataset(
    codes_path,
    factors_path=None,
    plan: Optional[DiscretizationPlan] = None,
    code_columns=None,
    factor_columns=None,
) -> LabeledDataset:
    """Read codes and factors (separate files, or one CSV holding both)."""
    factors_path = factors_path or codes_path
    codes, code_names = load_matrix(codes_path, code_columns, CODE_PREFIX)
    factors, factor_names = load_matrix(factors_path, factor_columns, FACTOR_PREFIX)
    return ingest(codes, factors, plan, factor_names, code_names)
