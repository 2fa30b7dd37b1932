"""Interventional robustness scores.

Interventional means of the codes are estimated from observational data by
importance weighting: a row with full factor tuple ``g`` gets weight
``p(g_rest) / (N p(g))`` where ``g_rest`` is its realization of the factors
not being intervened on.  On unconfounded data plain conditional means give
the same answer, and both modes are available.

EMPIDA is computed in one pass over a nested partition: for each observed
``g_I`` the reference mean under ``do(G_I = g_I)`` is compared with the mean
under the additional intervention on ``G_J`` for every observed ``g_J``; the
worst deviation is averaged over ``g_I`` with weights ``|D_I^(k)| / N``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .data_model import LabeledDataset, is_fully_crossed
from .errors import EstimationError, ValidationError
from .partitioner import (
    FrequencyTable,
    IndexSpec,
    PartitionTable,
    RowVisits,
    build_frequencies,
    build_partition,
)

log = logging.getLogger(__name__)

DISTANCES = {"l2": 2, "l1": 1, "linf": np.inf}
MODES = ("weighted", "conditional")
FAST_PATH = ("auto", "on", "off")


@dataclass(frozen=True)
class IrsConfig:
    distance: str = "l2"
    mode: str = "weighted"
    normalize_weights: bool = True
    min_cell_size: int = 1
    activity_threshold: float = 1e-8
    clamp: bool = False
    fast_path: str = "auto"
    workers: int = 1

    def __post_init__(self):
        if self.distance not in DISTANCES:
            raise ValidationError(
                f"unknown distance {self.distance!r} (expected one of {', '.join(DISTANCES)})"
            )
        if self.mode not in MODES:
            raise ValidationError(f"unknown mode {self.mode!r} (expected weighted or conditional)")
        if self.fast_path not in FAST_PATH:
            raise ValidationError(f"unknown fast-path setting {self.fast_path!r}")
        if self.min_cell_size < 1:
            raise ValidationError(f"min_cell_size must be >= 1, got {self.min_cell_size}")
        if self.workers < 1:
            raise ValidationError(f"workers must be >= 1, got {self.workers}")

    def echo(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class InterventionalMean:
    value: np.ndarray
    outer_key: tuple
    inner_key: Optional[tuple]
    n_rows: int
    effective_sample_size: float


def _norm(diff: np.ndarray, distance: str) -> np.ndarray:
    return np.linalg.norm(diff, ord=DISTANCES[distance], axis=-1)


def pida(ref_mean, int_mean, distance: str = "l2") -> float:
    """Distance between a reference mean and an interventional mean."""
    a = np.asarray(getattr(ref_mean, "value", ref_mean), dtype=np.float64).reshape(-1)
    b = np.asarray(getattr(int_mean, "value", int_mean), dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ValidationError(f"dimension mismatch: {a.size} vs {b.size}")
    if distance not in DISTANCES:
        raise ValidationError(f"unknown distance {distance!r}")
    return float(_norm(a - b, distance))


def _row_weights(freqs: FrequencyTable, rows, reference: bool) -> np.ndarray:
    numer = freqs.p_not_i if reference else freqs.p_rest
    return numer[rows] / (freqs.n_rows * freqs.p_full[rows])


def interventional_mean(
    d: LabeledDataset,
    parts: PartitionTable,
    freqs: Optional[FrequencyTable],
    spec: IndexSpec,
    cell: tuple,
    mode: str = "weighted",
    normalize: bool = True,
) -> InterventionalMean:
    """Mean of ``codes[:, L]`` under ``do(G_I = g_I^(k), G_J = g_J^(l))``.

    ``cell`` is ``(k, l)``; pass ``l=None`` for the reference mean under
    ``do(G_I = g_I^(k))`` alone.
    """
    k, l = cell
    if l is None:
        rows = parts.outer_rows(k)
        inner = None
    else:
        rows = parts.cell_rows(k, l)
        inner = parts.inner_key(k, l)
    if rows.size == 0:
        raise EstimationError(f"empty cell {cell}")
    z = d.codes[np.ix_(rows, spec.L)]
    if mode == "conditional":
        w = np.full(rows.size, 1.0 / rows.size)
    elif mode == "weighted":
        if freqs is None:
            raise ValidationError("weighted mode needs a frequency table")
        w = _row_weights(freqs, rows, reference=l is None)
        total = w.sum()
        if not total > 0:
            raise EstimationError(f"zero total weight in cell {cell}; inconsistent frequencies")
        if normalize:
            w = w / total
    else:
        raise ValidationError(f"unknown mode {mode!r}")
    ess = float(w.sum() ** 2 / np.sum(w * w))
    return InterventionalMean(
        value=w @ z,
        outer_key=parts.outer_key(k),
        inner_key=inner,
        n_rows=int(rows.size),
        effective_sample_size=ess,
    )


def _group_means(z: np.ndarray, ids: np.ndarray, n_groups: int, w: Optional[np.ndarray], normalize: bool):
    out = np.empty((n_groups, z.shape[1]))
    if w is None:
        wsum = np.bincount(ids, minlength=n_groups).astype(np.float64)
        for c in range(z.shape[1]):
            out[:, c] = np.bincount(ids, weights=z[:, c], minlength=n_groups)
    else:
        wsum = np.bincount(ids, weights=w, minlength=n_groups)
        for c in range(z.shape[1]):
            out[:, c] = np.bincount(ids, weights=w * z[:, c], minlength=n_groups)
    if normalize or w is None:
        if np.any(wsum <= 0):
            raise EstimationError("zero total weight in a cell; inconsistent frequency tables")
        out /= wsum[:, None]
    return out


@dataclass(frozen=True, eq=False)
class EmpidaResult:
    """EMPIDA together with its intermediate per-cell quantities."""

    value: np.ndarray
    mpida: np.ndarray
    outer_weights: np.ndarray
    reference_means: np.ndarray
    cell_means: np.ndarray
    cell_pida: np.ndarray
    excluded_cells: int
    partition: PartitionTable = field(repr=False)


def _empida_arrays(
    z: np.ndarray,
    parts: PartitionTable,
    freqs: Optional[FrequencyTable],
    config: IrsConfig,
    per_column: bool,
    visits: Optional[RowVisits] = None,
) -> EmpidaResult:
    n = z.shape[0]
    if config.mode == "weighted":
        denom = n * freqs.p_full
        w_ref = freqs.p_not_i / denom
        w_int = freqs.p_rest / denom
    else:
        w_ref = w_int = None
    ref = _group_means(z, parts.outer_ids, parts.n_outer, w_ref, config.normalize_weights)
    cell = _group_means(z, parts.cell_ids, parts.n_cells, w_int, config.normalize_weights)
    if visits is not None:
        visits.add(2 * n)
    diff = cell - ref[parts.cell_outer]
    if per_column:
        dist = np.abs(diff)
    else:
        dist = _norm(diff, config.distance)[:, None]
    small = parts.cell_sizes < config.min_cell_size
    excluded = int(small.sum())
    if excluded:
        dist = np.where(small[:, None], 0.0, dist)
    mpida = np.maximum.reduceat(dist, parts.cell_start[:-1], axis=0)
    outer_w = parts.outer_sizes / n
    value = outer_w @ mpida
    return EmpidaResult(
        value=value,
        mpida=mpida,
        outer_weights=outer_w,
        reference_means=ref,
        cell_means=cell,
        cell_pida=dist,
        excluded_cells=excluded,
        partition=parts,
    )


def empida_detail(
    d: LabeledDataset,
    spec: IndexSpec,
    config: IrsConfig = IrsConfig(),
    visits: Optional[RowVisits] = None,
) -> EmpidaResult:
    spec.validate(d)
    parts = build_partition(d, spec, visits)
    freqs = build_frequencies(d, spec, visits) if config.mode == "weighted" else None
    z = d.codes[:, list(spec.L)]
    res = _empida_arrays(z, parts, freqs, config, per_column=False, visits=visits)
    if res.excluded_cells:
        log.warning(
            "%d cell(s) below min_cell_size=%d excluded from the sup",
            res.excluded_cells, config.min_cell_size,
        )
    return res


def empida(
    d: LabeledDataset,
    spec: IndexSpec,
    config: IrsConfig = IrsConfig(),
    visits: Optional[RowVisits] = None,
) -> float:
    """Expected maximal post-interventional disagreement of ``Z_L``."""
    return float(empida_detail(d, spec, config, visits).value[0])


def normalizer_spec(d: LabeledDataset, L) -> IndexSpec:
    return IndexSpec(L, (), tuple(range(d.n_factors)))


def _is_inactive(normalizer, scale, threshold) -> np.ndarray:
    return np.asarray(normalizer) <= threshold * np.asarray(scale)


@dataclass(frozen=True)
class IrsResult:
    value: Optional[float]
    active: bool
    empida: float
    normalizer: float
    warnings: tuple = ()

    @property
    def status(self) -> str:
        return "ok" if self.active else "inactive"


def _finish_score(raw: float, config: IrsConfig, label: str) -> tuple:
    warnings = ()
    if raw < 0:
        warnings = (f"{label}: IRS {raw:.6g} below 0 (EMPIDA exceeds normalizer)",)
        log.warning(warnings[0])
    if config.clamp:
        raw = min(max(raw, 0.0), 1.0)
    return raw, warnings


def irs(d: LabeledDataset, spec: IndexSpec, config: IrsConfig = IrsConfig()) -> IrsResult:
    """``1 - EMPIDA(L|I,J) / EMPIDA(L|∅,{all})``; inactive feature sets get no value."""
    spec.validate(d)
    numer = empida(d, spec, config)
    norm = empida(d, normalizer_spec(d, spec.L), config)
    scale = np.max(np.abs(d.codes[:, list(spec.L)]))
    if _is_inactive(norm, scale, config.activity_threshold):
        return IrsResult(None, False, numer, norm)
    value, warnings = _finish_score(1.0 - numer / norm, config, f"L={list(spec.L)}")
    return IrsResult(value, True, numer, norm, warnings)


def domain_shift_score(
    d: LabeledDataset, L, S, config: IrsConfig = IrsConfig()
) -> IrsResult:
    """Robustness of ``Z_L`` to interventions on the domain factors ``S``."""
    S = tuple(sorted(set(int(s) for s in S)))
    if not S:
        raise ValidationError("domain factor set S must be non-empty")
    if len(S) >= d.n_factors and set(S) == set(range(d.n_factors)):
        raise ValidationError("S may not contain every factor; conditioning set would be empty")
    rest = tuple(i for i in range(d.n_factors) if i not in S)
    return irs(d, IndexSpec(L, rest, S), config)


# -- dependency matrix ------------------------------------------------------


def _matrix_general(d: LabeledDataset, config: IrsConfig):
    """Per-feature EMPIDA for every single-factor split, plus normalizers."""
    z = d.codes
    k = d.n_factors

    def one(i):
        spec = IndexSpec((), (i,), tuple(j for j in range(k) if j != i))
        parts = build_partition(d, spec)
        freqs = build_frequencies(d, spec) if config.mode == "weighted" else None
        res = _empida_arrays(z, parts, freqs, config, per_column=True)
        return res.value, res.excluded_cells

    full = IndexSpec((), (), tuple(range(k)))
    parts = build_partition(d, full)
    freqs = build_frequencies(d, full) if config.mode == "weighted" else None
    norm = _empida_arrays(z, parts, freqs, config, per_column=True).value

    if config.workers > 1 and k > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(one, range(k)))
    else:
        results = [one(i) for i in range(k)]
    numer = np.stack([r[0] for r in results], axis=1)
    excluded = sum(r[1] for r in results)
    return numer, norm, excluded


def _fast_path_arrays(d: LabeledDataset):
    """EMPIDA_li (K' x K) and per-sample normalizers for crossed noise-free data."""
    z = d.codes
    numer = np.empty((d.n_features, d.n_factors))
    for i in range(d.n_factors):
        g = d.factors[:, i]
        card = d.factor_cardinalities[i]
        counts = np.bincount(g, minlength=card)
        means = np.stack(
            [np.bincount(g, weights=z[:, c], minlength=card) for c in range(z.shape[1])], axis=1
        ) / counts[:, None]
        dev = np.abs(z - means[g])
        order = np.argsort(g, kind="stable")
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        sup = np.maximum.reduceat(dev[order], starts, axis=0)
        numer[:, i] = sup.mean(axis=0)
    norm = np.max(np.abs(z - z.mean(axis=0)), axis=0)
    return numer, norm


def crossed_fast_path(d: LabeledDataset, feature: int, config: IrsConfig = IrsConfig()):
    """Disentanglement score of one feature on a fully crossed dataset.

    Returns ``(D_l, i_star, empida_row)``; ``D_l`` and ``i_star`` are None
    when the feature is inactive.
    """
    if not is_fully_crossed(d):
        raise ValidationError("crossed fast path requires a fully crossed dataset")
    if not 0 <= feature < d.n_features:
        raise ValidationError(f"feature index {feature} out of range [0, {d.n_features})")
    numer, norm = _fast_path_arrays(d.with_codes(d.codes[:, [feature]]))
    row = numer[0]
    scale = np.max(np.abs(d.codes[:, feature]))
    if _is_inactive(norm[0], scale, config.activity_threshold):
        return None, None, row
    scores = 1.0 - row / norm[0]
    i_star = int(np.argmax(scores))
    return float(scores[i_star]), i_star, row


@dataclass
class FeatureScore:
    feature: int
    D: Optional[float]
    i_star: Optional[int]
    weight: float
    active: bool


@dataclass
class IrsReport:
    matrix: np.ndarray
    per_feature: list
    overall: Optional[float]
    config: dict
    warnings: list
    status: str = "ok"
    factor_names: Optional[Sequence[str]] = None
    feature_names: Optional[Sequence[str]] = None

    @property
    def weights(self) -> np.ndarray:
        return np.array([f.weight for f in self.per_feature])

    def to_dict(self) -> dict:
        matrix = [[None if not math.isfinite(v) else float(v) for v in row] for row in self.matrix]
        out = {
            "metric": "irs",
            "status": self.status,
            "matrix": matrix,
            "per_feature": [
                {
                    "feature": f.feature,
                    "D": f.D,
                    "i_star": f.i_star,
                    "weight": float(f.weight),
                    "active": f.active,
                }
                for f in self.per_feature
            ],
            "overall": self.overall,
            "config": self.config,
            "warnings": list(self.warnings),
        }
        if self.factor_names is not None:
            out["factor_names"] = list(self.factor_names)
        if self.feature_names is not None:
            out["feature_names"] = list(self.feature_names)
        return out


def _use_fast_path(d: LabeledDataset, config: IrsConfig) -> bool:
    if config.fast_path == "off":
        return False
    crossed = is_fully_crossed(d)
    if config.fast_path == "on" and not crossed:
        raise ValidationError("--fast-path on requires a fully crossed dataset")
    return crossed


def dependency_matrix(d: LabeledDataset, config: IrsConfig = IrsConfig()) -> IrsReport:
    """Full K' x K matrix of single-feature, single-factor IRS values."""
    fast = _use_fast_path(d, config)
    if fast:
        numer, norm = _fast_path_arrays(d)
        excluded = 0
    else:
        numer, norm, excluded = _matrix_general(d, config)
    scale = np.max(np.abs(d.codes), axis=0)
    inactive = _is_inactive(norm, scale, config.activity_threshold)
    warnings = []
    if excluded:
        warnings.append(
            f"{excluded} cell(s) below min_cell_size={config.min_cell_size} excluded from the sup"
        )
    matrix = np.full(numer.shape, np.nan)
    per_feature = []
    for l in range(d.n_features):
        if inactive[l]:
            per_feature.append(FeatureScore(l, None, None, 0.0, False))
            continue
        row = 1.0 - numer[l] / norm[l]
        if np.any(row < 0):
            warnings.append(
                f"feature {l}: IRS below 0 for factor(s) {np.flatnonzero(row < 0).tolist()}"
            )
        if config.clamp:
            row = np.clip(row, 0.0, 1.0)
        matrix[l] = row
        i_star = int(np.argmax(row))
        per_feature.append(FeatureScore(l, float(row[i_star]), i_star, float(norm[l]), True))
    active = [f for f in per_feature if f.active]
    if active:
        w = np.array([f.weight for f in active])
        overall = float(np.dot(w, [f.D for f in active]) / w.sum())
        status = "ok"
    else:
        overall = None
        status = "all_inactive"
    echo = config.echo()
    echo["fast_path_used"] = fast
    return IrsReport(
        matrix, per_feature, overall, echo, warnings, status, d.factor_names, d.feature_names
    )


def disentanglement_score(d: LabeledDataset, feature: int, config: IrsConfig = IrsConfig()) -> FeatureScore:
    """``D_l = max_i IRS({l}|{i}, rest)`` with its maximizing factor."""
    if not 0 <= feature < d.n_features:
        raise ValidationError(f"feature index {feature} out of range [0, {d.n_features})")
    report = dependency_matrix(d.with_codes(d.codes[:, [feature]]), config)
    f = report.per_feature[0]
    f.feature = feature
    return f

