"""Nested hash partitions of a dataset by factor realizations.

Rows are grouped first by their realization of the factors ``I`` (outer
cells) and, inside each outer cell, by their realization of ``J`` (inner
cells).  Grouping relabels a mixed-radix key per row, through a lookup
table when the key range is small and hash factorization otherwise, so
building a partition touches each row a fixed number of times.  Keys are reported in lexicographic order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .data_model import LabeledDataset
from .errors import ValidationError

_DENSE_MIN = 1 << 16
_RADIX_LIMIT = 2**62


class RowVisits:
    """Counts row visits made by partition and frequency passes."""

    def __init__(self):
        self.count = 0

    def add(self, n: int) -> None:
        self.count += int(n)


def _as_index_tuple(values, name: str) -> tuple:
    if values is None:
        return ()
    if isinstance(values, (int, np.integer)):
        values = (values,)
    out = tuple(int(v) for v in values)
    if len(set(out)) != len(out):
        raise ValidationError(f"index set {name} contains duplicates: {list(out)}")
    return tuple(sorted(out))


@dataclass(frozen=True)
class IndexSpec:
    """Feature indices ``L`` and disjoint factor index sets ``I`` and ``J``."""

    L: tuple = ()
    I: tuple = ()
    J: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "L", _as_index_tuple(self.L, "L"))
        object.__setattr__(self, "I", _as_index_tuple(self.I, "I"))
        object.__setattr__(self, "J", _as_index_tuple(self.J, "J"))
        overlap = set(self.I) & set(self.J)
        if overlap:
            raise ValidationError(f"I and J must be disjoint; both contain {sorted(overlap)}")

    def validate(self, d: LabeledDataset, need_L: bool = True, need_J: bool = True) -> None:
        if need_L and not self.L:
            raise ValidationError("L must name at least one feature")
        if need_J and not self.J:
            raise ValidationError("J must name at least one factor")
        for idx in self.L:
            if not 0 <= idx < d.n_features:
                raise ValidationError(f"feature index {idx} out of range [0, {d.n_features})")
        for name, group in (("I", self.I), ("J", self.J)):
            for idx in group:
                if not 0 <= idx < d.n_factors:
                    raise ValidationError(
                        f"factor index {idx} in {name} out of range [0, {d.n_factors})"
                    )

    def rest(self, n_factors: int) -> tuple:
        """Factor indices outside I and J."""
        used = set(self.I) | set(self.J)
        return tuple(i for i in range(n_factors) if i not in used)


def group_rows(
    factors: np.ndarray,
    columns: Sequence[int],
    cardinalities: Sequence[int],
    visits: Optional[RowVisits] = None,
):
    """Group rows by their realization of ``columns``.

    Returns ``(ids, keys, counts)``: a dense group id per row, the realization
    tuple of each group (sorted lexicographically) and group sizes.
    """
    n = factors.shape[0]
    columns = list(columns)
    if not columns:
        return np.zeros(n, dtype=np.int64), np.zeros((1, 0), dtype=np.int64), np.array([n])
    cards = [int(cardinalities[c]) for c in columns]
    if math.prod(cards) < _RADIX_LIMIT:
        # mixed radix with the first column most significant: integer order
        # on the key equals lexicographic order on the tuple
        key = np.zeros(n, dtype=np.int64)
        for c, card in zip(columns, cards):
            key *= card
            key += factors[:, c]
        if visits is not None:
            visits.add(n)
        span = math.prod(cards)
        if span <= max(4 * n, _DENSE_MIN):
            # dense key range: relabel through a lookup table, no sort needed
            present = np.bincount(key, minlength=span) > 0
            uniq = np.flatnonzero(present)
            rank = np.cumsum(present) - 1
            ids = rank[key]
        else:
            ids, uniq = pd.factorize(key, sort=True)
        if visits is not None:
            visits.add(n)
        keys = np.empty((uniq.size, len(columns)), dtype=np.int64)
        rem = np.asarray(uniq, dtype=np.int64)
        for pos in range(len(columns) - 1, -1, -1):
            keys[:, pos] = rem % cards[pos]
            rem = rem // cards[pos]
    else:
        keys, ids = np.unique(factors[:, columns], axis=0, return_inverse=True)
        if visits is not None:
            visits.add(n)
    ids = np.asarray(ids, dtype=np.int64).reshape(-1)
    counts = np.bincount(ids, minlength=keys.shape[0])
    if visits is not None:
        visits.add(n)
    return ids, keys, counts


@dataclass(frozen=True, eq=False)
class PartitionTable:
    """Outer cells keyed by ``g_I``, each split into inner cells keyed by ``g_J``.

    Inner cells are numbered globally in (outer key, inner key) order, so the
    inner cells of outer cell ``k`` are ``cell_start[k]:cell_start[k + 1]``.
    """

    spec: IndexSpec
    outer_keys: np.ndarray
    outer_ids: np.ndarray
    outer_sizes: np.ndarray
    cell_keys: np.ndarray
    cell_outer: np.ndarray
    cell_ids: np.ndarray
    cell_sizes: np.ndarray
    cell_start: np.ndarray

    @property
    def n_outer(self) -> int:
        return self.outer_keys.shape[0]

    @property
    def n_cells(self) -> int:
        return self.cell_keys.shape[0]

    @cached_property
    def _rows_by_cell(self) -> np.ndarray:
        return np.argsort(self.cell_ids, kind="stable")

    @cached_property
    def _cell_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.cell_sizes)])

    def inner_count(self, k: int) -> int:
        return int(self.cell_start[k + 1] - self.cell_start[k])

    def cell_index(self, k: int, l: int) -> int:
        if not 0 <= k < self.n_outer or not 0 <= l < self.inner_count(k):
            raise KeyError((k, l))
        return int(self.cell_start[k] + l)

    def cell_rows(self, k: int, l: int) -> np.ndarray:
        """Row indices of inner cell ``l`` of outer cell ``k``, ascending."""
        c = self.cell_index(k, l)
        off = self._cell_offsets
        return self._rows_by_cell[off[c]:off[c + 1]]

    def outer_rows(self, k: int) -> np.ndarray:
        """Row indices of outer cell ``k``, ascending."""
        off = self._cell_offsets
        rows = self._rows_by_cell[off[self.cell_start[k]]:off[self.cell_start[k + 1]]]
        return np.sort(rows)

    def outer_key(self, k: int) -> tuple:
        return tuple(int(v) for v in self.outer_keys[k])

    def inner_key(self, k: int, l: int) -> tuple:
        return tuple(int(v) for v in self.cell_keys[self.cell_index(k, l)])

    def skeleton(self) -> dict:
        """Keys and sizes of every cell, JSON-ready."""
        outer = []
        for k in range(self.n_outer):
            lo, hi = self.cell_start[k], self.cell_start[k + 1]
            outer.append(
                {
                    "key": self.outer_key(k),
                    "size": int(self.outer_sizes[k]),
                    "cells": [
                        {"key": [int(v) for v in self.cell_keys[c]], "size": int(self.cell_sizes[c])}
                        for c in range(lo, hi)
                    ],
                }
            )
        return {"I": list(self.spec.I), "J": list(self.spec.J), "outer": outer}


def build_partition(
    d: LabeledDataset, spec: IndexSpec, visits: Optional[RowVisits] = None
) -> PartitionTable:
    """Partition rows by ``g_I`` and, within each outer cell, by ``g_J``."""
    spec.validate(d, need_L=False, need_J=False)
    outer_ids, outer_keys, outer_sizes = group_rows(
        d.factors, spec.I, d.factor_cardinalities, visits
    )
    joint = list(spec.I) + list(spec.J)
    cell_ids, joint_keys, cell_sizes = group_rows(d.factors, joint, d.factor_cardinalities, visits)
    n_i = len(spec.I)
    # joint keys are lexicographic in (g_I, g_J); the outer id of each cell
    # follows from its g_I prefix
    if n_i:
        prefix = joint_keys[:, :n_i]
        change = np.ones(prefix.shape[0], dtype=bool)
        change[1:] = np.any(prefix[1:] != prefix[:-1], axis=1)
        cell_outer = np.cumsum(change) - 1
    else:
        cell_outer = np.zeros(joint_keys.shape[0], dtype=np.int64)
    cell_start = np.searchsorted(cell_outer, np.arange(outer_keys.shape[0] + 1), side="left")
    return PartitionTable(
        spec=spec,
        outer_keys=outer_keys,
        outer_ids=outer_ids,
        outer_sizes=outer_sizes,
        cell_keys=joint_keys[:, n_i:],
        cell_outer=cell_outer.astype(np.int64),
        cell_ids=cell_ids,
        cell_sizes=cell_sizes,
        cell_start=cell_start.astype(np.int64),
    )


@dataclass(frozen=True, eq=False)
class FrequencyTable:
    """Relative frequencies of full tuples and of complement-marginal tuples.

    Per-row lookups are stored as arrays: ``p_full[i]`` is p̂(g⁽ⁱ⁾),
    ``p_rest[i]`` is p̂ of row i's realization of the factors outside I ∪ J,
    and ``p_not_i[i]`` is p̂ of its realization of the factors outside I
    (the adjustment set for the reference mean under do(G_I)).
    """

    spec: IndexSpec
    n_rows: int
    p_full: np.ndarray
    p_rest: np.ndarray
    p_not_i: np.ndarray
    full_keys: np.ndarray = field(repr=False)
    full_counts: np.ndarray = field(repr=False)
    rest_columns: tuple = ()
    rest_keys: np.ndarray = field(default=None, repr=False)
    rest_counts: np.ndarray = field(default=None, repr=False)

    @cached_property
    def full(self) -> dict:
        """Map from full realization tuple to its relative frequency."""
        return {
            tuple(int(v) for v in key): int(c) / self.n_rows
            for key, c in zip(self.full_keys, self.full_counts)
        }

    @cached_property
    def rest(self) -> dict:
        """Map from complement-marginal tuple to its relative frequency."""
        return {
            tuple(int(v) for v in key): int(c) / self.n_rows
            for key, c in zip(self.rest_keys, self.rest_counts)
        }


def build_frequencies(
    d: LabeledDataset, spec: IndexSpec, visits: Optional[RowVisits] = None
) -> FrequencyTable:
    """Estimate tuple probabilities from relative frequencies in ``d``."""
    spec.validate(d, need_L=False, need_J=False)
    n = d.n_rows
    all_cols = tuple(range(d.n_factors))
    full_ids, full_keys, full_counts = group_rows(d.factors, all_cols, d.factor_cardinalities, visits)
    rest_cols = spec.rest(d.n_factors)
    rest_ids, rest_keys, rest_counts = group_rows(d.factors, rest_cols, d.factor_cardinalities, visits)
    not_i = tuple(c for c in all_cols if c not in set(spec.I))
    if not_i == rest_cols:
        p_not_i = rest_counts[rest_ids] / n
    elif not_i == all_cols:
        p_not_i = full_counts[full_ids] / n
    else:
        ni_ids, _, ni_counts = group_rows(d.factors, not_i, d.factor_cardinalities, visits)
        p_not_i = ni_counts[ni_ids] / n
    return FrequencyTable(
        spec=spec,
        n_rows=n,
        p_full=full_counts[full_ids] / n,
        p_rest=rest_counts[rest_ids] / n,
        p_not_i=p_not_i,
        full_keys=full_keys,
        full_counts=full_counts,
        rest_columns=rest_cols,
        rest_keys=rest_keys,
        rest_counts=rest_counts,
    )
