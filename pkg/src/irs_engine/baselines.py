"""Discrete mutual-information baseline.

Each latent column is cut into equal-width buckets over its observed range
and the mutual information (in nats) with every factor is computed from the
joint histogram.  A feature's MI-disentanglement compares its MI row with the
idealized row that keeps only the largest entry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data_model import LabeledDataset
from .errors import ValidationError

DEFAULT_BUCKETS = 20
NORMALIZATION = "1 - sum_{i != argmax} R_li^2 / sum_i R_li^2"


def bucketize(column: np.ndarray, buckets: int) -> np.ndarray:
    """Equal-width bucket index per value; values on an edge go to the lower bucket."""
    lo, hi = float(column.min()), float(column.max())
    if hi == lo:
        return np.zeros(column.shape[0], dtype=np.int64)
    inner = np.linspace(lo, hi, buckets + 1)[1:-1]
    return np.searchsorted(inner, column, side="left").astype(np.int64)


def contingency(a: np.ndarray, b: np.ndarray, n_a: int, n_b: int) -> np.ndarray:
    return np.bincount(a * n_b + b, minlength=n_a * n_b).reshape(n_a, n_b)


def discrete_mi(table: np.ndarray) -> float:
    """Mutual information in nats of the joint count table ``table``."""
    table = np.asarray(table, dtype=np.float64)
    n = table.sum()
    if n <= 0:
        return 0.0
    p = table / n
    pa = p.sum(axis=1, keepdims=True)
    pb = p.sum(axis=0, keepdims=True)
    nz = p > 0
    mi = float(np.sum(p[nz] * (np.log(p[nz]) - np.log((pa * pb)[nz]))))
    return max(mi, 0.0)


def mi_matrix(d: LabeledDataset, buckets: int = DEFAULT_BUCKETS) -> np.ndarray:
    """K' x K matrix of MI(Z_l; G_i) in nats."""
    if buckets < 2:
        raise ValidationError(f"buckets must be >= 2, got {buckets}")
    out = np.zeros((d.n_features, d.n_factors))
    for l in range(d.n_features):
        zb = bucketize(d.codes[:, l], buckets)
        for i in range(d.n_factors):
            out[l, i] = discrete_mi(
                contingency(zb, d.factors[:, i], buckets, d.factor_cardinalities[i])
            )
    return out


def mi_disentanglement(matrix: np.ndarray) -> tuple[np.ndarray, float]:
    """Per-row score against the one-hot idealization, and their plain mean."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    sq = matrix**2
    total = sq.sum(axis=1)
    top = sq.max(axis=1)
    scores = np.zeros(matrix.shape[0])
    live = total > 0
    scores[live] = 1.0 - (total[live] - top[live]) / total[live]
    return scores, float(scores.mean())


@dataclass
class MiReport:
    matrix: np.ndarray
    scores: np.ndarray
    average: float
    buckets: int
    factor_names: tuple = None
    feature_names: tuple = None

    def to_dict(self) -> dict:
        out = {
            "metric": "mi",
            "status": "ok",
            "matrix": self.matrix.tolist(),
            "per_feature": [
                {"feature": l, "D": float(s), "i_star": int(np.argmax(self.matrix[l]))}
                for l, s in enumerate(self.scores)
            ],
            "overall": self.average,
            "config": {"buckets": self.buckets, "units": "nats", "normalization": NORMALIZATION},
            "warnings": [],
        }
        if self.factor_names is not None:
            out["factor_names"] = list(self.factor_names)
        if self.feature_names is not None:
            out["feature_names"] = list(self.feature_names)
        return out


def mi_report(d: LabeledDataset, buckets: int = DEFAULT_BUCKETS) -> MiReport:
    matrix = mi_matrix(d, buckets)
    scores, avg = mi_disentanglement(matrix)
    return MiReport(matrix, scores, avg, buckets, d.factor_names, d.feature_names)
