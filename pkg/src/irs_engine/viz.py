"""Curve data for visualizing interventional effects on single features.

For feature ``l`` with captured factor ``i*``, each other factor ``j`` gets
one curve per realization of ``G_i*``: the interventional mean of ``Z_l``
as a function of the value forced onto ``G_j``.  A robust feature shows
horizontal curves.  Rendering is left to external tools.
"""

from __future__ import annotations

import numpy as np

from .data_model import LabeledDataset
from .errors import ValidationError
from .irs_core import IrsConfig, disentanglement_score, empida_detail
from .partitioner import IndexSpec, group_rows


def _factor_label(d: LabeledDataset, i: int):
    return d.factor_names[i] if d.factor_names is not None else i


def feature_curves(d: LabeledDataset, feature: int, config: IrsConfig = IrsConfig()) -> dict:
    if not 0 <= feature < d.n_features:
        raise ValidationError(f"feature index {feature} out of range [0, {d.n_features})")
    score = disentanglement_score(d, feature, config)
    if not score.active:
        return {"feature": feature, "status": "inactive"}
    i_star = score.i_star

    ids, keys, counts = group_rows(d.factors, (i_star,), d.factor_cardinalities)
    z = d.codes[:, feature]
    mean = np.bincount(ids, weights=z) / counts
    sq = np.bincount(ids, weights=(z - mean[ids]) ** 2) / counts
    captured = {
        "factor": i_star,
        "name": _factor_label(d, i_star),
        "g": keys[:, 0].tolist(),
        "mean": mean.tolist(),
        "std": np.sqrt(sq).tolist(),
        "band": "per-cell standard deviation",
    }

    columns = []
    for j in range(d.n_factors):
        if j == i_star:
            continue
        res = empida_detail(d, IndexSpec((feature,), (i_star,), (j,)), config)
        parts = res.partition
        curves = []
        flatness = 0.0
        for k in range(parts.n_outer):
            lo, hi = parts.cell_start[k], parts.cell_start[k + 1]
            values = res.cell_means[lo:hi, 0]
            curves.append(
                {
                    "g_captured": int(parts.outer_keys[k, 0]),
                    "g_intervened": parts.cell_keys[lo:hi, 0].tolist(),
                    "mean": values.tolist(),
                }
            )
            flatness = max(flatness, float(values.max() - values.min()))
        columns.append(
            {"factor": j, "name": _factor_label(d, j), "curves": curves, "max_deviation": flatness}
        )
    return {
        "feature": feature,
        "status": "ok",
        "D": score.D,
        "i_star": i_star,
        "captured": captured,
        "columns": columns,
    }


def viz_curves(d: LabeledDataset, features=None, config: IrsConfig = IrsConfig()) -> dict:
    features = range(d.n_features) if features is None else features
    return {
        "features": [feature_curves(d, int(l), config) for l in features],
        "config": config.echo(),
    }
