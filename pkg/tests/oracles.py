"""Independent reference computations used to freeze expected values.

Plain Python loops and dictionaries only; nothing here calls the engine.
"""

import itertools
import math
from collections import defaultdict


def crossed_disentanglement(factors, column):
    """Brute-force (D, i_star, empida_row) on a crossed, noise-free dataset."""
    n = len(column)
    k = len(factors[0])
    global_mean = sum(column) / n
    normalizer = max(abs(global_mean - z) for z in column)
    row = []
    for i in range(k):
        by_level = defaultdict(list)
        for g, z in zip(factors, column):
            by_level[g[i]].append(z)
        sups = []
        for level in sorted(by_level):
            vals = by_level[level]
            m = sum(vals) / len(vals)
            sups.append(max(abs(m - v) for v in vals))
        row.append(sum(sups) / len(sups))
    scores = [1 - e / normalizer for e in row]
    best = max(range(k), key=lambda i: (scores[i], -i))
    return scores[best], best, row


def cell_irs(factors, column, i):
    """IRS({l}|{i}, rest) by enumerating full-tuple cells (conditional means)."""
    n = len(column)
    cells = defaultdict(list)
    for g, z in zip(factors, column):
        cells[tuple(g)].append(z)
    cell_mean = {key: sum(v) / len(v) for key, v in cells.items()}
    global_mean = sum(column) / n
    normalizer = max(abs(global_mean - m) for m in cell_mean.values())
    outer = defaultdict(list)
    for g, z in zip(factors, column):
        outer[g[i]].append((tuple(g), z))
    total = 0.0
    for level, rows in outer.items():
        ref = sum(z for _, z in rows) / len(rows)
        worst = max(abs(ref - cell_mean[key]) for key, _ in rows)
        total += len(rows) / n * worst
    return 1 - total / normalizer


def histogram_mi(x_labels, y_labels):
    """MI in nats from an explicit joint histogram of two label sequences."""
    n = len(x_labels)
    joint = defaultdict(int)
    px = defaultdict(int)
    py = defaultdict(int)
    for a, b in zip(x_labels, y_labels):
        joint[(a, b)] += 1
        px[a] += 1
        py[b] += 1
    mi = 0.0
    for (a, b), c in joint.items():
        p = c / n
        mi += p * math.log(p / ((px[a] / n) * (py[b] / n)))
    return mi


def equal_width_labels(values, buckets):
    lo, hi = min(values), max(values)
    if hi == lo:
        return [0] * len(values)
    width = (hi - lo) / buckets
    out = []
    for v in values:
        b = 0
        # lower bucket on ties
        while b < buckets - 1 and v > lo + (b + 1) * width:
            b += 1
        out.append(b)
    return out


def group_by(rows, columns):
    """Map from realization tuple on ``columns`` to the list of row positions."""
    out = defaultdict(list)
    for r, g in enumerate(rows):
        out[tuple(g[c] for c in columns)].append(r)
    return dict(out)


def crossed(cards):
    return [list(t) for t in itertools.product(*[range(c) for c in cards])]
