"""Ground-truth data from disentangled causal processes.

Discrete confounders feed discrete generative factors through explicit
probability tables; factors never cause one another.  A synthetic encoder
maps factor tuples to codes.  Because everything is finite, exact
interventional quantities can be enumerated, which makes this module the
reference oracle for the estimators in :mod:`irs_engine.irs_core`.

Sampling uses NumPy's ``PCG64`` bit generator (``numpy.random.default_rng``),
so datasets are reproducible given a seed.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .data_model import LabeledDataset
from .errors import EnumerationBudgetError, ValidationError
from .irs_core import DISTANCES, IrsConfig
from .partitioner import IndexSpec

ENUMERATION_BUDGET = 10**6
_PROB_TOL = 1e-12


def _prob_vector(values, where: str) -> np.ndarray:
    try:
        p = np.asarray(values, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{where}: not a numeric probability vector") from exc
    if p.ndim != 1 or p.size == 0:
        raise ValidationError(f"{where}: expected a non-empty probability vector")
    if np.any(p < 0) or abs(p.sum() - 1.0) > _PROB_TOL:
        raise ValidationError(f"{where}: entries must be >= 0 and sum to 1 (sum={p.sum():.15g})")
    return p


@dataclass(frozen=True)
class Confounder:
    name: str
    cardinality: int
    prior: tuple


@dataclass(frozen=True)
class FactorMechanism:
    """``p(g_i | parents)``: one table row per joint parent realization."""

    name: str
    cardinality: int
    parents: tuple
    table: np.ndarray = field(compare=False)


@dataclass(frozen=True)
class ScmConfig:
    confounders: tuple
    factors: tuple
    seed: int = 0

    def __post_init__(self):
        for c in self.confounders:
            p = _prob_vector(c.prior, f"confounder {c.name!r} prior")
            if p.size != c.cardinality:
                raise ValidationError(
                    f"confounder {c.name!r}: prior has {p.size} entries, cardinality is {c.cardinality}"
                )
        for f in self.factors:
            rows = math.prod(self.confounders[p].cardinality for p in f.parents)
            table = np.asarray(f.table, dtype=np.float64)
            if table.shape != (rows, f.cardinality):
                raise ValidationError(
                    f"factor {f.name!r}: table shape {table.shape}, expected {(rows, f.cardinality)}"
                )
            for r, row in enumerate(table):
                _prob_vector(row, f"factor {f.name!r} table row {r}")

    @property
    def cardinalities(self) -> tuple:
        return tuple(f.cardinality for f in self.factors)

    @property
    def factor_names(self) -> tuple:
        return tuple(f.name for f in self.factors)

    @classmethod
    def independent(cls, cardinalities: Sequence[int], probs=None, seed: int = 0) -> "ScmConfig":
        """Unconfounded process; factors uniform unless ``probs`` are given."""
        factors = []
        for i, card in enumerate(cardinalities):
            p = np.full(card, 1.0 / card) if probs is None or probs[i] is None else probs[i]
            factors.append(FactorMechanism(f"g_{i}", card, (), np.asarray([p], dtype=np.float64)))
        return cls((), tuple(factors), seed)

    @classmethod
    def from_dict(cls, doc: dict) -> "ScmConfig":
        if not isinstance(doc, dict):
            raise ValidationError("config: top level must be an object")
        conf_docs = doc.get("confounders", [])
        if not isinstance(conf_docs, list):
            raise ValidationError("config.confounders: must be a list")
        confounders = []
        for pos, c in enumerate(conf_docs):
            where = f"config.confounders[{pos}]"
            if not isinstance(c, dict) or "cardinality" not in c:
                raise ValidationError(f"{where}: needs 'cardinality'")
            card = int(c["cardinality"])
            prior = c.get("prior", [1.0 / card] * card)
            confounders.append(Confounder(c.get("name", f"c_{pos}"), card, tuple(prior)))
        conf_names = [c.name for c in confounders]
        fac_docs = doc.get("factors")
        if not isinstance(fac_docs, list) or not fac_docs:
            raise ValidationError("config.factors: must be a non-empty list")
        fac_names = [f.get("name", f"g_{i}") if isinstance(f, dict) else None for i, f in enumerate(fac_docs)]
        factors = []
        for pos, f in enumerate(fac_docs):
            where = f"config.factors[{pos}]"
            if not isinstance(f, dict) or "cardinality" not in f:
                raise ValidationError(f"{where}: needs 'cardinality'")
            card = int(f["cardinality"])
            parents = []
            for p in f.get("parents", []):
                if isinstance(p, str) and p in fac_names:
                    raise ValidationError(
                        f"{where}.parents: factor->factor edge from {p!r} is not allowed"
                    )
                if isinstance(p, str):
                    if p not in conf_names:
                        raise ValidationError(f"{where}.parents: unknown confounder {p!r}")
                    parents.append(conf_names.index(p))
                else:
                    if not 0 <= int(p) < len(confounders):
                        raise ValidationError(f"{where}.parents: confounder index {p} out of range")
                    parents.append(int(p))
            rows = math.prod(confounders[p].cardinality for p in parents)
            table = f.get("table")
            if table is None:
                table = [[1.0 / card] * card] * rows
            table = np.asarray(table, dtype=np.float64)
            if table.ndim == 1:
                table = table[None, :]
            factors.append(FactorMechanism(fac_names[pos], card, tuple(parents), table))
        return cls(tuple(confounders), tuple(factors), int(doc.get("seed", 0)))

    def to_dict(self) -> dict:
        return {
            "confounders": [
                {"name": c.name, "cardinality": c.cardinality, "prior": list(c.prior)}
                for c in self.confounders
            ],
            "factors": [
                {
                    "name": f.name,
                    "cardinality": f.cardinality,
                    "parents": [self.confounders[p].name for p in f.parents],
                    "table": np.asarray(f.table).tolist(),
                }
                for f in self.factors
            ],
            "seed": self.seed,
        }

    def joint_table(self) -> np.ndarray:
        """Exact ``p(g)`` as an array indexed by the factor tuple."""
        cards = self.cardinalities
        if math.prod(cards) * max(1, math.prod(c.cardinality for c in self.confounders)) > ENUMERATION_BUDGET:
            raise EnumerationBudgetError("joint table exceeds the enumeration budget")
        joint = np.zeros(cards)
        conf_cards = [c.cardinality for c in self.confounders]
        for cvals in itertools.product(*[range(c) for c in conf_cards]):
            pc = math.prod(self.confounders[j].prior[v] for j, v in enumerate(cvals))
            if pc == 0:
                continue
            term = np.array(pc)
            for f in self.factors:
                row = _parent_row(f, cvals, conf_cards)
                term = np.multiply.outer(term, np.asarray(f.table)[row])
            joint += term
        return joint


def _parent_row(f: FactorMechanism, cvals, conf_cards) -> int:
    row = 0
    for p in f.parents:
        row = row * conf_cards[p] + cvals[p]
    return row


# -- synthetic encoders -----------------------------------------------------

_MONOTONE = {
    "affine": lambda x, a, b: a * x + b,
    "cube": lambda x, a, b: a * x**3 + b,
    "exp": lambda x, a, b: np.exp(a * x) + b,
    "tanh": lambda x, a, b: np.tanh(a * x) + b,
}


@dataclass(frozen=True)
class SyntheticEncoder:
    """Deterministic map from factor tuples to codes, optionally with noise.

    ``kind`` is one of ``permutation``, ``linear``, ``polynomial``,
    ``constant`` or ``noisy``; see :func:`encoder_from_dict` for the
    parameters each kind takes.
    """

    kind: str
    n_features: int
    params: dict = field(default_factory=dict, compare=False)

    def mean(self, g: np.ndarray) -> np.ndarray:
        g = np.asarray(g, dtype=np.float64)
        n = g.shape[0]
        p = self.params
        if self.kind == "permutation":
            out = np.zeros((n, self.n_features))
            for i, (target, spec) in enumerate(zip(p["assignment"], p["maps"])):
                fn = _MONOTONE[spec.get("kind", "affine")]
                out[:, target] = fn(g[:, i], spec.get("scale", 1.0), spec.get("offset", 0.0))
            return out
        if self.kind == "linear":
            return g @ np.asarray(p["matrix"], dtype=np.float64).T + np.asarray(p.get("offset", 0.0))
        if self.kind == "polynomial":
            out = np.zeros((n, self.n_features))
            for l, terms in enumerate(p["terms"]):
                for t in terms:
                    powers = np.asarray(t["powers"], dtype=np.float64)
                    out[:, l] += t["coef"] * np.prod(g**powers, axis=1)
            return out
        if self.kind == "constant":
            return np.tile(np.asarray(p["values"], dtype=np.float64), (n, 1))
        if self.kind == "noisy":
            return p["base"].mean(g)
        raise ValidationError(f"unknown encoder kind {self.kind!r}")

    def encode(self, g: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        z = self.mean(g)
        if self.kind == "noisy":
            z = z + rng.normal(0.0, self.params["scale"], size=z.shape)
        return z

    def to_dict(self) -> dict:
        if self.kind == "noisy":
            return {"kind": "noisy", "scale": self.params["scale"], "base": self.params["base"].to_dict()}
        return {"kind": self.kind, "n_features": self.n_features, **_jsonable(self.params)}


def _jsonable(params: dict) -> dict:
    return {k: (np.asarray(v).tolist() if isinstance(v, np.ndarray) else v) for k, v in params.items()}


def permutation_encoder(n_factors: int, perm=None, n_features=None, maps=None) -> SyntheticEncoder:
    """Factor ``i`` drives feature ``perm[i]`` through a strictly monotone map."""
    perm = list(range(n_factors)) if perm is None else [int(p) for p in perm]
    n_features = n_features or n_factors
    if len(perm) != n_factors or len(set(perm)) != n_factors:
        raise ValidationError("permutation assignment must be injective over all factors")
    if any(not 0 <= p < n_features for p in perm):
        raise ValidationError("permutation assignment points outside the feature range")
    maps = maps or [{"kind": "affine", "scale": 1.0, "offset": 0.0}] * n_factors
    for m in maps:
        if m.get("kind", "affine") not in _MONOTONE:
            raise ValidationError(f"unknown monotone map {m.get('kind')!r}")
        if m.get("scale", 1.0) == 0:
            raise ValidationError("monotone map scale must be non-zero")
    return SyntheticEncoder("permutation", n_features, {"assignment": perm, "maps": list(maps)})


def linear_encoder(matrix, offset=0.0) -> SyntheticEncoder:
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ValidationError("mixing matrix must be 2-D (K' x K)")
    return SyntheticEncoder("linear", m.shape[0], {"matrix": m, "offset": offset})


def polynomial_encoder(terms) -> SyntheticEncoder:
    """``terms[l]`` lists ``{"coef": c, "powers": [p_0, ..., p_{K-1}]}`` monomials."""
    return SyntheticEncoder("polynomial", len(terms), {"terms": [list(t) for t in terms]})


def constant_encoder(values) -> SyntheticEncoder:
    values = [float(v) for v in values]
    return SyntheticEncoder("constant", len(values), {"values": values})


def noisy_encoder(base: SyntheticEncoder, scale: float) -> SyntheticEncoder:
    if scale < 0:
        raise ValidationError("noise scale must be >= 0")
    return SyntheticEncoder("noisy", base.n_features, {"base": base, "scale": float(scale)})


def encoder_from_dict(doc: dict, n_factors: int) -> SyntheticEncoder:
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ValidationError("encoder: must be an object with a 'kind'")
    kind = doc["kind"]
    try:
        if kind == "permutation":
            return permutation_encoder(
                n_factors, doc.get("assignment"), doc.get("n_features"), doc.get("maps")
            )
        if kind == "linear":
            return linear_encoder(doc["matrix"], doc.get("offset", 0.0))
        if kind == "polynomial":
            return polynomial_encoder(doc["terms"])
        if kind == "constant":
            return constant_encoder(doc["values"])
        if kind == "noisy":
            return noisy_encoder(encoder_from_dict(doc["base"], n_factors), doc["scale"])
    except KeyError as exc:
        raise ValidationError(f"encoder ({kind}): missing field {exc.args[0]!r}") from exc
    raise ValidationError(f"encoder: unknown kind {kind!r}")


# -- sampling ---------------------------------------------------------------


def _draw(rng: np.random.Generator, probs: np.ndarray) -> np.ndarray:
    """One categorical draw per row of ``probs`` by inverse CDF."""
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0])
    idx = (u[:, None] >= cdf).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


def crossed_factors(cardinalities: Sequence[int]) -> np.ndarray:
    """Every factor tuple exactly once, in lexicographic order."""
    grids = np.indices(tuple(cardinalities)).reshape(len(cardinalities), -1)
    return grids.T.astype(np.int64)


def sample_factors(cfg: ScmConfig, n: int, rng: np.random.Generator, return_confounders: bool = False):
    """Draw ``n`` factor tuples; optionally also the hidden confounder draws."""
    conf_cards = [c.cardinality for c in cfg.confounders]
    conf = np.empty((n, len(conf_cards)), dtype=np.int64)
    for j, c in enumerate(cfg.confounders):
        conf[:, j] = _draw(rng, np.broadcast_to(np.asarray(c.prior), (n, c.cardinality)))
    g = np.empty((n, len(cfg.factors)), dtype=np.int64)
    for i, f in enumerate(cfg.factors):
        row = np.zeros(n, dtype=np.int64)
        for p in f.parents:
            row = row * conf_cards[p] + conf[:, p]
        g[:, i] = _draw(rng, np.asarray(f.table)[row])
    return (g, conf) if return_confounders else g


def sample_dataset(
    cfg: ScmConfig,
    enc: SyntheticEncoder,
    n: Optional[int] = None,
    seed: Optional[int] = None,
    crossed: bool = False,
) -> LabeledDataset:
    """Ancestral sampling C -> G -> Z; the confounders are not returned.

    With ``crossed=True`` every factor tuple is emitted exactly once (the
    mechanism tables are ignored) and ``n`` must be None or the tuple count.
    """
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    cards = cfg.cardinalities
    if crossed:
        total = math.prod(cards)
        if n is not None and n != total:
            raise ValidationError(f"crossed mode emits {total} rows; got n={n}")
        g = crossed_factors(cards)
    else:
        if n is None or n < 1:
            raise ValidationError("n must be >= 1")
        g = sample_factors(cfg, n, rng)
    z = enc.encode(g, rng)
    # cardinalities recorded tight; a rare level may be absent from small samples
    present = tuple(int(np.unique(g[:, i]).size) for i in range(g.shape[1]))
    if present != cards:
        remapped = np.empty_like(g)
        for i in range(g.shape[1]):
            _, remapped[:, i] = np.unique(g[:, i], return_inverse=True)
        g = remapped
    return LabeledDataset(
        z, g, present, cfg.factor_names, tuple(f"z_{l}" for l in range(z.shape[1]))
    )


def config_hash(doc: dict) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def load_synth_config(path) -> tuple:
    """Read a JSON document holding an SCM, an encoder and a seed."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(
            f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    cfg = ScmConfig.from_dict(doc)
    if "encoder" not in doc:
        raise ValidationError(f"{path}: missing field 'encoder'")
    enc = encoder_from_dict(doc["encoder"], len(cfg.factors))
    return cfg, enc, doc


# -- exact and brute-force oracles --------------------------------------------


def _marginal(joint: np.ndarray, keep: Sequence[int]) -> np.ndarray:
    drop = tuple(a for a in range(joint.ndim) if a not in set(keep))
    return joint.sum(axis=drop) if drop else joint


def interventional_distribution(cfg: ScmConfig, do: dict) -> np.ndarray:
    """``p(g | do(G_S = s))`` over all factor tuples.

    With no factor->factor edges the untouched factors keep their
    observational joint marginal.
    """
    joint = cfg.joint_table()
    rest = [a for a in range(joint.ndim) if a not in do]
    out = np.zeros(joint.shape)
    marg = _marginal(joint, rest)
    index = [slice(None)] * joint.ndim
    for a, v in do.items():
        index[a] = v
    out[tuple(index)] = marg
    return out


def conditional_distribution(cfg: ScmConfig, given: dict) -> np.ndarray:
    """``p(g | G_S = s)`` over all factor tuples."""
    joint = cfg.joint_table()
    mask = np.zeros(joint.shape, dtype=bool)
    index = [slice(None)] * joint.ndim
    for a, v in given.items():
        index[a] = v
    mask[tuple(index)] = True
    out = np.where(mask, joint, 0.0)
    total = out.sum()
    if total <= 0:
        raise ValidationError(f"conditioning event {given} has probability 0")
    return out / total


def _all_means(enc: SyntheticEncoder, cards) -> np.ndarray:
    tuples = crossed_factors(cards)
    return enc.mean(tuples).reshape(tuple(cards) + (enc.n_features,))


def _expect(dist: np.ndarray, means: np.ndarray) -> np.ndarray:
    """Mean of ``means`` under ``dist``, shifted by a support value so that a
    constant code comes back exactly rather than scaled by a rounded total."""
    p = dist.reshape(-1)
    m = means.reshape(p.size, -1)
    support = p > 0
    p, m = p[support], m[support]
    base = m[0]
    return base + (p @ (m - base)) / p.sum()


def analytic_interventional_mean(cfg: ScmConfig, enc: SyntheticEncoder, do: dict) -> np.ndarray:
    """Exact ``E[Z | do(G_S = s)]`` by the adjustment formula."""
    return _expect(interventional_distribution(cfg, do), _all_means(enc, cfg.cardinalities))


def analytic_conditional_mean(cfg: ScmConfig, enc: SyntheticEncoder, given: dict) -> np.ndarray:
    return _expect(conditional_distribution(cfg, given), _all_means(enc, cfg.cardinalities))


def _dist(a, b, distance) -> float:
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b), ord=DISTANCES[distance]))


def analytic_empida(
    cfg: ScmConfig, enc: SyntheticEncoder, spec: IndexSpec, distance: str = "l2"
) -> float:
    """Exact EMPIDA of the process; the sup covers ``g_J`` with ``p(g_I, g_J) > 0``."""
    cards = cfg.cardinalities
    if math.prod(cards) > ENUMERATION_BUDGET:
        raise EnumerationBudgetError("factor space exceeds the enumeration budget")
    joint = cfg.joint_table()
    L = list(spec.L)
    p_i = _marginal(joint, spec.I)
    p_ij = _marginal(joint, tuple(sorted(spec.I + spec.J)))
    ij_order = sorted(spec.I + spec.J)
    total = 0.0
    for gi in itertools.product(*[range(cards[a]) for a in spec.I]):
        w = float(p_i[gi]) if spec.I else 1.0
        if w <= 0:
            continue
        do_i = dict(zip(spec.I, gi))
        ref = analytic_interventional_mean(cfg, enc, do_i)[L]
        worst = 0.0
        for gj in itertools.product(*[range(cards[a]) for a in spec.J]):
            do = {**do_i, **dict(zip(spec.J, gj))}
            if p_ij[tuple(do[a] for a in ij_order)] <= 0:
                continue
            worst = max(worst, _dist(ref, analytic_interventional_mean(cfg, enc, do)[L], distance))
        total += w * worst
    return total


def _row_frequency(factors: np.ndarray, columns: Sequence[int]) -> np.ndarray:
    """For each row, the fraction of rows sharing its values on ``columns``."""
    n = factors.shape[0]
    if not columns:
        return np.ones(n)
    sub = factors[:, list(columns)]
    out = np.empty(n)
    for r in range(n):
        out[r] = np.count_nonzero(np.all(sub == sub[r], axis=1)) / n
    return out


def naive_empida(
    d: LabeledDataset,
    spec: IndexSpec,
    config: IrsConfig = IrsConfig(),
    budget: int = ENUMERATION_BUDGET,
) -> float:
    """EMPIDA by nested loops over every realization tuple, no hashing.

    Mirrors the estimator's conventions (weight mode, self-normalization,
    minimum cell size) so the two can be compared to rounding error.
    """
    spec.validate(d)
    cards = d.factor_cardinalities
    n_tuples = math.prod(cards[a] for a in spec.I) * math.prod(cards[a] for a in spec.J)
    if n_tuples > budget:
        raise EnumerationBudgetError(f"{n_tuples} tuples exceed the budget of {budget}")
    n = d.n_rows
    g = d.factors
    z = d.codes[:, list(spec.L)]
    all_cols = list(range(d.n_factors))
    if config.mode == "weighted":
        p_full = _row_frequency(g, all_cols)
        w_ref = _row_frequency(g, [a for a in all_cols if a not in spec.I]) / (n * p_full)
        w_int = _row_frequency(g, list(spec.rest(d.n_factors))) / (n * p_full)
    else:
        w_ref = w_int = np.ones(n)

    def mean(mask, w):
        ww = w[mask]
        if config.mode == "conditional" or config.normalize_weights:
            ww = ww / ww.sum()
        return ww @ z[mask]

    total = 0.0
    for gi in itertools.product(*[range(cards[a]) for a in spec.I]):
        in_i = np.ones(n, dtype=bool)
        for a, v in zip(spec.I, gi):
            in_i &= g[:, a] == v
        size_i = int(in_i.sum())
        if size_i == 0:
            continue
        ref = mean(in_i, w_ref)
        worst = 0.0
        for gj in itertools.product(*[range(cards[a]) for a in spec.J]):
            cell = in_i.copy()
            for a, v in zip(spec.J, gj):
                cell &= g[:, a] == v
            size = int(cell.sum())
            if size == 0 or size < config.min_cell_size:
                continue
            worst = max(worst, _dist(ref, mean(cell, w_int), config.distance))
        total += size_i / n * worst
    return total


def naive_irs(d: LabeledDataset, spec: IndexSpec, config: IrsConfig = IrsConfig()) -> float:
    numer = naive_empida(d, spec, config)
    norm = naive_empida(d, IndexSpec(spec.L, (), tuple(range(d.n_factors))), config)
    return 1.0 - numer / norm


def oracle_empida(source, spec: IndexSpec, config: IrsConfig = IrsConfig(), encoder=None) -> float:
    """Brute-force EMPIDA.

    ``source`` is either a :class:`LabeledDataset` (naive nested-loop
    estimate) or a :class:`ScmConfig` with ``encoder`` (exact value by
    enumeration of the adjustment formula).
    """
    if isinstance(source, LabeledDataset):
        return naive_empida(source, spec, config)
    if isinstance(source, ScmConfig):
        if encoder is None:
            raise ValidationError("analytic oracle needs an encoder")
        return analytic_empida(source, encoder, spec, config.distance)
    raise TypeError(f"unsupported oracle source {type(source).__name__}")
