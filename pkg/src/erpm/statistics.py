"""Sufficient statistics of partition models.

Every statistic is a sum over blocks, ``s(p) = sum_G f(G)``. Three evaluation
routes exist and are tested against each other:

* :func:`evaluate` applies the block function to each block of one partition;
* :func:`evaluate_batch` vectorizes over many restricted-growth strings (used
  by exact enumeration);
* the MCMC kernels compile the specs with :func:`compile_specs` and update
  statistics incrementally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .partition import Partition

__all__ = [
    "StatisticSpec",
    "CovariateStore",
    "AttributeColumn",
    "evaluate",
    "evaluate_batch",
    "delta_evaluate",
    "observed_statistics",
    "block_value",
    "size_function",
    "is_size_only",
    "compile_specs",
    "UnknownCovariateError",
]

SIZE_KINDS = ("num_groups", "num_groups_of_size", "sum_log_factorial_sizes", "sum_squared_sizes")
DYADIC_KINDS = ("dyadic_homophily", "dyadic_covariate", "dyadic_sociability")
GROUP_KINDS = ("group_homophily", "group_sociability")
KINDS = SIZE_KINDS + DYADIC_KINDS + GROUP_KINDS

SIMILARITIES = ("match", "absdiff", "negabsdiff")
FORMS = ("all_same", "range", "distinct_count", "variance")


class UnknownCovariateError(KeyError):
    pass


@dataclass(frozen=True)
class StatisticSpec:
    """One sufficient statistic.

    ``kind`` is one of :data:`KINDS`. Options: ``k`` for ``num_groups_of_size``;
    ``attribute`` for homophily and sociability kinds; ``similarity`` for
    ``dyadic_homophily``; ``form`` for ``group_homophily``; ``covariate`` for
    ``dyadic_covariate``. ``normalized`` divides dyadic block sums by the
    number of dyads in the block and group block values by the block size.
    """

    kind: str
    k: int | None = None
    attribute: str | None = None
    similarity: str | None = None
    form: str | None = None
    covariate: str | None = None
    normalized: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown statistic kind {self.kind!r}")
        if self.kind == "num_groups_of_size" and (self.k is None or self.k < 1):
            raise ValueError("num_groups_of_size needs k >= 1")
        if self.kind in ("dyadic_homophily", "group_homophily", "dyadic_sociability",
                         "group_sociability") and not self.attribute:
            raise ValueError(f"{self.kind} needs an attribute")
        if self.kind == "dyadic_homophily" and self.similarity not in SIMILARITIES:
            raise ValueError(f"similarity must be one of {SIMILARITIES}")
        if self.kind == "group_homophily" and self.form not in FORMS:
            raise ValueError(f"form must be one of {FORMS}")
        if self.kind == "dyadic_covariate" and not self.covariate:
            raise ValueError("dyadic_covariate needs a covariate name")
        if self.normalized and self.kind in SIZE_KINDS:
            raise ValueError("normalization only applies to covariate statistics")

    @property
    def name(self) -> str:
        if self.kind == "num_groups_of_size":
            label = f"num_groups_of_size({self.k})"
        elif self.kind == "dyadic_homophily":
            label = f"dyadic_homophily({self.attribute}, {self.similarity})"
        elif self.kind == "group_homophily":
            label = f"group_homophily({self.attribute}, {self.form})"
        elif self.kind == "dyadic_covariate":
            label = f"dyadic_covariate({self.covariate})"
        elif self.kind in ("dyadic_sociability", "group_sociability"):
            label = f"{self.kind}({self.attribute})"
        else:
            label = self.kind
        return label + ("/normalized" if self.normalized else "")

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        for key in ("k", "attribute", "similarity", "form", "covariate"):
            v = getattr(self, key)
            if v is not None:
                d[key] = v
        if self.normalized:
            d["normalized"] = True
        return d


@dataclass
class AttributeColumn:
    """An actor attribute; numeric view (NaN = missing) and categorical codes (-1 = missing)."""

    values: np.ndarray
    codes: np.ndarray
    categories: list = field(default_factory=list)

    @classmethod
    def from_raw(cls, raw: Sequence) -> "AttributeColumn":
        vals = []
        keys = []
        for x in raw:
            missing = x is None or (isinstance(x, float) and math.isnan(x)) or (
                isinstance(x, str) and x.strip() in ("", "NA", "nan", "NaN")
            )
            if missing:
                vals.append(math.nan)
                keys.append(None)
                continue
            if isinstance(x, str):
                x = x.strip()
                try:
                    num = float(x)
                except ValueError:
                    num = math.nan
            else:
                num = float(x)
            vals.append(num)
            keys.append(num if not math.isnan(num) else x)
        cats = []
        index = {}
        codes = []
        for key in keys:
            if key is None:
                codes.append(-1)
                continue
            if key not in index:
                index[key] = len(cats)
                cats.append(key)
            codes.append(index[key])
        return cls(np.asarray(vals, dtype=float), np.asarray(codes, dtype=np.int64), cats)

    @property
    def is_numeric(self) -> bool:
        return bool(np.all(np.isnan(self.values) == (self.codes < 0)))


class CovariateStore:
    """Actor attributes and symmetric dyadic covariate matrices for ``n`` actors."""

    def __init__(self, n: int, attributes: Mapping[str, Sequence] | None = None,
                 dyadic: Mapping[str, np.ndarray] | None = None):
        self.n = int(n)
        self.attributes: dict[str, AttributeColumn] = {}
        self.dyadic: dict[str, np.ndarray] = {}
        for name, col in (attributes or {}).items():
            self.add_attribute(name, col)
        for name, mat in (dyadic or {}).items():
            self.add_dyadic(name, mat)

    def add_attribute(self, name: str, raw) -> None:
        col = raw if isinstance(raw, AttributeColumn) else AttributeColumn.from_raw(list(raw))
        if len(col.values) != self.n:
            raise ValueError(f"attribute {name!r} has length {len(col.values)}, expected {self.n}")
        self.attributes[name] = col

    def add_dyadic(self, name: str, mat) -> None:
        mat = np.asarray(mat, dtype=float)
        if mat.shape != (self.n, self.n):
            raise ValueError(f"dyadic covariate {name!r} has shape {mat.shape}")
        if not np.allclose(mat, mat.T):
            raise ValueError(f"dyadic covariate {name!r} is not symmetric")
        mat = mat.copy()
        np.fill_diagonal(mat, 0.0)
        self.dyadic[name] = mat

    def attribute(self, name: str) -> AttributeColumn:
        try:
            return self.attributes[name]
        except KeyError:
            raise UnknownCovariateError(f"unknown attribute {name!r}") from None

    def covariate(self, name: str) -> np.ndarray:
        try:
            return self.dyadic[name]
        except KeyError:
            raise UnknownCovariateError(f"unknown dyadic covariate {name!r}") from None

    def validate(self, specs: Sequence[StatisticSpec]) -> None:
        """Raise if a spec references missing or unusable covariates."""
        for spec in specs:
            if spec.kind == "dyadic_covariate":
                self.covariate(spec.covariate)
            elif spec.attribute is not None:
                col = self.attribute(spec.attribute)
                numeric_needed = (
                    spec.kind in ("dyadic_sociability", "group_sociability")
                    or (spec.kind == "dyadic_homophily" and spec.similarity != "match")
                    or (spec.kind == "group_homophily" and spec.form in ("range", "variance"))
                )
                if numeric_needed and not col.is_numeric:
                    raise ValueError(f"{spec.name} needs a numeric attribute")

    def subset(self, actors: Sequence[int]) -> "CovariateStore":
        idx = np.asarray(actors, dtype=int)
        out = CovariateStore(len(idx))
        for name, col in self.attributes.items():
            out.attributes[name] = AttributeColumn(col.values[idx], col.codes[idx], col.categories)
        for name, mat in self.dyadic.items():
            out.dyadic[name] = mat[np.ix_(idx, idx)]
        return out


EMPTY = CovariateStore(0)


def is_size_only(specs: Sequence[StatisticSpec]) -> bool:
    return all(s.kind in SIZE_KINDS for s in specs)


def size_function(spec: StatisticSpec):
    """``f`` with ``s(p) = sum_G f(#G)`` for size-only statistics."""
    if spec.kind == "num_groups":
        return lambda m: 1.0 if m > 0 else 0.0
    if spec.kind == "num_groups_of_size":
        k = spec.k
        return lambda m: 1.0 if m == k else 0.0
    if spec.kind == "sum_log_factorial_sizes":
        return lambda m: math.lgamma(m) if m > 0 else 0.0
    if spec.kind == "sum_squared_sizes":
        return lambda m: float(m * m)
    raise ValueError(f"{spec.name} is not a function of block sizes")


def _dyad_weight(spec: StatisticSpec, cov: CovariateStore, i: int, j: int) -> float:
    if spec.kind == "dyadic_covariate":
        return float(cov.covariate(spec.covariate)[i, j])
    col = cov.attribute(spec.attribute)
    if spec.kind == "dyadic_sociability":
        # (#G-1) * sum_i a_i == sum over unordered dyads of (a_i + a_j)
        a, b = col.values[i], col.values[j]
        return (0.0 if math.isnan(a) else a) + (0.0 if math.isnan(b) else b)
    if spec.similarity == "match":
        ci, cj = col.codes[i], col.codes[j]
        return 1.0 if ci >= 0 and ci == cj else 0.0
    a, b = col.values[i], col.values[j]
    if math.isnan(a) or math.isnan(b):
        return 0.0
    d = abs(a - b)
    return d if spec.similarity == "absdiff" else -d


def block_value(spec: StatisticSpec, block: Sequence[int], cov: CovariateStore) -> float:
    """Contribution ``f(G)`` of one block."""
    m = len(block)
    if spec.kind in SIZE_KINDS:
        return size_function(spec)(m)
    if spec.kind in DYADIC_KINDS:
        total = 0.0
        for a in range(m):
            for b in range(a + 1, m):
                total += _dyad_weight(spec, cov, block[a], block[b])
        if spec.normalized:
            return total / (m * (m - 1) / 2) if m > 1 else 0.0
        return total
    col = cov.attribute(spec.attribute)
    if spec.kind == "group_sociability":
        vals = [col.values[i] for i in block if not math.isnan(col.values[i])]
        value = m * (sum(vals) / len(vals)) if vals else 0.0
    elif spec.form in ("all_same", "distinct_count"):
        distinct = len({int(col.codes[i]) for i in block})
        value = float(distinct == 1) if spec.form == "all_same" else float(distinct)
    else:
        vals = [float(col.values[i]) for i in block if not math.isnan(col.values[i])]
        if not vals:
            value = 0.0
        elif spec.form == "range":
            value = max(vals) - min(vals)
        else:
            mu = sum(vals) / len(vals)
            value = sum((v - mu) ** 2 for v in vals) / len(vals)
    return value / m if spec.normalized else value


def evaluate(p: Partition, specs: Sequence[StatisticSpec], cov: CovariateStore | None = None) -> np.ndarray:
    cov = _check_cov(p.n, specs, cov)
    blocks = p.blocks()
    return np.array([sum(block_value(s, b, cov) for b in blocks) for s in specs], dtype=float)


def observed_statistics(p_obs: Partition, specs: Sequence[StatisticSpec],
                        cov: CovariateStore | None = None) -> np.ndarray:
    return evaluate(p_obs, specs, cov)


def delta_evaluate(p: Partition, p_new: Partition, specs: Sequence[StatisticSpec],
                   cov: CovariateStore | None, cached: np.ndarray) -> np.ndarray:
    """Statistics of ``p_new`` from those of ``p``, re-summing only changed blocks."""
    cov = _check_cov(p.n, specs, cov)
    old = set(p.blocks())
    new = set(p_new.blocks())
    gone, added = old - new, new - old
    out = np.array(cached, dtype=float, copy=True)
    for k, spec in enumerate(specs):
        out[k] += sum(block_value(spec, b, cov) for b in added) - sum(
            block_value(spec, b, cov) for b in gone
        )
    return out


def _check_cov(n: int, specs, cov):
    if cov is None:
        cov = CovariateStore(n)
    elif cov.n != n:
        raise ValueError(f"covariates are for {cov.n} actors, partition has {n}")
    cov.validate(specs)
    return cov


# -- vectorized evaluation over many partitions -----------------------------------


def _dyad_matrix(spec: StatisticSpec, cov: CovariateStore) -> np.ndarray:
    n = cov.n
    if spec.kind == "dyadic_covariate":
        w = cov.covariate(spec.covariate).copy()
    else:
        col = cov.attribute(spec.attribute)
        if spec.kind == "dyadic_sociability":
            a = np.nan_to_num(col.values, nan=0.0)
            w = a[:, None] + a[None, :]
        elif spec.similarity == "match":
            c = col.codes
            w = ((c[:, None] == c[None, :]) & (c[:, None] >= 0)).astype(float)
        else:
            v = col.values
            d = np.abs(v[:, None] - v[None, :])
            w = np.where(np.isnan(d), 0.0, d)
            if spec.similarity == "negabsdiff":
                w = -w
    w = np.array(w, dtype=float)
    np.fill_diagonal(w, 0.0)
    assert w.shape == (n, n)
    return w


def evaluate_batch(rgs: np.ndarray, specs: Sequence[StatisticSpec],
                   cov: CovariateStore | None = None, chunk: int = 20000) -> np.ndarray:
    """Statistics for each row of a ``(count, n)`` array of restricted-growth strings."""
    rgs = np.atleast_2d(np.asarray(rgs))
    total, n = rgs.shape
    cov = _check_cov(n, specs, cov)
    out = np.empty((total, len(specs)))
    iu, ju = np.triu_indices(n, 1)
    dyads = {id(s): _dyad_matrix(s, cov)[iu, ju] for s in specs if s.kind in DYADIC_KINDS}
    for start in range(0, total, chunk):
        block = rgs[start:start + chunk]
        onehot = block[:, :, None] == np.arange(n)[None, None, :]  # (B, actor, label)
        sizes = onehot.sum(axis=1)  # (B, label)
        actor_size = np.take_along_axis(sizes, block, axis=1)  # size of own block
        same = block[:, iu] == block[:, ju]
        pair_size = actor_size[:, iu]
        for k, spec in enumerate(specs):
            if spec.kind in SIZE_KINDS:
                f = size_function(spec)
                table = np.array([f(m) for m in range(n + 1)])
                out[start:start + len(block), k] = table[sizes].sum(axis=1)
            elif spec.kind in DYADIC_KINDS:
                contrib = same * dyads[id(spec)][None, :]
                if spec.normalized:
                    contrib = contrib / np.maximum(pair_size * (pair_size - 1) / 2, 1)
                out[start:start + len(block), k] = contrib.sum(axis=1)
            else:
                out[start:start + len(block), k] = _group_batch(spec, cov, onehot, sizes)
    return out


def _group_batch(spec, cov, onehot, sizes):
    col = cov.attribute(spec.attribute)
    present = sizes > 0
    if spec.kind == "group_homophily" and spec.form in ("all_same", "distinct_count"):
        ncat = max(len(col.categories), 0)
        distinct = np.zeros(sizes.shape)
        for c in range(-1, ncat):
            member = col.codes == c
            if not member.any():
                continue
            distinct += onehot[:, member, :].any(axis=1)
        value = (distinct == 1).astype(float) if spec.form == "all_same" else distinct
    else:
        ok = ~np.isnan(col.values)
        vals = np.where(ok, col.values, 0.0)
        mask = onehot & ok[None, :, None]
        cnt = mask.sum(axis=1)
        ssum = np.einsum("bal,a->bl", mask, vals)
        mean = np.divide(ssum, cnt, out=np.zeros_like(ssum), where=cnt > 0)
        if spec.kind == "group_sociability":
            value = sizes * mean
        elif spec.form == "range":
            hi = np.where(mask, col.values[None, :, None], -np.inf).max(axis=1)
            lo = np.where(mask, col.values[None, :, None], np.inf).min(axis=1)
            value = np.where(cnt > 0, hi - lo, 0.0)
        else:
            dev = np.where(mask, (vals[None, :, None] - mean[:, None, :]) ** 2, 0.0).sum(axis=1)
            value = np.divide(dev, cnt, out=np.zeros_like(dev), where=cnt > 0)
    value = np.where(present, value, 0.0)
    if spec.normalized:
        value = np.divide(value, sizes, out=np.zeros_like(value, dtype=float), where=present)
    return value.sum(axis=1)


# -- kernel encoding -----------------------------------------------------------------

K_SIZE, K_DYADIC, K_ALLSAME, K_DISTINCT, K_RANGE, K_VARIANCE, K_GSOC = range(7)


@dataclass
class CompiledSpecs:
    """Flat arrays describing the statistics for the MCMC kernels."""

    kind: np.ndarray          # (K,) int64 kernel kind code
    normalized: np.ndarray    # (K,) int64 flag
    size_table: np.ndarray    # (K, n+1) f(size) for size statistics
    dyad: np.ndarray          # (K, n, n) pair weights for dyadic statistics
    values: np.ndarray        # (K, n) numeric attribute (NaN = missing)
    codes: np.ndarray         # (K, n) categorical codes (-1 = missing)


def compile_specs(specs: Sequence[StatisticSpec], cov: CovariateStore | None, n: int) -> CompiledSpecs:
    cov = _check_cov(n, specs, cov)
    K = len(specs)
    kind = np.zeros(K, dtype=np.int64)
    norm = np.zeros(K, dtype=np.int64)
    table = np.zeros((K, n + 1))
    dyad = np.zeros((K, n, n)) if any(s.kind in DYADIC_KINDS for s in specs) else np.zeros((K, 1, 1))
    values = np.zeros((K, n))
    codes = np.zeros((K, n), dtype=np.int64)
    for k, spec in enumerate(specs):
        norm[k] = int(spec.normalized)
        if spec.kind in SIZE_KINDS:
            kind[k] = K_SIZE
            f = size_function(spec)
            table[k] = [f(m) for m in range(n + 1)]
        elif spec.kind in DYADIC_KINDS:
            kind[k] = K_DYADIC
            dyad[k] = _dyad_matrix(spec, cov)
        else:
            col = cov.attribute(spec.attribute)
            values[k] = col.values
            codes[k] = col.codes
            if spec.kind == "group_sociability":
                kind[k] = K_GSOC
            else:
                kind[k] = {"all_same": K_ALLSAME, "distinct_count": K_DISTINCT,
                           "range": K_RANGE, "variance": K_VARIANCE}[spec.form]
    return CompiledSpecs(kind, norm, table, dyad, values, codes)
