"""Goodness of fit through auxiliary statistics.

Auxiliary statistics are features of a partition that the model does not fit
directly. A fitted model is simulated many times and the observed value of
each auxiliary is compared with its simulated distribution.

Auxiliary names (also accepted as selectors by :func:`auxiliary_statistics`):

``size_hist``                 number of groups of each size (``size_hist:<size>``)
``icc:<attr>``                one-way intraclass correlation of a numeric attribute
``attr_size_corr:<attr>``     correlation of an actor's attribute with its group size
``diff_ties:<attr>[:<width>]`` within-group dyads per attribute-difference bucket
``same_attr_prop:<attr>``     share of within-group dyads whose members share a category
``size_by_category:<attr>``   mean own-group size of actors in each category
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exact import ModelSpec
from .partition import Partition
from .sampler import ChainConfig, run_chain
from .statistics import CovariateStore

__all__ = [
    "QUANTILES",
    "AuxiliaryValues",
    "GofReport",
    "default_auxiliaries",
    "auxiliary_statistics",
    "intraclass_correlation",
    "gof",
]

QUANTILES = (0.025, 0.25, 0.5, 0.75, 0.975)
CATEGORICAL_MAX_LEVELS = 5


@dataclass
class AuxiliaryValues:
    values: dict[str, float]
    undefined: set[str] = field(default_factory=set)

    def __getitem__(self, key: str) -> float:
        return self.values[key]

    def __contains__(self, key: str) -> bool:
        return key in self.values

    def keys(self):
        return self.values.keys()


def default_auxiliaries(cov: CovariateStore | None) -> list[str]:
    """Size histogram, plus numeric or categorical auxiliaries for each attribute."""
    out = ["size_hist"]
    if cov is None:
        return out
    for name, col in cov.attributes.items():
        if col.is_numeric and len(col.categories) > CATEGORICAL_MAX_LEVELS:
            out += [f"icc:{name}", f"attr_size_corr:{name}", f"diff_ties:{name}"]
        else:
            out += [f"same_attr_prop:{name}", f"size_by_category:{name}"]
    return out


def intraclass_correlation(values: np.ndarray, groups: np.ndarray) -> float:
    """One-way ANOVA intraclass correlation ``(MSB - MSW) / (MSB + (k - 1) MSW)``.

    Missing values are dropped; only groups with at least two remaining
    members take part, and ``k`` is their mean size. NaN when undefined.
    """
    ok = ~np.isnan(values)
    values, groups = values[ok], groups[ok]
    labels, counts = np.unique(groups, return_counts=True)
    keep = labels[counts >= 2]
    if len(keep) < 2:
        return math.nan
    mask = np.isin(groups, keep)
    y, g = values[mask], groups[mask]
    _, inv, sizes = np.unique(g, return_inverse=True, return_counts=True)
    means = np.bincount(inv, weights=y) / sizes
    grand = y.mean()
    k, N = len(sizes), len(y)
    msb = float((sizes * (means - grand) ** 2).sum() / (k - 1))
    msw = float(((y - means[inv]) ** 2).sum() / (N - k))
    denom = msb + (sizes.mean() - 1) * msw
    if denom <= 0:
        return math.nan
    return (msb - msw) / denom


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    ok = ~(np.isnan(x) | np.isnan(y))
    x, y = x[ok], y[ok]
    if len(x) < 2 or np.ptp(x) == 0 or np.ptp(y) == 0:
        return math.nan
    return float(np.corrcoef(x, y)[0, 1])


def _within_pairs(p: Partition):
    for block in p.blocks():
        for a in range(len(block)):
            for b in range(a + 1, len(block)):
                yield block[a], block[b]


def _default_width(values: np.ndarray) -> float:
    v = values[~np.isnan(values)]
    spread = float(np.ptp(v)) if len(v) else 0.0
    return spread / 5 if spread > 0 else 1.0


def auxiliary_statistics(p: Partition, cov: CovariateStore | None = None,
                         aux: Sequence[str] | None = None) -> AuxiliaryValues:
    """Evaluate auxiliary statistics of ``p``; undefined values are NaN and listed."""
    aux = list(aux) if aux is not None else default_auxiliaries(cov)
    n = p.n
    membership = np.asarray(p.membership)
    sizes = np.bincount(membership)
    own_size = sizes[membership].astype(float)
    out: dict[str, float] = {}
    undefined: set[str] = set()

    def put(key, value):
        out[key] = float(value)
        if isinstance(value, float) and math.isnan(value):
            undefined.add(key)

    for item in aux:
        parts = item.split(":")
        kind = parts[0]
        if kind == "size_hist":
            hist = np.bincount(sizes, minlength=n + 1)
            for s in range(1, n + 1):
                put(f"size_hist:{s}", int(hist[s]))
            continue
        if len(parts) < 2 or cov is None:
            raise ValueError(f"auxiliary {item!r} needs an attribute")
        col = cov.attribute(parts[1])
        if kind == "icc":
            put(item, intraclass_correlation(col.values, membership))
        elif kind == "attr_size_corr":
            put(item, _pearson(col.values, own_size))
        elif kind == "diff_ties":
            width = float(parts[2]) if len(parts) > 2 else _default_width(col.values)
            v = col.values
            spread = float(np.nanmax(v) - np.nanmin(v)) if np.any(~np.isnan(v)) else 0.0
            nb = int(spread // width) + 1
            counts = np.zeros(nb, dtype=int)
            for i, j in _within_pairs(p):
                if not (np.isnan(v[i]) or np.isnan(v[j])):
                    counts[min(int(abs(v[i] - v[j]) // width), nb - 1)] += 1
            base = f"diff_ties:{parts[1]}"
            for b in range(nb):
                put(f"{base}:{b * width:g}-{(b + 1) * width:g}", int(counts[b]))
        elif kind == "same_attr_prop":
            same = total = 0
            for i, j in _within_pairs(p):
                if col.codes[i] >= 0 and col.codes[j] >= 0:
                    total += 1
                    same += int(col.codes[i] == col.codes[j])
            put(item, same / total if total else math.nan)
        elif kind == "size_by_category":
            for c, label in enumerate(col.categories):
                sel = col.codes == c
                put(f"{item}={label}", float(own_size[sel].mean()))
        else:
            raise ValueError(f"unknown auxiliary statistic {kind!r}")
    return AuxiliaryValues(out, undefined)


@dataclass
class GofReport:
    names: list[str]
    observed: np.ndarray
    simulated: np.ndarray  # (num_sims, len(names)); NaN where undefined
    mean: np.ndarray
    sd: np.ndarray
    quantiles: np.ndarray  # (len(QUANTILES), len(names)), type-7 interpolation
    flagged: np.ndarray    # observed outside the central 95% simulated interval

    @property
    def num_sims(self) -> int:
        return len(self.simulated)

    def summary(self, name: str) -> dict:
        k = self.names.index(name)
        return {
            "observed": float(self.observed[k]),
            "mean": float(self.mean[k]),
            "sd": float(self.sd[k]),
            "quantiles": dict(zip((f"{q:g}" for q in QUANTILES), self.quantiles[:, k].tolist())),
            "flagged": bool(self.flagged[k]),
        }

    def flagged_names(self) -> list[str]:
        return [n for n, f in zip(self.names, self.flagged) if f]

    def to_dict(self) -> dict:
        return {
            "num_sims": self.num_sims,
            "quantile_rule": "type 7 (linear interpolation)",
            "statistics": {name: self.summary(name) for name in self.names},
            "flagged": self.flagged_names(),
        }

    def write_values_csv(self, path) -> None:
        """Long-format simulated values (statistic, replicate, value) plus observed rows."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["statistic", "replicate", "value"])
            for k, name in enumerate(self.names):
                w.writerow([name, "observed", repr(float(self.observed[k]))])
                for r in range(self.num_sims):
                    w.writerow([name, r, repr(float(self.simulated[r, k]))])


def gof(m: ModelSpec, cov: CovariateStore | None, p_obs: Partition, num_sims: int, seed: int = 0,
        aux: Sequence[str] | None = None, cfg: ChainConfig | None = None) -> GofReport:
    """Simulate ``num_sims`` partitions from the fitted model and compare auxiliaries."""
    if num_sims < 1:
        raise ValueError("num_sims must be at least 1")
    cfg = cfg or ChainConfig()
    cfg = ChainConfig(cfg.mixture, cfg.burn_in, cfg.thinning, seed, cfg.bounds_mode, "observed",
                      cfg.backend, cfg.refresh_every)
    trace = run_chain(m, cov, cfg, num_sims, initial=p_obs)
    obs = auxiliary_statistics(p_obs, cov, aux)
    names = list(obs.keys())
    sims = np.full((num_sims, len(names)), np.nan)
    for r, (p, _) in enumerate(trace):
        vals = auxiliary_statistics(p, cov, aux).values
        sims[r] = [vals.get(name, 0.0) for name in names]
    observed = np.array([obs[n] for n in names])
    with warnings.catch_warnings():
        # all-NaN columns (auxiliary undefined in every replicate) stay NaN
        warnings.simplefilter("ignore", RuntimeWarning)
        mean = np.nanmean(sims, axis=0)
        sd = np.nanstd(sims, axis=0, ddof=1) if num_sims > 1 else np.zeros(len(names))
        q = np.nanquantile(sims, QUANTILES, axis=0, method="linear")
    flagged = (observed < q[0]) | (observed > q[-1])
    return GofReport(names, observed, sims, mean, sd, q, flagged)
