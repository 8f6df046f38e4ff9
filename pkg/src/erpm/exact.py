"""Exact computations: enumeration, normalizing constants, moments and MLE.

Enumeration is the oracle for everything else and is capped at
``ENUMERATION_CAP`` actors. Models whose statistics depend only on block
sizes are handled for any ``n`` by the recursion over the size of the block
holding the last actor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import (
    DegenerateStatisticError,
    EmptySupportError,
    EnumerationCapError,
    MLEAtInfinityError,
    NotSizeOnlyError,
)
from .partition import Partition, SizeBounds, canonicalize
from .statistics import (
    CovariateStore,
    StatisticSpec,
    evaluate_batch,
    is_size_only,
    size_function,
)

__all__ = [
    "ModelSpec",
    "ExactDistribution",
    "ENUMERATION_CAP",
    "iter_rgs",
    "rgs_array",
    "enumerate_partitions",
    "exact_distribution",
    "log_kappa_recursive",
    "kappa_recursive",
    "size_model_moments",
    "exact_expected_statistics",
    "newton_mle_size_only",
    "expected_size_profile",
    "neutrality_check",
    "consistency_check",
    "ewens_probabilities",
]

ENUMERATION_CAP = 12


@dataclass
class ModelSpec:
    specs: list[StatisticSpec]
    alpha: np.ndarray | None = None
    bounds: SizeBounds = field(default_factory=SizeBounds)

    def __post_init__(self):
        self.specs = list(self.specs)
        if self.alpha is None:
            self.alpha = np.zeros(len(self.specs))
        self.alpha = np.asarray(self.alpha, dtype=float)
        if self.alpha.shape != (len(self.specs),):
            raise ValueError("alpha must have one entry per statistic")
        if not np.all(np.isfinite(self.alpha)):
            raise ValueError("alpha must be finite")

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.specs]

    def with_alpha(self, alpha) -> "ModelSpec":
        return ModelSpec(self.specs, np.asarray(alpha, dtype=float), self.bounds)


# -- enumeration ------------------------------------------------------------------


def iter_rgs(n: int) -> Iterator[tuple[int, ...]]:
    """Restricted-growth strings of length ``n`` in lexicographic order."""
    if n < 1:
        return
    a = [0] * n
    b = [0] * n  # b[i] = 1 + max(a[:i]), the largest value a[i] may take
    b[0] = 0
    for i in range(1, n):
        b[i] = 1
    while True:
        yield tuple(a)
        i = n - 1
        while i > 0 and a[i] == b[i]:
            i -= 1
        if i == 0:
            return
        a[i] += 1
        top = max(b[i], a[i] + 1)
        for j in range(i + 1, n):
            a[j] = 0
            b[j] = top


def rgs_array(n: int, bounds: SizeBounds | None = None, cap: int = ENUMERATION_CAP) -> np.ndarray:
    """All restricted-growth strings of length ``n`` as rows, filtered by ``bounds``."""
    if n > cap:
        raise EnumerationCapError(f"n={n} exceeds the enumeration cap of {cap}")
    if n < 1:
        raise ValueError("n must be positive")
    rows = np.zeros((1, 1), dtype=np.int8)
    top = np.zeros(1, dtype=np.int8)  # number of labels used so far minus one
    for _ in range(1, n):
        fanout = top.astype(np.int64) + 2
        parent = np.repeat(np.arange(len(rows)), fanout)
        offsets = np.arange(len(parent)) - np.repeat(np.cumsum(fanout) - fanout, fanout)
        child = offsets.astype(np.int8)
        rows = np.concatenate([rows[parent], child[:, None]], axis=1)
        top = np.maximum(top[parent], child)
    if bounds is not None and not bounds.is_trivial(n):
        sizes = (rows[:, :, None] == np.arange(n)[None, None, :]).sum(axis=1)
        lo, hi = bounds.sigma_min, bounds.upper(n)
        ok = np.all((sizes == 0) | ((sizes >= lo) & (sizes <= hi)), axis=1)
        rows = rows[ok]
    return rows


def enumerate_partitions(n: int, bounds: SizeBounds | None = None,
                         cap: int = ENUMERATION_CAP) -> list[Partition]:
    return [Partition(tuple(int(x) for x in row)) for row in rgs_array(n, bounds, cap)]


@dataclass
class ExactDistribution:
    rgs: np.ndarray
    probabilities: np.ndarray
    stats: np.ndarray
    log_kappa: float

    @property
    def partitions(self) -> list[Partition]:
        return [Partition(tuple(int(x) for x in row)) for row in self.rgs]

    def probability_of(self, p: Partition) -> float:
        hit = np.all(self.rgs == np.asarray(p.membership), axis=1)
        return float(self.probabilities[hit].sum())

    def as_dict(self) -> dict[Partition, float]:
        return dict(zip(self.partitions, self.probabilities.tolist()))

    def expected_statistics(self) -> np.ndarray:
        return self.probabilities @ self.stats

    def covariance(self) -> np.ndarray:
        mean = self.expected_statistics()
        centred = self.stats - mean
        return (centred * self.probabilities[:, None]).T @ centred


def exact_distribution(m: ModelSpec, cov: CovariateStore | None = None, n: int | None = None,
                       cap: int = ENUMERATION_CAP) -> ExactDistribution:
    """Probabilities of every partition in the support by brute-force summation."""
    if n is None:
        if cov is None:
            raise ValueError("need n or a covariate store")
        n = cov.n
    rgs = rgs_array(n, m.bounds, cap)
    if len(rgs) == 0:
        raise EmptySupportError(f"no partition of {n} actors respects {m.bounds}")
    stats = evaluate_batch(rgs, m.specs, cov) if m.specs else np.zeros((len(rgs), 0))
    logw = stats @ m.alpha
    log_kappa = float(logsumexp(logw))
    probs = np.exp(logw - log_kappa)
    return ExactDistribution(rgs, probs, stats, log_kappa)


# -- recursion for size-only models ------------------------------------------------------


def _size_terms(specs: Sequence[StatisticSpec], n: int) -> np.ndarray:
    if not is_size_only(specs):
        bad = [s.name for s in specs if not _is_size(s)]
        raise NotSizeOnlyError(f"statistics not functions of block sizes: {bad}")
    table = np.zeros((n + 1, len(specs)))
    for k, spec in enumerate(specs):
        f = size_function(spec)
        table[:, k] = [f(s) for s in range(n + 1)]
    return table


def _is_size(spec):
    return is_size_only([spec])


def _allowed_sizes(N: int, bounds: SizeBounds) -> range:
    return range(bounds.sigma_min, min(N, bounds.upper(N)) + 1)


def size_model_moments(specs: Sequence[StatisticSpec], alpha, n: int,
                       bounds: SizeBounds | None = None, order: int = 2):
    """``(log kappa, E[s], Cov[s])`` for a size-only model via the block-size recursion.

    Moments come from differentiating the recursion term by term: with
    normalized weights ``w_s`` over the size ``s`` of the last actor's block,
    ``E_N = sum_s w_s (f(s) + E_{N-s})`` and likewise for second moments.
    """
    bounds = bounds or SizeBounds()
    alpha = np.asarray(alpha, dtype=float)
    f = _size_terms(specs, n)
    K = len(specs)
    logk = np.full(n + 1, -np.inf)
    logk[0] = 0.0
    mean = np.zeros((n + 1, K))
    second = np.zeros((n + 1, K, K))
    for N in range(1, n + 1):
        sizes = [s for s in _allowed_sizes(N, bounds) if np.isfinite(logk[N - s])]
        if not sizes:
            continue
        terms = np.array([math.log(math.comb(N - 1, N - s)) + f[s] @ alpha + logk[N - s]
                          for s in sizes])
        logk[N] = logsumexp(terms)
        if order < 1:
            continue
        w = np.exp(terms - logk[N])
        for weight, s in zip(w, sizes):
            fs, prev = f[s], mean[N - s]
            mean[N] += weight * (fs + prev)
            if order >= 2:
                second[N] += weight * (np.outer(fs, fs) + np.outer(fs, prev)
                                       + np.outer(prev, fs) + second[N - s])
    if not np.isfinite(logk[n]):
        raise EmptySupportError(f"no partition of {n} actors respects {bounds}")
    covm = second[n] - np.outer(mean[n], mean[n])
    return float(logk[n]), mean[n], (covm + covm.T) / 2


def log_kappa_recursive(specs, alpha, n: int, bounds: SizeBounds | None = None) -> float:
    """Log normalizing constant of a size-only model; ``-inf`` for an empty support."""
    try:
        return size_model_moments(specs, alpha, n, bounds, order=0)[0]
    except EmptySupportError:
        return -math.inf


def kappa_recursive(specs, alpha, n: int, bounds: SizeBounds | None = None) -> float:
    return math.exp(log_kappa_recursive(specs, alpha, n, bounds))


def exact_expected_statistics(m: ModelSpec, cov: CovariateStore | None = None,
                              n: int | None = None, cap: int = ENUMERATION_CAP) -> np.ndarray:
    if n is None:
        n = cov.n if cov is not None else None
    if n is None:
        raise ValueError("need n or a covariate store")
    if is_size_only(m.specs):
        return size_model_moments(m.specs, m.alpha, n, m.bounds)[1]
    if n > cap:
        raise EnumerationCapError(
            f"n={n} exceeds the cap {cap} and the model has covariate statistics"
        )
    return exact_distribution(m, cov, n, cap).expected_statistics()


def expected_size_profile(specs, alpha, n: int, bounds: SizeBounds | None = None) -> np.ndarray:
    """Expected number of groups of each size ``1..n`` (index 0 unused)."""
    probes = [StatisticSpec("num_groups_of_size", k=s) for s in range(1, n + 1)]
    full = list(specs) + probes
    alpha_full = np.concatenate([np.asarray(alpha, dtype=float), np.zeros(n)])
    mean = size_model_moments(full, alpha_full, n, bounds, order=1)[1]
    return np.concatenate([[0.0], mean[len(specs):]])


# -- maximum likelihood ---------------------------------------------------------------------


def newton_mle_size_only(specs: Sequence[StatisticSpec], s_obs, n: int,
                         bounds: SizeBounds | None = None, alpha_init=None,
                         fixed: Mapping[int, float] | None = None, tol: float = 1e-10,
                         max_iter: int = 200, divergence_bound: float = 50.0) -> np.ndarray:
    """Solve ``E_alpha[s] = s_obs`` for a size-only model by damped Newton-Raphson.

    Entries listed in ``fixed`` are held at the given values and the matching
    moment equations are dropped. Raises :class:`MLEAtInfinityError` when the
    iterates run off to infinity (observed statistics on the boundary).
    """
    bounds = bounds or SizeBounds()
    s_obs = np.asarray(s_obs, dtype=float)
    K = len(specs)
    alpha = np.zeros(K) if alpha_init is None else np.array(alpha_init, dtype=float)
    fixed = dict(fixed or {})
    for k, v in fixed.items():
        alpha[k] = v
    free = np.array([k not in fixed for k in range(K)])
    if not free.any():
        return alpha

    def loglik(a):
        return float(a[free] @ s_obs[free]) - log_kappa_recursive(specs, a, n, bounds)

    current = loglik(alpha)
    for _ in range(max_iter):
        _, mean, covm = size_model_moments(specs, alpha, n, bounds)
        grad = (s_obs - mean)[free]
        hess = covm[np.ix_(free, free)]
        if np.max(np.abs(grad)) < tol:
            if np.min(np.diag(hess)) < 1e-6:
                # the gradient vanished only because the distribution collapsed
                # onto the boundary partition
                raise MLEAtInfinityError("observed statistics on the boundary; MLE at infinity")
            return alpha
        scale = np.sqrt(np.maximum(np.diag(hess), 1e-300))
        if np.min(np.diag(hess)) < 1e-14 or np.linalg.cond(hess / np.outer(scale, scale)) > 1e12:
            # vanishing variance: either s_obs is extreme or statistics are collinear
            if np.max(np.abs(alpha)) > 5:
                raise MLEAtInfinityError("observed statistics on the boundary; MLE at infinity")
            raise DegenerateStatisticError("collinear or degenerate statistic")
        step = np.linalg.solve(hess, grad)
        t = 1.0
        while True:
            trial = alpha.copy()
            trial[free] += t * step
            value = loglik(trial)
            if value >= current - 1e-12 or t < 1e-8:
                break
            t /= 2
        alpha, current = trial, value
        if np.max(np.abs(alpha)) > divergence_bound:
            raise MLEAtInfinityError(
                "parameters diverge: observed statistics lie on the boundary of the "
                "achievable set, so the MLE is at infinity"
            )
    raise MLEAtInfinityError(f"Newton-Raphson did not converge in {max_iter} iterations")


# -- independence properties ---------------------------------------------------------------


def _project(rgs: np.ndarray, actors: Sequence[int]) -> list[tuple[int, ...]]:
    return [canonicalize(row[list(actors)].tolist()).membership for row in rgs]


@dataclass
class NeutralityResult:
    holds: bool
    max_deviation: float
    n_conditioned: int


def neutrality_check(m: ModelSpec, split: Sequence[int], cov: CovariateStore | None = None,
                     n: int | None = None, tol: float = 1e-10) -> NeutralityResult:
    """Check that the two projections are independent given no block straddles the split.

    Compares ``Pr(P = p | no straddling block)`` with the product of the
    models on the two actor subsets, and with the product of the conditional
    marginals of the two projections. Returns the larger deviation.
    """
    if n is None:
        n = cov.n
    inside = sorted(set(split))
    outside = [i for i in range(n) if i not in set(inside)]
    if not inside or not outside:
        raise ValueError("split must be a proper nonempty subset of the actors")
    dist = exact_distribution(m, cov, n)
    rgs = dist.rgs
    ins = np.zeros(n, dtype=bool)
    ins[inside] = True
    # no block straddles iff every block is entirely inside or outside
    straddle = np.zeros(len(rgs), dtype=bool)
    for label in range(n):
        member = rgs == label
        straddle |= (member & ins).any(axis=1) & (member & ~ins).any(axis=1)
    q = ~straddle
    cond = dist.probabilities[q] / dist.probabilities[q].sum()
    left = _project(rgs[q], inside)
    right = _project(rgs[q], outside)

    def marginal(keys):
        acc: dict = {}
        for key, pr in zip(keys, cond):
            acc[key] = acc.get(key, 0.0) + pr
        return acc

    ml, mr = marginal(left), marginal(right)
    dev = max(abs(c - ml[a] * mr[b]) for c, a, b in zip(cond, left, right))

    sub_l = exact_distribution(m, cov.subset(inside) if cov else None, len(inside)).as_dict()
    sub_r = exact_distribution(m, cov.subset(outside) if cov else None, len(outside)).as_dict()
    dev_sub = max(abs(c - sub_l[Partition(a)] * sub_r[Partition(b)])
                  for c, a, b in zip(cond, left, right))
    worst = max(dev, dev_sub)
    return NeutralityResult(worst < tol, worst, int(q.sum()))


@dataclass
class ConsistencyResult:
    consistent: bool
    max_deviation: float
    marginal: dict
    submodel: dict


def consistency_check(m: ModelSpec, subset: Sequence[int], cov: CovariateStore | None = None,
                      n: int | None = None, tol: float = 1e-10) -> ConsistencyResult:
    """Compare the marginal law of the projection on ``subset`` with the same model on ``subset``."""
    if n is None:
        n = cov.n
    subset = list(subset)
    dist = exact_distribution(m, cov, n)
    marginal: dict = {}
    for key, pr in zip(_project(dist.rgs, subset), dist.probabilities):
        p = Partition(key)
        marginal[p] = marginal.get(p, 0.0) + float(pr)
    sub = exact_distribution(m, cov.subset(subset) if cov else None, len(subset)).as_dict()
    keys = set(marginal) | set(sub)
    dev = max(abs(marginal.get(k, 0.0) - sub.get(k, 0.0)) for k in keys)
    return ConsistencyResult(dev < tol, dev, marginal, sub)


def ewens_probabilities(lam: float, n: int, cap: int = ENUMERATION_CAP):
    """Ewens law by direct normalization of ``lam**#p * prod (#G-1)!`` weights."""
    rgs = rgs_array(n, None, cap)
    weights = []
    for row in rgs:
        sizes = np.bincount(row)
        weights.append(lam ** len(sizes) * math.prod(math.factorial(int(s) - 1) for s in sizes))
    weights = np.array(weights, dtype=float)
    return rgs, weights / weights.sum()
