"""Metropolis-Hastings sampling of partitions.

A step picks a relation with probability proportional to its mixture weight
(redrawing when the current partition has no neighbor under it), proposes a
neighbor uniformly among the distinct neighbors under that relation, and
accepts with the Hastings-corrected ratio. The heavy lifting happens in the
compiled kernel (``erpm.kernel``); this module holds configuration, the
chain driver, a slow reference implementation of one step used to assemble
exact transition matrices, and autocorrelation monitoring.
"""

from __future__ import annotations

import math
import warnings
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

from . import kernel as _kernel
from .errors import EmptySupportError, UnreachableSupportError
from .exact import ModelSpec, rgs_array
from .partition import (
    Partition,
    RelationKind,
    SizeBounds,
    canonicalize,
    count_from_sizes,
    neighbor_count,
    neighbors,
    respects_bounds,
)
from .statistics import CovariateStore, compile_specs, evaluate_batch, is_size_only

__all__ = [
    "ProposalMixture",
    "ChainConfig",
    "Proposal",
    "MHChain",
    "SampleTrace",
    "Autocorrelation",
    "propose",
    "accept_probability",
    "relation_probabilities",
    "transition_matrix",
    "check_irreducible",
    "random_valid_partition",
    "run_chain",
    "run_chains",
    "autocorrelation",
]

# kernel order of the relations
_ORDER = (RelationKind.MERGE_SPLIT, RelationKind.PERMUTE, RelationKind.TRANSFER)
BOUNDS_MODES = ("reject_invalid", "full_space_retain")
IRREDUCIBILITY_CHECK_MAX_N = 8


@dataclass(frozen=True)
class ProposalMixture:
    """Relation weights; they are normalized on use.

    Permute alone cannot reach partitions with other block sizes, so at least
    one of merge/split and transfer must carry weight.
    """

    merge_split: float = 1.0
    permute: float = 0.0
    transfer: float = 0.0

    def __post_init__(self):
        w = (self.merge_split, self.permute, self.transfer)
        if any(not math.isfinite(x) or x < 0 for x in w):
            raise ValueError("mixture weights must be finite and nonnegative")
        if self.merge_split <= 0 and self.transfer <= 0:
            raise ValueError("permute cannot be used without merge/split or transfer")

    @property
    def weights(self) -> np.ndarray:
        w = np.array([self.merge_split, self.permute, self.transfer], dtype=float)
        return w / w.sum()

    def weight(self, r: RelationKind) -> float:
        return float(self.weights[_ORDER.index(r)])

    @classmethod
    def uniform(cls) -> "ProposalMixture":
        return cls(1.0, 1.0, 1.0)

    @classmethod
    def default_for(cls, specs) -> "ProposalMixture":
        """Merge/split alone for size-only models, equal thirds otherwise."""
        return cls() if is_size_only(specs) else cls.uniform()

    def to_dict(self) -> dict:
        return {"merge_split": self.merge_split, "permute": self.permute, "transfer": self.transfer}


@dataclass
class ChainConfig:
    mixture: ProposalMixture | None = None
    burn_in: int = 1000
    thinning: int = 10
    seed: int = 0
    bounds_mode: str = "reject_invalid"
    initial: str = "observed"
    backend: str | None = None
    refresh_every: int = 10000

    def __post_init__(self):
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")
        if self.bounds_mode not in BOUNDS_MODES:
            raise ValueError(f"bounds_mode must be one of {BOUNDS_MODES}")
        if self.initial not in ("observed", "random_valid"):
            raise ValueError("initial must be 'observed' or 'random_valid'")

    def resolved_mixture(self, specs) -> ProposalMixture:
        return self.mixture if self.mixture is not None else ProposalMixture.default_for(specs)


# -- reference implementation of a single step --------------------------------------------


def relation_probabilities(p: Partition, mixture: ProposalMixture) -> dict[RelationKind, float]:
    """Probability of each relation being used at ``p``, after redrawing empty ones."""
    sizes = [len(b) for b in p.blocks()]
    avail = {r: mixture.weight(r) for r in _ORDER
             if mixture.weight(r) > 0 and count_from_sizes(sizes, r) > 0}
    total = sum(avail.values())
    return {r: w / total for r, w in avail.items()}


def _available_weight(sizes, mixture: ProposalMixture) -> float:
    return sum(mixture.weight(r) for r in _ORDER
               if mixture.weight(r) > 0 and count_from_sizes(sizes, r) > 0)


@dataclass(frozen=True)
class Proposal:
    candidate: Partition
    forward_count: int
    backward_count: int
    relation: RelationKind
    forward_weight: float = 1.0
    backward_weight: float = 1.0


def propose(p: Partition, mixture: ProposalMixture, rng: np.random.Generator) -> Proposal:
    """Draw one proposal from ``p`` (slow; enumerates the neighbor set)."""
    if p.n < 2:
        raise ValueError("no relation has neighbors for a single actor")
    w = mixture.weights
    while True:
        r = _ORDER[int(rng.choice(3, p=w))]
        options = sorted(neighbors(p, r), key=lambda q: q.membership)
        if options:
            break
    cand = options[int(rng.integers(len(options)))]
    return Proposal(
        cand,
        len(options),
        neighbor_count(cand, r),
        r,
        _available_weight([len(b) for b in p.blocks()], mixture),
        _available_weight([len(b) for b in cand.blocks()], mixture),
    )


def accept_probability(m: ModelSpec, cov, current_stats, candidate_stats, forward_count: int,
                       backward_count: int, candidate: Partition,
                       bounds_mode: str = "reject_invalid",
                       forward_weight: float = 1.0, backward_weight: float = 1.0) -> float:
    """Metropolis-Hastings acceptance probability of ``candidate``.

    ``forward_weight``/``backward_weight`` are the total mixture weights of the
    relations with neighbors at the current and candidate partitions; they
    differ only when a move enters or leaves a state where permute has no
    neighbors. The normalizing constant is never needed.
    """
    if forward_count <= 0 or backward_count <= 0:
        raise ValueError("neighbor counts must be positive")
    if bounds_mode == "reject_invalid" and not respects_bounds(candidate, m.bounds):
        return 0.0
    delta = np.asarray(candidate_stats, dtype=float) - np.asarray(current_stats, dtype=float)
    log_a = float(m.alpha @ delta) + math.log(forward_count) - math.log(backward_count)
    log_a += math.log(forward_weight) - math.log(backward_weight)
    return 1.0 if log_a >= 0 else math.exp(log_a)


def transition_matrix(m: ModelSpec, cov: CovariateStore | None, mixture: ProposalMixture,
                      n: int, bounds_mode: str = "reject_invalid") -> tuple[list[Partition], np.ndarray]:
    """Assemble the exact one-step transition matrix by enumerating every proposal.

    With ``reject_invalid`` the state space is the restricted support; with
    ``full_space_retain`` it is every partition and the target is the
    unrestricted model.
    """
    bounds = m.bounds if bounds_mode == "reject_invalid" else SizeBounds()
    rgs = rgs_array(n, bounds)
    parts = [Partition(tuple(int(x) for x in row)) for row in rgs]
    index = {q: i for i, q in enumerate(parts)}
    stats = evaluate_batch(rgs, m.specs, cov)
    model = ModelSpec(m.specs, m.alpha, bounds)
    P = np.zeros((len(parts), len(parts)))
    for a, p in enumerate(parts):
        wf = _available_weight([len(b) for b in p.blocks()], mixture)
        for r, pr in relation_probabilities(p, mixture).items():
            nb = neighbors(p, r)
            fwd = len(nb)
            for q in nb:
                if q not in index:  # out of bounds: always rejected
                    P[a, a] += pr / fwd
                    continue
                b = index[q]
                acc = accept_probability(
                    model, cov, stats[a], stats[b], fwd, neighbor_count(q, r), q, bounds_mode,
                    wf, _available_weight([len(x) for x in q.blocks()], mixture),
                )
                P[a, b] += pr / fwd * acc
                P[a, a] += pr / fwd * (1.0 - acc)
    return parts, P


@lru_cache(maxsize=64)
def _support_connected(n: int, bounds: SizeBounds, relations: tuple[RelationKind, ...],
                       start: tuple[int, ...]) -> bool:
    valid = {tuple(int(x) for x in row) for row in rgs_array(n, bounds)}
    seen = {start}
    todo = deque([start])
    while todo:
        p = Partition(todo.popleft())
        for r in relations:
            for q in neighbors(p, r):
                if q.membership in valid and q.membership not in seen:
                    seen.add(q.membership)
                    todo.append(q.membership)
    return len(seen) == len(valid)


def check_irreducible(p0: Partition, bounds: SizeBounds, mixture: ProposalMixture) -> bool | None:
    """Check that the restricted support is connected under the mixture's relations.

    Returns True when verified, None when ``n`` is too large to check (with a
    warning), and raises :class:`UnreachableSupportError` otherwise.
    """
    n = p0.n
    if bounds.is_trivial(n):
        return True  # merge/split or transfer alone connects the full space
    if n > IRREDUCIBILITY_CHECK_MAX_N:
        warnings.warn(
            f"irreducibility of the size-restricted support is assumed, not checked, for n={n}",
            stacklevel=3,
        )
        return None
    relations = tuple(r for r in _ORDER if mixture.weight(r) > 0)
    if not _support_connected(n, bounds, relations, p0.membership):
        raise UnreachableSupportError(
            "the size-restricted support is not connected under the chosen relations; "
            "add permute or transfer moves, or use bounds_mode='full_space_retain'"
        )
    return True


def _feasible(r: int, lo: int, hi: int) -> bool:
    if r == 0:
        return True
    k_min = -(-r // hi)
    return k_min * lo <= r


def random_valid_partition(n: int, bounds: SizeBounds, rng: np.random.Generator) -> Partition:
    """A random partition whose block sizes all lie in the bounds."""
    lo, hi = bounds.sigma_min, bounds.upper(n)
    if not _feasible(n, lo, hi):
        raise EmptySupportError(f"no partition of {n} actors has all block sizes in [{lo}, {hi}]")
    order = rng.permutation(n)
    membership = [0] * n
    start = 0
    g = 0
    while start < n:
        rest = n - start
        sizes = [s for s in range(lo, min(hi, rest) + 1) if _feasible(rest - s, lo, hi)]
        s = int(sizes[int(rng.integers(len(sizes)))])
        for i in order[start:start + s]:
            membership[int(i)] = g
        start += s
        g += 1
    return canonicalize(membership)


# -- chain driver ---------------------------------------------------------------------------


class MHChain:
    """A live chain wrapping the kernel; used directly by the estimator for warm starts."""

    def __init__(self, m: ModelSpec, cov: CovariateStore | None, initial: Partition,
                 mixture: ProposalMixture | None = None, seed: int = 0,
                 bounds_mode: str = "reject_invalid", backend: str | None = None,
                 refresh_every: int = 10000, check_support: bool = True):
        if bounds_mode not in BOUNDS_MODES:
            raise ValueError(f"bounds_mode must be one of {BOUNDS_MODES}")
        self.model = m
        self.n = initial.n
        self.mixture = mixture if mixture is not None else ProposalMixture.default_for(m.specs)
        self.bounds_mode = bounds_mode
        self.only_valid = bounds_mode == "full_space_retain"
        if bounds_mode == "reject_invalid":
            if not respects_bounds(initial, m.bounds):
                raise ValueError("initial partition violates the size bounds")
            if check_support:
                check_irreducible(initial, m.bounds, self.mixture)
        compiled = compile_specs(m.specs, cov, self.n)
        Chain = _kernel.get_chain_class(backend)
        self._chain = Chain(
            np.asarray(initial.membership, dtype=np.int64),
            compiled.kind, compiled.normalized, compiled.size_table, compiled.dyad,
            compiled.values, compiled.codes, m.alpha, int(seed) & 0xFFFFFFFFFFFFFFFF,
            self.mixture.weights, m.bounds.sigma_min, m.bounds.upper(self.n),
            bounds_mode == "reject_invalid", refresh_every,
        )

    def set_alpha(self, alpha) -> None:
        self._chain.set_alpha(np.asarray(alpha, dtype=float))

    def step(self, nsteps: int) -> None:
        self._chain.step(int(nsteps))

    def draw(self, thinning: int) -> np.ndarray:
        """Advance ``thinning`` steps (more if an out-of-bounds state must be skipped)."""
        _, stats = self._chain.sample(1, int(thinning), self.only_valid)
        return stats[0]

    def sample(self, num: int, thinning: int) -> tuple[np.ndarray, np.ndarray]:
        return self._chain.sample(int(num), int(thinning), self.only_valid)

    @property
    def stats(self) -> np.ndarray:
        return self._chain.get_stats()

    @property
    def partition(self) -> Partition:
        return Partition(tuple(int(x) for x in self._chain.get_membership()))

    def counters(self) -> tuple[np.ndarray, np.ndarray]:
        """(proposals, accepts) per relation, in merge/split, permute, transfer order."""
        return self._chain.get_counters()


@dataclass
class SampleTrace:
    """Draws from one chain: memberships (num, n) and statistics (num, K)."""

    memberships: np.ndarray
    stats: np.ndarray
    proposals: np.ndarray
    accepts: np.ndarray
    names: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.stats)

    def __iter__(self) -> Iterator[tuple[Partition, np.ndarray]]:
        for row, s in zip(self.memberships, self.stats):
            yield Partition(tuple(int(x) for x in row)), s

    def partitions(self) -> list[Partition]:
        return [p for p, _ in self]

    def num_groups(self) -> np.ndarray:
        return self.memberships.max(axis=1) + 1

    def acceptance_rates(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.proposals > 0, self.accepts / np.maximum(self.proposals, 1), np.nan)


def _initial_partition(m: ModelSpec, cfg: ChainConfig, initial: Partition | None, n: int | None):
    if cfg.initial == "observed":
        if initial is None:
            raise ValueError("initial='observed' needs an initial partition")
        return initial
    if n is None:
        if initial is None:
            raise ValueError("the number of actors is unknown")
        n = initial.n
    rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed) & 0xFFFFFFFFFFFFFFFF, 1]))
    bounds = m.bounds if cfg.bounds_mode == "reject_invalid" else SizeBounds()
    return random_valid_partition(n, bounds, rng)


def run_chain(m: ModelSpec, cov: CovariateStore | None, cfg: ChainConfig, num_samples: int,
              initial: Partition | None = None, n: int | None = None) -> SampleTrace:
    """Run one chain: burn in, then keep one draw every ``cfg.thinning`` steps.

    Identical (model, config, seed, initial partition) give identical traces.
    """
    if num_samples < 0:
        raise ValueError("num_samples must be >= 0")
    p0 = _initial_partition(m, cfg, initial, n)
    chain = MHChain(m, cov, p0, cfg.resolved_mixture(m.specs), cfg.seed, cfg.bounds_mode,
                    cfg.backend, cfg.refresh_every)
    chain.step(cfg.burn_in)
    rows, stats = chain.sample(num_samples, cfg.thinning)
    proposals, accepts = chain.counters()
    return SampleTrace(rows, stats, proposals, accepts, m.names)


def run_chains(m: ModelSpec, cov: CovariateStore | None, cfg: ChainConfig, num_samples: int,
               num_chains: int, initial: Partition | None = None, n: int | None = None,
               max_workers: int | None = None) -> list[SampleTrace]:
    """Independent chains seeded ``seed + index``; the kernel releases the GIL while stepping."""
    def one(c):
        sub = ChainConfig(cfg.mixture, cfg.burn_in, cfg.thinning, cfg.seed + c, cfg.bounds_mode,
                          cfg.initial, cfg.backend, cfg.refresh_every)
        return run_chain(m, cov, sub, num_samples, initial, n)

    if num_chains == 1:
        return [one(0)]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(one, range(num_chains)))


# -- autocorrelation -------------------------------------------------------------------------


@dataclass
class Autocorrelation:
    values: np.ndarray
    constant: np.ndarray  # True where the trace is constant (value reported as 0)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


def autocorrelation(trace, lag: int = 1) -> Autocorrelation:
    """Per-statistic lag-``lag`` sample autocorrelation of a (draws, K) trace."""
    x = np.asarray(trace, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if lag < 1 or len(x) <= lag:
        raise ValueError("trace must be longer than the lag")
    xc = x - x.mean(axis=0)
    denom = (xc ** 2).sum(axis=0)
    scale = np.maximum(np.abs(x).max(axis=0), 1.0)
    constant = denom <= (1e-12 * scale) ** 2 * len(x)
    num = (xc[lag:] * xc[:-lag]).sum(axis=0)
    rho = np.where(constant, 0.0, num / np.where(constant, 1.0, denom))
    return Autocorrelation(rho, constant)

