"""Log-likelihood by path sampling from an exactly solvable reference model.

The reference keeps only the number-of-groups parameter (fitted exactly with
the block-size recursion). Along the straight line
``alpha_t = t * alpha + (1 - t) * alpha0`` the derivative of the log
normalizing constant is ``(alpha - alpha0)' E_{alpha_t}[s]``, so

    log kappa(alpha) - log kappa(alpha0) = integral_0^1 (alpha - alpha0)' E_{alpha_t}[s] dt,

which is estimated from MCMC means at ``M`` bridge points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BridgeOverlapError
from .exact import ModelSpec, exact_distribution, log_kappa_recursive, newton_mle_size_only
from .partition import Partition, SizeBounds
from .sampler import MHChain, ProposalMixture
from .statistics import CovariateStore, StatisticSpec, evaluate

__all__ = [
    "PathConfig",
    "PathResult",
    "reference_loglik",
    "path_sampling_loglik",
    "path_integral",
    "bridge_points",
    "exact_loglik",
]

RULES = ("trapezoid", "right")


@dataclass
class PathConfig:
    M: int = 50
    draws_per_bridge: int = 200
    burn_in: int = 500
    thinning: int = 10
    seed: int = 0
    rule: str = "trapezoid"
    min_overlap_ess: float = 0.05
    batches: int = 10
    mixture: ProposalMixture | None = None
    bounds_mode: str = "reject_invalid"
    backend: str | None = None

    def __post_init__(self):
        if self.M < 2:
            raise ValueError("M must be at least 2")
        if self.draws_per_bridge < 2:
            raise ValueError("draws_per_bridge must be at least 2")
        if self.rule not in RULES:
            raise ValueError(f"rule must be one of {RULES}")


@dataclass
class PathResult:
    loglik: float
    standard_error: float
    reference_loglik: float
    alpha0: np.ndarray
    log_kappa_difference: float
    bridge_t: np.ndarray = field(default_factory=lambda: np.zeros(0))
    bridge_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    min_overlap_ess: float = 1.0

    def to_dict(self) -> dict:
        return {
            "loglik": self.loglik,
            "standard_error": self.standard_error,
            "reference_loglik": self.reference_loglik,
            "alpha0": self.alpha0.tolist(),
            "log_kappa_difference": self.log_kappa_difference,
            "min_overlap_ess": self.min_overlap_ess,
        }


def _num_groups_index(specs) -> int:
    for k, s in enumerate(specs):
        if s.kind == "num_groups":
            return k
    raise ValueError("the reference model needs a num_groups statistic")


def reference_loglik(specs: list[StatisticSpec], s_obs, n: int,
                     bounds: SizeBounds | None = None) -> tuple[np.ndarray, float]:
    """Reference parameter (zeros but the fitted number-of-groups entry) and its exact log-likelihood."""
    bounds = bounds or SizeBounds()
    k = _num_groups_index(specs)
    s_obs = np.asarray(s_obs, dtype=float)
    sub = [specs[k]]
    a = newton_mle_size_only(sub, [s_obs[k]], n, bounds)
    alpha0 = np.zeros(len(specs))
    alpha0[k] = a[0]
    return alpha0, float(a[0] * s_obs[k] - log_kappa_recursive(sub, a, n, bounds))


def exact_loglik(m: ModelSpec, p_obs: Partition, cov: CovariateStore | None = None) -> float:
    """Log-likelihood by full enumeration (small ``n`` only)."""
    dist = exact_distribution(m, cov, p_obs.n)
    return float(m.alpha @ evaluate(p_obs, m.specs, cov) - dist.log_kappa)


def bridge_points(M: int, rule: str = "trapezoid") -> np.ndarray:
    """Path positions ``t = m / M``; the trapezoid rule includes ``t = 0``."""
    start = 0 if rule == "trapezoid" else 1
    return np.arange(start, M + 1) / M


def path_integral(values, rule: str = "trapezoid") -> float:
    """Integrate integrand values taken at :func:`bridge_points` over ``[0, 1]``."""
    v = np.asarray(values, dtype=float)
    if rule == "right":
        return float(v.mean())
    M = len(v) - 1
    return float((v[1:-1].sum() + 0.5 * (v[0] + v[-1])) / M)


def _quadrature_weights(count: int, rule: str) -> np.ndarray:
    if rule == "right":
        return np.full(count, 1.0 / count)
    w = np.full(count, 1.0 / (count - 1))
    w[0] = w[-1] = 0.5 / (count - 1)
    return w


def _batch_variance_of_mean(x: np.ndarray, batches: int) -> float:
    """Variance of the mean of an autocorrelated series by batch means."""
    b = max(2, min(batches, len(x) // 2))
    size = len(x) // b
    means = x[: b * size].reshape(b, size).mean(axis=1)
    return float(means.var(ddof=1) / b)


def _overlap_ess(g: np.ndarray, dt: float) -> float:
    """Relative effective sample size of importance weights ``exp(dt * g)``."""
    logw = dt * (g - g.max())
    w = np.exp(logw - logw.max())
    return float(w.sum() ** 2 / (len(w) * (w ** 2).sum()))


def path_sampling_loglik(m: ModelSpec, s_obs, cov: CovariateStore | None, p_obs: Partition,
                         pc: PathConfig | None = None) -> PathResult:
    """Estimate the log-likelihood of ``p_obs`` under ``m`` (with its fitted alpha)."""
    pc = pc or PathConfig()
    s_obs = np.asarray(s_obs, dtype=float)
    alpha0, ll0 = reference_loglik(m.specs, s_obs, p_obs.n, m.bounds)
    direction = m.alpha - alpha0
    if not np.any(direction):
        return PathResult(ll0, 0.0, ll0, alpha0, 0.0)
    ts = bridge_points(pc.M, pc.rule)
    chain = MHChain(m.with_alpha(alpha0), cov, p_obs, pc.mixture, pc.seed, pc.bounds_mode, pc.backend)
    values = np.zeros(len(ts))
    variances = np.zeros(len(ts))
    series = []
    for b, t in enumerate(ts):
        chain.set_alpha(t * m.alpha + (1 - t) * alpha0)
        chain.step(pc.burn_in)
        _, stats = chain.sample(pc.draws_per_bridge, pc.thinning)
        g = stats @ direction
        series.append(g)
        values[b] = g.mean()
        variances[b] = _batch_variance_of_mean(g, pc.batches)
    # overlap between neighbouring bridges: reweight draws at t to t + dt
    min_ess = 1.0
    for b in range(len(ts) - 1):
        dt = ts[b + 1] - ts[b]
        min_ess = min(min_ess, _overlap_ess(series[b], dt), _overlap_ess(series[b + 1], -dt))
    if min_ess < pc.min_overlap_ess:
        raise BridgeOverlapError(
            f"neighbouring bridges barely overlap (relative ESS {min_ess:.3f}); increase M"
        )
    lam = path_integral(values, pc.rule)
    w = _quadrature_weights(len(ts), pc.rule)
    se = math.sqrt(float((w ** 2 * variances).sum()))
    ll = ll0 + float(direction @ s_obs) - lam
    return PathResult(ll, se, ll0, alpha0, lam, ts, values, min_ess)
