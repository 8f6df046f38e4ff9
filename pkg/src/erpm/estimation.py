"""Method-of-moments (= maximum likelihood) estimation by stochastic approximation.

The moment equation ``E_alpha[s] = s_obs`` is solved in three phases:

1. simulate at the starting value to estimate the scaling matrix ``D0`` (the
   statistics' covariance, off-diagonals damped) and take one Newton-like step;
2. run ``R`` subphases of Robbins-Monro updates
   ``alpha <- alpha - a_r D0^{-1} (s(p_N) - s_obs)`` with halving gains, each
   subphase restarting from the average of the previous one;
3. simulate at the final value to check convergence ratios and estimate
   standard errors from the inverse covariance of the statistics.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegeneracyError, DegenerateStatisticError, MLEAtInfinityError
from .exact import ModelSpec, newton_mle_size_only
from .partition import Partition, respects_bounds
from .sampler import MHChain, ProposalMixture, autocorrelation
from .statistics import CovariateStore, StatisticSpec

__all__ = [
    "EstimationConfig",
    "EstimationResult",
    "estimate",
    "initial_alpha",
    "phase1_scaling",
    "phase2_iterate",
    "phase3_assess",
    "gain_sequence",
    "subphase_lengths",
    "significance_stars",
    "is_converged",
    "probability_ratio",
    "format_probability_ratio",
]


@dataclass
class EstimationConfig:
    M1: int = 400
    R: int = 4
    gain: float = 0.1
    subphase_base: float = 100.0
    subphase_max_factor: int = 20
    M3: int = 1000
    offdiag_damping: float = 0.2
    divergence_bound: float = 50.0
    burn_in: int = 2000
    thinning: int = 10
    max_thinning: int = 4096
    autocorrelation_limit: float = 0.4
    convergence_limit: float = 0.1
    max_runs: int = 4
    mixture: ProposalMixture | None = None
    bounds_mode: str = "reject_invalid"
    backend: str | None = None

    def __post_init__(self):
        if self.M1 < 2 or self.M3 < 2:
            raise ValueError("M1 and M3 must be at least 2")
        if self.R < 1:
            raise ValueError("R must be at least 1")
        if not 0.0 <= self.offdiag_damping <= 1.0:
            raise ValueError("offdiag_damping must lie in [0, 1]")
        if self.gain < 0:
            raise ValueError("gain must be nonnegative")
        if self.thinning < 1 or self.max_thinning < self.thinning:
            raise ValueError("need 1 <= thinning <= max_thinning")
        if self.max_runs < 1:
            raise ValueError("max_runs must be at least 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mixture"] = self.mixture.to_dict() if self.mixture is not None else None
        return d


def gain_sequence(a: float, R: int) -> list[float]:
    """Gains ``a / 2^(r-1)`` for subphases ``r = 1..R``."""
    return [a / 2 ** (r - 1) for r in range(1, R + 1)]


def subphase_lengths(base: float, R: int, max_factor: int = 20) -> list[tuple[int, int]]:
    """(minimum, maximum) number of updates per subphase, growing like ``2^(4r/3)``."""
    out = []
    for r in range(1, R + 1):
        lo = math.ceil(base * 2 ** (4 * r / 3))
        out.append((lo, max_factor * lo))
    return out


def significance_stars(wald: float) -> str:
    z = abs(wald)
    if z > 3.29:
        return "***"
    if z > 2.58:
        return "**"
    if z > 2.0:
        return "*"
    return ""


def is_converged(ratios, limit: float = 0.1) -> bool:
    """All convergence ratios within ``limit`` in absolute value."""
    return bool(np.max(np.abs(np.asarray(ratios, dtype=float))) <= limit)


def probability_ratio(coefficient: float, change: float = 1.0) -> float:
    """Multiplicative change in a partition's probability when a statistic changes by ``change``."""
    return math.exp(coefficient * change)


def format_probability_ratio(coefficient: float, change: float = 1.0) -> str:
    return f"exp({coefficient * change:.2f}) = {probability_ratio(coefficient, change):.2f}"


@dataclass
class EstimationResult:
    names: list[str]
    alpha_hat: np.ndarray
    standard_errors: np.ndarray
    wald_ratios: np.ndarray
    convergence_ratios: np.ndarray
    converged: bool
    s_obs: np.ndarray
    alpha0: np.ndarray
    alpha1: np.ndarray
    D0: np.ndarray
    thinning: int
    phase3_mean_stats: np.ndarray
    phase3_sd: np.ndarray
    phase3_covariance: np.ndarray
    phase1_stats: np.ndarray
    phase2_alpha: list[np.ndarray]
    phase3_stats: np.ndarray
    runs: int
    seed: int
    specs: list[StatisticSpec] = field(default_factory=list)
    config: EstimationConfig | None = None

    @property
    def max_convergence_ratio(self) -> float:
        return float(np.max(np.abs(self.convergence_ratios)))

    def stars(self) -> list[str]:
        if not self.converged:
            return ["" for _ in self.names]
        return [significance_stars(w) for w in self.wald_ratios]

    def to_dict(self, traces: bool = True) -> dict:
        d = {
            "names": list(self.names),
            "specs": [s.to_dict() for s in self.specs],
            "alpha_hat": self.alpha_hat.tolist(),
            "standard_errors": self.standard_errors.tolist(),
            "wald_ratios": self.wald_ratios.tolist(),
            "significance": self.stars(),
            "convergence_ratios": self.convergence_ratios.tolist(),
            "max_convergence_ratio": self.max_convergence_ratio,
            "converged": bool(self.converged),
            "s_obs": self.s_obs.tolist(),
            "alpha0": self.alpha0.tolist(),
            "alpha1": self.alpha1.tolist(),
            "D0": self.D0.tolist(),
            "thinning": int(self.thinning),
            "phase3_mean_stats": self.phase3_mean_stats.tolist(),
            "phase3_sd": self.phase3_sd.tolist(),
            "phase3_covariance": self.phase3_covariance.tolist(),
            "runs": int(self.runs),
            "seed": int(self.seed),
            "config": self.config.to_dict() if self.config is not None else None,
        }
        if traces:
            d["traces"] = {
                "phase1_stats": self.phase1_stats.tolist(),
                "phase2_alpha": [a.tolist() for a in self.phase2_alpha],
                "phase3_stats": self.phase3_stats.tolist(),
            }
        return d


# -- phases -------------------------------------------------------------------------------


def initial_alpha(specs: Sequence[StatisticSpec], s_obs, n: int, bounds) -> np.ndarray:
    """Zeros, except the number-of-groups parameter, solved exactly on its own sub-model."""
    alpha = np.zeros(len(specs))
    idx = [k for k, s in enumerate(specs) if s.kind == "num_groups"]
    if not idx:
        return alpha
    k = idx[0]
    try:
        sub = newton_mle_size_only([specs[k]], [s_obs[k]], n, bounds)
    except MLEAtInfinityError as exc:
        raise DegeneracyError(
            "the observed number of groups is extreme for the support; the model is degenerate "
            f"({exc})"
        ) from exc
    alpha[k] = sub[0]
    return alpha


def _sample_with_thinning(chain: MHChain, num: int, thinning: int, cfg: EstimationConfig):
    """Draw ``num`` statistics, doubling the thinning until lag-1 autocorrelation is low."""
    while True:
        _, stats = chain.sample(num, thinning)
        ac = autocorrelation(stats, 1)
        if ac.max_abs() < cfg.autocorrelation_limit or thinning * 2 > cfg.max_thinning:
            return stats, thinning
        thinning *= 2


def _check_scaling(stats: np.ndarray, names: Sequence[str]) -> np.ndarray:
    sd = stats.std(axis=0, ddof=1)
    scale = np.maximum(np.abs(stats).max(axis=0), 1.0)
    flat = [names[k] for k in range(len(sd)) if sd[k] <= 1e-10 * scale[k]]
    if flat:
        raise DegenerateStatisticError(f"collinear or degenerate statistic: {', '.join(flat)} is constant")
    return sd


def phase1_scaling(chain: MHChain, alpha0, s_obs, cfg: EstimationConfig, names: Sequence[str],
                   thinning: int):
    """Returns ``(D0, alpha1, stats, thinning)``."""
    chain.set_alpha(alpha0)
    chain.step(cfg.burn_in)
    stats, thinning = _sample_with_thinning(chain, cfg.M1, thinning, cfg)
    _check_scaling(stats, names)
    cov = np.atleast_2d(np.cov(stats, rowvar=False))
    D0 = cov * cfg.offdiag_damping
    np.fill_diagonal(D0, np.diag(cov))
    corr = D0 / np.sqrt(np.outer(np.diag(D0), np.diag(D0)))
    if np.linalg.eigvalsh(corr).min() < 1e-8:
        raise DegenerateStatisticError("collinear or degenerate statistic: scaling matrix is singular")
    alpha1 = alpha0 - cfg.gain * np.linalg.solve(D0, stats.mean(axis=0) - s_obs)
    return D0, alpha1, stats, thinning


def phase2_iterate(chain: MHChain, alpha_start, D0, s_obs, cfg: EstimationConfig, thinning: int):
    """Robbins-Monro subphases; returns the final average and each subphase's iterates."""
    Dinv = np.linalg.inv(D0)
    alpha = np.array(alpha_start, dtype=float)
    traces = []
    for gain, (lo, hi) in zip(gain_sequence(cfg.gain, cfg.R), subphase_lengths(cfg.subphase_base, cfg.R,
                                                                               cfg.subphase_max_factor)):
        seq = np.zeros((hi, len(alpha)))
        first_sign = None
        crossed = np.zeros(len(alpha), dtype=bool)
        N = 0
        while N < hi:
            chain.set_alpha(alpha)
            dev = chain.draw(thinning) - s_obs
            sign = np.sign(dev)
            if first_sign is None:
                first_sign = sign
            crossed |= (sign != first_sign) | (sign == 0)
            alpha = alpha - gain * (Dinv @ dev)
            if not np.all(np.isfinite(alpha)) or np.max(np.abs(alpha)) > cfg.divergence_bound:
                raise DegeneracyError(
                    f"parameters diverged (|alpha| > {cfg.divergence_bound:g}); the model is likely "
                    "degenerate or the observed statistics are extreme, consider respecifying statistics"
                )
            seq[N] = alpha
            N += 1
            if N >= lo and crossed.all():
                break
        seq = seq[:N]
        traces.append(seq)
        alpha = seq.mean(axis=0)
    return alpha, traces


def phase3_assess(chain: MHChain, alpha_f, s_obs, cfg: EstimationConfig, names: Sequence[str],
                  thinning: int):
    """Returns ``(mean, sd, covariance, convergence_ratios, standard_errors, stats, thinning)``."""
    chain.set_alpha(alpha_f)
    chain.step(cfg.burn_in)
    stats, thinning = _sample_with_thinning(chain, cfg.M3, thinning, cfg)
    sd = _check_scaling(stats, names)
    mean = stats.mean(axis=0)
    cov = np.atleast_2d(np.cov(stats, rowvar=False))
    ratios = (mean - s_obs) / sd
    se = np.sqrt(np.diag(np.linalg.inv(cov)))
    return mean, sd, cov, ratios, se, stats, thinning


# -- driver --------------------------------------------------------------------------------


def _seeds(seed: int, count: int) -> list[int]:
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF)
    return [int(x) for x in ss.generate_state(count, dtype=np.uint64)]


def estimate(m: ModelSpec, s_obs, cov: CovariateStore | None, p_obs: Partition,
             cfg: EstimationConfig | None = None, seed: int = 0,
             alpha_start=None) -> EstimationResult:
    """Fit ``m`` (its alpha is ignored) to the observed partition.

    Phases 2 and 3 are repeated from the latest estimate, up to
    ``cfg.max_runs`` runs in total, while any convergence ratio exceeds
    ``cfg.convergence_limit``; the result records whether it converged.
    """
    cfg = cfg or EstimationConfig()
    s_obs = np.asarray(s_obs, dtype=float)
    names = m.names
    n = p_obs.n
    if cfg.bounds_mode == "reject_invalid" and not respects_bounds(p_obs, m.bounds):
        raise ValueError("observed partition violates the size bounds")
    alpha0 = initial_alpha(m.specs, s_obs, n, m.bounds) if alpha_start is None \
        else np.asarray(alpha_start, dtype=float)
    mixture = cfg.mixture if cfg.mixture is not None else ProposalMixture.default_for(m.specs)
    chain = MHChain(m.with_alpha(alpha0), cov, p_obs, mixture, _seeds(seed, 1)[0], cfg.bounds_mode,
                    cfg.backend)
    thinning = cfg.thinning
    start = alpha0
    for run in range(1, cfg.max_runs + 1):
        D0, alpha1, p1_stats, thinning = phase1_scaling(chain, start, s_obs, cfg, names, thinning)
        alpha_f, p2 = phase2_iterate(chain, alpha1, D0, s_obs, cfg, thinning)
        mean, sd, covm, ratios, se, p3_stats, thinning = phase3_assess(
            chain, alpha_f, s_obs, cfg, names, thinning)
        converged = is_converged(ratios, cfg.convergence_limit)
        if converged or run == cfg.max_runs:
            break
        start = alpha_f
    return EstimationResult(
        names=names, alpha_hat=alpha_f, standard_errors=se, wald_ratios=alpha_f / se,
        convergence_ratios=ratios, converged=converged, s_obs=s_obs, alpha0=alpha0, alpha1=alpha1,
        D0=D0, thinning=thinning, phase3_mean_stats=mean, phase3_sd=sd, phase3_covariance=covm,
        phase1_stats=p1_stats, phase2_alpha=p2, phase3_stats=p3_stats, runs=run, seed=seed,
        specs=list(m.specs), config=cfg,
    )
