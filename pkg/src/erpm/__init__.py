"""Exponential random partition models.

Probability of a partition ``p`` of ``n`` actors: ``exp(alpha . s(p)) / kappa(alpha)``,
where ``s`` sums block-level statistics over the groups of ``p``.
"""

from .combinatorics import bell, bell_restricted, stirling2, stirling2_restricted
from .errors import (
    BridgeOverlapError,
    DegeneracyError,
    DegenerateStatisticError,
    EmptySupportError,
    EnumerationCapError,
    ERPMError,
    MLEAtInfinityError,
    NotSizeOnlyError,
    UnreachableSupportError,
)
from .estimation import EstimationConfig, EstimationResult, estimate
from .exact import (
    ModelSpec,
    exact_distribution,
    exact_expected_statistics,
    kappa_recursive,
    log_kappa_recursive,
    newton_mle_size_only,
)
from .likelihood import PathConfig, path_sampling_loglik, reference_loglik
from .partition import Partition, RelationKind, SizeBounds, canonicalize, neighbor_count, neighbors
from .sampler import ChainConfig, ProposalMixture, run_chain
from .statistics import CovariateStore, StatisticSpec, evaluate, observed_statistics
from .kernel import BACKEND

__version__ = "0.1.0"
