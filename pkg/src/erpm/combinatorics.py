"""Exact counting recursions: Bell and Stirling numbers, plain and size-restricted.

All recursions condition on the size ``s`` of the block holding the last
actor: there are ``C(N-1, N-s)`` ways to pick its companions, and the other
``N-s`` actors are partitioned recursively. Restricting ``s`` to the allowed
range gives the restricted variants.
"""

from __future__ import annotations

from functools import lru_cache
from math import comb

from .partition import SizeBounds

__all__ = ["bell", "bell_restricted", "stirling2", "stirling2_restricted", "binomial"]

binomial = comb


@lru_cache(maxsize=None)
def _bell_table(n: int) -> tuple[int, ...]:
    table = [1]
    for m in range(n):
        table.append(sum(comb(m, i) * table[i] for i in range(m + 1)))
    return tuple(table)


def bell(n: int) -> int:
    """Number of partitions of ``n`` labeled elements."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    return _bell_table(n)[n]


def _size_range(N: int, bounds: SizeBounds) -> range:
    hi = N if bounds.sigma_max is None else min(bounds.sigma_max, N)
    return range(bounds.sigma_min, hi + 1)


@lru_cache(maxsize=None)
def _bell_restricted_table(n: int, bounds: SizeBounds) -> tuple[int, ...]:
    table = [1]
    for N in range(1, n + 1):
        table.append(sum(comb(N - 1, N - s) * table[N - s] for s in _size_range(N, bounds)))
    return tuple(table)


def bell_restricted(n: int, bounds: SizeBounds) -> int:
    """Number of partitions of ``n`` elements with every block size within ``bounds``."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    return _bell_restricted_table(n, bounds)[n]


@lru_cache(maxsize=None)
def _stirling_table(n: int, bounds: SizeBounds) -> tuple[tuple[int, ...], ...]:
    rows = [[1] + [0] * n]
    for N in range(1, n + 1):
        row = [0] * (n + 1)
        for m in range(1, N + 1):
            row[m] = sum(
                comb(N - 1, N - s) * rows[N - s][m - 1] for s in _size_range(N, bounds)
            )
        rows.append(row)
    return tuple(tuple(r) for r in rows)


def stirling2_restricted(n: int, m: int, bounds: SizeBounds) -> int:
    """Partitions of ``n`` elements into exactly ``m`` blocks with sizes within ``bounds``."""
    if n < 0 or m < 0:
        raise ValueError("n and m must be nonnegative")
    if m > n:
        return 0
    return _stirling_table(n, bounds)[n][m]


def stirling2(n: int, m: int) -> int:
    """Stirling number of the second kind ``{n brace m}``."""
    return stirling2_restricted(n, m, SizeBounds())
