"""Set partitions in restricted-growth encoding and the three move relations.

A partition of ``n`` actors is stored as a tuple ``membership`` where
``membership[i]`` is the group of actor ``i``. Groups are numbered in order of
first occurrence, so two encodings are equal iff the partitions are equal.
"""

from __future__ import annotations

import csv
import enum
import itertools
import math
from collections import Counter
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

__all__ = [
    "Partition",
    "SizeBounds",
    "RelationKind",
    "canonicalize",
    "to_comembership_matrix",
    "block_sizes",
    "neighbors",
    "neighbor_count",
    "respects_bounds",
    "read_partition_csv",
    "write_partition_csv",
]


class RelationKind(enum.Enum):
    MERGE_SPLIT = "merge_split"
    PERMUTE = "permute"
    TRANSFER = "transfer"


@dataclass(frozen=True)
class SizeBounds:
    """Allowed block sizes ``[sigma_min, sigma_max]``; ``sigma_max=None`` is unbounded."""

    sigma_min: int = 1
    sigma_max: int | None = None

    def __post_init__(self):
        if self.sigma_min < 1:
            raise ValueError(f"sigma_min must be >= 1, got {self.sigma_min}")
        if self.sigma_max is not None and self.sigma_max < self.sigma_min:
            raise ValueError(
                f"sigma_max ({self.sigma_max}) must be >= sigma_min ({self.sigma_min})"
            )

    def upper(self, n: int) -> int:
        """Effective maximum block size for ``n`` actors."""
        return n if self.sigma_max is None else min(self.sigma_max, n)

    def allows(self, size: int) -> bool:
        return size >= self.sigma_min and (self.sigma_max is None or size <= self.sigma_max)

    def is_trivial(self, n: int) -> bool:
        return self.sigma_min == 1 and self.upper(n) == n


@dataclass(frozen=True)
class Partition:
    membership: tuple[int, ...]

    def __post_init__(self):
        m = self.membership
        if not m:
            raise ValueError("a partition needs at least one actor")
        top = -1
        for g in m:
            if g < 0 or g > top + 1:
                raise ValueError(f"not a restricted-growth string: {m!r}")
            top = max(top, g)

    @classmethod
    def from_blocks(cls, blocks: Iterable[Iterable[int]], n: int | None = None) -> "Partition":
        """Build from blocks of 0-based actor indices."""
        blocks = [list(b) for b in blocks]
        if n is None:
            n = sum(len(b) for b in blocks)
        raw = [-1] * n
        for label, block in enumerate(blocks):
            if not block:
                raise ValueError("empty block")
            for i in block:
                if raw[i] != -1:
                    raise ValueError(f"actor {i} appears in two blocks")
                raw[i] = label
        if -1 in raw:
            raise ValueError("blocks do not cover all actors")
        return canonicalize(raw)

    @property
    def n(self) -> int:
        return len(self.membership)

    @property
    def num_groups(self) -> int:
        return max(self.membership) + 1

    def blocks(self) -> list[tuple[int, ...]]:
        out: list[list[int]] = [[] for _ in range(self.num_groups)]
        for i, g in enumerate(self.membership):
            out[g].append(i)
        return [tuple(b) for b in out]

    def __len__(self) -> int:
        return len(self.membership)

    def __repr__(self) -> str:
        inner = ", ".join("{" + ",".join(str(i + 1) for i in b) + "}" for b in self.blocks())
        return f"Partition({inner})"


def canonicalize(raw_membership: Sequence[Hashable]) -> Partition:
    """Relabel arbitrary group labels into first-occurrence order.

    >>> canonicalize([7, 7, 3, 3]).membership
    (0, 0, 1, 1)
    """
    if len(raw_membership) == 0:
        raise ValueError("cannot canonicalize an empty membership")
    labels: dict[Hashable, int] = {}
    out = []
    for g in raw_membership:
        if g not in labels:
            labels[g] = len(labels)
        out.append(labels[g])
    return Partition(tuple(out))


def to_comembership_matrix(p: Partition):
    import numpy as np

    m = np.asarray(p.membership)
    return (m[:, None] == m[None, :]).astype(np.int64)


def block_sizes(p: Partition) -> list[int]:
    """Block sizes ordered by canonical block label."""
    sizes = [0] * p.num_groups
    for g in p.membership:
        sizes[g] += 1
    return sizes


def respects_bounds(p: Partition, b: SizeBounds) -> bool:
    return all(b.allows(s) for s in block_sizes(p))


# -- relations ---------------------------------------------------------------


def _merge_split_neighbors(p: Partition) -> set[Partition]:
    blocks = p.blocks()
    out = set()
    for a, b in itertools.combinations(range(len(blocks)), 2):
        new = [blk for k, blk in enumerate(blocks) if k not in (a, b)]
        new.append(blocks[a] + blocks[b])
        out.add(Partition.from_blocks(new, p.n))
    for k, blk in enumerate(blocks):
        if len(blk) < 2:
            continue
        rest = blocks[:k] + blocks[k + 1 :]
        first, others = blk[0], blk[1:]
        # first member stays in side A; B must be nonempty
        for mask in range(1, 2 ** len(others)):
            side_b = [x for j, x in enumerate(others) if mask >> j & 1]
            side_a = [first] + [x for j, x in enumerate(others) if not mask >> j & 1]
            out.add(Partition.from_blocks(rest + [side_a, side_b], p.n))
    return out


def _transfer_neighbors(p: Partition) -> set[Partition]:
    out = set()
    k = p.num_groups
    for i in range(p.n):
        for dest in range(k + 1):
            if dest == p.membership[i]:
                continue
            raw = list(p.membership)
            raw[i] = dest  # dest == k opens a new singleton
            q = canonicalize(raw)
            if q != p:
                out.add(q)
    return out


def _permute_neighbors(p: Partition) -> set[Partition]:
    out = set()
    m = p.membership
    for i, j in itertools.combinations(range(p.n), 2):
        if m[i] == m[j]:
            continue
        raw = list(m)
        raw[i], raw[j] = m[j], m[i]
        q = canonicalize(raw)
        if q != p:
            out.add(q)
    return out


_NEIGHBOR_FUNCS = {
    RelationKind.MERGE_SPLIT: _merge_split_neighbors,
    RelationKind.TRANSFER: _transfer_neighbors,
    RelationKind.PERMUTE: _permute_neighbors,
}


def neighbors(p: Partition, r: RelationKind) -> set[Partition]:
    """All distinct partitions related to ``p`` by ``r`` (brute force)."""
    return _NEIGHBOR_FUNCS[RelationKind(r)](p)


def count_from_sizes(sizes: Iterable[int], r: RelationKind) -> int:
    """Closed-form number of distinct neighbors given the block-size multiset."""
    sizes = list(sizes)
    r = RelationKind(r)
    k = len(sizes)
    n = sum(sizes)
    hist = Counter(sizes)
    singles, pairs = hist.get(1, 0), hist.get(2, 0)
    if r is RelationKind.MERGE_SPLIT:
        return math.comb(k, 2) + sum(2 ** (s - 1) - 1 for s in sizes)
    if r is RelationKind.TRANSFER:
        raw = sum(s * ((k - 1) + (s >= 2)) for s in sizes)
        # {i,j} -> {i},{j} reachable by moving either member; two singletons
        # merge whichever of the two moves
        return raw - pairs - math.comb(singles, 2)
    cross = (n * n - sum(s * s for s in sizes)) // 2
    # two 2-blocks: swaps (a,c) and (b,d) coincide; two singletons: swap is a no-op
    return cross - 2 * math.comb(pairs, 2) - math.comb(singles, 2)


def neighbor_count(p: Partition, r: RelationKind) -> int:
    return count_from_sizes(block_sizes(p), r)


# -- text format ---------------------------------------------------------------


def read_partition_csv(path) -> tuple[list[str], Partition]:
    """Read ``actor_id,group_id`` rows; returns actor ids in file order."""
    ids: list[str] = []
    groups: list[str] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"actor_id", "group_id"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected header 'actor_id,group_id'")
        for row in reader:
            aid = row["actor_id"].strip()
            if aid in ids:
                raise ValueError(f"{path}: duplicate actor row {aid!r}")
            ids.append(aid)
            groups.append(row["group_id"].strip())
    if not ids:
        raise ValueError(f"{path}: no actors")
    return ids, canonicalize(groups)


def write_partition_csv(path, p: Partition, actor_ids: Sequence[str] | None = None) -> None:
    if actor_ids is None:
        actor_ids = [str(i + 1) for i in range(p.n)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["actor_id", "group_id"])
        for aid, g in zip(actor_ids, p.membership):
            w.writerow([aid, g])
