import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from erpm.exact import enumerate_partitions
from erpm.partition import (
    Partition,
    RelationKind,
    SizeBounds,
    block_sizes,
    canonicalize,
    count_from_sizes,
    neighbor_count,
    neighbors,
    read_partition_csv,
    respects_bounds,
    to_comembership_matrix,
    write_partition_csv,
)

memberships = st.lists(st.integers(0, 5), min_size=1, max_size=9)


class TestCanonical:
    def test_string_labels(self):
        p = canonicalize(["teamA", "teamB", "teamA", "x"])
        assert p.membership == (0, 1, 0, 2)
        assert p.num_groups == 3

    def test_rejects_non_rgs(self):
        with pytest.raises(ValueError):
            Partition((1, 0))
        with pytest.raises(ValueError):
            Partition((0, 2, 1))

    def test_from_blocks_round_trip(self):
        p = Partition.from_blocks([[2, 3], [0], [1, 4]])
        assert p.membership == (0, 1, 2, 2, 1)
        assert sorted(p.blocks()) == [(0,), (1, 4), (2, 3)]

    @given(memberships)
    def test_canonical_is_idempotent(self, raw):
        p = canonicalize(raw)
        assert canonicalize(p.membership) == p
        # same grouping => same encoding
        relabel = {g: f"L{7 - g}" for g in set(raw)}
        assert canonicalize([relabel[g] for g in raw]) == p

    @given(memberships)
    def test_comembership(self, raw):
        p = canonicalize(raw)
        C = to_comembership_matrix(p)
        assert np.array_equal(C, C.T)
        assert np.all(np.diag(C) == 1)
        for i, j in itertools.combinations(range(p.n), 2):
            assert C[i, j] == (raw[i] == raw[j])


class TestBounds:
    def test_defaults(self):
        b = SizeBounds()
        assert b.upper(7) == 7
        assert b.is_trivial(7)

    def test_invalid(self):
        with pytest.raises(ValueError):
            SizeBounds(3, 2)
        with pytest.raises(ValueError):
            SizeBounds(0, 2)

    def test_respects(self):
        p = Partition.from_blocks([[0, 1], [2, 3, 4]])
        assert respects_bounds(p, SizeBounds(2, 3))
        assert not respects_bounds(p, SizeBounds(3, 5))


class TestNeighbors:
    def test_merge_from_singletons(self):
        p = Partition((0, 1, 2))
        nb = neighbors(p, RelationKind.MERGE_SPLIT)
        assert len(nb) == 3
        assert all(q.num_groups == 2 for q in nb)

    def test_one_block_split_counts(self):
        p = Partition((0, 0, 0))
        assert neighbor_count(p, RelationKind.MERGE_SPLIT) == 3
        assert neighbor_count(p, RelationKind.PERMUTE) == 0

    def test_relations_are_symmetric(self):
        for p in enumerate_partitions(5):
            for r in RelationKind:
                for q in neighbors(p, r):
                    assert p in neighbors(q, r)
                    assert q != p

    def test_permute_keeps_size_multiset(self):
        for p in enumerate_partitions(6):
            for q in neighbors(p, RelationKind.PERMUTE):
                assert sorted(block_sizes(q)) == sorted(block_sizes(p))

    @pytest.mark.parametrize("n", range(1, 8))
    def test_closed_forms_match_brute_force(self, n):
        for p in enumerate_partitions(n):
            for r in RelationKind:
                assert neighbor_count(p, r) == len(neighbors(p, r)), (p, r)

    def test_count_depends_on_sizes_only(self):
        assert count_from_sizes([2, 2, 1], RelationKind.TRANSFER) == \
            len(neighbors(Partition.from_blocks([[0, 1], [2, 3], [4]]), RelationKind.TRANSFER))


class TestCsv:
    def test_round_trip(self, tmp_path):
        p = Partition.from_blocks([[0, 3], [1], [2, 4]])
        path = tmp_path / "p.csv"
        write_partition_csv(path, p, ["a", "b", "c", "d", "e"])
        ids, q = read_partition_csv(path)
        assert ids == ["a", "b", "c", "d", "e"]
        assert q == p

    def test_duplicate_actor(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("actor_id,group_id\n1,a\n1,b\n")
        with pytest.raises(ValueError, match="duplicate"):
            read_partition_csv(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("id,group\n1,a\n")
        with pytest.raises(ValueError):
            read_partition_csv(path)
