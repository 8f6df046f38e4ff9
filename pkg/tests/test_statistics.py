import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from erpm.exact import rgs_array
from erpm.partition import Partition, canonicalize
from erpm.statistics import (
    AttributeColumn,
    CovariateStore,
    StatisticSpec,
    UnknownCovariateError,
    delta_evaluate,
    evaluate,
    evaluate_batch,
    is_size_only,
)

from conftest import make_covariates

ALL_SPECS = [
    StatisticSpec("num_groups"),
    StatisticSpec("num_groups_of_size", k=2),
    StatisticSpec("sum_log_factorial_sizes"),
    StatisticSpec("sum_squared_sizes"),
    StatisticSpec("dyadic_homophily", attribute="sex", similarity="match"),
    StatisticSpec("dyadic_homophily", attribute="age", similarity="absdiff"),
    StatisticSpec("dyadic_homophily", attribute="age", similarity="negabsdiff", normalized=True),
    StatisticSpec("dyadic_covariate", covariate="tie"),
    StatisticSpec("dyadic_sociability", attribute="age"),
    StatisticSpec("group_homophily", attribute="lang", form="all_same"),
    StatisticSpec("group_homophily", attribute="lang", form="distinct_count"),
    StatisticSpec("group_homophily", attribute="age", form="range"),
    StatisticSpec("group_homophily", attribute="age", form="variance", normalized=True),
    StatisticSpec("group_sociability", attribute="age"),
]

# four groups of sizes 1..4
FOUR_BLOCKS = Partition.from_blocks([[0], [1, 2], [3, 4, 5], [6, 7, 8, 9]])


class TestSpecs:
    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            StatisticSpec("num_cliques")

    def test_missing_options(self):
        with pytest.raises(ValueError):
            StatisticSpec("dyadic_homophily", attribute="a")
        with pytest.raises(ValueError):
            StatisticSpec("num_groups_of_size")

    def test_size_only(self):
        assert is_size_only(ALL_SPECS[:4])
        assert not is_size_only(ALL_SPECS[:5])

    def test_unknown_covariate(self):
        cov = CovariateStore(3, attributes={"a": [1, 2, 3]})
        with pytest.raises(UnknownCovariateError):
            cov.validate([StatisticSpec("dyadic_covariate", covariate="x")])


class TestStructural:
    def test_four_block_values(self):
        specs = ALL_SPECS[:4]
        s = evaluate(FOUR_BLOCKS, specs)
        assert s[0] == 4
        assert s[1] == 1
        assert s[2] == pytest.approx(math.log(1 * 1 * 2 * 6))  # sum of log((size - 1)!)
        assert s[3] == 1 + 4 + 9 + 16


class TestCovariate:
    def setup_method(self):
        self.cov = CovariateStore(
            4,
            attributes={"g": ["a", "a", "b", None], "x": [1.0, 3.0, 6.0, float("nan")]},
            dyadic={"w": np.array([[0, 2, 0, 0], [2, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 0.0]])},
        )
        self.p = Partition.from_blocks([[0, 1, 2], [3]])

    def value(self, **kw):
        return float(evaluate(self.p, [StatisticSpec(**kw)], self.cov)[0])

    def test_match(self):
        assert self.value(kind="dyadic_homophily", attribute="g", similarity="match") == 1

    def test_absdiff(self):
        assert self.value(kind="dyadic_homophily", attribute="x", similarity="absdiff") == 2 + 5 + 3

    def test_normalized_dyadic(self):
        v = self.value(kind="dyadic_covariate", covariate="w", normalized=True)
        assert v == pytest.approx(3 / 3)

    def test_group_forms(self):
        assert self.value(kind="group_homophily", attribute="x", form="range") == 5
        assert self.value(kind="group_homophily", attribute="g", form="distinct_count") == 2 + 1
        assert self.value(kind="group_homophily", attribute="g", form="all_same") == 1  # singleton {3}
        var = np.var([1.0, 3.0, 6.0])
        assert self.value(kind="group_homophily", attribute="x", form="variance") == pytest.approx(var)

    def test_sociability(self):
        assert self.value(kind="dyadic_sociability", attribute="x") == pytest.approx(2 * (1 + 3 + 6))
        assert self.value(kind="group_sociability", attribute="x") == pytest.approx(10.0)

    def test_missing_codes(self):
        col = AttributeColumn.from_raw(["a", "", "NA", "b"])
        assert list(col.codes) == [0, -1, -1, 1]


class TestEvaluationRoutes:
    def test_batch_matches_single(self):
        cov = make_covariates(7, seed=4)
        rgs = rgs_array(7)
        batch = evaluate_batch(rgs, ALL_SPECS, cov)
        for t in range(0, len(rgs), 37):
            p = Partition(tuple(int(x) for x in rgs[t]))
            np.testing.assert_allclose(batch[t], evaluate(p, ALL_SPECS, cov), rtol=1e-12, atol=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.integers(0, 4), min_size=8, max_size=8),
           st.lists(st.integers(0, 4), min_size=8, max_size=8))
    def test_delta_equals_full(self, a, b):
        cov = make_covariates(8, seed=5)
        p, q = canonicalize(a), canonicalize(b)
        cached = evaluate(p, ALL_SPECS, cov)
        np.testing.assert_allclose(delta_evaluate(p, q, ALL_SPECS, cov, cached),
                                   evaluate(q, ALL_SPECS, cov), rtol=1e-9, atol=1e-9)
