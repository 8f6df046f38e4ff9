import json
import math

import numpy as np
import pytest

from erpm.diagnostics import (
    QUANTILES,
    auxiliary_statistics,
    default_auxiliaries,
    gof,
    intraclass_correlation,
)
from erpm.exact import ModelSpec
from erpm.partition import Partition
from erpm.sampler import ChainConfig
from erpm.statistics import CovariateStore, StatisticSpec

from conftest import make_covariates

WORKED = Partition.from_blocks([[0], [1, 2], [3, 4, 5], [6, 7, 8, 9]])


class TestAuxiliaries:
    def test_size_histogram(self):
        aux = auxiliary_statistics(WORKED, None, ["size_hist"])
        hist = {int(k.split(":")[1]): v for k, v in aux.values.items() if v}
        assert hist == {1: 1, 2: 1, 3: 1, 4: 1}
        assert aux["size_hist:5"] == 0

    def test_constant_attribute_same_share(self):
        cov = CovariateStore(10, attributes={"c": ["a"] * 10})
        assert auxiliary_statistics(WORKED, cov, ["same_attr_prop:c"])["same_attr_prop:c"] == 1.0

    def test_icc_of_block_index(self):
        groups = np.asarray(WORKED.membership)
        assert intraclass_correlation(groups.astype(float), groups) == pytest.approx(1.0, abs=1e-12)

    def test_icc_undefined_for_single_block(self):
        cov = CovariateStore(4, attributes={"x": [1.0, 2.0, 3.0, 4.0]})
        aux = auxiliary_statistics(Partition((0, 0, 0, 0)), cov, ["icc:x"])
        assert math.isnan(aux["icc:x"])
        assert "icc:x" in aux.undefined

    def test_size_correlation(self):
        cov = CovariateStore(10, attributes={"x": [float(s) for s in (1, 2, 2, 3, 3, 3, 4, 4, 4, 4)]})
        assert auxiliary_statistics(WORKED, cov, ["attr_size_corr:x"])["attr_size_corr:x"] == \
            pytest.approx(1.0)

    def test_difference_buckets(self):
        cov = CovariateStore(4, attributes={"x": [0.0, 1.0, 5.0, 9.5]})
        aux = auxiliary_statistics(Partition((0, 0, 0, 1)), cov, ["diff_ties:x:2"])
        # within-group dyads: |0-1| = 1, |0-5| = 5, |1-5| = 4
        assert aux["diff_ties:x:0-2"] == 1
        assert aux["diff_ties:x:4-6"] == 2
        assert sum(v for k, v in aux.values.items()) == 3

    def test_size_by_category(self):
        cov = CovariateStore(10, attributes={"c": ["a"] + ["b"] * 9})
        aux = auxiliary_statistics(WORKED, cov, ["size_by_category:c"])
        assert aux["size_by_category:c=a"] == 1.0
        assert aux["size_by_category:c=b"] == pytest.approx((2 * 2 + 3 * 3 + 4 * 4) / 9)

    def test_defaults(self):
        names = default_auxiliaries(make_covariates(10))
        assert "icc:age" in names and "same_attr_prop:sex" in names

    def test_unknown(self):
        with pytest.raises(ValueError):
            auxiliary_statistics(WORKED, CovariateStore(10, {"x": [1.0] * 10}), ["median:x"])


class TestGof:
    def test_zero_sims(self):
        with pytest.raises(ValueError):
            gof(ModelSpec([StatisticSpec("num_groups")], [0.0]), None, WORKED, 0)

    def test_report(self, tmp_path):
        cov = make_covariates(10, seed=3)
        m = ModelSpec([StatisticSpec("num_groups")], [0.2])
        rep = gof(m, cov, WORKED, 200, seed=1, cfg=ChainConfig(burn_in=200, thinning=10))
        assert rep.num_sims == 200
        assert rep.quantiles.shape == (len(QUANTILES), len(rep.names))
        q = rep.quantiles
        ok = ~np.isnan(q).any(axis=0)
        assert np.all(np.diff(q[:, ok], axis=0) >= 0)
        d = rep.to_dict()
        json.dumps(d)
        assert d["quantile_rule"].startswith("type 7")
        rep.write_values_csv(tmp_path / "v.csv")
        lines = (tmp_path / "v.csv").read_text().splitlines()
        assert lines[0] == "statistic,replicate,value"
        assert len(lines) == 1 + len(rep.names) * 201

    def test_sufficient_statistic_matches(self):
        # a model fitted by moments reproduces its own statistic on average
        from erpm.exact import newton_mle_size_only
        spec = StatisticSpec("num_groups_of_size", k=4)
        specs = [StatisticSpec("num_groups"), spec]
        alpha = newton_mle_size_only(specs, [4.0, 1.0], 10)
        rep = gof(ModelSpec(specs, alpha), None, WORKED, 2000, seed=2)
        s = rep.summary("size_hist:4")
        assert abs(s["mean"] - s["observed"]) / s["sd"] < 0.1
        assert not s["flagged"]

    def test_deterministic(self):
        m = ModelSpec([StatisticSpec("num_groups")], [0.2])
        a = gof(m, None, WORKED, 30, seed=5)
        b = gof(m, None, WORKED, 30, seed=5)
        assert np.array_equal(a.simulated, b.simulated)
