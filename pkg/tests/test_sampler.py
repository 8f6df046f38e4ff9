import math
import warnings

import numpy as np
import pytest

from erpm.errors import EmptySupportError, UnreachableSupportError
from erpm.exact import ModelSpec, exact_distribution, rgs_array
from erpm.partition import Partition, RelationKind, SizeBounds, block_sizes, respects_bounds
from erpm.sampler import (
    ChainConfig,
    MHChain,
    ProposalMixture,
    accept_probability,
    autocorrelation,
    check_irreducible,
    propose,
    random_valid_partition,
    relation_probabilities,
    run_chain,
    run_chains,
    transition_matrix,
)
from erpm.statistics import StatisticSpec, evaluate

from conftest import covariate_specs, make_covariates

NG = StatisticSpec("num_groups")


class TestMixture:
    def test_permute_alone_rejected(self):
        with pytest.raises(ValueError):
            ProposalMixture(0, 1, 0)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            ProposalMixture(1, -1, 0)

    def test_defaults(self):
        assert ProposalMixture.default_for([NG]) == ProposalMixture(1, 0, 0)
        assert ProposalMixture.default_for(covariate_specs()) == ProposalMixture(1, 1, 1)
        np.testing.assert_allclose(ProposalMixture(2, 1, 1).weights, [0.5, 0.25, 0.25])

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ChainConfig(thinning=0)
        with pytest.raises(ValueError):
            ChainConfig(bounds_mode="sometimes")


class TestProposal:
    def test_merges_from_singletons_uniform(self):
        rng = np.random.default_rng(0)
        p = Partition((0, 1, 2))
        seen = {}
        for _ in range(3000):
            prop = propose(p, ProposalMixture(), rng)
            assert prop.forward_count == 3
            seen[prop.candidate] = seen.get(prop.candidate, 0) + 1
        assert len(seen) == 3
        assert all(abs(c / 3000 - 1 / 3) < 0.04 for c in seen.values())

    def test_split_counts(self):
        rng = np.random.default_rng(1)
        prop = propose(Partition((0, 0, 0)), ProposalMixture(), rng)
        assert prop.forward_count == 3
        assert prop.backward_count == 2  # one merge back, one split of the pair

    def test_permute_redrawn_on_single_block(self):
        probs = relation_probabilities(Partition((0, 0, 0, 0)), ProposalMixture(1, 1, 1))
        assert RelationKind.PERMUTE not in probs
        assert sum(probs.values()) == pytest.approx(1.0)

    def test_accept_examples(self):
        m = ModelSpec([NG], [0.0])
        p = Partition((0, 1, 2))
        assert accept_probability(m, None, [3], [3], 4, 4, p) == 1.0
        assert accept_probability(m, None, [3], [2], 3, 4, Partition((0, 0, 1))) == pytest.approx(0.75)
        m1 = ModelSpec([NG], [1.0])
        a = accept_probability(m1, None, [1], [2], 3, 2, Partition((0, 0, 1)))
        assert a == min(1.0, math.e * 3 / 2)
        m2 = ModelSpec([NG], [-1.0])
        a = accept_probability(m2, None, [1], [2], 3, 2, Partition((0, 0, 1)))
        assert a == pytest.approx(math.exp(-1) * 3 / 2)

    def test_invalid_candidate_rejected(self):
        m = ModelSpec([NG], [0.0], SizeBounds(2, 3))
        assert accept_probability(m, None, [1], [2], 3, 2, Partition((0, 0, 1))) == 0.0


class TestTransitionMatrix:
    @pytest.mark.parametrize("mixture", [ProposalMixture(), ProposalMixture(1, 1, 1),
                                         ProposalMixture(0, 1, 1), ProposalMixture(0, 0, 1)])
    def test_detailed_balance(self, mixture):
        cov = make_covariates(5, seed=3)
        m = ModelSpec(covariate_specs(), [0.4, 0.6, 0.9, -0.3], SizeBounds(1, 4))
        parts, P = transition_matrix(m, cov, mixture, 5)
        pi = np.array([exact_distribution(m, cov, 5).probability_of(p) for p in parts])
        flow = pi[:, None] * P
        assert np.max(np.abs(flow - flow.T)) < 1e-12
        np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(pi @ P, pi, atol=1e-12)


class TestRunChain:
    def test_uniform_n5(self):
        m = ModelSpec([NG], [0.0])
        trace = run_chain(m, None, ChainConfig(burn_in=100, thinning=20, seed=4, initial="random_valid"),
                          20000, n=5)
        keys = trace.memberships @ (5 ** np.arange(5))
        counts = np.unique(keys, return_counts=True)[1]
        assert len(counts) == 52
        p = 1 / 52
        se = math.sqrt(p * (1 - p) / 20000)
        # thinning 20 leaves little autocorrelation; allow 3 binomial s.e. plus slack for it
        assert np.all(np.abs(counts / 20000 - p) < 3 * se * 1.5)

    def test_reproducible(self):
        cov = make_covariates(9, seed=1)
        m = ModelSpec(covariate_specs(), [0.2, 0.5, 0.5, -0.1])
        cfg = ChainConfig(burn_in=50, thinning=3, seed=17, initial="random_valid")
        a = run_chain(m, cov, cfg, 100, n=9)
        b = run_chain(m, cov, cfg, 100, n=9)
        assert np.array_equal(a.memberships, b.memberships)
        assert np.array_equal(a.stats, b.stats)

    def test_stats_match_partitions(self):
        cov = make_covariates(9, seed=1)
        m = ModelSpec(covariate_specs(), [0.2, 0.5, 0.5, -0.1])
        trace = run_chain(m, cov, ChainConfig(seed=2, initial="random_valid"), 50, n=9)
        for p, s in trace:
            np.testing.assert_allclose(s, evaluate(p, m.specs, cov), atol=1e-9)

    def test_permute_only_subchain_keeps_sizes(self):
        # transfer weight is tiny: check every permute-only stretch keeps the size multiset
        m = ModelSpec([NG], [0.0])
        start = Partition.from_blocks([[0, 1, 2], [3, 4], [5], [6, 7, 8, 9]])
        chain = MHChain(m, None, start, ProposalMixture(1e-12, 1, 0), seed=5)
        for _ in range(200):
            chain.step(1)
            assert sorted(block_sizes(chain.partition)) == [1, 2, 3, 4]

    @pytest.mark.parametrize("mode", ["reject_invalid", "full_space_retain"])
    def test_bounds_modes(self, mode):
        m = ModelSpec([NG], [0.3], SizeBounds(2, 4))
        cfg = ChainConfig(ProposalMixture(1, 1, 1), 100, 5, 3, mode, "random_valid")
        trace = run_chain(m, None, cfg, 300, n=11)
        assert all(respects_bounds(p, m.bounds) for p in trace.partitions())

    def test_full_space_retain_targets_restricted_law(self):
        m = ModelSpec([NG], [0.5], SizeBounds(2, 3))
        cfg = ChainConfig(ProposalMixture(), 500, 4, 8, "full_space_retain", "random_valid")
        trace = run_chain(m, None, cfg, 40000, n=6)
        exact = exact_distribution(m, n=6)
        emp = np.bincount(trace.num_groups(), minlength=4)[1:] / len(trace)
        ex = np.bincount(exact.rgs.max(axis=1) + 1, weights=exact.probabilities, minlength=4)[1:]
        np.testing.assert_allclose(emp, ex, atol=0.02)

    def test_observed_needs_partition(self):
        with pytest.raises(ValueError):
            run_chain(ModelSpec([NG]), None, ChainConfig(), 5)

    def test_parallel_chains_are_independent_streams(self):
        m = ModelSpec([NG], [0.2])
        traces = run_chains(m, None, ChainConfig(seed=1, initial="random_valid"), 50, 3, n=8)
        assert len(traces) == 3
        assert not np.array_equal(traces[0].memberships, traces[1].memberships)
        single = run_chain(m, None, ChainConfig(seed=2, initial="random_valid"), 50, n=8)
        assert np.array_equal(single.memberships, traces[1].memberships)


class TestSupport:
    def test_unreachable(self):
        m = ModelSpec([NG], [0.0], SizeBounds(2, 3))
        with pytest.raises(UnreachableSupportError):
            MHChain(m, None, Partition.from_blocks([[0, 1], [2, 3, 4]]), ProposalMixture())

    def test_connected_with_transfer(self):
        assert check_irreducible(Partition.from_blocks([[0, 1], [2, 3, 4]]), SizeBounds(2, 3),
                                 ProposalMixture(1, 1, 1))

    def test_large_n_warns(self):
        with pytest.warns(UserWarning, match="assumed"):
            check_irreducible(Partition(tuple(i // 3 for i in range(12))), SizeBounds(2, 4),
                              ProposalMixture(1, 1, 1))

    def test_random_valid(self):
        rng = np.random.default_rng(0)
        for n in range(2, 20):
            p = random_valid_partition(n, SizeBounds(2, 5), rng)
            assert respects_bounds(p, SizeBounds(2, 5))
        with pytest.raises(EmptySupportError):
            random_valid_partition(7, SizeBounds(4, 5), rng)


class TestAutocorrelation:
    def test_iid(self):
        x = np.random.default_rng(0).normal(size=(10000, 2))
        assert np.all(np.abs(autocorrelation(x, 1).values) < 0.05)

    def test_constant_flagged(self):
        x = np.column_stack([np.ones(100), np.arange(100.0)])
        ac = autocorrelation(x, 1)
        assert ac.values[0] == 0.0 and ac.constant[0]
        assert not ac.constant[1]

    def test_thinning_reduces_autocorrelation(self):
        m = ModelSpec([NG, StatisticSpec("sum_squared_sizes")], [0.3, 0.05])
        rho = []
        for thin in (1, 50):
            trace = run_chain(m, None, ChainConfig(burn_in=500, thinning=thin, seed=3,
                                                   initial="random_valid"), 2000, n=10)
            rho.append(autocorrelation(trace.stats, 1).values)
        assert np.all(rho[1] < rho[0])

    def test_lag_too_long(self):
        with pytest.raises(ValueError):
            autocorrelation(np.zeros((3, 1)), 3)
