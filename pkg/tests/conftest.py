import numpy as np
import pytest

from erpm.statistics import CovariateStore, StatisticSpec


def make_covariates(n, seed=0, tie_density=0.3):
    """Random categorical, numeric and dyadic covariates for ``n`` actors."""
    rng = np.random.default_rng(seed)
    ties = np.triu(rng.random((n, n)) < tie_density, 1)
    ties = (ties | ties.T).astype(float)
    return CovariateStore(
        n,
        attributes={
            "sex": list(rng.integers(0, 2, n)),
            "lang": list(rng.choice(["en", "fr", "de"], n)),
            "age": list(np.round(rng.normal(25, 4, n), 1)),
        },
        dyadic={"tie": ties},
    )


def covariate_specs():
    return [
        StatisticSpec("num_groups"),
        StatisticSpec("dyadic_homophily", attribute="sex", similarity="match"),
        StatisticSpec("dyadic_covariate", covariate="tie"),
        StatisticSpec("group_homophily", attribute="age", form="range"),
    ]


@pytest.fixture
def cov6():
    return make_covariates(6, seed=1)


@pytest.fixture
def cov8():
    return make_covariates(8, seed=2)


# -- acceptance summary ---------------------------------------------------------------------
# tests/test_acceptance.py records one line per criterion here; the lines are printed in the
# terminal summary so they show up without ``-s``.

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
