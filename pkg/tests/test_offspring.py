import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from branchsim.offspring import (BernoulliOffspring, GenericOffspring, PoissonOffspring,
                                 ThreePointOffspring, lindeberg_stat)


@given(st.integers(2, 10**6))
def test_three_point_mean(n):
    law = ThreePointOffspring(1.0)
    assert law.mean(n) == pytest.approx(1 + 1 / n, rel=1e-12)
    _, _, vals, probs = law.kernel_params(n)
    assert probs.sum() == pytest.approx(1.0)


@given(st.floats(-3, 3), st.integers(10, 10**6))
def test_drift_matches_mean(a, n):
    for law in (PoissonOffspring(a), BernoulliOffspring(abs(a))):
        assert n * (law.mean(n) - 1) == pytest.approx(law.drift, abs=1e-6)


def test_bernoulli_probability_range():
    with pytest.raises(ValueError):
        BernoulliOffspring(5.0).mean(2)


def test_generic_validation():
    with pytest.raises(ValueError):
        GenericOffspring(table=lambda n: ([0, 1.5], [0.5, 0.5])).mean(1)
    with pytest.raises(ValueError):
        GenericOffspring(table=lambda n: ([0, 1], [0.5, 0.6])).mean(1)


class TestLindeberg:
    def test_poisson_matches_direct_sum(self):
        cut = 2.5
        law = PoissonOffspring(2.0)
        n = 1
        mu = law.mean(n)
        k = np.arange(0, 200)
        pmf = stats.poisson.pmf(k, mu)
        mask = np.abs(k - mu) > cut
        direct = float(np.sum((k[mask] - mu) ** 2 * pmf[mask]))
        assert lindeberg_stat(law, n, cut, 1.0) == pytest.approx(direct, rel=1e-10)

    def test_log_scale_orders_tiny_values(self):
        law = PoissonOffspring(1.0)
        logs = [lindeberg_stat(law, n, math.sqrt(n), 0.5, log=True) for n in (10**3, 10**4, 10**5)]
        assert logs[2] < logs[1] < logs[0] < 0
        assert lindeberg_stat(law, 10**5, math.sqrt(10**5), 0.5) == pytest.approx(math.exp(logs[2]))

    def test_finite_support_exact(self):
        law = ThreePointOffspring(1.0)
        n = 100
        vals, probs = law.pmf_table(n)
        mu = law.mean(n)
        # cut between d_n and n: only the value n contributes
        got = lindeberg_stat(law, n, 70.0, 1.0)
        assert got == pytest.approx((n - mu) ** 2 * probs[0])
        assert lindeberg_stat(law, n, 1e6, 1.0) == 0.0
        assert lindeberg_stat(law, n, 1e6, 1.0, log=True) == -math.inf

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            lindeberg_stat(PoissonOffspring(1.0), 10, 1.0, 0.0)

    def test_support_radius(self):
        assert BernoulliOffspring(1.0).support_radius(10) == pytest.approx(0.9)
        assert PoissonOffspring(1.0).support_radius(10) == math.inf
