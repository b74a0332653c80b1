import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from branchsim import limits
from branchsim.limits import CURVES, DriftParam, TimeChange
from limit_table import TABLE, TIMES

drifts = st.floats(-2.0, 2.0).filter(lambda a: abs(a) > 1e-3)
exponents = st.sampled_from([0.0, 0.5, 1.0, 2.0, 3.5])


@pytest.mark.parametrize("key", sorted(TABLE))
def test_matches_frozen_closed_forms(key):
    a, alpha, beta = key
    p = DriftParam(a, alpha, beta)
    for kind, expected in TABLE[key].items():
        np.testing.assert_allclose(CURVES[kind](p, TIMES), expected, rtol=0, atol=1e-8, err_msg=kind)


def test_scalar_and_array_agree():
    p = DriftParam(0.7, 1.5)
    arr = limits.phi(p, np.array([[0.2, 0.4], [0.6, 0.8]]))
    assert arr.shape == (2, 2)
    assert arr[1, 0] == pytest.approx(limits.phi(p, 0.6))


def test_zero_time_is_zero():
    p = DriftParam(1.0, 1.0, 1.0)
    for kind in ("mu_alpha", "nu_over_a", "lambda_beta", "phi", "phi_star"):
        assert CURVES[kind](p, 0.0) == 0.0


def test_negative_time_rejected():
    with pytest.raises(ValueError):
        limits.mu_alpha(DriftParam(1.0, 1.0), -0.1)


def test_negative_exponent_rejected():
    with pytest.raises(ValueError):
        DriftParam(1.0, -1.0)


class TestProperties:
    @given(drifts, exponents)
    @settings(max_examples=40, deadline=None)
    def test_phi_normalized_and_nonnegative(self, a, alpha):
        p = DriftParam(a, alpha)
        assert limits.phi(p, 1.0) == pytest.approx(1.0, abs=1e-12)
        assert limits.nu_over_a(p, 0.5) > 0
        # nu_alpha itself has the opposite sign of a
        assert math.copysign(1.0, limits.nu_alpha(p, 0.5)) == -math.copysign(1.0, a)

    @given(drifts, exponents, st.floats(0.05, 1.5))
    @settings(max_examples=40, deadline=None)
    def test_phi_star_relation(self, a, alpha, t):
        p = DriftParam(a, alpha)
        assert limits.phi_star(p, t) == pytest.approx(math.exp(-2 * a * t) * limits.phi(p, t),
                                                      rel=1e-8)

    @given(drifts, exponents)
    @settings(max_examples=30, deadline=None)
    def test_phi_increasing(self, a, alpha):
        v = limits.phi(DriftParam(a, alpha), np.linspace(0.05, 1.0, 12))
        assert np.all(np.diff(v) > 0)

    @given(drifts, exponents)
    @settings(max_examples=30, deadline=None)
    def test_pi_alpha_endpoints(self, a, alpha):
        p = DriftParam(a, alpha)
        assert limits.pi_alpha(p, 1.0) == pytest.approx(1.0)
        assert 0 < limits.pi_alpha(p, 0.5) < 1

    @given(st.sampled_from([0.0, 1.0, 2.0]), st.sampled_from([1e-7, -1e-7, 1e-5, -1e-5]))
    @settings(max_examples=20, deadline=None)
    def test_continuity_at_zero_drift(self, alpha, a):
        t = np.array([0.3, 0.9])
        for kind in ("mu_alpha", "nu_over_a", "lambda_beta", "phi", "phi_star"):
            near = CURVES[kind](DriftParam(a, alpha, alpha), t)
            zero = CURVES[kind](DriftParam(0.0, alpha, alpha), t)
            np.testing.assert_allclose(near, zero, atol=1e-4)


def test_nu_over_a_is_integral_of_mu():
    # the integral swap: int_0^t mu_alpha(u) e^{2a(t-u)} du == nu_over_a(t)
    p = DriftParam(-0.8, 1.3)
    t = 0.7
    mu = limits.curve_fn("mu_alpha", p)
    direct = math.exp(2 * p.a * t) * limits.integral_of(mu, t, -2 * p.a)
    assert direct == pytest.approx(limits.nu_over_a(p, t), rel=1e-9)


def test_mu_beta_uses_beta_exponent():
    p = DriftParam(1.0, 0.0, 2.0)
    assert limits.mu_beta(p, 1.0) == pytest.approx(TABLE[(1, 2, 2)]["mu_alpha"][-1])


class TestTimeChange:
    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown curve"):
            TimeChange("psi", DriftParam(0, 1))

    def test_dump_csv(self, tmp_path):
        tc = TimeChange("phi", DriftParam(0.0, 1.0))
        path = tc.dump_csv(tmp_path / "phi.csv", [0.0, 0.5, 1.0], "seed=1")
        lines = path.read_text().splitlines()
        assert lines[0] == "# seed=1"
        assert lines[1] == "t,value"
        assert [float(x) for x in lines[3].split(",")] == [0.5, 0.125]


def test_quadrature_error_raised_for_impossible_tolerance():
    with pytest.raises(limits.QuadratureError):
        limits.mu_alpha(DriftParam(1.0, 0.5), 1.0, quad_tol=1e-30)
