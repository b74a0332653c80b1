import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from branchsim.regvar import (INCONCLUSIVE, SATISFIED, VIOLATED, DegenerateNormalizerError, RegVarSeq,
                              check_c1, check_conditions, eval_seq, trend_verdict)


class TestRegVarSeq:
    def test_pure_power(self):
        seq = RegVarSeq(2.0, 3.0)
        assert seq.kind == "constant"
        assert eval_seq(seq, 4) == pytest.approx(48.0)
        np.testing.assert_allclose(seq(np.array([1, 2, 3])), [3.0, 12.0, 27.0])

    def test_log_power(self):
        seq = RegVarSeq(1.0, log_power=2.0)
        assert eval_seq(seq, 10) == pytest.approx(10 * math.log(11) ** 2)

    def test_custom_factor_replaces_log(self):
        seq = RegVarSeq(1.0, log_power=5.0, custom=lambda k: np.full_like(k, 2.0))
        assert seq.kind == "custom"
        assert eval_seq(seq, 7) == pytest.approx(14.0)

    @pytest.mark.parametrize("kw", [dict(index=-0.5), dict(index=1.0, const=0.0)])
    def test_rejects_bad_parameters(self, kw):
        with pytest.raises(ValueError):
            RegVarSeq(**kw)

    def test_index_starts_at_one(self):
        with pytest.raises(ValueError, match="k = 1"):
            eval_seq(RegVarSeq(1.0), 0)

    @given(st.floats(0, 3), st.integers(1, 10**6), st.integers(2, 50))
    def test_regular_variation_ratio(self, rho, k, c):
        # x(ck)/x(k) = c^rho exactly for pure powers
        seq = RegVarSeq(rho)
        assert eval_seq(seq, c * k) / eval_seq(seq, k) == pytest.approx(c**rho, rel=1e-12)


class TestCheckC1:
    def test_exact_match_is_zero(self):
        seq = RegVarSeq(1.0)
        assert check_c1(lambda n, k: k.astype(float), seq, 1000) == 0.0

    def test_perturbation_ratio(self):
        seq = RegVarSeq(1.0)
        # alpha(n,k) = k (1 + 1/n): sup_k |k/n| / n = 1/n
        got = check_c1(lambda n, k: k * (1 + 1 / n), seq, 500)
        assert got == pytest.approx(1 / 500)

    def test_degenerate_target(self):
        with pytest.raises(DegenerateNormalizerError):
            check_c1(lambda n, k: k, RegVarSeq(1.0, custom=lambda k: np.zeros_like(k)), 10)


class TestTrendVerdict:
    def test_decreasing_below_threshold(self):
        assert trend_verdict([0.5, 0.2, 0.05, 0.01], 0.1) == SATISFIED

    def test_increasing(self):
        assert trend_verdict([0.1, 0.2, 0.3], 0.1) == VIOLATED

    def test_flat_above_threshold(self):
        assert trend_verdict([9.09, 9.09, 9.09], 0.1) == INCONCLUSIVE

    def test_rounding_noise_counts_as_zero(self):
        assert trend_verdict([1e-13, 3e-12, 2e-11], 0.1) == SATISFIED

    def test_nonfinite_is_violation(self):
        assert trend_verdict([0.1, math.inf, 0.0], 0.1) == VIOLATED


class TestCheckConditions:
    def test_example1_fails_only_c5(self, bundled):
        rep = check_conditions(bundled("example1").process)
        v = rep.verdicts()
        assert [v[c] for c in ("C1", "C2", "C3", "C4")] == [SATISFIED] * 4
        assert v["C5"] == VIOLATED
        assert "lim inf" in rep["C5"].note

    @pytest.mark.parametrize("name", ["example2", "theorem2", "critical", "lemmas456"])
    def test_all_satisfied(self, bundled, name):
        rep = check_conditions(bundled(name).process)
        assert rep.satisfied(["C1", "C2", "C3", "C4", "C5"]), rep.verdicts()

    def test_rows(self, bundled):
        rows = list(check_conditions(bundled("theorem2").process).to_rows())
        assert len(rows) == 5 * 4
        assert rows[0][:2] == ("C1", 100)

    def test_probe_validation(self, bundled):
        with pytest.raises(ValueError):
            check_conditions(bundled("theorem2").process, (100, 50, 1000))
