import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from branchsim.reports import TestReport, aggregate, write_reports
from branchsim.verify import (PreconditionError, collect, count_non_decreasing, ks_test,
                              lemmas456_check, lindeberg_check, martingale_check, median_se,
                              normalizer, theorem1_check, theorem2_check, variance_check)


class TestReports:
    def test_verdict(self):
        assert TestReport("x", 1.0, 1.05, 0.1).passed
        assert not TestReport("x", 1.0, 1.5, 0.1).passed
        assert not TestReport("x", math.nan, 0.0, math.inf).passed

    def test_informational_ignored_by_aggregate(self):
        reps = [TestReport("a", 0, 0, 0), TestReport("b", 5, 0, 0, informational=True)]
        assert aggregate(reps)
        assert not aggregate(reps + [TestReport("c", 5, 0, 0)])

    def test_csv(self, tmp_path):
        path = write_reports(tmp_path / "r.csv", [TestReport("a", 0.5, 0.25, 1.0, note="x")], "seed=1")
        lines = path.read_text().splitlines()
        assert lines[0] == "# seed=1"
        assert lines[1].startswith("name,statistic,reference")
        assert lines[2] == "a,0.5,0.25,1.0,nan,pass,False,x"


class TestStatistics:
    def test_ks_null(self, rng):
        D, p = ks_test(rng.normal(scale=2.0, size=5000), 4.0)
        assert p > 0.001 and D < 0.05

    def test_ks_detects_wrong_variance(self, rng):
        _, p = ks_test(rng.normal(scale=2.0, size=5000), 1.0)
        assert p < 1e-10

    def test_ks_matches_scipy(self, rng):
        from scipy import stats
        x = rng.normal(size=300)
        D, _ = ks_test(x, 1.0)
        assert D == pytest.approx(stats.kstest(x, "norm").statistic, rel=1e-12)

    @pytest.mark.parametrize("bad", [dict(samples=[], variance=1.0), dict(samples=[1.0], variance=0.0)])
    def test_ks_validation(self, bad):
        with pytest.raises(ValueError):
            ks_test(**bad)

    def test_median_se_normal(self, rng):
        # asymptotic SE of the normal median is sqrt(pi/2)/sqrt(R)
        R = 40000
        assert median_se(rng.normal(size=R)) == pytest.approx(math.sqrt(math.pi / 2 / R), rel=0.1)
        assert math.isnan(median_se([1.0]))

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=20))
    def test_non_decreasing_count(self, values):
        got = count_non_decreasing(values)
        assert got == sum(1 for a, b in zip(values, values[1:]) if not b < a)


class TestChecks:
    def test_collect_shapes(self, bundled):
        proc = bundled("theorem2").process
        s = collect(proc, 100, 30, 1, time_points=(0.5, 1.0))
        assert s.z_at.shape == (30, 2) and s.x_paths.shape[0] == 20
        assert s.x_mean[0] == 0.0
        assert s.x_mean[-1] == pytest.approx(1.0, abs=0.05)

    def test_collect_rejects_off_grid_time(self, bundled):
        with pytest.raises(ValueError, match="grid"):
            collect(bundled("theorem2").process, 100, 2, 1, time_points=(0.505,))

    def test_theorem1_gate(self, bundled):
        # C5 fails for example1, but theorem1 only needs C1-C4
        reps = theorem1_check(bundled("example1").process, (100, 400), 20, 1)
        assert reps.summaries[400].replicates == 20

    def test_theorem2_gate_rejects_vanishing_offspring_variance(self, bundled):
        with pytest.raises(PreconditionError, match="C5"):
            theorem2_check(bundled("example1").process, 100, 10)

    def test_theorem2_small(self, bundled):
        reps = theorem2_check(bundled("critical").process, 200, 300, (0.5, 1.0), 3)
        names = [r.name for r in reps]
        assert "theorem2.ks[t=0.5]" in names and "theorem2.cov_psd" in names
        # at a = 0 both covariance references coincide
        cov = {r.name.split("[")[0]: r for r in reps if "cov" in r.name}
        assert cov["theorem2.cov"].reference == pytest.approx(cov["theorem2.cov_drift_adjusted"].reference)

    def test_variance_small(self, bundled):
        reps = variance_check(bundled("critical").process, 50, 4000, 1)
        assert reps.passed, [r.line() for r in reps]

    def test_martingale(self, bundled):
        reps = martingale_check(bundled("theorem2").process, 60, 3000, 5)
        assert reps.passed, [r.line() for r in reps]

    def test_lemmas456_deterministic(self, bundled):
        reps = lemmas456_check(bundled("lemmas456").process, 20000)
        assert reps.passed
        assert any(r.informational and not r.passed for r in reps)

    def test_lindeberg_check(self, bundled):
        proc = bundled("theorem2").process
        reps = lindeberg_check(proc.law, normalizer(proc))
        assert reps.passed and len(reps) == 3
