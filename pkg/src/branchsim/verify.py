"""Monte Carlo and deterministic checks of the limit theorems.

Every check returns a :class:`ReportList` of :class:`TestReport` rows; the
Monte Carlo ones also attach the :class:`McSummary` of each simulated row.
Tolerances are four standard errors unless stated otherwise.  Trend checks
encode "strictly decreasing" as a count of violations that must be 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special

from branchsim import limits
from branchsim.immigration import empirical_cov, replicate_stream, verify_lemma8
from branchsim.moments import (cross_cov, eq13_proxy, lemma4_check, lemma5_check, lemma6_check,
                               var_tables, y_moments)
from branchsim.offspring import lindeberg_stat
from branchsim.regvar import DEFAULT_PROBES, check_conditions
from branchsim.reports import TestReport, aggregate
from branchsim.simulator import (PathSampler, default_grid, grid_index, martingale_parts,
                                 run_replicates, scale_path, simulate_single_ancestor)

__all__ = ["TestReport", "McSummary", "ReportList", "PreconditionError", "ks_test", "theorem1_check",
           "theorem2_check", "lemma1_check", "variance_check", "single_ancestor_check",
           "martingale_check", "lemmas456_check", "lemma8_check", "lindeberg_check", "lindeberg_trend",
           "normalizer", "collect", "aggregate"]

SE_MULT = 4.0
DEFAULT_S_GRID = (0.25, 0.5, 0.75, 1.0)

TAG_THEOREM1, TAG_THEOREM2, TAG_LEMMA1, TAG_VARIANCE, TAG_ANCESTOR, TAG_MARTINGALE = 1, 2, 3, 4, 5, 6


class PreconditionError(RuntimeError):
    """A theorem's hypotheses are not supported by the finite-n condition probes."""

    def __init__(self, check: str, failing: Sequence[str]):
        self.failing = list(failing)
        super().__init__(f"{check}: hypotheses not satisfied: {', '.join(self.failing)}")


class ReportList(list):
    """List of reports with the Monte Carlo summaries that produced them."""

    def __init__(self, reports=(), summaries=None):
        super().__init__(reports)
        self.summaries = dict(summaries or {})

    @property
    def passed(self) -> bool:
        return aggregate(self)


@dataclass
class McSummary:
    n: int
    replicates: int
    grid: np.ndarray
    time_points: tuple
    x_mean: np.ndarray
    x_var: np.ndarray
    z_mean: np.ndarray
    z_var: np.ndarray
    z_cov: np.ndarray
    sup_median: float
    sup_q90: float
    z2_sup_l2: float
    z2_sup_l2_se: float
    sup_distances: np.ndarray = field(repr=False)
    z_at: np.ndarray = field(repr=False)
    x_paths: np.ndarray = field(repr=False)

    def rows(self):
        """(t, E X_n, Var X_n, E Z_n, Var Z_n) per grid point."""
        return zip(self.grid, self.x_mean, self.x_var, self.z_mean, self.z_var)


def _nan_var(a, axis=0):
    return np.var(a, axis=axis, ddof=1) if a.shape[axis] > 1 else np.full(a.shape[1 - axis], np.nan)


def collect(process, n: int, R: int, seed: int, *, grid=None, time_points=(0.5, 1.0),
            horizon: float = 1.0, threads: int = 1, tag: int = 0, keep_paths: int = 20) -> McSummary:
    """Simulate R row-``n`` paths and summarize their scaled versions."""
    grid = default_grid(horizon) if grid is None else np.asarray(grid, dtype=float)
    K_ = max(1, int(math.floor(n * max(horizon, grid.max()) + 1e-9)))
    tables = var_tables(process.law, process.immigration, n, max(K_, n))
    pi = limits.pi_alpha(process.drift, grid)
    tp_idx = [int(np.argmin(np.abs(grid - t))) for t in time_points]
    if any(abs(grid[i] - t) > 1e-12 for i, t in zip(tp_idx, time_points)):
        raise ValueError("time points must lie on the grid")
    kT = int(math.floor(n * horizon + 1e-9))
    sampler = PathSampler(process.law, process.immigration, n, K_)

    def reduce(path):
        sp = scale_path(path, tables, grid)
        _, z2 = martingale_parts(path, tables)
        return (sp.X_values, sp.Z_values, float(np.max(np.abs(sp.X_values - pi))),
                float(np.max(z2[: kT + 1] ** 2)))

    out = run_replicates(sampler, R, seed, reduce, diagnostics=True, threads=threads, tag=tag)
    X = np.array([o[0] for o in out])
    Z = np.array([o[1] for o in out])
    sups = np.array([o[2] for o in out])
    z2 = np.array([o[3] for o in out])
    z_at = Z[:, tp_idx]
    cov = np.cov(z_at, rowvar=False, ddof=1) if R > 1 else np.full((len(tp_idx),) * 2, np.nan)
    return McSummary(
        n=n, replicates=R, grid=grid, time_points=tuple(time_points),
        x_mean=X.mean(axis=0), x_var=_nan_var(X), z_mean=Z.mean(axis=0), z_var=_nan_var(Z),
        z_cov=np.atleast_2d(cov), sup_median=float(np.median(sups)),
        sup_q90=float(np.quantile(sups, 0.9)), z2_sup_l2=float(z2.mean()),
        z2_sup_l2_se=float(z2.std(ddof=1) / math.sqrt(R)) if R > 1 else math.nan,
        sup_distances=sups, z_at=z_at, x_paths=X[:keep_paths],
    )


def median_se(values) -> float:
    """Order-statistic standard error of the median; NaN for fewer than 2 values."""
    v = np.sort(np.asarray(values, dtype=float))
    R = len(v)
    if R < 2:
        return math.nan
    half = 0.5 * math.sqrt(R)
    lo = int(max(0, math.floor(R / 2 - half)))
    hi = int(min(R - 1, math.ceil(R / 2 + half)))
    return float((v[hi] - v[lo]) / 2)


def count_non_decreasing(values) -> int:
    """Number of consecutive pairs that fail to strictly decrease."""
    v = np.asarray(values, dtype=float)
    return int(np.sum(~(np.diff(v) < 0)))


def ks_test(samples, variance: float):
    """One-sample KS test against Normal(0, variance); asymptotic Kolmogorov p-value."""
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise ValueError("samples must be nonempty")
    if not variance > 0:
        raise ValueError("variance must be positive")
    N = x.size
    cdf = special.ndtr(x / math.sqrt(variance))
    i = np.arange(1, N + 1)
    D = float(max(np.max(i / N - cdf), np.max(cdf - (i - 1) / N)))
    return D, float(special.kolmogorov(math.sqrt(N) * D))


def _gate(process, names, probes, check):
    rep = check_conditions(process, probes)
    failing = rep.failing(names)
    if failing:
        raise PreconditionError(check, [f"{nm} ({rep[nm].verdict})" for nm in failing])
    return rep


def theorem1_check(process, n_list: Sequence[int], R: int, seed: int, *, threads: int = 1,
                   grid=None, threshold: float = 0.1, probes=DEFAULT_PROBES,
                   gate: bool = True) -> ReportList:
    """Median grid sup-distance of X_n to pi_alpha: strictly decreasing in n, final <= threshold."""
    if gate:
        _gate(process, ["C1", "C2", "C3", "C4"], probes, "theorem1")
        summable = process.immigration.mixing_profile().summable_bound
        if not math.isfinite(summable):
            raise PreconditionError("theorem1", ["summable psi bound is infinite"])
    out = ReportList()
    medians = []
    for n in n_list:
        s = collect(process, n, R, seed, grid=grid, time_points=(1.0,), threads=threads,
                    tag=TAG_THEOREM1)
        out.summaries[n] = s
        medians.append(s.sup_median)
        out.append(TestReport(f"theorem1.median_sup[n={n}]", s.sup_median, 0.0, math.inf,
                              median_se(s.sup_distances), note=f"q90={s.sup_q90:.4g}",
                              informational=True))
    if len(n_list) > 1:
        out.append(TestReport("theorem1.strictly_decreasing", count_non_decreasing(medians), 0, 0,
                              note=" > ".join(f"{m:.4g}" for m in medians)))
    out.append(TestReport(f"theorem1.final_median[n={n_list[-1]}]", medians[-1], 0.0, threshold,
                          median_se(out.summaries[n_list[-1]].sup_distances)))
    return out


def lindeberg_trend(law, B_of, probes=(10**3, 10**4, 10**5), eps: float = 0.1):
    """Log Lindeberg statistics along ``probes`` and whether they tend to 0.

    Accepted when the values strictly decrease, or are nonincreasing and end
    exactly at 0 (``-inf`` on the log scale).
    """
    logs = [lindeberg_stat(law, n, B_of(n), eps, log=True) for n in probes]
    with np.errstate(invalid="ignore"):
        steps = np.diff(logs)
    ok = bool(np.all(steps < 0) or (logs[-1] == -math.inf and
                                   all(b <= a for a, b in zip(logs, logs[1:]))))
    return logs, ok


def normalizer(process):
    """n -> B(n) from the exact moment tables."""

    def B_of(n):
        return math.sqrt(float(var_tables(process.law, process.immigration, n, n).B2[n]))

    return B_of


def theorem2_check(process, n: int, R: int, time_points=(0.5, 1.0), seed: int = 0, *,
                   threads: int = 1, ks_alpha: float = 0.01, probes=DEFAULT_PROBES,
                   gate: bool = True) -> ReportList:
    """Finite-dimensional checks of Z_n against W(phi(t)).

    KS of Z_n(t) vs Normal(0, phi(t)); Var Z_n(t) vs phi(t); cov(Z_n(s), Z_n(t))
    vs phi(min(s, t)).  The covariance is also compared, as an informational
    row, with ``e^{a(t-s)} phi(s)``, the covariance of ``e^{at} W(phi_star(t))``.
    """
    p = process.drift
    if gate:
        _gate(process, ["C1", "C2", "C3", "C5"], probes, "theorem2")
        lind_probes = tuple(x for x in probes if x >= 1000) or probes[-3:]
        _, ok = lindeberg_trend(process.law, normalizer(process), lind_probes)
        if not ok:
            raise PreconditionError("theorem2", ["Lindeberg statistic does not decrease"])
    phis = [float(limits.phi(p, t)) for t in time_points]
    if any(not v > 0 for v in phis):
        raise ValueError("phi vanishes at a requested time point")
    grid = np.unique(np.concatenate([default_grid(), np.asarray(time_points, dtype=float)]))
    s = collect(process, n, R, seed, grid=grid, time_points=time_points, threads=threads,
                tag=TAG_THEOREM2)
    out = ReportList(summaries={n: s})
    Zt = s.z_at
    B2n = float(var_tables(process.law, process.immigration, n, n).B2[n])
    for j, (t, ph) in enumerate(zip(time_points, phis)):
        D, pval = ks_test(Zt[:, j], ph)
        out.append(TestReport(f"theorem2.ks[t={t}]", pval, 1.0, 1.0 - ks_alpha,
                              note=f"D={D:.4g}, pass iff p >= {ks_alpha}"))
    for j, (t, ph) in enumerate(zip(time_points, phis)):
        c, se = empirical_cov(Zt[:, j], Zt[:, j]) if R > 1 else (math.nan, math.nan)
        out.append(TestReport(f"theorem2.var[t={t}]", c, ph, SE_MULT * se, se))
    for i in range(len(time_points)):
        for j in range(i + 1, len(time_points)):
            a_, b_ = sorted((time_points[i], time_points[j]))
            c, se = empirical_cov(Zt[:, i], Zt[:, j]) if R > 1 else (math.nan, math.nan)
            ref = float(limits.phi(p, a_))
            out.append(TestReport(f"theorem2.cov[{a_},{b_}]", c, ref, SE_MULT * se, se,
                                  note="reference phi(min(s,t))"))
            drift_ref = math.exp(p.a * (b_ - a_)) * ref
            out.append(TestReport(f"theorem2.cov_drift_adjusted[{a_},{b_}]", c, drift_ref,
                                  SE_MULT * se, se, note="reference e^{a(t-s)} phi(s)",
                                  informational=True))
            ja, jb = grid_index(n, [a_, b_])
            exact = cross_cov(process.law, process.immigration, n, int(ja), int(jb)) / B2n
            out.append(TestReport(f"theorem2.cov_exact_finite_n[{a_},{b_}]", c, exact,
                                  SE_MULT * se, se, note="reference cov(X_[ns], X_[nt]) / B^2(n)",
                                  informational=True))
    if R > 1 and len(time_points) > 1:
        eig = np.linalg.eigvalsh(s.z_cov)
        out.append(TestReport("theorem2.cov_psd", int(np.sum(eig < -1e-12)), 0, 0,
                              note=f"min eigenvalue {eig.min():.4g}"))
    return out


def lemma1_check(process, n_list: Sequence[int], R: int, seed: int, *, threads: int = 1,
                 horizon: float = 1.0, threshold: float = 0.05) -> ReportList:
    """E sup_{t<=T} |Z2_n(t)|^2 strictly decreasing and <= threshold; proxy strictly decreasing."""
    out = ReportList()
    est, proxy = [], []
    for n in n_list:
        s = collect(process, n, R, seed, time_points=(horizon,), horizon=horizon,
                    threads=threads, tag=TAG_LEMMA1)
        out.summaries[n] = s
        est.append(s.z2_sup_l2)
        tables = var_tables(process.law, process.immigration, n, max(n, int(n * horizon)))
        proxy.append(eq13_proxy(tables, n, max(process.m, 1), horizon))
        out.append(TestReport(f"lemma1.z2_sup_l2[n={n}]", s.z2_sup_l2, 0.0, math.inf,
                              s.z2_sup_l2_se, note=f"L2 proxy={proxy[-1]:.4g}", informational=True))
    if len(n_list) > 1:
        out.append(TestReport("lemma1.strictly_decreasing", count_non_decreasing(est), 0, 0,
                              note=" > ".join(f"{v:.4g}" for v in est)))
        out.append(TestReport("lemma1.proxy_strictly_decreasing", count_non_decreasing(proxy), 0, 0,
                              note=" > ".join(f"{v:.4g}" for v in proxy)))
    out.append(TestReport(f"lemma1.final[n={n_list[-1]}]", est[-1], 0.0, threshold,
                          out.summaries[n_list[-1]].z2_sup_l2_se))
    return out


def _moment_se(x):
    """(mean, SE of mean, variance, SE of variance) with the fourth-moment SE."""
    x = np.asarray(x, dtype=float)
    R = len(x)
    v = x.var(ddof=1)
    m4 = np.mean((x - x.mean()) ** 4)
    return x.mean(), math.sqrt(v / R), v, math.sqrt(max(m4 - v * v, 0.0) / R)


def variance_check(process, n: int, R: int, seed: int, *, threads: int = 1) -> ReportList:
    """Empirical mean and variance of X_n against A_n(n) and B_n^2(n)."""
    tables = var_tables(process.law, process.immigration, n, n)
    sampler = PathSampler(process.law, process.immigration, n, n)
    xs = np.array(run_replicates(sampler, R, seed, lambda p: p.X[-1], threads=threads,
                                 tag=TAG_VARIANCE), dtype=float)
    mean, se_m, var, se_v = _moment_se(xs)
    return ReportList([
        TestReport(f"variance.mean[{process.name},n={n}]", mean, float(tables.A[n]),
                   SE_MULT * se_m, se_m),
        TestReport(f"variance.var[{process.name},n={n}]", var, float(tables.B2[n]),
                   SE_MULT * se_v, se_v),
    ])


def single_ancestor_check(law, n: int, k_list: Sequence[int], R: int, seed: int) -> ReportList:
    """Mean and second moment of the single-ancestor process against the exact formulas."""
    kmax = max(k_list)
    Y = np.array([simulate_single_ancestor(law, n, kmax, replicate_stream(seed, n, rid, TAG_ANCESTOR))
                  for rid in range(R)], dtype=float)
    out = ReportList()
    for k in k_list:
        ey, ey2 = y_moments(law, n, k)
        y = Y[:, k]
        m1, se1 = y.mean(), y.std(ddof=1) / math.sqrt(R)
        m2, se2 = (y**2).mean(), (y**2).std(ddof=1) / math.sqrt(R)
        out.append(TestReport(f"single_ancestor.mean[k={k}]", m1, ey, SE_MULT * se1, se1))
        out.append(TestReport(f"single_ancestor.second_moment[k={k}]", m2, ey2, SE_MULT * se2, se2))
    return out


def martingale_check(process, n: int, R: int, seed: int, *, threads: int = 1) -> ReportList:
    """Zero mean of M_k at every k, and the offspring conditional variance slope b_n.

    The slope is the through-origin regression of T_k^2 on X_{k-1} with a
    heteroscedasticity-robust standard error; tolerance 3 SE.
    """
    sampler = PathSampler(process.law, process.immigration, n, n)
    paths = run_replicates(sampler, R, seed, lambda p: (p.M, p.T, p.X), diagnostics=True,
                           threads=threads, tag=TAG_MARTINGALE)
    M = np.array([p[0] for p in paths])[:, 1:]
    T = np.array([p[1] for p in paths])[:, 1:]
    Xprev = np.array([p[2] for p in paths], dtype=float)[:, :-1]
    z = np.abs(M.mean(axis=0)) / (M.std(axis=0, ddof=1) / math.sqrt(R))
    x, y = Xprev.ravel(), (T**2).ravel()
    sxx = float(x @ x)
    slope = float(x @ y) / sxx
    resid = y - slope * x
    se = math.sqrt(float(np.sum(x**2 * resid**2))) / sxx
    b_n = process.law.var(n)
    return ReportList([
        TestReport(f"martingale.max_abs_z[n={n}]", float(np.max(z)), 0.0, SE_MULT,
                   note="largest |mean M_k| / SE over k"),
        TestReport(f"martingale.offspring_var_slope[n={n}]", slope, b_n, 3 * se, se),
    ])


def lemmas456_check(process, n: int, s_grid=DEFAULT_S_GRID, thetas=(-2.0, 0.0, 1.0), *,
                    tol: float = 1e-2) -> ReportList:
    """Deterministic scaled sums against their limit integrals (absolute tolerance ``tol``)."""
    p = process.drift
    law, imm = process.law, process.immigration
    tables = var_tables(law, imm, n, int(math.floor(n * max(s_grid))))
    out = ReportList()

    def add(rep, label):
        for key, dev in rep.max_dev.items():
            out.append(TestReport(f"{label}.{key}", dev, 0.0, tol))
        for key, dev in rep.alt_max_dev().items():
            out.append(TestReport(f"{label}.{key}", dev, 0.0, tol, informational=True,
                                  note="alternative reading of the sigma^2 limit"))

    kw = dict(alpha_seq=process.alpha_seq, beta_seq=process.beta_seq, tables=tables)
    for th in thetas:
        add(lemma4_check(process.alpha_seq, law, th, n, s_grid), f"lemma4[theta={th}]")
    add(lemma5_check(law, imm, p, n, s_grid, **kw), "lemma5")
    for th in thetas:
        add(lemma6_check(law, imm, p, n, th, s_grid, **kw), f"lemma6[theta={th}]")
    return out


def lemma8_check(model, n: int, lags: Sequence[int], R: int, seed: int) -> ReportList:
    return ReportList([verify_lemma8(model, n, lag, R, seed=seed) for lag in lags])


def lindeberg_check(law, B_of, probes=(10**3, 10**4, 10**5), eps_list=(0.01, 0.1, 1.0)) -> ReportList:
    """Lindeberg statistic along ``probes``: strictly decreasing (log scale) or exactly 0 at the end."""
    out = ReportList()
    for eps in eps_list:
        logs, ok = lindeberg_trend(law, B_of, probes, eps)
        out.append(TestReport(f"lindeberg[eps={eps}]", 0 if ok else 1, 0, 0,
                              note="log stats " + ", ".join(f"{v:.6g}" for v in logs)))
    return out
