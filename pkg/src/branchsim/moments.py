"""Exact finite-n moments of the row-n process and checks of their scaled limits.

Notation: ``a_n``/``b_n`` are the offspring mean and variance, ``alpha(n,k)`` /
``beta(n,k)`` the immigration mean and variance at generation ``k``.  For every
generation ``k``

    A_n(k)        = sum_j a_n^{k-j} alpha(n,j)
    Delta_n^2(k)  = b_n/(1-a_n) sum_j alpha(n,j) a_n^{k-j-1} (1 - a_n^{k-j})
    sigma_n^2(k)  = sum_j beta(n,j) a_n^{2(k-j)}
    omega_n(k)    = sum_{i<j<=k} cov(eps_j, eps_i) a_n^{2k-j-i}
    B_n^2(k)      = Delta_n^2(k) + sigma_n^2(k) + 2 omega_n(k)

All tables are built with one-step recursions in ``np.longdouble``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from branchsim import limits
from branchsim.limits import DriftParam
from branchsim.regvar import RegVarSeq, eval_seq

LD = np.longdouble


@dataclass(frozen=True)
class OffspringMoments:
    mean_fn: Callable[[int], float]
    var_fn: Callable[[int], float]
    drift: float = 0.0

    def mean(self, n: int) -> float:
        return self.mean_fn(n)

    def var(self, n: int) -> float:
        v = self.var_fn(n)
        if v < 0:
            raise ValueError(f"negative offspring variance {v} at n={n}")
        return v


@dataclass(frozen=True)
class ImmigrationMoments:
    """Analytic moments of a rowwise immigration sequence.

    ``cov(n, j, i)`` must accept integer arrays with ``j > i``;
    ``bandwidth(n)`` is the largest lag with nonzero covariance (0 for
    independent rows).
    """

    mean_fn: Callable
    var_fn: Callable
    cov_fn: Callable = None
    bandwidth_fn: Callable[[int], int] = lambda n: 0

    def mean(self, n, k):
        return np.asarray(self.mean_fn(n, np.asarray(k)), dtype=float)

    def var(self, n, k):
        return np.asarray(self.var_fn(n, np.asarray(k)), dtype=float)

    def cov(self, n, j, i):
        if self.cov_fn is None:
            return np.zeros(np.broadcast(np.asarray(j), np.asarray(i)).shape)
        return np.asarray(self.cov_fn(n, np.asarray(j), np.asarray(i)), dtype=float)

    def bandwidth(self, n):
        return self.bandwidth_fn(n)


def geom_ratio(a: float, j: int) -> float:
    """sum_{i<j} a^i = (1 - a^j)/(1 - a), exactly ``j`` at ``a == 1``."""
    if j < 0:
        raise ValueError("j must be nonnegative")
    if j == 0:
        return 0.0
    d = a - 1.0
    if d == 0.0:
        return float(j)
    if abs(d) < 1e-3:
        return math.expm1(j * math.log1p(d)) / d
    return (a**j - 1.0) / d


def _powers(a: float, exps: np.ndarray, n: int) -> np.ndarray:
    with np.errstate(over="raise", invalid="raise", divide="raise"):
        try:
            return np.power(LD(a), exps.astype(LD))
        except FloatingPointError:
            raise OverflowError(
                f"a_n^k overflowed for a_n={a!r} up to k={int(np.max(np.abs(exps)))} (n={n})"
            ) from None


def mean_A(off, imm, n: int, k: int) -> float:
    """A_n(k) = sum_{j=1}^k a_n^{k-j} alpha(n, j), accumulated in long double."""
    if k < 1:
        raise ValueError("k must be >= 1")
    a = off.mean(n)
    j = np.arange(1, k + 1)
    terms = _powers(a, k - j, n) * imm.mean(n, j).astype(LD)
    total = terms.sum(dtype=LD)
    if not np.isfinite(total):
        raise OverflowError(f"A_n(k) overflowed at k={k}, a_n={a!r}")
    return float(total)


@dataclass
class MomentTables:
    """Per-generation moment arrays, indexed by generation ``k = 0..K``.

    Entry 0 corresponds to ``X_0 = 0`` and is zero in every array.
    """

    n: int
    a_n: float
    b_n: float
    A: np.ndarray
    Delta2: np.ndarray
    Sigma2: np.ndarray
    Omega: np.ndarray
    B2: np.ndarray
    alpha: np.ndarray = field(repr=False)
    beta: np.ndarray = field(repr=False)

    @property
    def K(self) -> int:
        return len(self.A) - 1

    def B(self, k: int | None = None) -> float:
        k = self.n if k is None else k
        return float(np.sqrt(self.B2[k]))

    def to_csv(self, path, header_comment: str | None = None):
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "A", "Delta2", "Sigma2", "Omega", "B2"])
            for k in range(self.K + 1):
                w.writerow([k] + [repr(float(arr[k])) for arr in
                                  (self.A, self.Delta2, self.Sigma2, self.Omega, self.B2)])
        return path


def _lag_terms(imm, n: int, K: int, a: float) -> np.ndarray:
    """r_k = sum_{i<k} cov(eps_k, eps_i) a_n^{k-i} for k = 1..K (index 0 unused)."""
    r = np.zeros(K + 1, dtype=LD)
    bw = min(int(imm.bandwidth(n)), K - 1)
    for lag in range(1, bw + 1):
        k = np.arange(lag + 1, K + 1)
        c = imm.cov(n, k, k - lag).astype(LD)
        r[lag + 1:] += c * LD(a) ** lag
    return r


def var_tables(off, imm, n: int, K: int) -> MomentTables:
    """Build A, Delta^2, sigma^2, omega and B^2 for generations 0..K.

    Uses ``A(k) = a A(k-1) + alpha_k``, ``Delta^2(k) = a^2 Delta^2(k-1) + b A(k-1)``,
    ``sigma^2(k) = a^2 sigma^2(k-1) + beta_k`` and ``omega(k) = a^2 omega(k-1) + r_k``;
    the covariance lags enter only through the banded ``r_k``, so the cost is
    O(K * bandwidth).
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    a = LD(off.mean(n))
    b = LD(off.var(n))
    a2 = a * a
    k = np.arange(1, K + 1)
    alpha = np.concatenate([[0.0], imm.mean(n, k)])
    beta = np.concatenate([[0.0], imm.var(n, k)])
    if np.any(beta < 0):
        raise ValueError("immigration variance must be nonnegative")
    r = _lag_terms(imm, n, K, float(a))

    A = np.zeros(K + 1, dtype=LD)
    D = np.zeros(K + 1, dtype=LD)
    S = np.zeros(K + 1, dtype=LD)
    W = np.zeros(K + 1, dtype=LD)
    al = alpha.astype(LD)
    be = beta.astype(LD)
    a_prev = d_prev = s_prev = w_prev = LD(0)
    for i in range(1, K + 1):
        d_prev = a2 * d_prev + b * a_prev
        a_prev = a * a_prev + al[i]
        s_prev = a2 * s_prev + be[i]
        w_prev = a2 * w_prev + r[i]
        A[i], D[i], S[i], W[i] = a_prev, d_prev, s_prev, w_prev
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(D))):
        bad = int(np.argmin(np.isfinite(A) & np.isfinite(D)))
        raise OverflowError(f"moment recursion overflowed at k={bad}, a_n={float(a)!r}")
    B2 = D + S + 2 * W
    return MomentTables(n=n, a_n=float(a), b_n=float(b), A=A, Delta2=D, Sigma2=S, Omega=W,
                        B2=B2, alpha=alpha, beta=beta)


def cross_cov(off, imm, n: int, j: int, k: int, tables: MomentTables | None = None) -> float:
    """cov(X_j, X_k) for j <= k.

    Uses ``cov(X_l, X_j) = a_n cov(X_{l-1}, X_j) + cov(eps_l, X_j)`` for l > j,
    where ``cov(eps_l, X_j) = sum_{i<=j} a_n^{j-i} cov(eps_l, eps_i)``.
    """
    if not 1 <= j <= k:
        raise ValueError("need 1 <= j <= k")
    tables = tables or var_tables(off, imm, n, k)
    a = LD(tables.a_n)
    c = LD(tables.B2[j])
    bw = int(imm.bandwidth(n))
    for l in range(j + 1, k + 1):
        lo = max(1, l - bw)
        extra = LD(0)
        if lo <= j:
            i = np.arange(lo, j + 1)
            extra = np.sum(imm.cov(n, np.full(len(i), l), i).astype(LD) * a ** (j - i).astype(LD))
        c = a * c + extra
    return float(c)


def delta2_direct(a: float, b: float, alpha: Sequence[float], k: int) -> float:
    """Delta_n^2(k) from the closed double-sum form (reference path for tests)."""
    if k < 1:
        return 0.0
    j = np.arange(1, k + 1)
    al = np.asarray(alpha, dtype=float)[j]
    g = np.array([geom_ratio(a, int(x)) for x in k - j])
    return float(b * np.sum(al * a ** (k - j - 1.0) * g))


def y_moments(off, n: int, k: int) -> tuple[float, float]:
    """(E Y, E Y^2) for the single-ancestor process Y(k) with Y(0) = 1."""
    if k < 0:
        raise ValueError("k must be >= 0")
    a, b = off.mean(n), off.var(n)
    if k == 0:
        return 1.0, 1.0
    m2 = a ** (k - 1) * geom_ratio(a, k) * b + a ** (2 * k)
    return a**k, m2


def eq13_proxy(tables: MomentTables, n: int, m: int, T: float = 1.0) -> float:
    """m * sum_{k<=[nT]} a_n^{-2k} beta(n,k) / B^2(n): deterministic bound on E|Z2(T)|^2 (up to a constant)."""
    kmax = int(math.floor(n * T))
    k = np.arange(1, kmax + 1)
    w = np.power(LD(tables.a_n), (-2 * k).astype(LD))
    return float(m * np.sum(w * tables.beta[1:kmax + 1].astype(LD)) / tables.B2[n])


@dataclass
class LemmaReport:
    name: str
    s_grid: tuple
    finite: dict
    limit: dict
    alternatives: dict = field(default_factory=dict)

    @property
    def max_dev(self) -> dict:
        return {k: float(np.max(np.abs(np.asarray(self.finite[k]) - np.asarray(self.limit[k]))))
                for k in self.finite}

    def alt_max_dev(self) -> dict:
        return {k: float(np.max(np.abs(np.asarray(self.finite[k.split(":")[0]]) - np.asarray(v))))
                for k, v in self.alternatives.items()}


def _floor_idx(n, s_grid):
    return np.array([int(math.floor(n * s)) for s in s_grid])


def _tables_for(off, imm, n, s_grid):
    K = max(1, int(math.floor(n * max(s_grid))))
    return var_tables(off, imm, n, K)


def lemma4_check(x: RegVarSeq, off, theta: float, n: int, s_grid: Sequence[float]) -> LemmaReport:
    """sup_s |(1/(n x(n))) sum_{k<=ns} a_n^{k theta} x(k) - int_0^s t^rho e^{t theta a} dt|."""
    a_n = off.mean(n)
    K = int(math.floor(n * max(s_grid)))
    k = np.arange(1, K + 1)
    terms = _powers(a_n, theta * k, n) * np.asarray(eval_seq(x, k), dtype=LD)
    csum = np.concatenate([[LD(0)], np.cumsum(terms, dtype=LD)])
    idx = _floor_idx(n, s_grid)
    finite = [float(csum[i] / (LD(n) * LD(eval_seq(x, n)))) for i in idx]
    rate = theta * off.drift
    limit = [limits.integral_of(lambda t: t**x.index, s, rate) if s > 0 else 0.0 for s in s_grid]
    return LemmaReport("lemma4", tuple(s_grid), {"scaled_sum": finite}, {"scaled_sum": limit})


def lemma5_check(off, imm, p: DriftParam, n: int, s_grid: Sequence[float], *,
                 alpha_seq: RegVarSeq, beta_seq: RegVarSeq, tables: MomentTables | None = None) -> LemmaReport:
    """Scaled A_n, Delta_n^2 and sigma_n^2 against mu_alpha, nu_over_a and lambda_beta.

    The sigma^2 limit is also reported against mu_beta under ``alternatives``
    (the kernel a_n^{2(k-j)} matches lambda_beta, not mu_beta).
    """
    tables = tables or _tables_for(off, imm, n, s_grid)
    idx = _floor_idx(n, s_grid)
    an, bn = eval_seq(alpha_seq, n), eval_seq(beta_seq, n)
    b = tables.b_n
    finite = {
        "A": [float(tables.A[i] / (n * an)) for i in idx],
        "Delta2": [float(tables.Delta2[i] / (n * n * an * b)) if b > 0 else 0.0 for i in idx],
        "Sigma2": [float(tables.Sigma2[i] / (n * bn)) for i in idx],
    }
    limit = {
        "A": [float(limits.mu_alpha(p, s)) for s in s_grid],
        "Delta2": [float(limits.nu_over_a(p, s)) for s in s_grid],
        "Sigma2": [float(limits.lambda_beta(p, s)) for s in s_grid],
    }
    alternatives = {"Sigma2:mu_beta": [float(limits.mu_beta(p, s)) for s in s_grid]}
    return LemmaReport("lemma5", tuple(s_grid), finite, limit, alternatives)


def lemma6_check(off, imm, p: DriftParam, n: int, theta: float, s_grid: Sequence[float], *,
                 alpha_seq: RegVarSeq, beta_seq: RegVarSeq, tables: MomentTables | None = None) -> LemmaReport:
    """Scaled sums of a_n^{theta i} times Delta^2(i), sigma^2(i), A(i) against their limit integrals."""
    tables = tables or _tables_for(off, imm, n, s_grid)
    K = tables.K
    i = np.arange(1, K + 1)
    w = _powers(tables.a_n, theta * i, n)
    idx = _floor_idx(n, s_grid)
    an, bn = eval_seq(alpha_seq, n), eval_seq(beta_seq, n)
    b = tables.b_n

    def csum(arr):
        return np.concatenate([[LD(0)], np.cumsum(w * arr[1:], dtype=LD)])

    cD, cS, cA = csum(tables.Delta2), csum(tables.Sigma2), csum(tables.A)
    finite = {
        "Delta2": [float(cD[j] / (LD(n) ** 3 * an * b)) if b > 0 else 0.0 for j in idx],
        "Sigma2": [float(cS[j] / (LD(n) ** 2 * bn)) for j in idx],
        "A": [float(cA[j] / (LD(n) ** 2 * an)) for j in idx],
    }
    rate = theta * p.a
    nu = limits.curve_fn("nu_over_a", p)
    lam = limits.curve_fn("lambda_beta", p)
    mu = limits.curve_fn("mu_alpha", p)
    mub = lambda u: limits.mu_beta(p, u)

    def lim(fn):
        return [limits.integral_of(fn, s, rate) if s > 0 else 0.0 for s in s_grid]

    limit = {"Delta2": lim(nu), "Sigma2": lim(lam), "A": lim(mu)}
    return LemmaReport("lemma6", tuple(s_grid), finite, limit, {"Sigma2:mu_beta": lim(mub)})
