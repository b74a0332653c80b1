"""Rowwise immigration sequences with exact moments and certified mixing profiles.

Four constructions are provided:

* :class:`IndependentPoisson`: independent Poisson(alpha(n,k)).
* :class:`MDependentBlockSum`: Poisson marginals made m-dependent by coupling.
  Slot ``i`` owns a unit-rate Poisson process ``Pi_i`` on the half line and
  ``eps_k = sum_{i=k-m}^{k} Pi_i([0, alpha(n,k)/(m+1)])``.  The marginal is
  exactly Poisson(alpha(n,k)), sequences more than ``m`` apart share no slot,
  and ``cov(eps_k, eps_l) = (m+1-|k-l|) * min(c_k, c_l)``.
* :class:`TwoPointBlockMin`: the two-point marginal (value ``floor(k ln^2 k)``
  with probability ``(1+x_n)/ln k``), made m-dependent by thresholding the
  running maximum of ``m+1`` iid uniforms.
* :class:`MarkovModulated`: Poisson with mean ``alpha(n,k) h(S_k)`` for a
  stationary finite chain ``S`` with a Doeblin minorization.

Each model also returns the conditional mean of ``eps_k`` given its own
internal past (earlier slots, uniforms or chain states), which the simulator
uses for the immigration martingale differences.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from branchsim import _kernels as K
from branchsim.moments import ImmigrationMoments
from branchsim.regvar import RegVarSeq, eval_seq
from branchsim.reports import TestReport

MAX_POISSON_MEAN = 1e12
DEFAULT_PSI_CAP = 1e6
COV_CUTOFF = 1e-16

PERTURBATIONS = {
    "none": lambda n: 0.0,
    "inv_log": lambda n: 1.0 / math.log(n) if n > 1 else 1.0,
    "inv_sqrt": lambda n: n ** -0.5,
}


def replicate_stream(seed: int, n: int, rid: int, tag: int = 0) -> np.random.Generator:
    """Independent stream for replicate ``rid`` of row ``n``; ``tag`` separates experiments."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(tag), int(n), int(rid)))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class RowMean:
    """alpha(n, k) = x(k) * (1 + x_n) with x_n one of :data:`PERTURBATIONS`."""

    seq: RegVarSeq
    perturbation: str = "none"

    def __post_init__(self):
        if self.perturbation not in PERTURBATIONS:
            raise ValueError(f"unknown perturbation {self.perturbation!r}")

    def x_n(self, n: int) -> float:
        return PERTURBATIONS[self.perturbation](n)

    def __call__(self, n, k):
        return np.asarray(eval_seq(self.seq, k), dtype=float) * (1.0 + self.x_n(n))


@dataclass(frozen=True)
class MixingProfile:
    psi: Callable[[int], float]
    summable_bound: float

    def psi_bound(self, lag: int) -> float:
        if lag < 1:
            raise ValueError("lag must be >= 1")
        return self.psi(lag)


def _check_poisson_means(lam):
    top = float(np.max(lam)) if len(lam) else 0.0
    if not top <= MAX_POISSON_MEAN:
        raise ValueError(f"Poisson mean {top:.3g} exceeds {MAX_POISSON_MEAN:g}")


class ImmigrationModel:
    """Shared interface; subclasses fill in moments and :meth:`sample`."""

    variant = "base"
    m = 0

    def mean(self, n, k):
        raise NotImplementedError

    def var(self, n, k):
        raise NotImplementedError

    def cov(self, n, j, i):
        j, i = np.broadcast_arrays(np.asarray(j), np.asarray(i))
        return np.zeros(j.shape)

    def bandwidth(self, n) -> int:
        return self.m

    def psi_bound(self, lag: int) -> float:
        return 0.0

    def mixing_profile(self) -> MixingProfile:
        return MixingProfile(self.psi_bound, 0.0)

    def prepare(self, n: int, K_: int):
        """Row-``n`` arrays reused by every replicate of length ``K_``."""
        raise NotImplementedError

    def draw(self, plan, rng):
        raise NotImplementedError

    def sample(self, n: int, K_: int, rng):
        """(eps, cm): int64 and float arrays over generations 0..K_ (entry 0 unused)."""
        return self.draw(self.prepare(n, K_), rng)

    def marginal_moments(self, n, k):
        return float(self.mean(n, k)), float(self.var(n, k))

    def moments(self) -> ImmigrationMoments:
        return ImmigrationMoments(self.mean, self.var, self.cov, self.bandwidth)

    def _row_index(self, K_):
        return np.arange(1, K_ + 1)


@dataclass(frozen=True)
class IndependentPoisson(ImmigrationModel):
    row_mean: RowMean
    variant: str = field(default="independent", init=False)
    m: int = field(default=0, init=False)

    def mean(self, n, k):
        return self.row_mean(n, k)

    def var(self, n, k):
        return self.row_mean(n, k)

    def prepare(self, n, K_):
        lam = np.zeros(K_ + 1)
        lam[1:] = self.row_mean(n, self._row_index(K_))
        _check_poisson_means(lam)
        return lam

    def draw(self, lam, rng):
        eps = np.zeros(len(lam), dtype=np.int64)
        K.poisson_row(lam, rng, eps)
        return eps, lam


@dataclass(frozen=True)
class MDependentBlockSum(ImmigrationModel):
    row_mean: RowMean
    m: int = 1
    psi_cap: float = DEFAULT_PSI_CAP
    variant: str = field(default="m_dependent", init=False)

    def __post_init__(self):
        if self.m < 0:
            raise ValueError("m must be nonnegative")

    def mean(self, n, k):
        return self.row_mean(n, k)

    def var(self, n, k):
        return self.row_mean(n, k)

    def cov(self, n, j, i):
        j, i = np.broadcast_arrays(np.asarray(j), np.asarray(i))
        d = np.abs(j - i)
        c = np.minimum(self.row_mean(n, j), self.row_mean(n, i)) / (self.m + 1)
        return np.where(d <= self.m, (self.m + 1 - d) * c, 0.0)

    def psi_bound(self, lag):
        # no closed form at lags <= m; the cap is a sentinel
        return 0.0 if lag > self.m else self.psi_cap

    def mixing_profile(self):
        return MixingProfile(self.psi_bound, self.m * self.psi_cap)

    def prepare(self, n, K_):
        lam = np.zeros(K_ + 1)
        lam[1:] = self.row_mean(n, self._row_index(K_))
        _check_poisson_means(lam)
        return lam / (self.m + 1)

    def draw(self, c, rng):
        eps = np.zeros(len(c), dtype=np.int64)
        own = np.zeros(len(c), dtype=np.int64)
        K.block_sum_row(c, self.m, rng, eps, own)
        cm = eps - own + c
        cm[0] = 0.0
        return eps, cm


def _two_point_values(k):
    k = np.asarray(k, dtype=float)
    lk = np.log(np.maximum(k, 1.0))
    return np.floor(k * lk**2)


@dataclass(frozen=True)
class TwoPointBlockMin(ImmigrationModel):
    """Two-point marginal: ``floor(k ln^2 k)`` with probability ``min(1, (1+x_n)/ln k)``.

    ``eps_1 = 0``.  With ``m = 0`` the sequence is independent.
    """

    perturbation: str = "inv_log"
    m: int = 0
    psi_cap: float = DEFAULT_PSI_CAP

    @property
    def variant(self):
        return "m_dependent" if self.m > 0 else "independent"

    def x_n(self, n):
        return PERTURBATIONS[self.perturbation](n)

    def values(self, k):
        return _two_point_values(k)

    def prob(self, n, k):
        k = np.asarray(k, dtype=float)
        with np.errstate(divide="ignore"):
            p = (1.0 + self.x_n(n)) / np.log(k)
        return np.where(k >= 2, np.clip(p, 0.0, 1.0), 0.0)

    def mean(self, n, k):
        return self.values(k) * self.prob(n, k)

    def var(self, n, k):
        p = self.prob(n, k)
        return self.values(k) ** 2 * p * (1.0 - p)

    def cov(self, n, j, i):
        j, i = np.broadcast_arrays(np.asarray(j), np.asarray(i))
        d = np.abs(j - i)
        s = self.m + 1 - d
        pj, pi = self.prob(n, j), self.prob(n, i)
        rj, ri = pj ** (1.0 / (self.m + 1)), pi ** (1.0 / (self.m + 1))
        joint = np.minimum(rj, ri) ** np.maximum(s, 0) * rj**d * ri**d
        out = self.values(j) * self.values(i) * (joint - pj * pi)
        return np.where(d <= self.m, out, 0.0)

    def psi_bound(self, lag):
        return 0.0 if lag > self.m else self.psi_cap

    def mixing_profile(self):
        return MixingProfile(self.psi_bound, self.m * self.psi_cap)

    def alpha_target(self) -> RegVarSeq:
        """x_n = 0 mean, written as k * l(k) with ``l`` tabulated exactly."""

        def l(k):
            k = np.maximum(np.asarray(k, dtype=float), 3.0)
            return _two_point_values(k) / (k * np.log(k))

        return RegVarSeq(1.0, custom=l)

    def beta_target(self) -> RegVarSeq:
        """x_n = 0 variance ``v^2 p (1-p)``, held at its k = 3 value below k = 3."""

        def l(k):
            k = np.maximum(np.asarray(k, dtype=float), 3.0)
            p = 1.0 / np.log(k)
            return _two_point_values(k) ** 2 * p * (1.0 - p) / k**2

        return RegVarSeq(2.0, custom=l)

    def prepare(self, n, K_):
        k = np.arange(1, K_ + 1)
        v = np.zeros(K_ + 1, dtype=np.int64)
        v[1:] = self.values(k)
        p = np.zeros(K_ + 1)
        p[1:] = self.prob(n, k)
        return v, p ** (1.0 / (self.m + 1))

    def draw(self, plan, rng):
        v, r = plan
        eps = np.zeros(len(v), dtype=np.int64)
        cm = np.zeros(len(v))
        K.block_min_row(v, r, self.m, rng, eps, cm)
        return eps, cm


def stationary_distribution(P: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eig(P.T)
    i = int(np.argmin(np.abs(w - 1.0)))
    pi = np.real(V[:, i])
    pi = pi / pi.sum()
    if np.any(pi <= 0):
        raise ValueError("transition matrix is not irreducible")
    return pi


def doeblin_constant(P: np.ndarray) -> float:
    return float(np.sum(np.min(P, axis=0)))


@dataclass(frozen=True)
class MarkovModulated(ImmigrationModel):
    """Poisson immigration modulated by a stationary finite chain.

    ``levels`` are rescaled so that their stationary mean is 1; the row mean is
    therefore ``alpha(n, k)`` exactly.
    """

    row_mean: RowMean
    P: tuple
    levels: tuple
    variant: str = field(default="psi_mixing", init=False)

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        h = np.asarray(self.levels, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] != h.size:
            raise ValueError("P must be square and match the number of levels")
        if np.any(P < 0) or not np.allclose(P.sum(axis=1), 1.0, atol=1e-12):
            raise ValueError("P must be row stochastic")
        if np.any(h <= 0):
            raise ValueError("levels must be positive")
        delta = doeblin_constant(P)
        if delta <= 0:
            raise ValueError("transition matrix has no one-step Doeblin minorization (delta = 0)")
        pi = stationary_distribution(P)
        h = h / float(pi @ h)
        object.__setattr__(self, "_P", P)
        object.__setattr__(self, "_pi", pi)
        object.__setattr__(self, "_h", h)
        object.__setattr__(self, "_delta", delta)
        bw = self._bandwidth()
        object.__setattr__(self, "_lag_factor", self._lag_factors(bw))

    @property
    def m(self) -> int:
        return len(self._lag_factor) - 1

    @property
    def stationary(self):
        return self._pi.copy()

    @property
    def multipliers(self):
        return self._h.copy()

    @property
    def delta(self) -> float:
        return self._delta

    @property
    def level_variance(self) -> float:
        """Var h(S) under the stationary law."""
        return float(self._lag_factor[0])

    def _bandwidth(self) -> int:
        if self._delta >= 1.0:
            return 0
        pmin = float(self._pi.min())
        return max(1, math.ceil(math.log(COV_CUTOFF * pmin) / math.log1p(-self._delta)))

    def _lag_factors(self, bw):
        # g[L] = cov(h(S_0), h(S_L)) under stationarity
        u = self._pi * self._h
        g = np.zeros(bw + 1)
        v = self._h.copy()
        g[0] = float(u @ v) - 1.0
        for L in range(1, bw + 1):
            v = self._P @ v
            g[L] = float(u @ v) - 1.0
        return g

    def mean(self, n, k):
        return self.row_mean(n, k)

    def var(self, n, k):
        a = self.row_mean(n, k)
        return a + a**2 * self._lag_factor[0]

    def cov(self, n, j, i):
        j, i = np.broadcast_arrays(np.asarray(j), np.asarray(i))
        d = np.abs(j - i)
        bw = self.m
        g = self._lag_factor[np.minimum(d, bw)]
        out = self.row_mean(n, j) * self.row_mean(n, i) * g
        return np.where((d >= 1) & (d <= bw), out, 0.0)

    def psi_bound(self, lag):
        if lag < 1:
            raise ValueError("lag must be >= 1")
        return (1.0 - self._delta) ** lag / float(self._pi.min())

    def exact_psi(self, lag: int) -> float:
        PL = np.linalg.matrix_power(self._P, lag)
        return float(np.max(np.abs(PL / self._pi[None, :] - 1.0)))

    def mixing_profile(self):
        summable = (1.0 - self._delta) / (self._delta * float(self._pi.min()))
        return MixingProfile(self.psi_bound, summable)

    def prepare(self, n, K_):
        alpha = np.zeros(K_ + 1)
        alpha[1:] = self.row_mean(n, self._row_index(K_))
        _check_poisson_means(alpha * self._h.max())
        return alpha, self._P @ self._h, np.cumsum(self._P, axis=1), np.cumsum(self._pi)

    def _run(self, plan, rng):
        alpha, Ph, Pcum, pi_cum = plan
        eps = np.zeros(len(alpha), dtype=np.int64)
        cm = np.zeros(len(alpha))
        states = np.zeros(len(alpha), dtype=np.int64)
        K.markov_row(alpha, self._h, Ph, Pcum, pi_cum, rng, eps, cm, states)
        return eps, cm, states

    def draw(self, plan, rng):
        eps, cm, _ = self._run(plan, rng)
        return eps, cm

    def sample_states(self, n, K_, rng):
        """Chain states S_1..S_K (index 0 unused) for the stream ``rng``."""
        return self._run(self.prepare(n, K_), rng)[2]


def sample_row(model: ImmigrationModel, n: int, length: int, stream) -> np.ndarray:
    """eps_1..eps_length for row ``n``."""
    if length < 1:
        raise ValueError("length must be >= 1")
    eps, _ = model.sample(n, length, stream)
    return eps[1:]


def marginal_moments(model: ImmigrationModel, n: int, k: int):
    if k < 1:
        raise ValueError("k must be >= 1")
    return model.marginal_moments(n, k)


def cov_oracle(model: ImmigrationModel, n: int, j: int, i: int) -> float:
    if not j > i >= 1:
        raise ValueError("need j > i >= 1")
    return float(model.cov(n, j, i))


def psi_bound(model: ImmigrationModel, lag: int) -> float:
    if lag < 1:
        raise ValueError("lag must be >= 1")
    return model.psi_bound(lag)


def sample_pairs(model, n, k, lag, R, seed=0, tag=8):
    """R independent draws of (eps_k, eps_{k+lag})."""
    out = np.empty((R, 2), dtype=np.int64)
    plan = model.prepare(n, k + lag)
    for rid in range(R):
        eps, _ = model.draw(plan, replicate_stream(seed, n, rid, tag))
        out[rid] = eps[k], eps[k + lag]
    return out


def empirical_cov(x, y):
    """Sample covariance and its standard error from the centered products."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    prod = (x - x.mean()) * (y - y.mean())
    R = len(prod)
    return float(prod.sum() / (R - 1)), float(prod.std(ddof=1) / math.sqrt(R))


def verify_lemma8(model, n: int, lag: int, R: int, *, seed: int = 0, k: int | None = None) -> TestReport:
    """|cov(eps_k, eps_{k+lag})| <= psi(lag) E|eps_k| E|eps_{k+lag}| up to 4 SE."""
    k = max(2, n // 2) if k is None else k
    pairs = sample_pairs(model, n, k, lag, R, seed)
    c, se = empirical_cov(pairs[:, 0], pairs[:, 1])
    # marginals are nonnegative, so E|eps| = E eps
    bound = model.psi_bound(lag) * float(model.mean(n, k)) * float(model.mean(n, k + lag))
    exact = float(model.cov(n, k + lag, k))
    return TestReport(f"lemma8[{model.variant},lag={lag}]", abs(c), 0.0, bound + 4 * se, se,
                      note=f"psi_bound={model.psi_bound(lag):.4g} bound={bound:.4g} exact_cov={exact:.4g}")
