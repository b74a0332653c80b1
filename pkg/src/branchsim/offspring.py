"""Offspring laws of the row-n process.

Each law knows its exact mean ``a_n`` and variance ``b_n``, the drift ``a`` of
``a_n = 1 + a/n + o(1/n)``, and how to hand its row-``n`` parameters to the
compiled path kernel (see :mod:`branchsim._kernels`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import special, stats

from branchsim._kernels import BERNOULLI, FINITE, POISSON
from branchsim.moments import OffspringMoments

_LOG_1E36 = 36.0 * math.log(10.0)


class OffspringLaw:
    """Base class; subclasses implement :meth:`kernel_params`, :meth:`mean`, :meth:`var`."""

    drift: float = 0.0
    name: str = "law"

    def mean(self, n: int) -> float:
        raise NotImplementedError

    def var(self, n: int) -> float:
        raise NotImplementedError

    def kernel_params(self, n: int):
        """(kind, scalar parameter, support values, support probabilities)."""
        raise NotImplementedError

    def support_radius(self, n: int) -> float:
        """max |xi - a_n| over the support (inf for unbounded laws)."""
        _, _, vals, probs = self.kernel_params(n)
        vals = vals[probs > 0]
        return float(np.max(np.abs(vals - self.mean(n))))

    def moments(self) -> OffspringMoments:
        return OffspringMoments(self.mean, self.var, self.drift)

    def lindeberg_witness(self, B: Callable[[int], float], probe_ns=(10**3, 10**4, 10**5)) -> bool:
        """Analytic flag for the Lindeberg condition on offspring.

        True when the support radius is o(B(n)) along ``probe_ns``; unbounded
        laws override this.
        """
        ratios = [self.support_radius(n) / B(n) for n in probe_ns]
        return all(b <= a for a, b in zip(ratios, ratios[1:])) and ratios[-1] < 1.0

    def pmf_table(self, n: int):
        _, _, vals, probs = self.kernel_params(n)
        return vals, probs


@dataclass(frozen=True)
class BernoulliOffspring(OffspringLaw):
    """Success probability ``1 - a/n``; the drift is ``-a``."""

    a: float = 1.0
    name: str = "bernoulli"

    @property
    def drift(self) -> float:
        return -self.a

    def p(self, n: int) -> float:
        p = 1.0 - self.a / n
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"Bernoulli success probability 1 - a/n = {p} outside [0, 1] at n={n}")
        return p

    def mean(self, n):
        return self.p(n)

    def var(self, n):
        p = self.p(n)
        return p * (1.0 - p)

    def kernel_params(self, n):
        p = self.p(n)
        return BERNOULLI, p, np.array([0.0, 1.0]), np.array([1.0 - p, p])


@dataclass(frozen=True)
class PoissonOffspring(OffspringLaw):
    """Poisson with mean ``1 + a/n`` (so ``b_n = a_n``)."""

    a: float = 0.0
    name: str = "poisson"

    @property
    def drift(self) -> float:
        return self.a

    def mean(self, n):
        m = 1.0 + self.a / n
        if m < 0:
            raise ValueError(f"Poisson mean 1 + a/n = {m} is negative at n={n}")
        return m

    def var(self, n):
        return self.mean(n)

    def kernel_params(self, n):
        return POISSON, self.mean(n), np.zeros(0), np.zeros(0)

    def support_radius(self, n):
        return math.inf

    def lindeberg_witness(self, B, probe_ns=(10**3, 10**4, 10**5)) -> bool:
        # every moment is bounded in n, so B(n) -> inf suffices
        vals = [B(n) for n in probe_ns]
        return all(b > a for a, b in zip(vals, vals[1:]))


def _default_dn(n: int) -> int:
    return max(2, (n + 1) // 2)


@dataclass(frozen=True)
class ThreePointOffspring(OffspringLaw):
    """Values ``n``, ``d_n`` and 0 with probabilities ``c/n^2``, ``1/d_n`` and the rest.

    Gives ``a_n = 1 + c/n`` and ``b_n ~ d_n``.
    """

    c: float = 1.0
    d: Callable[[int], int] = _default_dn
    name: str = "three_point"

    @property
    def drift(self) -> float:
        return self.c

    def kernel_params(self, n):
        dn = int(self.d(n))
        if dn < 1:
            raise ValueError(f"d_n must be a positive integer, got {dn}")
        p_n = self.c / n**2
        p_d = 1.0 / dn
        p_0 = 1.0 - p_n - p_d
        if min(p_n, p_0) < 0:
            raise ValueError(f"three-point law has negative probability at n={n}")
        vals = np.array([float(n), float(dn), 0.0])
        probs = np.array([p_n, p_d, p_0])
        return FINITE, 0.0, vals, probs

    def mean(self, n):
        _, _, v, p = self.kernel_params(n)
        return float(v @ p)

    def var(self, n):
        _, _, v, p = self.kernel_params(n)
        mu = v @ p
        return float(((v - mu) ** 2) @ p)


@dataclass(frozen=True)
class GenericOffspring(OffspringLaw):
    """Finite-support law given by ``table(n) -> (values, probabilities)``."""

    table: Callable[[int], tuple] = None
    drift_value: float = 0.0
    name: str = "generic"

    @property
    def drift(self) -> float:
        return self.drift_value

    def kernel_params(self, n):
        vals, probs = self.table(n)
        vals = np.asarray(vals, dtype=float)
        probs = np.asarray(probs, dtype=float)
        if np.any(vals < 0) or np.any(vals != np.floor(vals)):
            raise ValueError("offspring values must be nonnegative integers")
        if np.any(probs < 0) or np.any(probs > 1) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("offspring probabilities must lie in [0, 1] and sum to 1")
        return FINITE, 0.0, vals, probs

    def mean(self, n):
        _, _, v, p = self.kernel_params(n)
        return float(v @ p)

    def var(self, n):
        _, _, v, p = self.kernel_params(n)
        mu = v @ p
        return float(((v - mu) ** 2) @ p)


def deterministic_offspring(children: int = 1) -> GenericOffspring:
    return GenericOffspring(table=lambda n: ([children], [1.0]), drift_value=0.0,
                            name=f"deterministic_{children}")


def _poisson_lindeberg(mu: float, cut: float, log: bool) -> float:
    """E[(xi - mu)^2 1{|xi - mu| > cut}] for xi ~ Poisson(mu), summed in log space."""
    # upper tail: k > mu + cut; lower tail: 0 <= k < mu - cut
    if mu == 0.0:
        return -math.inf if log else 0.0
    k_hi = math.floor(mu + cut) + 1
    logs = []
    k = k_hi
    logpmf = stats.poisson.logpmf(k, mu)
    while True:
        term = logpmf + 2.0 * math.log(k - mu)
        logs.append(term)
        # terms decay at least geometrically once k > mu
        if term < max(logs) - _LOG_1E36:
            break
        if len(logs) > 100_000:
            break
        k += 1
        logpmf += math.log(mu) - math.log(k)
    lo_top = math.ceil(mu - cut) - 1
    if lo_top >= 0:
        ks = np.arange(0, lo_top + 1)
        logs.extend((stats.poisson.logpmf(ks, mu) + 2.0 * np.log(np.abs(ks - mu))).tolist())
    total = float(special.logsumexp(logs))
    return total if log else math.exp(total)


def lindeberg_stat(law: OffspringLaw, n: int, B_n: float, eps: float, *, log: bool = False) -> float:
    """E[(xi - a_n)^2 1{|xi - a_n| > eps * B_n}] for the row-``n`` law.

    Finite-support laws are summed exactly.  The Poisson tail is summed in log
    space until the remaining terms fall below 1e-36 of the leading one, so
    values far below the double-precision range are still ordered correctly
    when ``log=True`` (which returns the natural log; ``-inf`` for an empty
    exceedance set).
    """
    if eps <= 0 or B_n <= 0:
        raise ValueError("eps and B_n must be positive")
    cut = eps * B_n
    mu = law.mean(n)
    if isinstance(law, PoissonOffspring):
        if math.isinf(cut):
            return -math.inf if log else 0.0
        return _poisson_lindeberg(mu, cut, log)
    vals, probs = law.pmf_table(n)
    dev = vals - mu
    mask = (np.abs(dev) > cut) & (probs > 0)
    if not mask.any():
        return -math.inf if log else 0.0
    val = float(np.sum(dev[mask] ** 2 * probs[mask]))
    return math.log(val) if log else val
