"""Regularly varying sequences and finite-n checks of the growth conditions C1-C5.

The conditions are asymptotic (``o(.)`` relations), so they cannot be decided at
finite ``n``.  Each one is turned into a monitored ratio evaluated along a probe
grid of ``n`` values; a condition is reported as ``satisfied-trend`` when the
ratio is nonincreasing over the last three probes and below a threshold at the
largest probe.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

SATISFIED = "satisfied-trend"
VIOLATED = "violated"
INCONCLUSIVE = "inconclusive"

DEFAULT_PROBES = (100, 1_000, 10_000, 100_000)


class DegenerateNormalizerError(ValueError):
    """A normalizing sequence evaluated to zero."""


@dataclass(frozen=True)
class RegVarSeq:
    """x(k) = const * k**index * l(k).

    The slowly varying factor ``l`` is 1 by default, ``(ln(k+1))**log_power``
    when ``log_power`` is nonzero, or an arbitrary vectorized callable passed
    as ``custom`` (which then replaces the log factor).
    """

    index: float
    const: float = 1.0
    log_power: float = 0.0
    custom: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)

    def __post_init__(self):
        if self.index < 0:
            raise ValueError(f"index must be nonnegative, got {self.index}")
        if not self.const > 0:
            raise ValueError(f"const must be positive, got {self.const}")

    @property
    def kind(self) -> str:
        if self.custom is not None:
            return "custom"
        return "log_power" if self.log_power else "constant"

    def slowly_varying(self, k):
        k = np.asarray(k, dtype=float)
        if self.custom is not None:
            return np.asarray(self.custom(k), dtype=float)
        if self.log_power:
            return np.log1p(k) ** self.log_power
        return np.ones_like(k)

    def __call__(self, k):
        return eval_seq(self, k)


def eval_seq(seq: RegVarSeq, k):
    """Evaluate ``seq`` at integer ``k >= 1`` (scalar or array)."""
    karr = np.asarray(k, dtype=float)
    if np.any(karr < 1):
        raise ValueError("regularly varying sequences are indexed from k = 1")
    out = seq.const * karr**seq.index * seq.slowly_varying(karr)
    return float(out) if out.ndim == 0 else out


def check_c1(model_means: Callable[[int, np.ndarray], np.ndarray], target: RegVarSeq,
             n: int, s: float = 1.0) -> float:
    """max_{1<=k<=ns} |x(n,k) - x(k)| / x(n).

    ``model_means(n, k)`` returns the row-``n`` sequence at the integer array
    ``k``; the same check applies to means and variances.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    norm = eval_seq(target, n)
    if not norm > 0:
        raise DegenerateNormalizerError(f"target evaluates to {norm} at n={n}")
    kmax = int(np.floor(n * s))
    if kmax < 1:
        return 0.0
    k = np.arange(1, kmax + 1)
    dev = np.abs(np.asarray(model_means(n, k), dtype=float) - eval_seq(target, k))
    return float(dev.max() / norm)


@dataclass
class ConditionEntry:
    name: str
    probe_ns: tuple
    finite_n_ratio: tuple
    verdict: str
    note: str = ""


@dataclass
class ConditionReport:
    entries: list

    def __getitem__(self, name: str) -> ConditionEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def verdicts(self) -> dict:
        return {e.name: e.verdict for e in self.entries}

    def satisfied(self, names: Sequence[str]) -> bool:
        return all(self[nm].verdict == SATISFIED for nm in names)

    def failing(self, names: Sequence[str]) -> list:
        return [nm for nm in names if self[nm].verdict != SATISFIED]

    def to_rows(self):
        for e in self.entries:
            for n, r in zip(e.probe_ns, e.finite_n_ratio):
                yield e.name, n, r, e.verdict


def trend_verdict(ratios: Sequence[float], threshold: float, atol: float = 1e-9) -> str:
    """Verdict from the last three probes; ratios below ``atol`` count as exact zeros
    (rounding noise in e.g. ``n(a_n - 1) - a`` is not a trend)."""
    r = np.asarray(ratios, dtype=float)
    if not np.all(np.isfinite(r)):
        return VIOLATED
    r = np.where(np.abs(r) < atol, 0.0, r)
    tail = r[-3:]
    steps = np.diff(tail)
    if np.all(steps <= 0) and tail[-1] <= threshold:
        return SATISFIED
    if np.all(steps > 0):
        return VIOLATED
    return INCONCLUSIVE


def check_conditions(config, probe_ns: Sequence[int] = DEFAULT_PROBES, *,
                     threshold: float = 0.1, b_floor: float = 1e-3) -> ConditionReport:
    """Probe C1-C5 for a process configuration.

    ``config`` needs ``law`` (offspring law with ``mean(n)``, ``var(n)``,
    ``drift``), ``immigration`` (model with ``mean(n, k)``, ``var(n, k)``),
    ``alpha_seq``/``beta_seq`` (:class:`RegVarSeq` targets) and ``m``.
    """
    probe_ns = [int(n) for n in probe_ns]
    if len(probe_ns) < 3 or any(b <= a for a, b in zip(probe_ns, probe_ns[1:])):
        raise ValueError("probe_ns must be increasing with at least 3 entries")

    law, imm = config.law, config.immigration
    aseq, bseq = config.alpha_seq, config.beta_seq
    m = getattr(config, "m", 0) or 0

    c1, c2, c3, c4, c5 = [], [], [], [], []
    bvals = []
    for n in probe_ns:
        c1.append(max(check_c1(imm.mean, aseq, n), check_c1(imm.var, bseq, n)))
        a_n, b_n = law.mean(n), law.var(n)
        alpha_n, beta_n = eval_seq(aseq, n), eval_seq(bseq, n)
        c2.append(abs(n * (a_n - 1.0) - law.drift))
        c3.append(b_n / alpha_n)
        # alpha(n) -> infinity is folded in through 1/alpha(n)
        c4.append(max(beta_n / (n * alpha_n**2), 1.0 / alpha_n))
        c5.append(max(m * beta_n / (n * alpha_n * b_n), 1.0 / alpha_n) if b_n > 0 else np.inf)
        bvals.append(b_n)

    entries = [
        ConditionEntry("C1", tuple(probe_ns), tuple(c1), trend_verdict(c1, threshold)),
        ConditionEntry("C2", tuple(probe_ns), tuple(c2), trend_verdict(c2, threshold)),
        ConditionEntry("C3", tuple(probe_ns), tuple(c3), trend_verdict(c3, threshold)),
        ConditionEntry("C4", tuple(probe_ns), tuple(c4), trend_verdict(c4, threshold)),
    ]
    v5 = trend_verdict(c5, threshold)
    note = f"min b_n over probes = {min(bvals):.6g}"
    if min(bvals) < b_floor:
        v5 = VIOLATED
        note += f" < {b_floor:g} (lim inf b_n > 0 fails)"
    entries.append(ConditionEntry("C5", tuple(probe_ns), tuple(c5), v5, note))
    return ConditionReport(entries)
