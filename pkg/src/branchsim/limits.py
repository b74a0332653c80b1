"""Deterministic limit curves: the time changes and the limit path of X_n.

With drift ``a`` and exponents ``alpha``/``beta``::

    mu_alpha(t)     = int_0^t u^alpha e^{a(t-u)} du
    nu_alpha(t)     = int_0^t u^alpha e^{a(t-u)} (1 - e^{a(t-u)}) du
    lambda_beta(t)  = int_0^t u^beta e^{2a(t-u)} du
    pi_alpha(t)     = mu_alpha(t) / mu_alpha(1)

``nu_alpha`` itself is negative for every ``a != 0``.  The scaled offspring
variance converges to ``-nu_alpha(t)/a``, which is what :func:`nu_over_a`
returns; it is positive for both signs of ``a`` and tends to
``t^(alpha+2)/((alpha+1)(alpha+2))`` as ``a -> 0``.

``phi`` and ``phi_star`` are normalized by ``nu_over_a(1)`` so that
``phi(1) == 1`` and ``phi(t) == e^{2at} phi_star(t)``.  Swapping the order of
integration in ``int_0^t mu_alpha(u) e^{2a(t-u)} du`` gives exactly
``nu_over_a(t)``, so no nested quadrature is needed.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import partial

import numpy as np
from scipy import integrate

A_ZERO_THRESHOLD = 1e-8
DEFAULT_QUAD_TOL = 1e-10


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class DriftParam:
    a: float
    alpha: float
    beta: float = 0.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be nonnegative")

    @property
    def critical(self) -> bool:
        return abs(self.a) < A_ZERO_THRESHOLD


def _quad(f, t, tol):
    if t == 0.0:
        return 0.0
    val, err, info = integrate.quad(f, 0.0, t, epsabs=tol, epsrel=tol, limit=200,
                                    full_output=1)[:3]
    if err > 10 * tol * max(1.0, abs(val)):
        raise QuadratureError(f"quadrature on [0, {t}] reached only {err:.3g} (requested {tol:g})")
    return val


def _curve(scalar_fn):
    """Lift a scalar evaluator to accept arrays of t."""

    def wrapper(p: DriftParam, t, quad_tol: float = DEFAULT_QUAD_TOL):
        tarr = np.asarray(t, dtype=float)
        if np.any(tarr < 0):
            raise ValueError("time changes are defined for t >= 0")
        if tarr.ndim == 0:
            return scalar_fn(p, float(tarr), quad_tol)
        return np.array([scalar_fn(p, float(x), quad_tol) for x in tarr.ravel()]).reshape(tarr.shape)

    wrapper.__name__ = scalar_fn.__name__.lstrip("_")
    wrapper.__doc__ = scalar_fn.__doc__
    return wrapper


@_curve
def _mu_alpha(p, t, tol):
    """int_0^t u^alpha e^{a(t-u)} du."""
    if p.critical:
        return t ** (p.alpha + 1) / (p.alpha + 1)
    return _quad(lambda u: u**p.alpha * np.exp(p.a * (t - u)), t, tol)


@_curve
def _nu_alpha(p, t, tol):
    """int_0^t u^alpha e^{a(t-u)} (1 - e^{a(t-u)}) du  (negative for a != 0)."""
    if p.critical:
        return -p.a * t ** (p.alpha + 2) / ((p.alpha + 1) * (p.alpha + 2))
    return _quad(lambda u: -u**p.alpha * np.exp(p.a * (t - u)) * np.expm1(p.a * (t - u)), t, tol)


@_curve
def _nu_over_a(p, t, tol):
    """-nu_alpha(t)/a, continued to its limit at a = 0."""
    if p.critical:
        return t ** (p.alpha + 2) / ((p.alpha + 1) * (p.alpha + 2))
    a = p.a
    return _quad(lambda u: u**p.alpha * np.exp(a * (t - u)) * np.expm1(a * (t - u)) / a, t, tol)


@_curve
def _lambda_beta(p, t, tol):
    """int_0^t u^beta e^{2a(t-u)} du."""
    if p.critical:
        return t ** (p.beta + 1) / (p.beta + 1)
    return _quad(lambda u: u**p.beta * np.exp(2 * p.a * (t - u)), t, tol)


@_curve
def _phi(p, t, tol):
    """Variance time change of the fluctuation limit; phi(1) = 1."""
    if p.critical:
        return t ** (2 + p.alpha)
    return _nu_over_a(p, t, tol) / _nu_over_a(p, 1.0, tol)


@_curve
def _phi_star(p, t, tol):
    """Quadratic-variation limit of the martingale part; phi_star(t) = e^{-2at} phi(t)."""
    if p.critical:
        return t ** (2 + p.alpha)
    a = p.a
    # int_0^t mu_alpha(u) e^{-2au} du after swapping the integrals
    inner = _quad(lambda v: -v**p.alpha * np.exp(-2 * a * v) * np.expm1(-a * (t - v)) / a, t, tol)
    return inner / _nu_over_a(p, 1.0, tol)


@_curve
def _pi_alpha(p, t, tol):
    """Deterministic limit of X_n(t): mu_alpha(t)/mu_alpha(1)."""
    return _mu_alpha(p, t, tol) / _mu_alpha(p, 1.0, tol)


mu_alpha = _mu_alpha
nu_alpha = _nu_alpha
nu_over_a = _nu_over_a
lambda_beta = _lambda_beta
phi = _phi
phi_star = _phi_star
pi_alpha = _pi_alpha


def mu_beta(p: DriftParam, t, quad_tol: float = DEFAULT_QUAD_TOL):
    """mu with the variance exponent in place of alpha."""
    return mu_alpha(DriftParam(p.a, p.beta, p.beta), t, quad_tol)


CURVES = {
    "mu_alpha": mu_alpha,
    "nu_alpha": nu_alpha,
    "nu_over_a": nu_over_a,
    "lambda_beta": lambda_beta,
    "phi": phi,
    "phi_star": phi_star,
    "pi_alpha": pi_alpha,
}


@dataclass(frozen=True)
class TimeChange:
    kind: str
    params: DriftParam
    quad_tol: float = DEFAULT_QUAD_TOL

    def __post_init__(self):
        if self.kind not in CURVES:
            raise ValueError(f"unknown curve {self.kind!r}; expected one of {sorted(CURVES)}")

    def __call__(self, t):
        return CURVES[self.kind](self.params, t, self.quad_tol)

    def tabulate(self, grid):
        grid = np.asarray(grid, dtype=float)
        return grid, self(grid)

    def dump_csv(self, path, grid, header_comment: str | None = None):
        grid, values = self.tabulate(grid)
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "value"])
            for t, v in zip(grid, values):
                w.writerow([repr(float(t)), repr(float(v))])
        return path


def integral_of(fn, s: float, weight_rate: float = 0.0, tol: float = DEFAULT_QUAD_TOL) -> float:
    """int_0^s e^{weight_rate*u} fn(u) du for a scalar curve ``fn``."""
    return _quad(lambda u: np.exp(weight_rate * u) * fn(u), s, tol)


def curve_fn(kind: str, p: DriftParam, tol: float = DEFAULT_QUAD_TOL):
    return partial(CURVES[kind], p, quad_tol=tol)
