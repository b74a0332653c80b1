"""Path simulation of the row-n process and its scaled versions.

``X_0 = 0`` and ``X_k = (sum of X_{k-1} offspring) + eps_k``.  With diagnostics
on, a path also carries

    T_k = offspring sum - a_n X_{k-1}
    N_k = eps_k - CM_k        (CM_k: the immigration model's conditional mean)
    M_k = T_k + N_k

so that ``a_n^{-k}(X_k - A_n(k)) = sum_{j<=k} a_n^{-j} (M_j + CM_j - alpha(n,j))``.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from branchsim import _kernels as K
from branchsim.immigration import replicate_stream
from branchsim.moments import MomentTables

DEFAULT_CAP = 2**62


class ExplosionError(RuntimeError):
    pass


class DegenerateNormalizationError(ValueError):
    pass


def _law_args(law, n):
    kind, param, vals, probs = law.kernel_params(n)
    return (int(kind), float(param), np.ascontiguousarray(vals, dtype=float),
            np.ascontiguousarray(probs, dtype=float))


def offspring_sum(law, count: int, stream, n: int = 1) -> int:
    """Total offspring of ``count`` row-``n`` individuals (one collapsed draw)."""
    if count < 0:
        raise ValueError("count must be nonnegative")
    return int(K.offspring_sum(*_law_args(law, n), int(count), stream))


def offspring_sums(law, count: int, size: int, stream, n: int = 1) -> np.ndarray:
    return K.offspring_sums(*_law_args(law, n), int(count), int(size), stream)


@dataclass
class ProcessPath:
    n: int
    X: np.ndarray
    eps: np.ndarray
    T: Optional[np.ndarray] = None
    CM: Optional[np.ndarray] = None

    @property
    def K(self) -> int:
        return len(self.X) - 1

    @property
    def has_diagnostics(self) -> bool:
        return self.T is not None

    @property
    def N(self) -> np.ndarray:
        out = self.eps - self.CM
        out[0] = 0.0
        return out

    @property
    def M(self) -> np.ndarray:
        return self.T + self.N

    def to_csv(self, path, header_comment: str | None = None):
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            if self.has_diagnostics:
                w.writerow(["k", "X_k", "T_k", "N_k", "M_k"])
                N, M = self.N, self.M
                for k in range(self.K + 1):
                    w.writerow([k, int(self.X[k]), repr(float(self.T[k])), repr(float(N[k])),
                                repr(float(M[k]))])
            else:
                w.writerow(["k", "X_k"])
                for k in range(self.K + 1):
                    w.writerow([k, int(self.X[k])])
        return path


class PathSampler:
    """Row-``n`` simulator with the per-row arrays computed once."""

    def __init__(self, law, model, n: int, K_: int, cap: int = DEFAULT_CAP):
        if K_ < 1:
            raise ValueError("K must be >= 1")
        self.law, self.model, self.n, self.K, self.cap = law, model, n, K_, int(cap)
        self._law = _law_args(law, n)
        self._a_n = float(law.mean(n))
        self._plan = model.prepare(n, K_)

    def __call__(self, rng, diagnostics: bool = False) -> ProcessPath:
        eps, cm = self.model.draw(self._plan, rng)
        X = np.zeros(self.K + 1, dtype=np.int64)
        T = np.zeros(self.K + 1)
        status, k = K.run_path(*self._law, eps, self._a_n, self.cap, rng, X, T)
        if status != K.OK:
            raise ExplosionError(f"explosion cap {self.cap} exceeded at generation {k} (n={self.n})")
        if diagnostics:
            return ProcessPath(self.n, X, eps, T, np.asarray(cm, dtype=float))
        return ProcessPath(self.n, X, eps)


def simulate_path(law, model, n: int, K_: int, stream, diagnostics: bool = False,
                  cap: int = DEFAULT_CAP) -> ProcessPath:
    return PathSampler(law, model, n, K_, cap)(stream, diagnostics)


def simulate_single_ancestor(law, n: int, k_max: int, stream, cap: int = DEFAULT_CAP) -> np.ndarray:
    """Y(0..k_max) for one initial individual and no further immigration."""
    Y, status = K.run_single_ancestor(*_law_args(law, n), int(k_max), int(cap), stream)
    if status != K.OK:
        raise ExplosionError(f"explosion cap {cap} exceeded (single ancestor, n={n})")
    return Y


def run_replicates(sampler: PathSampler, R: int, seed: int, fn: Callable[[ProcessPath], object], *,
                   diagnostics: bool = False, threads: int = 1, tag: int = 0) -> list:
    """fn(path) for replicates 0..R-1, returned in replicate order.

    Replicate ``rid`` always uses ``replicate_stream(seed, n, rid, tag)``, so the
    result does not depend on ``threads``.
    """

    def one(rid):
        return fn(sampler(replicate_stream(seed, sampler.n, rid, tag), diagnostics))

    if threads <= 1:
        return [one(rid) for rid in range(R)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, range(R), chunksize=max(1, R // (8 * threads))))


def default_grid(T: float = 1.0, points: int = 100) -> np.ndarray:
    return np.arange(points + 1) * (T / points)


@dataclass
class ScaledPath:
    grid: np.ndarray
    X_values: np.ndarray
    Z_values: np.ndarray
    Z1_values: Optional[np.ndarray] = None
    Z2_values: Optional[np.ndarray] = None

    def to_csv(self, path, header_comment: str | None = None):
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "X_n", "Z_n", "Z1", "Z2"])
            nan = np.full(len(self.grid), np.nan)
            z1 = self.Z1_values if self.Z1_values is not None else nan
            z2 = self.Z2_values if self.Z2_values is not None else nan
            for row in zip(self.grid, self.X_values, self.Z_values, z1, z2):
                w.writerow([repr(float(v)) for v in row])
        return path


def grid_index(n: int, grid) -> np.ndarray:
    # small guard so that e.g. n * 0.29 lands on 29, not 28
    return np.floor(n * np.asarray(grid, dtype=float) + 1e-9).astype(np.int64)


def martingale_parts(path: ProcessPath, tables: MomentTables):
    """Partial sums (over all k) of the two terms of the decomposition, scaled by 1/B(n)."""
    if not path.has_diagnostics:
        raise ValueError("path was simulated without diagnostics")
    n = path.n
    B = math.sqrt(float(tables.B2[n]))
    if not B > 0:
        raise DegenerateNormalizationError("degenerate normalization: B(n) = 0")
    k = np.arange(path.K + 1)
    w = np.power(tables.a_n, -k.astype(float))
    z1 = np.cumsum(w * path.M) / B
    drift = path.CM - tables.alpha[: path.K + 1]
    drift[0] = 0.0
    z2 = np.cumsum(w * drift) / B
    return z1, z2


def scale_path(path: ProcessPath, tables: MomentTables, grid=None) -> ScaledPath:
    n = path.n
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    idx = grid_index(n, grid)
    if np.any(idx > path.K) or np.any(grid < 0):
        raise ValueError(f"grid must lie in [0, K/n] = [0, {path.K / n}]")
    if tables.n != n or tables.K < path.K:
        raise ValueError("moment tables do not match the path")
    A_n = float(tables.A[n])
    B = math.sqrt(float(tables.B2[n]))
    if not B > 0:
        raise DegenerateNormalizationError("degenerate normalization: B(n) = 0")
    X = path.X[idx].astype(float)
    Xs = X / A_n if A_n > 0 else np.full(len(idx), np.nan)
    Z = (X - tables.A[idx].astype(float)) / B
    if path.has_diagnostics:
        z1, z2 = martingale_parts(path, tables)
        return ScaledPath(grid, Xs, Z, z1[idx], z2[idx])
    return ScaledPath(grid, Xs, Z)
