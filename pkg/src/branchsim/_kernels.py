"""Compiled per-replicate kernels.

Every kernel draws from a caller-owned ``np.random.Generator`` so that a path is
a pure function of its stream.  Kernels never raise; they return a status code
that the Python wrappers translate into exceptions.
"""
import numpy as np
from numba import njit

BERNOULLI, POISSON, FINITE = 0, 1, 2

OK = 0
EXPLODED = 1


@njit(nogil=True, cache=True)
def offspring_sum(kind, param, vals, probs, count, rng):
    if count <= 0:
        return 0
    if kind == BERNOULLI:
        return rng.binomial(count, param)
    if kind == POISSON:
        return rng.poisson(count * param)
    # sequential binomial split of ``count`` over the support
    total = 0
    remaining = count
    rest = 1.0
    last = len(vals) - 1
    for i in range(last):
        if remaining == 0:
            break
        c = 0
        if probs[i] > 0.0 and rest > 0.0:
            p = probs[i] / rest
            c = remaining if p >= 1.0 else rng.binomial(remaining, p)
        total += c * np.int64(vals[i])
        remaining -= c
        rest -= probs[i]
    total += remaining * np.int64(vals[last])
    return total


@njit(nogil=True, cache=True)
def offspring_sums(kind, param, vals, probs, count, size, rng):
    out = np.empty(size, dtype=np.int64)
    for r in range(size):
        out[r] = offspring_sum(kind, param, vals, probs, count, rng)
    return out


@njit(nogil=True, cache=True)
def run_path(kind, param, vals, probs, eps, a_n, cap, rng, X, T):
    """Fill X[0..K] and T[1..K]; returns (status, generation reached)."""
    K = len(X) - 1
    X[0] = 0
    T[0] = 0.0
    for k in range(1, K + 1):
        s = offspring_sum(kind, param, vals, probs, X[k - 1], rng)
        T[k] = s - a_n * X[k - 1]
        x = s + eps[k]
        if x > cap or x < 0:
            return EXPLODED, k
        X[k] = x
    return OK, K


@njit(nogil=True, cache=True)
def run_single_ancestor(kind, param, vals, probs, k_max, cap, rng):
    Y = np.empty(k_max + 1, dtype=np.int64)
    Y[0] = 1
    for k in range(1, k_max + 1):
        y = offspring_sum(kind, param, vals, probs, Y[k - 1], rng)
        if y > cap:
            return Y, EXPLODED
        Y[k] = y
    return Y, OK


@njit(nogil=True, cache=True)
def poisson_row(lam, rng, eps):
    for k in range(1, len(lam)):
        eps[k] = rng.poisson(lam[k])


@njit(nogil=True, cache=True)
def block_sum_row(c, m, rng, eps, own):
    """Coupled moving sums: slot i carries a unit-rate Poisson process Pi_i and
    eps_k = sum_{i=k-m}^{k} Pi_i([0, c_k]).  ``own[k]`` is Pi_k([0, c_k])."""
    K = len(c) - 1
    for k in range(K + 1):
        eps[k] = 0
        own[k] = 0
    idx = np.empty(m + 1, dtype=np.int64)
    for i in range(1 - m, K + 1):
        lo = max(i, 1)
        hi = min(i + m, K)
        nk = hi - lo + 1
        # insertion sort of the slot's generations by threshold (usually presorted)
        for j in range(nk):
            kk = lo + j
            q = j
            while q > 0 and c[idx[q - 1]] > c[kk]:
                idx[q] = idx[q - 1]
                q -= 1
            idx[q] = kk
        prev = 0.0
        count = 0
        for j in range(nk):
            k = idx[j]
            t = c[k]
            if t > prev:
                count += rng.poisson(t - prev)
                prev = t
            eps[k] += count
            if k == i:
                own[k] = count


@njit(nogil=True, cache=True)
def block_min_row(v, r, m, rng, eps, cm):
    """eps_k = v_k 1{max(V_{k-m..k}) <= r_k} for iid uniforms V; ``cm`` is the
    conditional mean given V_j, j < k."""
    K = len(v) - 1
    U = np.empty(K + m + 1)
    for i in range(K + m + 1):
        U[i] = rng.random()
    # U[i + m] holds V_i for i = 1-m..K
    for k in range(1, K + 1):
        past = 0.0
        for i in range(k - m, k):
            if U[i + m] > past:
                past = U[i + m]
        hit_past = past <= r[k]
        cm[k] = v[k] * r[k] if hit_past else 0.0
        eps[k] = v[k] if (hit_past and U[k + m] <= r[k]) else 0


@njit(nogil=True, cache=True)
def markov_row(alpha, h, Ph, Pcum, pi_cum, rng, eps, cm, states):
    K = len(alpha) - 1
    u = rng.random()
    s = 0
    while s < len(pi_cum) - 1 and u > pi_cum[s]:
        s += 1
    for k in range(1, K + 1):
        if k > 1:
            cm[k] = alpha[k] * Ph[s]
            u = rng.random()
            row = Pcum[s]
            nxt = 0
            while nxt < len(row) - 1 and u > row[nxt]:
                nxt += 1
            s = nxt
        else:
            cm[k] = alpha[k]
        states[k] = s
        eps[k] = rng.poisson(alpha[k] * h[s])
