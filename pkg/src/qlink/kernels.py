"""Exact Poisson sampling kernels.

Two algorithms, switched at ``PTRS_CROSSOVER``:

* ``lam < 10``: inversion by sequential search of the CDF starting at 0.
* ``lam >= 10``: PTRS, Hoermann's transformed rejection with squeeze
  (W. Hoermann, "The transformed rejection method for generating Poisson
  random variables", Insurance: Mathematics and Economics 12, 1993).

Both are exact; PTRS has an acceptance rate above 0.9 for every ``lam >= 10``
and stays exact up to at least 1e9 (the log-pmf is evaluated with ``lgamma``).

The numba kernel draws scalars from a ``numpy.random.Generator`` one element
at a time. The numpy kernel vectorizes the same two algorithms over the whole
array, rejecting in rounds, so it consumes the stream in a different order:
both paths are exact and individually deterministic, but they do not produce
identical samples for the same seed.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

from ._backend import USE_NUMBA, njit

PTRS_CROSSOVER = 10.0


@njit(cache=True, nogil=True)
def _poisson_inversion_scalar(lam, rng):
    u = rng.random()
    k = 0
    p = math.exp(-lam)
    cdf = p
    # lam < 10 keeps the tail walk short; the k cap only guards u == 1 - eps
    while u > cdf and k < 1000:
        k += 1
        p *= lam / k
        cdf += p
    return k


@njit(cache=True, nogil=True)
def _poisson_ptrs_scalar(lam, rng):
    slam = math.sqrt(lam)
    loglam = math.log(lam)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    while True:
        u = rng.random() - 0.5
        v = rng.random()
        us = 0.5 - abs(u)
        k = math.floor((2.0 * a / us + b) * u + lam + 0.43)
        if us >= 0.07 and v <= vr:
            return k
        if k < 0 or (us < 0.013 and v > us):
            continue
        lhs = math.log(v) + math.log(invalpha) - math.log(a / (us * us) + b)
        rhs = -lam + k * loglam - math.lgamma(k + 1.0)
        if lhs <= rhs:
            return k


@njit(cache=True, nogil=True)
def poisson_fill_numba(lam, rng):
    out = np.empty(lam.shape[0], dtype=np.int64)
    for i in range(lam.shape[0]):
        li = lam[i]
        if li == 0.0:
            out[i] = 0
        elif li < PTRS_CROSSOVER:
            out[i] = _poisson_inversion_scalar(li, rng)
        else:
            out[i] = np.int64(_poisson_ptrs_scalar(li, rng))
    return out


def _inversion_numpy(lam: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(lam.shape[0])
    k = np.zeros(lam.shape[0], dtype=np.int64)
    p = np.exp(-lam)
    cdf = p.copy()
    active = u > cdf
    step = 0
    while active.any() and step < 1000:
        step += 1
        idx = np.flatnonzero(active)
        k[idx] += 1
        p[idx] *= lam[idx] / k[idx]
        cdf[idx] += p[idx]
        active[idx] = u[idx] > cdf[idx]
    return k


def _ptrs_numpy(lam: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    slam = np.sqrt(lam)
    loglam = np.log(lam)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)

    out = np.empty(lam.shape[0], dtype=np.int64)
    pending = np.arange(lam.shape[0])
    while pending.size:
        n = pending.size
        u = rng.random(n) - 0.5
        v = rng.random(n)
        us = 0.5 - np.abs(u)
        ap, bp, lp = a[pending], b[pending], lam[pending]
        k = np.floor((2.0 * ap / us + bp) * u + lp + 0.43)

        accept = (us >= 0.07) & (v <= vr[pending])
        rejectable = ~accept & ((k < 0) | ((us < 0.013) & (v > us)))
        check = ~accept & ~rejectable
        if check.any():
            kc = k[check]
            usc = us[check]
            lhs = np.log(v[check]) + np.log(invalpha[pending][check]) - np.log(ap[check] / (usc * usc) + bp[check])
            rhs = -lp[check] + kc * loglam[pending][check] - gammaln(kc + 1.0)
            accept[np.flatnonzero(check)[lhs <= rhs]] = True

        out[pending[accept]] = k[accept].astype(np.int64)
        pending = pending[~accept]
    return out


def poisson_fill_numpy(lam: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    lam = np.asarray(lam, dtype=np.float64)
    out = np.zeros(lam.shape[0], dtype=np.int64)
    small = (lam > 0.0) & (lam < PTRS_CROSSOVER)
    large = lam >= PTRS_CROSSOVER
    if small.any():
        out[small] = _inversion_numpy(lam[small], rng)
    if large.any():
        out[large] = _ptrs_numpy(lam[large], rng)
    return out


def poisson_fill(lam: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw one Poisson variate per entry of the 1-D float array ``lam``.

    Dispatches on the backend chosen at import time. Callers validate ``lam``.
    """
    lam = np.ascontiguousarray(lam, dtype=np.float64)
    if USE_NUMBA:
        return poisson_fill_numba(lam, rng)
    return poisson_fill_numpy(lam, rng)
