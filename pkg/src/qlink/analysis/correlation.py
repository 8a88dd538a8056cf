"""Pearson correlation and its null distribution against uniform random images."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..link_model import DomainError


def correlation(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.size < 2:
        raise ValueError("correlation needs at least 2 elements")
    x = a.ravel() - a.mean()
    y = b.ravel() - b.mean()
    sx = np.sqrt(x @ x)
    sy = np.sqrt(y @ y)
    if sx == 0 or sy == 0:
        raise DomainError("zero variance; correlation is undefined")
    return float(np.clip((x @ y) / (sx * sy), -1.0, 1.0))


@dataclass(frozen=True)
class NullSummary:
    mean: float
    std: float
    lower: float
    upper: float
    n_trials: int
    coverage: float

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


def random_correlation_baseline(
    reference: np.ndarray,
    n_trials: int = 100_000,
    seed: int = 0,
    coverage: float = 0.99,
    chunk: int = 4096,
) -> NullSummary:
    """Correlations of ``reference`` with ``n_trials`` uniform [0, 1] matrices of its shape.

    ``lower``/``upper`` bound the central ``coverage`` fraction of the draws.
    """
    ref = np.asarray(reference, dtype=np.float64)
    if ref.size < 2:
        raise ValueError("reference must hold at least 2 elements")
    if n_trials < 100:
        raise ValueError("n_trials must be >= 100")
    y = ref.ravel() - ref.mean()
    sy = np.sqrt(y @ y)
    if sy == 0:
        raise DomainError("reference has zero variance")
    y /= sy

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    out = np.empty(n_trials)
    for start in range(0, n_trials, chunk):
        n = min(chunk, n_trials - start)
        x = rng.random((n, y.size))
        x -= x.mean(axis=1, keepdims=True)
        out[start:start + n] = (x @ y) / np.sqrt(np.einsum("ij,ij->i", x, x))

    tail = 100.0 * (1.0 - coverage) / 2.0
    lo, hi = np.percentile(out, [tail, 100.0 - tail])
    return NullSummary(
        mean=float(out.mean()),
        std=float(out.std(ddof=1)),
        lower=float(lo),
        upper=float(hi),
        n_trials=n_trials,
        coverage=coverage,
    )
