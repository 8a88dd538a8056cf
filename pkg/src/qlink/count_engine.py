"""Seeded Poisson count traces built from piecewise-constant rate schedules."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import link_model as lm
from .kernels import poisson_fill
from .link_model import ChannelActors, DomainError, LinkParams

DEFAULT_BIN = 0.05

# spawn keys of the per-detector sub-streams; never reorder
STREAMS = {"alice": 0, "eve": 1, "modulation": 2}

Modulation = Callable[[np.ndarray, np.random.Generator], np.ndarray]


def stream_rng(seed: int, label: str, *extra: int) -> np.random.Generator:
    """Philox generator for one named sub-stream of ``seed``.

    Sub-streams are children of ``SeedSequence(seed)`` addressed by a fixed
    spawn key, so Alice's and Eve's noise are independent and reproducible.
    """
    if label not in STREAMS:
        raise ValueError(f"unknown stream label {label!r}")
    ss = np.random.SeedSequence(int(seed), spawn_key=(STREAMS[label], *extra))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *key: int) -> int:
    """Deterministic 64-bit child seed, used to give sweep points their own seeds."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError("seed must fit in an unsigned 64-bit integer")
    return seed


@dataclass(frozen=True)
class RateSchedule:
    durations: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.durations, dtype=np.float64)
        r = np.asarray(self.rates, dtype=np.float64)
        if d.ndim != 1 or d.shape != r.shape:
            raise ValueError("durations and rates must be 1-D arrays of equal length")
        if d.size == 0:
            raise ValueError("rate schedule is empty")
        if not (np.all(np.isfinite(d)) and np.all(d > 0)):
            raise DomainError("segment durations must be finite and > 0")
        if not (np.all(np.isfinite(r)) and np.all(r >= 0)):
            raise DomainError("segment rates must be finite and >= 0")
        object.__setattr__(self, "durations", d)
        object.__setattr__(self, "rates", r)

    @classmethod
    def from_segments(cls, segments: Sequence[tuple[float, float]]) -> "RateSchedule":
        if not segments:
            raise ValueError("rate schedule is empty")
        d, r = zip(*segments)
        return cls(np.array(d), np.array(r))

    @classmethod
    def constant(cls, rate: float, duration: float) -> "RateSchedule":
        return cls(np.array([duration]), np.array([rate]))

    @property
    def total_duration(self) -> float:
        return float(self.durations.sum())

    def __add__(self, other: "RateSchedule") -> "RateSchedule":
        return RateSchedule(
            np.concatenate([self.durations, other.durations]),
            np.concatenate([self.rates, other.rates]),
        )

    def integrate(self, edges: np.ndarray) -> np.ndarray:
        """Expected counts between consecutive time ``edges`` (exact for piecewise-constant rates)."""
        knots = np.concatenate([[0.0], np.cumsum(self.durations)])
        area = np.concatenate([[0.0], np.cumsum(self.durations * self.rates)])
        cum = np.interp(edges, knots, area)
        return np.maximum(np.diff(cum), 0.0)


@dataclass(frozen=True)
class CountTrace:
    bins: np.ndarray
    bin_duration: float
    seed: int
    stream_label: str
    start_time: float = 0.0

    def __post_init__(self):
        b = np.asarray(self.bins)
        if b.ndim != 1 or (b.size and (not np.issubdtype(b.dtype, np.integer) or b.min() < 0)):
            raise ValueError("bins must be a 1-D array of non-negative integers")
        if not (math.isfinite(self.bin_duration) and self.bin_duration > 0):
            raise ValueError("bin_duration must be > 0")
        object.__setattr__(self, "bins", b.astype(np.int64, copy=False))

    def __len__(self) -> int:
        return self.bins.shape[0]

    @property
    def duration(self) -> float:
        return len(self) * self.bin_duration

    @property
    def times(self) -> np.ndarray:
        """Start time of each bin (s)."""
        return self.start_time + self.bin_duration * np.arange(len(self))

    @property
    def rates(self) -> np.ndarray:
        return self.bins / self.bin_duration

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(
            f"# bin_duration={self.bin_duration!r},seed={self.seed},"
            f"stream_label={self.stream_label},start_time={self.start_time!r}\n"
        )
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time_s", "counts"])
        for t, c in zip(self.times, self.bins):
            w.writerow([repr(float(t)), int(c)])
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> "CountTrace":
        lines = text.splitlines()
        if not lines or not lines[0].startswith("#"):
            raise ValueError("missing trace metadata line")
        meta = dict(item.split("=", 1) for item in lines[0][1:].strip().split(","))
        rows = list(csv.reader(lines[1:]))
        if rows[0] != ["time_s", "counts"]:
            raise ValueError("expected columns time_s,counts")
        counts = np.array([int(r[1]) for r in rows[1:]], dtype=np.int64)
        return cls(
            bins=counts,
            bin_duration=float(meta["bin_duration"]),
            seed=int(meta["seed"]),
            stream_label=meta["stream_label"],
            start_time=float(meta.get("start_time", 0.0)),
        )

    @classmethod
    def read_csv(cls, path: str | Path) -> "CountTrace":
        return cls.from_csv(Path(path).read_text())


def poisson_draw(lam: float, rng: np.random.Generator) -> int:
    """One exact Poisson variate with mean ``lam``.

    Inversion below ``lam = 10``, transformed rejection (PTRS) above.
    """
    if not (math.isfinite(lam) and lam >= 0):
        raise DomainError(f"Poisson mean must be finite and >= 0, got {lam!r}")
    return int(poisson_fill(np.array([lam], dtype=np.float64), rng)[0])


def sample_counts(lam: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    lam = np.asarray(lam, dtype=np.float64)
    if not (np.all(np.isfinite(lam)) and np.all(lam >= 0)):
        raise DomainError("Poisson means must be finite and >= 0")
    return poisson_fill(lam.ravel(), rng).reshape(lam.shape)


def n_bins_for(duration: float, bin_duration: float) -> int:
    # the trailing partial bin is dropped; 1e-9 absorbs float error in duration sums
    return int(math.floor(duration / bin_duration + 1e-9))


def sample_trace(
    schedule: RateSchedule,
    bin_duration: float = DEFAULT_BIN,
    seed: int = 0,
    stream_label: str = "alice",
    *,
    start_time: float = 0.0,
    dark_rate: float = 0.0,
    modulation: Modulation | None = None,
) -> CountTrace:
    """Poisson counts per bin for a piecewise-constant rate schedule.

    Each bin's mean is the exact integral of ``rate + dark_rate`` over the
    bin, so segment boundaries need not align with bins. ``modulation`` is an
    optional multiplicative intensity factor per bin (laser drift or excess
    noise); it draws from its own sub-stream so the Poisson stream is the same
    with or without it.
    """
    seed = _check_seed(seed)
    if not (math.isfinite(bin_duration) and bin_duration > 0):
        raise ValueError("bin_duration must be > 0")
    if not (math.isfinite(dark_rate) and dark_rate >= 0):
        raise DomainError("dark_rate must be >= 0")
    total = schedule.total_duration
    if bin_duration > total * (1 + 1e-12):
        raise ValueError(f"bin_duration {bin_duration} exceeds schedule duration {total}")

    n = n_bins_for(total, bin_duration)
    edges = bin_duration * np.arange(n + 1)
    lam = schedule.integrate(edges) + dark_rate * bin_duration
    if modulation is not None:
        mrng = stream_rng(seed, "modulation", STREAMS[stream_label])
        factor = np.asarray(modulation(start_time + edges[:-1] + bin_duration / 2, mrng), dtype=np.float64)
        lam = lam * np.maximum(factor, 0.0)

    counts = sample_counts(lam, stream_rng(seed, stream_label))
    return CountTrace(bins=counts, bin_duration=bin_duration, seed=seed, stream_label=stream_label, start_time=start_time)


def white_intensity_noise(rel_sigma: float) -> Modulation:
    """Independent Gaussian intensity fluctuation per bin (fast laser noise)."""

    def modulation(t: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return 1.0 + rel_sigma * rng.standard_normal(t.shape[0])

    return modulation


def ou_drift(rel_sigma: float, corr_time: float) -> Modulation:
    """Slow multiplicative drift: stationary Ornstein-Uhlenbeck process sampled at bin centres."""

    def modulation(t: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        x = np.empty(t.shape[0])
        x[0] = rng.standard_normal()
        rho = np.exp(-np.diff(t) / corr_time)
        kick = rng.standard_normal(t.shape[0] - 1)
        for i in range(1, t.shape[0]):
            x[i] = rho[i - 1] * x[i - 1] + math.sqrt(1.0 - rho[i - 1] ** 2) * kick[i - 1]
        return 1.0 + rel_sigma * x

    return modulation


def _pair_params(p: LinkParams, a: ChannelActors, kind: str, values: np.ndarray):
    """Alice and Eve rate arrays for encoding parameter ``values``."""
    if kind == "amplitude":
        alpha_sq = np.asarray(values, dtype=np.float64)
        if np.any((alpha_sq < 0) | (alpha_sq > 1)):
            raise DomainError("amplitude encoding values must lie in [0, 1]")
        delta_phi = p.delta_phi
    elif kind == "phase":
        alpha_sq = np.full(len(values), a.alpha_sq)
        delta_phi = np.asarray(values, dtype=np.float64)
    else:
        raise ValueError(f"unknown encoding kind {kind!r}")
    r_alice = lm.alice_rate_array(p.eta_det, p.n_quantum, alpha_sq, a.alpha_e_sq, delta_phi)
    r_eve = lm.eve_rate_array(a.eta_det_e, p.n_quantum, alpha_sq, a.alpha_e_sq, a.n_class)
    return np.broadcast_to(r_alice, alpha_sq.shape).copy(), r_eve


def rate_schedules(
    p: LinkParams, a: ChannelActors, kind: str, durations: np.ndarray, values: np.ndarray
) -> tuple[RateSchedule, RateSchedule]:
    """Alice's and Eve's rate schedules for a piecewise-constant encoding path.

    ``values`` are alpha^2 for amplitude keying or the interference phase
    ``delta_phi`` for phase keying.
    """
    r_alice, r_eve = _pair_params(p, a, kind, values)
    return RateSchedule(durations, r_alice), RateSchedule(durations, r_eve)


def path_traces(
    p: LinkParams,
    a: ChannelActors,
    kind: str,
    durations: np.ndarray,
    values: np.ndarray,
    bin_duration: float = DEFAULT_BIN,
    seed: int = 0,
    *,
    dark_rate: float | tuple[float, float] = 0.0,
    modulation: Modulation | None = None,
) -> tuple[CountTrace, CountTrace]:
    sched_a, sched_e = rate_schedules(p, a, kind, durations, values)
    dark_a, dark_e = dark_rate if isinstance(dark_rate, tuple) else (dark_rate, dark_rate)
    alice = sample_trace(sched_a, bin_duration, seed, "alice", dark_rate=dark_a, modulation=modulation)
    eve = sample_trace(sched_e, bin_duration, seed, "eve", dark_rate=dark_e, modulation=modulation)
    return alice, eve


def dual_trace(
    p: LinkParams,
    a: ChannelActors,
    symbols,
    bin_duration: float = DEFAULT_BIN,
    seed: int = 0,
    *,
    transition=None,
    dark_rate: float | tuple[float, float] = 0.0,
    modulation: Modulation | None = None,
) -> tuple[CountTrace, CountTrace]:
    """Alice and Eve count traces for a symbol schedule.

    ``symbols`` is a ``protocol_codec.SymbolSchedule``; ``transition`` an
    optional ``TransitionModel`` replacing instantaneous symbol changes by ramps.
    ``dark_rate`` is a constant rate added to both detectors, or an
    ``(alice, eve)`` pair.
    """
    from .protocol_codec import apply_transition

    path = apply_transition(symbols, transition)
    return path_traces(
        p, a, symbols.kind, path.durations, path.values, bin_duration, seed,
        dark_rate=dark_rate, modulation=modulation,
    )
