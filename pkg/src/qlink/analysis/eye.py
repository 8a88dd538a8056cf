"""Eye diagrams of a periodic 1010... count trace.

Metric definitions:

* rails: at each sample time of the middle bit, the upper rail is the set of
  segments whose middle bit is 1 (``010`` windows), the lower rail the
  ``101`` windows.
* vertical opening: ``(min upper - max lower) / (mean upper - mean lower)``
  at the eye centre (middle of the middle bit), clipped to [0, 1].
* horizontal opening: fraction of the middle-bit samples where
  ``min upper - max lower > 0``.
* transition fraction: 10 %-90 % rise time of the mean rising edge, taken
  around its 50 % crossing so flat-bottom noise is ignored, divided
  by 0.8 to express it as an equivalent full-swing linear ramp, over half a
  bit period. An edge that completes within one sample step counts as 0;
  the value saturates at 1.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from ..count_engine import CountTrace


class PatternError(ValueError):
    """The trace does not carry a clock-aligned 1010... pattern."""


@dataclass(frozen=True)
class EyeMetrics:
    vertical_opening: float
    horizontal_opening: float
    transition_fraction: float


@dataclass(frozen=True)
class EyeDiagram:
    segments: np.ndarray  # (n_segments, 3 * samples_per_bit) counts
    labels: tuple[str, ...]  # "101" or "010" per segment
    bit_rate: float
    samples_per_bit: int
    bin_duration: float
    metrics: EyeMetrics

    @property
    def times(self) -> np.ndarray:
        """Sample centres relative to the segment start (s)."""
        return (np.arange(self.segments.shape[1]) + 0.5) * self.bin_duration

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time_s", "segment_id", "pattern", "counts"])
        t = self.times
        for sid, (seg, label) in enumerate(zip(self.segments, self.labels)):
            for ti, c in zip(t, seg):
                w.writerow([repr(float(ti)), sid, label, int(c)])
        return buf.getvalue()

    def metrics_csv(self) -> str:
        m = self.metrics
        rows = [
            ("bit_rate", self.bit_rate),
            ("samples_per_bit", self.samples_per_bit),
            ("repetitions", len(self.labels) // 2),
            ("vertical_opening", m.vertical_opening),
            ("horizontal_opening", m.horizontal_opening),
            ("transition_fraction", m.transition_fraction),
        ]
        return "metric,value\n" + "".join(f"{k},{v!r}\n" for k, v in rows)


def _as_int_steps(value: float, step: float, what: str) -> int:
    n = value / step
    k = int(round(n))
    if abs(n - k) > 1e-6 * max(1.0, abs(n)):
        raise PatternError(f"{what} ({value} s) is not a whole number of {step} s bins")
    return k


def _center_values(seg: np.ndarray, spb: int) -> np.ndarray:
    mid = spb + spb // 2
    if spb % 2:
        return seg[:, mid]
    return 0.5 * (seg[:, mid - 1] + seg[:, mid])


def _edge_span(y: np.ndarray, lo: float = 0.1, hi: float = 0.9) -> float | None:
    """Samples between the ``lo`` and ``hi`` crossings around the mid-swing crossing.

    Anchoring on the 50 % crossing keeps noise on the flat parts of the edge
    from registering as early or late crossings. ``None`` if the edge never
    reaches ``hi``.
    """
    above = np.flatnonzero(y >= 0.5)
    if above.size == 0:
        return None
    m = int(above[0])
    below_lo = np.flatnonzero(y[:m] < lo)
    if below_lo.size:
        i = int(below_lo[-1])
        t_lo = i + (lo - y[i]) / (y[i + 1] - y[i])
    else:
        t_lo = 0.0
    hits = np.flatnonzero(y[m:] >= hi)
    if hits.size == 0:
        return None
    j = m + int(hits[0])
    if j == 0:
        return 0.0
    t_hi = (j - 1) + (hi - y[j - 1]) / (y[j] - y[j - 1])
    if j - 1 <= t_lo <= j and y[j - 1] < lo:
        # the whole swing happens within one sample step
        return 0.0
    return max(t_hi - t_lo, 0.0)


def _transition_fraction(upper: np.ndarray, lower: np.ndarray, spb: int, lo: float, hi: float) -> float:
    h = spb // 2
    # rising edges: 010 windows at the first boundary, 101 windows at the second
    edges = np.vstack([upper[:, spb - h: spb + h], lower[:, 2 * spb - h: 2 * spb + h]])
    y = (edges.mean(axis=0) - lo) / (hi - lo)
    span = _edge_span(y)
    if span is None:
        return 1.0
    return float(min(max(span / 0.8 / (spb / 2.0), 0.0), 1.0))


def eye_metrics(upper: np.ndarray, lower: np.ndarray, spb: int) -> EyeMetrics:
    uc, lc = _center_values(upper, spb), _center_values(lower, spb)
    swing = uc.mean() - lc.mean()
    if swing <= 0:
        raise PatternError("middle-bit levels are not separated; pattern or clock mismatch")
    vertical = float(np.clip((uc.min() - lc.max()) / swing, 0.0, 1.0))
    mid = slice(spb, 2 * spb)
    gap = upper[:, mid].min(axis=0) - lower[:, mid].max(axis=0)
    horizontal = float(np.mean(gap > 0))
    transition = _transition_fraction(upper, lower, spb, lc.mean(), uc.mean())
    return EyeMetrics(vertical, horizontal, transition)


def build_eye(trace: CountTrace, bit_rate: float, clock_offset: float = 0.0, repetitions: int = 20) -> EyeDiagram:
    """Overlay 3-bit windows of a 1010... trace, phase-locked to the clock.

    ``clock_offset`` is the time of the first bit boundary after the trace
    start. Windows start at every bit, so ``101`` windows alternate with the
    following ``010`` windows; ``repetitions`` pairs are taken.
    """
    if bit_rate <= 0:
        raise ValueError("bit_rate must be > 0")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    bin_d = trace.bin_duration
    spb = _as_int_steps(1.0 / bit_rate, bin_d, "bit period")
    if spb < 2:
        raise PatternError("need at least 2 samples per bit")
    offset = _as_int_steps(clock_offset, bin_d, "clock offset")
    if offset < 0:
        raise PatternError("clock offset must be >= 0")
    n_seg = 2 * repetitions
    needed = offset + (n_seg + 2) * spb
    if len(trace) < needed:
        raise PatternError(f"trace holds {len(trace)} bins, {needed} needed for {repetitions} repetitions")

    x = trace.bins.astype(np.float64)
    starts = offset + spb * np.arange(n_seg)
    segments = np.stack([x[s: s + 3 * spb] for s in starts])

    even, odd = segments[0::2], segments[1::2]
    mid = slice(spb, 2 * spb)
    even_high = even[:, mid].mean() > odd[:, mid].mean()
    upper, lower = (even, odd) if even_high else (odd, even)
    labels = tuple(("010" if (j % 2 == 0) == even_high else "101") for j in range(n_seg))

    metrics = eye_metrics(upper, lower, spb)
    return EyeDiagram(
        segments=segments.astype(np.int64),
        labels=labels,
        bit_rate=float(bit_rate),
        samples_per_bit=spb,
        bin_duration=bin_d,
        metrics=metrics,
    )
