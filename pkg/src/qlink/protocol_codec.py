"""Binary keying of text and images onto Bob's encoding parameter, and decoding.

Bit polarity: 1 is the high-count level at Alice. Amplitude keying writes
bit 1 as alpha^2 = 0 (path open) and bit 0 as alpha^2 = 1 (path blocked);
phase keying writes bit 1 as delta_phi = 0 and bit 0 as delta_phi = pi.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .count_engine import CountTrace

KINDS = ("amplitude", "phase")
_LEVELS = {"amplitude": (1.0, 0.0), "phase": (math.pi, 0.0)}  # (bit 0, bit 1)
DEFAULT_PREAMBLE = 8
DEFAULT_GUARD = 0.1


class CalibrationError(RuntimeError):
    """The preamble levels are too close to learn a decision threshold."""


class GeometryError(ValueError):
    """A trace does not match the scan or frame it is decoded against."""


def _check_kind(kind: str) -> None:
    if kind not in KINDS:
        raise ValueError(f"encoding kind must be one of {KINDS}, got {kind!r}")


@dataclass(frozen=True)
class EncodingSymbol:
    kind: str
    value: float
    duration: float

    def __post_init__(self):
        _check_kind(self.kind)
        if self.value not in _LEVELS[self.kind]:
            raise ValueError(f"{self.kind} symbol value must be one of {_LEVELS[self.kind]}, got {self.value!r}")
        if not (math.isfinite(self.duration) and self.duration > 0):
            raise ValueError("symbol duration must be > 0")

    @classmethod
    def from_bit(cls, kind: str, bit: int, duration: float) -> "EncodingSymbol":
        _check_kind(kind)
        return cls(kind, _LEVELS[kind][int(bit)], duration)

    @property
    def bit(self) -> int:
        return _LEVELS[self.kind].index(self.value)


@dataclass(frozen=True)
class SymbolSchedule:
    symbols: tuple[EncodingSymbol, ...]
    preamble_len: int = 0

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(self.symbols))
        if not self.symbols:
            raise ValueError("symbol schedule is empty")
        if len({s.kind for s in self.symbols}) != 1:
            raise ValueError("a schedule must use a single encoding kind")
        if not 0 <= self.preamble_len <= len(self.symbols):
            raise ValueError("preamble_len out of range")

    @classmethod
    def from_bits(cls, bits: Sequence[int], kind: str, bit_duration: float, preamble_len: int = 0) -> "SymbolSchedule":
        return cls(tuple(EncodingSymbol.from_bit(kind, b, bit_duration) for b in bits), preamble_len)

    def __len__(self) -> int:
        return len(self.symbols)

    @property
    def kind(self) -> str:
        return self.symbols[0].kind

    @property
    def durations(self) -> np.ndarray:
        return np.array([s.duration for s in self.symbols])

    @property
    def values(self) -> np.ndarray:
        return np.array([s.value for s in self.symbols])

    @property
    def bits(self) -> list[int]:
        return [s.bit for s in self.symbols]

    @property
    def payload_bits(self) -> list[int]:
        return self.bits[self.preamble_len:]

    @property
    def total_duration(self) -> float:
        return float(self.durations.sum())

    @property
    def bit_duration(self) -> float:
        d = self.durations
        if not np.allclose(d, d[0]):
            raise ValueError("schedule has non-uniform symbol durations")
        return float(d[0])


def text_to_bits(message: bytes | str) -> list[int]:
    """8-bit ASCII, most significant bit first."""
    if isinstance(message, str):
        try:
            message = message.encode("ascii")
        except UnicodeEncodeError as exc:
            raise ValueError("message must be ASCII") from exc
    if not message:
        raise ValueError("message is empty")
    if any(b > 0x7F for b in message):
        raise ValueError("message must be ASCII")
    return [(byte >> (7 - i)) & 1 for byte in message for i in range(8)]


def bits_to_text(bits: Sequence[int]) -> str:
    if len(bits) % 8:
        raise ValueError("bit count is not a multiple of 8")
    out = bytearray()
    for i in range(0, len(bits), 8):
        out.append(int("".join(str(int(b)) for b in bits[i:i + 8]), 2))
    return out.decode("latin-1")


def preamble_bits(n: int) -> list[int]:
    return [1 - (i % 2) for i in range(n)]


def encode_text(
    message: bytes | str,
    kind: str = "amplitude",
    bit_duration: float = 0.5,
    preamble_len: int = DEFAULT_PREAMBLE,
) -> SymbolSchedule:
    """Symbol schedule for an ASCII message, preceded by a 1010... calibration preamble."""
    _check_kind(kind)
    if not (math.isfinite(bit_duration) and bit_duration > 0):
        raise ValueError("bit_duration must be > 0")
    bits = preamble_bits(preamble_len) + text_to_bits(message)
    return SymbolSchedule.from_bits(bits, kind, bit_duration, preamble_len)


@dataclass(frozen=True)
class TransitionModel:
    """Finite switching of Bob's modulator: a linear ramp of the encoding parameter."""

    rise_time: float = 0.0
    shape: str = "linear"

    def __post_init__(self):
        if not (math.isfinite(self.rise_time) and self.rise_time >= 0):
            raise ValueError("rise_time must be >= 0")
        if self.shape != "linear":
            raise ValueError(f"unsupported transition shape {self.shape!r}")


@dataclass(frozen=True)
class ParameterPath:
    """Piecewise-constant encoding parameter over time (alpha^2 or delta_phi)."""

    kind: str
    durations: np.ndarray
    values: np.ndarray

    @property
    def total_duration(self) -> float:
        return float(self.durations.sum())


def apply_transition(schedule: SymbolSchedule, tm: TransitionModel | None, substeps: int = 32) -> ParameterPath:
    """Replace instantaneous symbol changes by linear ramps of the encoding parameter.

    A change at a symbol boundary ramps from the old to the new value over
    ``rise_time`` starting at the boundary. The ramp is a staircase of
    ``substeps`` steps, each holding the ramp value at its midpoint; the trace
    builder integrates the resulting rates exactly. ``rise_time == 0`` returns
    the schedule unchanged.
    """
    durations = schedule.durations
    values = schedule.values
    if tm is None or tm.rise_time == 0.0:
        return ParameterPath(schedule.kind, durations, values)
    if tm.rise_time >= durations.min():
        raise ValueError("rise_time must be shorter than every symbol")

    frac = (np.arange(substeps) + 0.5) / substeps
    step = tm.rise_time / substeps
    out_d: list[np.ndarray] = []
    out_v: list[np.ndarray] = []
    prev = values[0]
    for d, v in zip(durations, values):
        if v != prev:
            out_d.append(np.full(substeps, step))
            out_v.append(prev + (v - prev) * frac)
            out_d.append(np.array([d - tm.rise_time]))
        else:
            out_d.append(np.array([d]))
        out_v.append(np.array([v]))
        prev = v
    return ParameterPath(schedule.kind, np.concatenate(out_d), np.concatenate(out_v))


@dataclass
class DecodeResult:
    bits: list[int]
    soft: np.ndarray
    levels: np.ndarray
    threshold: float
    level0: float
    level1: float

    @property
    def text(self) -> str:
        return bits_to_text(self.bits)

    def soft_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bit_index", "level", "soft_score", "bit"])
        for i, (lv, s, b) in enumerate(zip(self.levels, self.soft, self.bits)):
            w.writerow([i, repr(float(lv)), repr(float(s)), b])
        return buf.getvalue()


def window_means(trace: CountTrace, starts: np.ndarray, stops: np.ndarray) -> np.ndarray:
    """Mean count rate in each ``[start, stop)`` window, weighting bins by overlap."""
    rates = trace.rates
    knots = trace.start_time + trace.bin_duration * np.arange(len(trace) + 1)
    area = np.concatenate([[0.0], np.cumsum(rates * trace.bin_duration)])
    lo = np.interp(starts, knots, area)
    hi = np.interp(stops, knots, area)
    return (hi - lo) / (stops - starts)


def decode_trace(
    trace: CountTrace,
    bit_duration: float,
    n_bits: int,
    preamble_len: int = DEFAULT_PREAMBLE,
    clock_offset: float = 0.0,
    guard: float = DEFAULT_GUARD,
) -> DecodeResult:
    """Hard bits and soft scores for ``n_bits`` payload bits after a preamble.

    Each bit is the mean rate over its window minus ``guard`` of the bit at
    both edges. The threshold is the midpoint of the preamble's mean 1 and 0
    levels; soft score = (level - threshold) / (level1 - level0).
    """
    if preamble_len < 2:
        raise CalibrationError("a preamble of at least 2 bits is needed to learn the threshold")
    if not 0 <= guard < 0.5:
        raise ValueError("guard must lie in [0, 0.5)")
    total = preamble_len + n_bits
    t0 = trace.start_time + clock_offset
    if t0 < trace.start_time - 1e-12 or t0 + total * bit_duration > trace.start_time + trace.duration + 1e-9:
        raise GeometryError("trace does not span the full frame")

    idx = np.arange(total)
    starts = t0 + (idx + guard) * bit_duration
    stops = t0 + (idx + 1 - guard) * bit_duration
    levels = window_means(trace, starts, stops)

    pre = levels[:preamble_len]
    ref = np.array(preamble_bits(preamble_len))
    ones, zeros = pre[ref == 1], pre[ref == 0]
    level1, level0 = float(ones.mean()), float(zeros.mean())
    spread = math.hypot(
        float(ones.std(ddof=1)) if ones.size > 1 else 0.0,
        float(zeros.std(ddof=1)) if zeros.size > 1 else 0.0,
    )
    separation = level1 - level0
    if separation <= 0 or separation < spread:
        raise CalibrationError(
            f"preamble levels not separated: level1-level0={separation:.6g}, combined std={spread:.6g}"
        )

    threshold = 0.5 * (level1 + level0)
    payload = levels[preamble_len:]
    soft = (payload - threshold) / separation
    bits = [int(x > threshold) for x in payload]
    return DecodeResult(bits=bits, soft=soft, levels=payload, threshold=threshold, level0=level0, level1=level1)


# Images

@dataclass(frozen=True)
class ImageRaster:
    """Object transmission function; ``pixel_pitch`` in mm, ``scan_speed`` in mm/s."""

    transmission: np.ndarray
    pixel_pitch: float = 0.5
    scan_speed: float = 1.0

    def __post_init__(self):
        t = np.asarray(self.transmission, dtype=np.float64)
        if t.ndim != 2 or t.size == 0:
            raise ValueError("transmission must be a non-empty 2-D matrix")
        if not (np.all(np.isfinite(t)) and t.min() >= 0 and t.max() <= 1):
            raise ValueError("transmission values must lie in [0, 1]")
        if not (self.pixel_pitch > 0 and self.scan_speed > 0):
            raise ValueError("pixel_pitch and scan_speed must be > 0")
        object.__setattr__(self, "transmission", t)

    @property
    def shape(self) -> tuple[int, int]:
        return self.transmission.shape


@dataclass(frozen=True)
class ScanSchedule:
    """Time-ordered scan events of equal ``dwell``.

    The first ``calibration_events`` events are a fully open reference frame
    and the next ``calibration_events`` a fully blocked one (row and column
    ``-1``); the raster follows in row-major order.
    """

    rows: np.ndarray
    cols: np.ndarray
    alpha_sq: np.ndarray
    dwell: float
    shape: tuple[int, int]
    events_per_pixel: int
    calibration_events: int = 0

    def __len__(self) -> int:
        return self.rows.shape[0]

    def __iter__(self) -> Iterator[tuple[int, int, float]]:
        for r, c, v in zip(self.rows, self.cols, self.alpha_sq):
            yield int(r), int(c), float(v)

    @property
    def durations(self) -> np.ndarray:
        return np.full(len(self), self.dwell)

    @property
    def duration(self) -> float:
        return len(self) * self.dwell


def image_schedule(raster: ImageRaster, dwell: float = 0.05, calibration_events: int = 0) -> ScanSchedule:
    """Row-major horizontal scan of the object across Bob's path.

    Each pixel is crossed in ``pixel_pitch / scan_speed`` seconds and sampled
    every ``dwell`` seconds; an opaque pixel blocks the path, alpha^2 = 1 - T.
    """
    if not (math.isfinite(dwell) and dwell > 0):
        raise ValueError("dwell must be > 0")
    if calibration_events < 0:
        raise ValueError("calibration_events must be >= 0")
    per_pixel = max(1, int(round(raster.pixel_pitch / raster.scan_speed / dwell)))
    n_rows, n_cols = raster.shape
    rows = np.repeat(np.arange(n_rows), n_cols * per_pixel)
    cols = np.tile(np.repeat(np.arange(n_cols), per_pixel), n_rows)
    alpha = 1.0 - raster.transmission[rows, cols]

    n_cal = calibration_events
    cal_idx = np.full(2 * n_cal, -1)
    cal_alpha = np.concatenate([np.zeros(n_cal), np.ones(n_cal)])
    return ScanSchedule(
        rows=np.concatenate([cal_idx, rows]),
        cols=np.concatenate([cal_idx, cols]),
        alpha_sq=np.concatenate([cal_alpha, alpha]),
        dwell=dwell,
        shape=(n_rows, n_cols),
        events_per_pixel=per_pixel,
        calibration_events=n_cal,
    )


def pixel_means(trace: CountTrace, scan: ScanSchedule) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel mean rate and per-event rates for a trace recorded over ``scan``."""
    n = len(scan)
    if trace.duration + 1e-9 < scan.duration:
        raise GeometryError(f"trace lasts {trace.duration} s, scan needs {scan.duration} s")
    per = scan.dwell / trace.bin_duration
    k = int(round(per))
    if k >= 1 and abs(per - k) < 1e-9 * per:
        # event windows align with bins: exact integer sums
        events = trace.bins[: n * k].reshape(n, k).sum(axis=1) / scan.dwell
    else:
        starts = trace.start_time + scan.dwell * np.arange(n)
        events = window_means(trace, starts, starts + scan.dwell)
    raster = scan.rows >= 0
    n_rows, n_cols = scan.shape
    sums = np.zeros(scan.shape)
    np.add.at(sums, (scan.rows[raster], scan.cols[raster]), events[raster])
    counts = np.zeros(scan.shape)
    np.add.at(counts, (scan.rows[raster], scan.cols[raster]), 1)
    if np.any(counts == 0):
        raise GeometryError("scan does not visit every pixel")
    return sums / counts, events


def reconstruct_image(
    trace: CountTrace,
    scan: ScanSchedule,
    levels: tuple[float, float] | None = None,
    clamp: bool = True,
) -> np.ndarray:
    """Estimated transmission per pixel, normalized by open/blocked reference levels.

    ``levels`` is ``(open_rate, blocked_rate)``; by default it is taken from
    the scan's calibration frames.
    """
    means, events = pixel_means(trace, scan)
    if levels is None:
        n_cal = scan.calibration_events
        if n_cal == 0:
            raise GeometryError("scan has no calibration frames; pass levels explicitly")
        levels = (float(events[:n_cal].mean()), float(events[n_cal:2 * n_cal].mean()))
    open_rate, blocked_rate = levels
    if open_rate == blocked_rate:
        raise GeometryError("open and blocked reference levels coincide")
    est = (means - blocked_rate) / (open_rate - blocked_rate)
    return np.clip(est, 0.0, 1.0) if clamp else est


# Portable graymap

def _pgm_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens: list[bytes] = []
    i = 0
    while len(tokens) < count:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if data[i:i + 1] == b"#":
            while i < len(data) and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(data) and not data[j:j + 1].isspace():
            j += 1
        if j == i:
            raise ValueError("truncated PGM header")
        tokens.append(data[i:j])
        i = j
    return tokens, i


def read_pgm(path: str | Path) -> np.ndarray:
    """Read a P2 or P5 graymap, normalized to [0, 1]."""
    data = Path(path).read_bytes()
    (magic, w, h, maxval), pos = _pgm_tokens(data, 4)
    width, height, maxval = int(w), int(h), int(maxval)
    if not (0 < maxval < 65536):
        raise ValueError("PGM maxval out of range")
    if magic == b"P5":
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        raw = np.frombuffer(data[pos + 1: pos + 1 + width * height * dtype.itemsize], dtype=dtype)
    elif magic == b"P2":
        raw = np.array(data[pos:].split()[: width * height], dtype=np.int64)
    else:
        raise ValueError(f"not a PGM file (magic {magic!r})")
    if raw.size != width * height:
        raise ValueError("PGM pixel data truncated")
    return raw.reshape(height, width).astype(np.float64) / maxval


def pgm_bytes(image: np.ndarray, binary: bool = True, maxval: int = 255) -> bytes:
    """Encode a [0, 1] matrix as a P5 (or P2) graymap; values outside are clamped."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("image must be 2-D")
    if not 1 <= maxval <= 65535:
        raise ValueError("maxval must lie in [1, 65535]")
    q = np.rint(np.clip(img, 0.0, 1.0) * maxval).astype(np.int64)
    h, w = q.shape
    if binary:
        dtype = ">u2" if maxval > 255 else "u1"
        return f"P5\n{w} {h}\n{maxval}\n".encode() + q.astype(dtype).tobytes()
    body = "\n".join(" ".join(str(v) for v in row) for row in q)
    return f"P2\n{w} {h}\n{maxval}\n{body}\n".encode()


def write_pgm(path: str | Path, image: np.ndarray, binary: bool = True, maxval: int = 255) -> None:
    Path(path).write_bytes(pgm_bytes(image, binary, maxval))
