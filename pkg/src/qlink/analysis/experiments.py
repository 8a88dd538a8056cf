"""End-to-end experiments: jamming sweep, message and image transfer, eye diagrams."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.stats import binomtest

from .. import link_model as lm
from ..count_engine import derive_seed, dual_trace, path_traces, white_intensity_noise
from ..link_model import ChannelActors, LinkParams
from ..protocol_codec import (
    CalibrationError,
    DecodeResult,
    ImageRaster,
    SymbolSchedule,
    TransitionModel,
    decode_trace,
    encode_text,
    image_schedule,
    reconstruct_image,
)
from .correlation import NullSummary, correlation, random_correlation_baseline
from .eye import EyeDiagram, EyeMetrics, build_eye
from .snr import SweepRow, crossing_ratio, log_slope, sweep_snr


def calibration_point() -> tuple[LinkParams, ChannelActors]:
    """Eve sees the full signal with a unit-efficiency detector; threshold ratio 100."""
    return LinkParams(n_quantum=4000.0, eta_det=1.0, t_meas=0.05), ChannelActors(alpha_e_sq=1.0, eta_det_e=1.0)


def demo_point() -> tuple[LinkParams, ChannelActors]:
    """Operating point where both parties see the message.

    Eve taps 80 % of the signal, which leaves Alice a fringe visibility of
    sqrt(0.2) and gives C_comm = 200 counts per 50 ms window.
    """
    return LinkParams(n_quantum=5000.0, eta_det=0.2, t_meas=0.05), ChannelActors(alpha_e_sq=0.8, eta_det_e=1.0)


def with_ratio(p: LinkParams, a: ChannelActors, ratio: float) -> ChannelActors:
    if not (math.isfinite(ratio) and ratio >= 0):
        raise lm.DomainError("jamming ratio must be finite and >= 0")
    return replace(a, n_class=ratio * p.n_quantum)


def logo_mask(n: int = 20) -> np.ndarray:
    """Binary test object: a ring around a bar, 1 = transparent."""
    if n < 8:
        raise ValueError("logo needs at least 8x8 pixels")
    y, x = np.mgrid[0:n, 0:n] + 0.5
    c = n / 2.0
    r = np.hypot(x - c, y - c)
    ring = (r > 0.3 * n) & (r < 0.45 * n)
    bar = (np.abs(x - c) < 0.08 * n) & (np.abs(y - c) < 0.3 * n)
    tail = (np.abs((x - c) - (y - c)) < 0.07 * n) & (x > c + 0.15 * n) & (y > c + 0.15 * n)
    return (ring | bar | tail).astype(np.float64)


# Jamming sweep

def default_ratios() -> np.ndarray:
    return np.logspace(0.0, 5.0, 21)


@dataclass(frozen=True)
class SweepSummary:
    rows: list[SweepRow]
    crossing: float
    slope: float
    slope_err: float


def run_sweep(
    p: LinkParams,
    a: ChannelActors,
    ratios: Sequence[float] | None = None,
    seeds: Sequence[int] = tuple(range(20)),
    n_blocks: int = 20,
    workers: int | None = None,
) -> SweepSummary:
    ratios = default_ratios() if ratios is None else ratios
    rows = sweep_snr(p, a, list(ratios), list(seeds), n_blocks=n_blocks, workers=workers)
    slope, err = log_slope(rows, "quantum")
    try:
        cross = crossing_ratio(rows)
    except ValueError:
        cross = math.nan
    return SweepSummary(rows=rows, crossing=cross, slope=slope, slope_err=err)


# Message transfer

@dataclass(frozen=True)
class PartyDecode:
    result: DecodeResult | None
    error: str | None

    @property
    def calibrated(self) -> bool:
        return self.result is not None

    def errors_against(self, reference: Sequence[int]) -> int | None:
        if self.result is None:
            return None
        return int(sum(b != r for b, r in zip(self.result.bits, reference)))


@dataclass(frozen=True)
class MessageOutcome:
    reference_bits: list[int]
    alice: PartyDecode
    eve: PartyDecode
    schedule: SymbolSchedule
    traces: tuple

    @property
    def alice_ber(self) -> float | None:
        e = self.alice.errors_against(self.reference_bits)
        return None if e is None else e / len(self.reference_bits)

    @property
    def eve_ber(self) -> float | None:
        e = self.eve.errors_against(self.reference_bits)
        return None if e is None else e / len(self.reference_bits)


def _decode(trace, schedule: SymbolSchedule, guard: float) -> PartyDecode:
    try:
        res = decode_trace(
            trace, schedule.bit_duration, len(schedule.payload_bits), schedule.preamble_len, guard=guard
        )
    except CalibrationError as exc:
        return PartyDecode(None, str(exc))
    return PartyDecode(res, None)


def run_message(
    p: LinkParams,
    a: ChannelActors,
    message: str = "MPQ",
    seed: int = 0,
    *,
    kind: str = "amplitude",
    bit_duration: float = 0.5,
    bin_duration: float = 0.05,
    preamble_len: int = 8,
    guard: float = 0.1,
    transition: TransitionModel | None = None,
) -> MessageOutcome:
    schedule = encode_text(message, kind, bit_duration, preamble_len)
    alice, eve = dual_trace(p, a, schedule, bin_duration, seed, transition=transition)
    return MessageOutcome(
        reference_bits=schedule.payload_bits,
        alice=_decode(alice, schedule, guard),
        eve=_decode(eve, schedule, guard),
        schedule=schedule,
        traces=(alice, eve),
    )


@dataclass(frozen=True)
class MessageTrials:
    n_seeds: int
    alice_perfect: int
    eve_calibration_failures: int
    eve_correct_bits: int
    eve_decoded_bits: int
    eve_p_value: float


def message_trials(p: LinkParams, a: ChannelActors, seeds: Sequence[int], message: str = "MPQ", **kw) -> MessageTrials:
    """Alice's error-free decodes and Eve's pooled bit accuracy over seeds.

    The p-value is a two-sided binomial test of Eve's correct bits, over all
    seeds where her calibration passed, against coin flipping. With no
    calibrated seed it is 1.
    """
    perfect = fails = correct = total = 0
    for s in seeds:
        out = run_message(p, a, message, s, **kw)
        if out.alice.errors_against(out.reference_bits) == 0:
            perfect += 1
        e = out.eve.errors_against(out.reference_bits)
        if e is None:
            fails += 1
        else:
            total += len(out.reference_bits)
            correct += len(out.reference_bits) - e
    pval = binomtest(correct, total, 0.5).pvalue if total else 1.0
    return MessageTrials(len(seeds), perfect, fails, correct, total, float(pval))


# Image transfer

@dataclass(frozen=True)
class ImageOutcome:
    mask: np.ndarray
    alice: np.ndarray
    eve: np.ndarray
    eve_raw: np.ndarray
    alice_mae: float
    eve_correlation: float
    null: NullSummary

    @property
    def eve_blind(self) -> bool:
        return self.null.contains(self.eve_correlation)


def run_image(
    p: LinkParams,
    a: ChannelActors,
    mask: np.ndarray,
    seed: int = 0,
    *,
    pixel_pitch: float = 0.5,
    scan_speed: float = 1.0,
    dwell: float = 0.05,
    calibration_events: int = 200,
    null_trials: int = 100_000,
) -> ImageOutcome:
    """Scan ``mask`` through Bob's path and reconstruct it at both detectors.

    Eve's correlation is computed on her unclamped estimate, since clamping
    a pure-noise image can leave it constant.
    """
    raster = ImageRaster(mask, pixel_pitch, scan_speed)
    scan = image_schedule(raster, dwell, calibration_events)
    alice_t, eve_t = path_traces(p, a, "amplitude", scan.durations, scan.alpha_sq, dwell, seed)
    alice = reconstruct_image(alice_t, scan)
    eve_raw = reconstruct_image(eve_t, scan, clamp=False)
    mask = raster.transmission
    return ImageOutcome(
        mask=mask,
        alice=alice,
        eve=np.clip(eve_raw, 0.0, 1.0),
        eve_raw=eve_raw,
        alice_mae=float(np.mean(np.abs(alice - mask))),
        eve_correlation=correlation(eve_raw, mask),
        null=random_correlation_baseline(mask, null_trials, derive_seed(seed, 6)),
    )


# Eye diagrams

@dataclass(frozen=True)
class EyeSetup:
    """Phase-keyed 1010... run for eye diagrams.

    ``excess_noise`` is the relative standard deviation of a white intensity
    fluctuation per sample on top of shot noise; ``rise_time`` the ramp of
    the phase between symbols. The defaults are the output of ``tune_eye``
    with its default targets.
    """

    n_quantum: float = 20000.0
    eta_det: float = 1.0
    alpha_e_sq: float = 0.8
    samples_per_bit: int = 200
    repetitions: int = 20
    rise_time: float = 0.032
    excess_noise: float = 0.23

    def link(self) -> tuple[LinkParams, ChannelActors]:
        return (
            LinkParams(n_quantum=self.n_quantum, eta_det=self.eta_det, t_meas=0.05),
            ChannelActors(alpha_e_sq=self.alpha_e_sq, eta_det_e=1.0),
        )


def run_eye(setup: EyeSetup, bit_rate: float, seed: int = 0) -> EyeDiagram:
    if bit_rate <= 0:
        raise ValueError("bit_rate must be > 0")
    p, a = setup.link()
    tb = 1.0 / bit_rate
    n_bits = 2 * setup.repetitions + 2
    bits = [1 - (i % 2) for i in range(n_bits)]
    schedule = SymbolSchedule.from_bits(bits, "phase", tb)
    mod = white_intensity_noise(setup.excess_noise) if setup.excess_noise > 0 else None
    tm = TransitionModel(setup.rise_time) if setup.rise_time > 0 else None
    alice, _ = dual_trace(p, a, schedule, tb / setup.samples_per_bit, seed, transition=tm, modulation=mod)
    return build_eye(alice, bit_rate, repetitions=setup.repetitions)


def mean_eye_metrics(setup: EyeSetup, bit_rate: float, seeds: Sequence[int]) -> EyeMetrics:
    ms = np.array([
        (m.vertical_opening, m.horizontal_opening, m.transition_fraction)
        for m in (run_eye(setup, bit_rate, s).metrics for s in seeds)
    ])
    v, h, t = ms.mean(axis=0)
    return EyeMetrics(float(v), float(h), float(t))


def _bisect(f, lo: float, hi: float, target: float, increasing: bool, steps: int) -> float:
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if (f(mid) < target) == increasing:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def tune_eye(
    setup: EyeSetup = EyeSetup(),
    bit_rate: float = 1.2,
    transition: float = 0.06,
    vertical: float = 0.30,
    seeds: Sequence[int] = tuple(range(30)),
    rounds: int = 2,
    steps: int = 9,
) -> EyeSetup:
    """Fit rise time to the transition target, then excess noise to the vertical target.

    Alternates the two one-dimensional bisections ``rounds`` times, each
    objective averaged over ``seeds`` with common random numbers.
    """
    tb = 1.0 / bit_rate
    for _ in range(rounds):
        rise = _bisect(
            lambda r: mean_eye_metrics(replace(setup, rise_time=r), bit_rate, seeds).transition_fraction,
            0.0, 0.2 * tb, transition, True, steps,
        )
        setup = replace(setup, rise_time=rise)
        noise = _bisect(
            lambda x: mean_eye_metrics(replace(setup, excess_noise=x), bit_rate, seeds).vertical_opening,
            0.0, 0.6, vertical, False, steps,
        )
        setup = replace(setup, excess_noise=noise)
    return setup
