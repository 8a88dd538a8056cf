"""Block-averaged SNR estimation and the SNR-versus-jamming sweep."""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .. import link_model as lm
from ..count_engine import CountTrace, RateSchedule, derive_seed, sample_trace
from ..link_model import ChannelActors, DomainError, LinkParams
from ..parallel import worker_count


@dataclass(frozen=True)
class SnrEstimate:
    value: float
    c1_mean: float
    c0_mean: float
    sigma_c1: float
    sigma_c0: float
    n_blocks: int
    uncertainty: float


def block_counts(trace: CountTrace, block: float, n_blocks: int) -> np.ndarray:
    per = block / trace.bin_duration
    k = int(round(per))
    if k < 1 or abs(per - k) > 1e-6 * per:
        raise ValueError(f"block {block} s is not a multiple of the bin {trace.bin_duration} s")
    if len(trace) < k * n_blocks:
        raise ValueError(f"trace holds {len(trace) // k} blocks of {block} s, {n_blocks} needed")
    return trace.bins[: k * n_blocks].reshape(n_blocks, k).sum(axis=1).astype(np.float64)


def estimate_snr(
    trace_c1: CountTrace,
    trace_c0: CountTrace,
    block: float = 1.0,
    n_blocks: int = 20,
    noise: str = "c1",
) -> SnrEstimate:
    """SNR of two count levels from ``n_blocks`` consecutive blocks of each trace.

    ``noise="c1"`` divides the level difference by the standard deviation of
    the level-1 block counts; ``noise="difference"`` by the quadrature sum of
    both levels' standard deviations, the noise of the difference itself.
    The uncertainty propagates the block standard deviations of both means.
    """
    if n_blocks < 2:
        raise ValueError("n_blocks must be >= 2")
    c1 = block_counts(trace_c1, block, n_blocks)
    c0 = block_counts(trace_c0, block, n_blocks)
    s1 = float(c1.std(ddof=1))
    s0 = float(c0.std(ddof=1))
    if noise == "c1":
        denom = s1
    elif noise == "difference":
        denom = math.hypot(s1, s0)
    else:
        raise ValueError(f"unknown noise model {noise!r}")
    if denom == 0.0:
        raise DomainError("zero variance in the block counts; the SNR is undefined")
    diff = float(c1.mean() - c0.mean())
    return SnrEstimate(
        value=diff / denom,
        c1_mean=float(c1.mean()),
        c0_mean=float(c0.mean()),
        sigma_c1=s1,
        sigma_c0=s0,
        n_blocks=n_blocks,
        uncertainty=math.hypot(s1, s0) / denom,
    )


@dataclass(frozen=True)
class SweepRow:
    ratio: float
    snr_classical: float
    snr_classical_err: float
    snr_quantum: float
    snr_quantum_err: float
    analytic_classical: float
    analytic_quantum: float


def _level_traces(sched_fn, p, a, duration, block, seed, label):
    s1 = RateSchedule.constant(sched_fn(p, replace(a, alpha_sq=0.0)), duration)
    s0 = RateSchedule.constant(sched_fn(p, replace(a, alpha_sq=1.0)), duration)
    return (
        sample_trace(s1, block, derive_seed(seed, 1), label),
        sample_trace(s0, block, derive_seed(seed, 0), label),
    )


def _sweep_point(p, a, ratio, seed, n_blocks, block):
    a_r = replace(a, n_class=ratio * p.n_quantum)
    duration = n_blocks * block
    eve1, eve0 = _level_traces(lm.eve_rate, p, a_r, duration, block, seed, "eve")
    # quantum column: amplitude keying at constructive interference
    p0 = p.with_delta_phi(0.0)
    ali1, ali0 = _level_traces(lm.alice_rate, p0, a_r, duration, block, seed, "alice")
    classical = estimate_snr(eve1, eve0, block, n_blocks, noise="difference")
    quantum = estimate_snr(ali1, ali0, block, n_blocks, noise="difference")
    return classical, quantum


def sweep_snr(
    p: LinkParams,
    a: ChannelActors,
    ratios: Sequence[float],
    seeds: Sequence[int],
    n_blocks: int = 20,
    block: float | None = None,
    workers: int | None = None,
) -> list[SweepRow]:
    """Simulated classical (Eve) and quantum (Alice) SNR versus N_class/N_quantum.

    Each point sets ``n_class = ratio * n_quantum`` and estimates both SNRs
    from block counts of duration ``block`` (default ``t_meas``), using the
    noise of the level difference so that they compare with the analytic
    curves. With several seeds the value is the mean over seeds and the error
    the standard error of that mean. Every (ratio, seed) point has its own
    derived seed.
    """
    if any(r < 0 or not math.isfinite(r) for r in ratios):
        raise DomainError("ratios must be finite and >= 0")
    if not seeds:
        raise ValueError("at least one seed is needed")
    block = p.t_meas if block is None else block

    jobs = [(i, j) for i in range(len(ratios)) for j in range(len(seeds))]

    def run(job):
        i, j = job
        return _sweep_point(p, a, ratios[i], derive_seed(seeds[j], i), n_blocks, block)

    with ThreadPoolExecutor(max_workers=worker_count(workers)) as pool:
        results = list(pool.map(run, jobs))

    rows = []
    p_block = replace(p, t_meas=block)
    for i, ratio in enumerate(ratios):
        pts = results[i * len(seeds):(i + 1) * len(seeds)]
        a_r = replace(a, n_class=ratio * p.n_quantum)
        cls = np.array([c.value for c, _ in pts])
        qnt = np.array([q.value for _, q in pts])
        if len(seeds) > 1:
            cls_err = float(cls.std(ddof=1) / math.sqrt(len(seeds)))
            qnt_err = float(qnt.std(ddof=1) / math.sqrt(len(seeds)))
        else:
            cls_err, qnt_err = pts[0][0].uncertainty, pts[0][1].uncertainty
        rows.append(
            SweepRow(
                ratio=float(ratio),
                snr_classical=float(cls.mean()),
                snr_classical_err=cls_err,
                snr_quantum=float(qnt.mean()),
                snr_quantum_err=qnt_err,
                analytic_classical=lm.snr_eve(p_block, a_r),
                analytic_quantum=lm.snr_alice_amplitude(p_block, a_r),
            )
        )
    return rows


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["ratio", "snr_classical", "snr_classical_err", "snr_quantum", "snr_quantum_err",
                "analytic_classical", "analytic_quantum"])
    for r in rows:
        w.writerow([repr(v) for v in (r.ratio, r.snr_classical, r.snr_classical_err, r.snr_quantum,
                                      r.snr_quantum_err, r.analytic_classical, r.analytic_quantum)])
    return buf.getvalue()


def crossing_ratio(rows: Sequence[SweepRow], level: float = 1.0) -> float:
    """First ratio where the classical SNR falls to ``level``, log-linearly interpolated."""
    pts = [(r.ratio, r.snr_classical) for r in rows if r.ratio > 0]
    for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
        if y0 > level >= y1:
            f = (y0 - level) / (y0 - y1)
            return float(10 ** (math.log10(x0) + f * (math.log10(x1) - math.log10(x0))))
    raise ValueError(f"classical SNR never crosses {level}")


def log_slope(rows: Sequence[SweepRow], column: str = "quantum") -> tuple[float, float]:
    """Weighted least-squares slope of SNR against log10(ratio) and its standard error."""
    pts = [r for r in rows if r.ratio > 0]
    x = np.log10([r.ratio for r in pts])
    y = np.array([getattr(r, f"snr_{column}") for r in pts])
    err = np.array([getattr(r, f"snr_{column}_err") for r in pts])
    if len(pts) < 3 or np.any(err <= 0):
        raise ValueError("need at least 3 points with positive errors")
    w = 1.0 / err**2
    xm = np.sum(w * x) / w.sum()
    sxx = np.sum(w * (x - xm) ** 2)
    slope = float(np.sum(w * (x - xm) * y) / sxx)
    return slope, float(math.sqrt(1.0 / sxx))
