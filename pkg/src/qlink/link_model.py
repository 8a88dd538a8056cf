"""Rate-equation model of the two-source induced-coherence link.

Everything here is a pure function of immutable inputs. Probabilities
(``alpha_sq``, ``alpha_e_sq``, ``eta_losses_sq``) are stored squared because
every formula consumes them that way; the amplitude properties take the root
on demand.

Phases are radians. The interference phase seen by Alice is
``delta_phi = phi - phi_a - phi_b``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class DomainError(ValueError):
    """A parameter lies outside the physical domain of the model."""


def _check_probability(name: str, value: float) -> None:
    if not (math.isfinite(value) and 0.0 <= value <= 1.0):
        raise DomainError(f"{name} must lie in [0, 1], got {value!r}")


def _check_nonnegative(name: str, value: float) -> None:
    if not (math.isfinite(value) and value >= 0.0):
        raise DomainError(f"{name} must be finite and >= 0, got {value!r}")


@dataclass(frozen=True)
class LinkParams:
    """Physical parameters of the link.

    n_quantum : pairs per second per source (1/s)
    phi, phi_a, phi_b : pump phase at the second source, idler-path phase,
        signal-path phase set by Bob (rad)
    eta_det : Alice detection efficiency including propagation losses
    t_meas : integration time of one measurement (s)
    """

    n_quantum: float
    eta_det: float
    t_meas: float
    phi: float = 0.0
    phi_a: float = 0.0
    phi_b: float = 0.0

    def __post_init__(self):
        _check_nonnegative("n_quantum", self.n_quantum)
        _check_probability("eta_det", self.eta_det)
        if not (math.isfinite(self.t_meas) and self.t_meas > 0.0):
            raise DomainError(f"t_meas must be finite and > 0, got {self.t_meas!r}")
        for name in ("phi", "phi_a", "phi_b"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")

    @property
    def delta_phi(self) -> float:
        return self.phi - self.phi_a - self.phi_b

    def with_delta_phi(self, delta_phi: float) -> "LinkParams":
        """Copy with ``phi_b`` chosen so that the interference phase is ``delta_phi``."""
        return LinkParams(
            n_quantum=self.n_quantum,
            eta_det=self.eta_det,
            t_meas=self.t_meas,
            phi=self.phi,
            phi_a=self.phi_a,
            phi_b=self.phi - self.phi_a - delta_phi,
        )


@dataclass(frozen=True)
class ChannelActors:
    """Bob's encoding state, Eve's tap, the jamming source and link leakage.

    alpha_sq : probability that Bob deviates s1 into s_B
    alpha_e_sq : probability that Eve taps s1 into s_E
    eta_det_e : Eve detection efficiency
    n_class : jamming photons per second in mode s1 (1/s)
    eta_losses_sq : leakage probability of the return path
    """

    alpha_sq: float = 0.0
    alpha_e_sq: float = 0.0
    eta_det_e: float = 1.0
    n_class: float = 0.0
    eta_losses_sq: float = 0.0

    def __post_init__(self):
        _check_probability("alpha_sq", self.alpha_sq)
        _check_probability("alpha_e_sq", self.alpha_e_sq)
        _check_probability("eta_det_e", self.eta_det_e)
        _check_probability("eta_losses_sq", self.eta_losses_sq)
        _check_nonnegative("n_class", self.n_class)

    @property
    def alpha(self) -> float:
        return math.sqrt(self.alpha_sq)

    @property
    def alpha_e(self) -> float:
        return math.sqrt(self.alpha_e_sq)

    @property
    def eta_losses(self) -> float:
        return math.sqrt(self.eta_losses_sq)


@dataclass(frozen=True)
class RateReport:
    r_alice: float
    r_eve: float
    c_comm: float
    snr_eve: float
    snr_alice_amplitude: float
    snr_alice_phase: float


# Array kernels shared with the trace builder, which evaluates rates pointwise
# along ramps of the encoding parameter.


def alice_rate_array(eta_det, n_quantum, alpha_sq, alpha_e_sq, delta_phi):
    visibility = np.sqrt(1.0 - np.asarray(alpha_sq)) * np.sqrt(1.0 - np.asarray(alpha_e_sq))
    rate = 2.0 * eta_det * n_quantum * (1.0 + visibility * np.cos(delta_phi))
    # 1 + cos can round to -1e-17 at delta_phi = pi
    return np.maximum(rate, 0.0)


def eve_rate_array(eta_det_e, n_quantum, alpha_sq, alpha_e_sq, n_class):
    alpha_sq = np.asarray(alpha_sq)
    return eta_det_e * n_quantum * (1.0 - alpha_sq) * alpha_e_sq + alpha_e_sq * eta_det_e * n_class


def alice_rate(p: LinkParams, a: ChannelActors) -> float:
    """Idler detection rate at Alice, including Eve's tap (1/s)."""
    return float(alice_rate_array(p.eta_det, p.n_quantum, a.alpha_sq, a.alpha_e_sq, p.delta_phi))


def eve_rate(p: LinkParams, a: ChannelActors) -> float:
    """Signal-mode detection rate at Eve, message photons plus jamming (1/s)."""
    return float(eve_rate_array(a.eta_det_e, p.n_quantum, a.alpha_sq, a.alpha_e_sq, a.n_class))


def eve_level_counts(p: LinkParams, a: ChannelActors) -> tuple[float, float]:
    """Eve's expected counts per ``t_meas`` for Bob open (level 1) and blocked (level 0).

    Bob's own ``alpha_sq`` is ignored: both levels are evaluated.
    """
    scale = a.eta_det_e * a.alpha_e_sq * p.t_meas
    c1 = scale * (p.n_quantum + a.n_class)
    c0 = scale * a.n_class
    return c1, c0


def c_comm(p: LinkParams, a: ChannelActors) -> float:
    """Count difference between Eve's two levels over ``t_meas``."""
    return a.eta_det_e * p.n_quantum * a.alpha_e_sq * p.t_meas


def _require_pairs(p: LinkParams) -> None:
    if p.n_quantum <= 0.0:
        raise DomainError("n_quantum must be > 0 for an SNR (N_class/N_quantum undefined)")


def snr_eve(p: LinkParams, a: ChannelActors) -> float:
    """Eve's SNR: level difference over the quadrature sum of both levels' shot noise."""
    _require_pairs(p)
    ratio = a.n_class / p.n_quantum
    return math.sqrt(c_comm(p, a)) / math.sqrt(1.0 + 2.0 * ratio)


def snr_alice_amplitude(p: LinkParams, a: ChannelActors) -> float:
    v = math.sqrt(1.0 - a.alpha_e_sq)
    return math.sqrt(2.0 * p.eta_det * p.n_quantum * p.t_meas) * v / math.sqrt(2.0 + v)


def snr_alice_phase(p: LinkParams, a: ChannelActors) -> float:
    v = math.sqrt(1.0 - a.alpha_e_sq)
    return 2.0 * math.sqrt(p.eta_det * p.n_quantum * p.t_meas * v)


def security_threshold(p: LinkParams, a: ChannelActors, exact: bool = False) -> float:
    """Minimum N_class/N_quantum ratio that hides the message from Eve.

    The default is the approximation ``C_comm / 2``; ``exact=True`` returns
    ``(C_comm - 1) / 2``, the ratio at which ``snr_eve`` equals 1. The exact
    form is negative when ``C_comm < 1`` (Eve never resolves a level).
    """
    c = c_comm(p, a)
    return (c - 1.0) / 2.0 if exact else c / 2.0


def is_secure(p: LinkParams, a: ChannelActors) -> bool:
    """True when ``|snr_eve| <= 1`` (the boundary itself counts as hidden)."""
    return abs(snr_eve(p, a)) <= 1.0


@dataclass(frozen=True)
class DfgCheck:
    c_dfg_rate: float
    c_quantum_rate: float
    negligible: bool


def dfg_check(pump_rate: float, p: LinkParams, a: ChannelActors) -> DfgCheck:
    """Idler rate from difference-frequency generation seeded by the jamming beam.

    The conversion efficiency is inferred from the measured pair rate,
    ``|eta|^2 = n_quantum / pump_rate``, so that

        C_DFG     = eta_det * n_quantum * sqrt(n_class / pump_rate) * (1 - alpha_E) * (1 - alpha)
        C_quantum = eta_det * n_quantum * (1 - alpha)

    ``negligible`` is the worst case over Eve's tap (alpha_E = 0), which
    reduces to ``n_class < pump_rate``.
    """
    if not (math.isfinite(pump_rate) and pump_rate > 0.0):
        raise DomainError(f"pump_rate must be finite and > 0, got {pump_rate!r}")
    base = p.eta_det * p.n_quantum * (1.0 - a.alpha)
    c_dfg = base * math.sqrt(a.n_class / pump_rate) * (1.0 - a.alpha_e)
    return DfgCheck(c_dfg_rate=c_dfg, c_quantum_rate=base, negligible=a.n_class < pump_rate)


def lossy_alice_rate(p: LinkParams, a: ChannelActors) -> float:
    """Alice's rate with leakage ``eta_losses_sq`` on the return path."""
    return float(alice_rate_array(p.eta_det, p.n_quantum, a.eta_losses_sq, 0.0, p.delta_phi))


def lossy_visibility(a: ChannelActors) -> float:
    return math.sqrt(1.0 - a.eta_losses_sq)


def rate_report(p: LinkParams, a: ChannelActors) -> RateReport:
    return RateReport(
        r_alice=alice_rate(p, a),
        r_eve=eve_rate(p, a),
        c_comm=c_comm(p, a),
        snr_eve=snr_eve(p, a),
        snr_alice_amplitude=snr_alice_amplitude(p, a),
        snr_alice_phase=snr_alice_phase(p, a),
    )
