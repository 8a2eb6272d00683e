"""Slice QoS descriptors and their translation into per-user target rates.

All rates are in bit/s. The URLLC delay model assumes an M/M/1 queue where
rates are counted in bits, i.e. a mean packet length of one bit, so that
``P(D > d) = exp(-(r - a) d)`` holds with ``r`` and ``a`` in bit/s.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = [
    "SliceKind",
    "SliceSpec",
    "UserQoS",
    "InfeasibleRateError",
    "urllc_target_rate",
    "ts_target_rate",
    "delay_outage_probability",
    "simulate_mm1_delay_tail",
    "snr_gap_from_ber",
    "slice_target_rate",
]


class InfeasibleRateError(ValueError):
    """A QoS requirement that no finite rate can satisfy."""


class SliceKind(str, enum.Enum):
    CL = "CL"
    URLLC = "URLLC"
    TS = "TS"


_FIELDS = {
    SliceKind.CL: ("capacity_bps",),
    SliceKind.URLLC: ("delay_max_s", "reliability", "jitter_s", "arrival_rate_bps"),
    SliceKind.TS: ("packet_bits", "sched_period_s"),
}
_ALL_FIELDS = tuple(f for fields in _FIELDS.values() for f in fields)


@dataclass(frozen=True)
class SliceSpec:
    """QoS contract of one slice. Only the fields of its ``kind`` are set."""

    slice_id: str
    kind: SliceKind
    capacity_bps: Optional[float] = None
    delay_max_s: Optional[float] = None
    reliability: Optional[float] = None
    jitter_s: Optional[float] = None
    arrival_rate_bps: Optional[float] = None
    packet_bits: Optional[float] = None
    sched_period_s: Optional[float] = None
    # Target BER for the M-QAM SNR gap; None means an ideal (gap-free) link.
    ber: Optional[float] = None

    def __post_init__(self):
        kind = SliceKind(self.kind)
        object.__setattr__(self, "kind", kind)
        required = _FIELDS[kind]
        for name in _ALL_FIELDS:
            value = getattr(self, name)
            if name in required and value is None:
                raise ValueError(f"{kind.value} slice {self.slice_id!r} needs {name}")
            if name not in required and value is not None:
                raise ValueError(
                    f"{name} is not a field of a {kind.value} slice ({self.slice_id!r})"
                )
        positive = {
            "capacity_bps",
            "delay_max_s",
            "jitter_s",
            "packet_bits",
            "sched_period_s",
        }
        for name in required:
            value = getattr(self, name)
            if name in positive and not value > 0:
                raise ValueError(f"{name} must be positive (slice {self.slice_id!r})")
        if kind is SliceKind.URLLC:
            if not 0 < self.reliability < 1:
                raise ValueError("reliability must lie strictly between 0 and 1")
            if self.arrival_rate_bps < 0:
                raise ValueError("arrival_rate_bps must be nonnegative")
        if self.ber is not None and not 0 < self.ber < 0.2:
            raise ValueError("ber must lie in (0, 0.2)")

    @property
    def beta(self) -> float:
        return 1.0 if self.ber is None else snr_gap_from_ber(self.ber)


@dataclass(frozen=True)
class UserQoS:
    user_id: str
    slice_id: str
    target_rate_bps: float

    def __post_init__(self):
        if not self.target_rate_bps >= 0:
            raise ValueError("target_rate_bps must be nonnegative")


def snr_gap_from_ber(ber: float) -> float:
    """SNR gap factor of uncoded M-QAM at a target bit error rate."""
    if not 0 < ber < 0.2:
        raise ValueError("ber must lie in (0, 0.2)")
    return 1.5 / (-math.log(5.0 * ber))


def urllc_target_rate(a_bps, gamma, d_max_s, jitter_s):
    """Rate meeting both the delay-outage and the jitter bound.

    ``a + max(1/J, -ln(1 - gamma)/D_max)``. Accepts ``jitter_s=inf``.
    """
    if gamma >= 1:
        raise InfeasibleRateError("reliability 1 needs an infinite rate")
    if not 0 <= gamma:
        raise ValueError("gamma must lie in [0, 1)")
    if not d_max_s > 0 or not jitter_s > 0:
        raise ValueError("delay and jitter bounds must be positive")
    if a_bps < 0:
        raise ValueError("arrival rate must be nonnegative")
    delay_term = -math.log1p(-gamma) / d_max_s
    return a_bps + max(1.0 / jitter_s, delay_term)


def ts_target_rate(packet_bits, sched_period_s):
    """One fixed-size packet per scheduling period."""
    if not sched_period_s > 0:
        raise ValueError("scheduling period must be positive")
    if packet_bits < 0:
        raise ValueError("packet size must be nonnegative")
    return packet_bits / sched_period_s


def delay_outage_probability(rate_bps, arrival_bps, d_max_s):
    """``P(sojourn > d_max)`` of an M/M/1 queue; 1 when the queue is unstable."""
    margin = rate_bps - arrival_bps
    if margin <= 0:
        return 1.0
    return math.exp(-margin * d_max_s)


def slice_target_rate(spec: SliceSpec) -> float:
    """Per-user target of a URLLC or TS slice."""
    if spec.kind is SliceKind.URLLC:
        return urllc_target_rate(
            spec.arrival_rate_bps, spec.reliability, spec.delay_max_s, spec.jitter_s
        )
    if spec.kind is SliceKind.TS:
        return ts_target_rate(spec.packet_bits, spec.sched_period_s)
    raise ValueError("CL targets come from the capacity controller")


def simulate_mm1_delay_tail(
    arrival_bps,
    service_bps,
    d_max_s,
    num_packets=1_000_000,
    rng_seed=0,
    mean_packet_bits=1.0,
):
    """Empirical ``P(sojourn > d_max)`` of a FIFO M/M/1 queue.

    Packets arrive as a Poisson process of rate ``arrival_bps/mean_packet_bits``
    with exponential lengths (mean ``mean_packet_bits``), served at
    ``service_bps``. Waiting times follow the Lindley recursion from an empty
    queue. Returns the fraction of packets whose sojourn exceeds ``d_max_s``.

    With the default one-bit mean length the theoretical tail is
    ``exp(-(service - arrival) * d_max)``.
    """
    if arrival_bps == 0:
        return 0.0
    if arrival_bps < 0 or service_bps <= arrival_bps:
        raise ValueError("M/M/1 queue needs 0 <= arrival < service")
    if num_packets < 1:
        raise ValueError("num_packets must be >= 1")
    rng = np.random.default_rng(rng_seed)
    n = int(num_packets)
    interarrival = rng.exponential(mean_packet_bits / arrival_bps, size=n)
    service = rng.exponential(mean_packet_bits, size=n) / service_bps
    # W_0 = 0, W_{k+1} = max(0, W_k + S_k - A_{k+1}); closed form via running min.
    steps = service[:-1] - interarrival[1:]
    walk = np.concatenate(([0.0], np.cumsum(steps)))
    waiting = walk - np.minimum.accumulate(walk)
    sojourn = waiting + service
    return float(np.mean(sojourn > d_max_s))
