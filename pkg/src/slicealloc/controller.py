"""Capacity controller for CL slices.

Each slot every user's target moves by the same amount,
``-k * (sum of last slot's rates - C_s)``, which drives the slice sum rate to
its capacity ``C_s`` with contraction factor ``1 - k N_s``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

__all__ = ["ControllerState", "update", "on_population_change"]


@dataclass(frozen=True)
class ControllerState:
    slice_id: str
    capacity_bps: float
    targets: Mapping[str, float] = field(default_factory=dict)
    # Explicit step size k; None means gain_factor / N_s.
    gain: Optional[float] = None
    gain_factor: float = 0.5

    def __post_init__(self):
        if not self.capacity_bps > 0:
            raise ValueError("capacity_bps must be positive")
        if not 0 < self.gain_factor < 1:
            raise ValueError("gain_factor must lie in (0, 1)")
        if self.gain is not None and not self.gain > 0:
            raise ValueError("gain must be positive")
        if any(r < 0 for r in self.targets.values()):
            raise ValueError("targets must be nonnegative")

    @property
    def num_users(self) -> int:
        return len(self.targets)

    @property
    def effective_gain(self) -> float:
        """Step size actually applied, always below ``1/N_s``."""
        n = self.num_users
        if n == 0:
            return 0.0
        if self.gain is not None and self.gain < 1.0 / n:
            return self.gain
        return self.gain_factor / n

    @property
    def target_sum(self) -> float:
        return float(sum(self.targets.values()))


def update(state: ControllerState, achieved_rates: Mapping[str, float]) -> ControllerState:
    """One control step from the rates delivered in the previous slot."""
    if set(achieved_rates) != set(state.targets):
        raise ValueError("achieved_rates must cover exactly the slice's current users")
    if not state.targets:
        return state
    error = sum(achieved_rates.values()) - state.capacity_bps
    step = state.effective_gain * error
    targets = {u: max(r - step, 0.0) for u, r in state.targets.items()}
    return dataclasses.replace(state, targets=targets)


def on_population_change(
    state: ControllerState, user_ids: Iterable[str], reset: bool = False
) -> ControllerState:
    """Track arrivals and departures.

    Departed users are dropped and arrivals start at ``C_s / N_s``. With
    ``reset=True`` every user, survivors included, restarts at ``C_s / N_s``.
    """
    users = list(dict.fromkeys(user_ids))
    if not users:
        return dataclasses.replace(state, targets={})
    share = state.capacity_bps / len(users)
    if reset:
        targets = {u: share for u in users}
    else:
        targets = {u: state.targets.get(u, share) for u in users}
    return dataclasses.replace(state, targets=targets)
