"""Independent reference computations used to validate the allocator.

None of these share code with the solver path: water-filling is done by
bracketing root search, the assignment by enumeration.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .channel import ChannelState
from .dual import AllocationProblem
from .qos import UserQoS

__all__ = [
    "BruteForceResult",
    "brute_force_allocation",
    "waterfill_by_root",
    "random_problem",
    "appendix_objective",
    "grid_minimiser",
]


def waterfill_by_root(gain_ratio, target_bps, B):
    """Minimum power for one user on the given subchannels.

    Finds the water level ``w`` with ``sum_j B log2(max(w g_j, 1)) = r`` by
    Brent's method on ``ln w``. Returns ``(power, w)``; ``(inf, inf)`` when no
    subchannel is usable and ``(0, 0)`` for a zero target.
    """
    g = np.asarray(gain_ratio, dtype=float)
    g = g[g > 0]
    if target_bps <= 0:
        return 0.0, 0.0
    if g.size == 0:
        return math.inf, math.inf

    def excess(ln_w):
        return B * np.sum(np.maximum(ln_w + np.log(g), 0.0)) / math.log(2.0) - target_bps

    lo = -np.log(g).max()
    hi = lo + target_bps * math.log(2.0) / B + 1.0
    ln_w = brentq(excess, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
    w = math.exp(ln_w)
    return float(np.sum(np.maximum(w - 1.0 / g, 0.0))), w


@dataclass
class BruteForceResult:
    total_power_w: float
    owner: tuple
    feasible: bool


def brute_force_allocation(problem: AllocationProblem) -> BruteForceResult:
    """Exhaustive search over channel ownership (including idle channels)."""
    g = problem.gain_ratio()
    n, k = g.shape
    r = problem.target_bps
    B = problem.bandwidth
    best = BruteForceResult(math.inf, (), False)
    for owner in itertools.product(range(-1, n), repeat=k):
        owner_arr = np.array(owner)
        total = 0.0
        for i in range(n):
            p, _ = waterfill_by_root(g[i, owner_arr == i], r[i], B)
            total += p
            if total >= best.total_power_w:
                break
        if total < best.total_power_w:
            best = BruteForceResult(total, owner, True)
    return best


def random_problem(rng, n_users, n_sub, B=180e3, snr_db=(0.0, 30.0), spectral_eff=(0.3, 3.0)):
    """Small random instance: SNR per watt log-uniform, targets in bit/s/Hz units of B."""
    snr = 10.0 ** (rng.uniform(*snr_db, size=(n_users, n_sub)) / 10.0)
    noise = 1e-3
    channel = ChannelState(snr * noise, noise, B)
    targets = [
        UserQoS(f"u{i}", "s", float(rng.uniform(*spectral_eff) * B)) for i in range(n_users)
    ]
    return AllocationProblem(channel, targets)


def appendix_objective(mu, values):
    """``F(mu) = sum_i (mu_i - mu)^+ + mu`` evaluated on an array of ``mu``."""
    values = np.asarray(values, dtype=float)
    mu = np.asarray(mu, dtype=float)
    return np.maximum(values[None, :] - mu[:, None], 0.0).sum(axis=1) + mu


def grid_minimiser(values, resolution=1e-3):
    """Grid search for the minimum of :func:`appendix_objective`.

    The grid spans the value range padded by one range on each side, with
    spacing ``resolution * range``, and contains every ``values[i]`` exactly.
    ``F`` is flat between the two largest values, so ties are resolved
    towards the largest minimiser. Returns ``(argmin, min_value, spacing)``.
    """
    values = np.asarray(values, dtype=float)
    lo, hi = values.min(), values.max()
    span = max(hi - lo, 1.0)
    step = resolution * span
    grid = np.arange(lo - span, hi + span + step, step)
    grid = np.union1d(grid, values)
    f = appendix_objective(grid, values)
    fmin = f.min()
    tie = np.flatnonzero(f <= fmin + 1e-12 * max(1.0, abs(fmin)))
    return float(grid[tie[-1]]), float(fmin), step
