"""Per-slot downlink power minimisation by Lagrangian duality.

The problem

    min  sum_ij p_ij
    s.t. r_i >= r_o,i,  p_ij >= 0,  x_ij in {0, 1},  sum_i x_ij <= 1

is dualised on the rate constraints. For fixed multipliers the power is a
water-filling (``p_ij = [lambda_i B/ln2 - sigma^2/h_ij]^+``), every
subchannel goes to the user with the largest price ``mu_ij(lambda_i)``, and
the concave dual is maximised with an ellipsoid method driven by its
subgradient (deep cuts at the best dual value found so far). The final assignment is turned into an exactly feasible
allocation by re-solving each user's water level on the channels it owns.

The functions below are plain numpy references of each step; :func:`solve`
runs the same maths through the compiled loop in ``_kernels``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels as K
from .channel import ChannelState
from .qos import UserQoS

__all__ = [
    "AllocationProblem",
    "AllocationResult",
    "InfeasibleError",
    "SolveOptions",
    "assign_subchannels",
    "closed_form_lambda",
    "dual_value",
    "lambda_upper_bound",
    "mu_value",
    "power_for_lambda",
    "rate",
    "rates",
    "resolve",
    "solve",
    "subgradient",
]

LN2 = math.log(2.0)
# Gains below this are treated as unusable for assignment.
GAIN_FLOOR = 1e-30


class InfeasibleError(RuntimeError):
    """Some users with a positive target cannot be given any subchannel."""

    def __init__(self, users, message=None):
        self.users = list(users)
        super().__init__(message or f"no assignable subchannel for users {self.users}")


@dataclass(frozen=True)
class AllocationProblem:
    channel: ChannelState
    targets: Sequence[UserQoS]
    beta: Optional[np.ndarray] = None

    def __post_init__(self):
        targets = tuple(self.targets)
        object.__setattr__(self, "targets", targets)
        if len(targets) != self.channel.num_users:
            raise ValueError(
                f"{len(targets)} targets for a channel with {self.channel.num_users} users"
            )
        if self.beta is None:
            beta = np.ones(len(targets))
        else:
            beta = np.asarray(self.beta, dtype=float).reshape(-1)
            if beta.size != len(targets) or np.any(beta <= 0):
                raise ValueError("beta must hold one positive factor per user")
        object.__setattr__(self, "beta", beta)

    @property
    def target_bps(self) -> np.ndarray:
        return np.array([t.target_rate_bps for t in self.targets], dtype=float)

    @property
    def user_ids(self):
        return [t.user_id for t in self.targets]

    @property
    def bandwidth(self) -> float:
        return self.channel.subchannel_bw_hz

    def gain_ratio(self) -> np.ndarray:
        """``beta_i h_ij / sigma^2`` with unusable gains set to 0."""
        h = self.channel.gains
        g = self.beta[:, None] * h / self.channel.noise_power_w
        return np.where(h > GAIN_FLOOR, g, 0.0)

    def with_targets(self, target_bps) -> "AllocationProblem":
        new = [
            UserQoS(t.user_id, t.slice_id, float(r)) for t, r in zip(self.targets, target_bps)
        ]
        return AllocationProblem(self.channel, new, self.beta)


@dataclass(frozen=True)
class SolveOptions:
    # Stop when sqrt(g' D g) <= rel_tol * (power of the first feasible point).
    rel_tol: float = 1e-6
    # Stop when (best primal - best dual) <= gap_tol * best primal.
    gap_tol: float = 1e-4
    # None means 50 N^2 iterations with a floor of min_iter.
    max_iter: Optional[int] = None
    min_iter: int = 400
    polish: bool = True
    # Primal recovery runs every this many iterations (when the assignment moved).
    check_every: int = 4


@dataclass
class AllocationResult:
    power: np.ndarray
    assignment: np.ndarray
    lam: np.ndarray
    rates: np.ndarray
    total_power_w: float
    converged: bool
    iterations: int
    dual_value: float = float("nan")
    user_ids: list = field(default_factory=list)

    @property
    def duality_gap(self) -> float:
        return self.total_power_w - self.dual_value


# ---------------------------------------------------------------------------
# numpy reference pieces


def rate(channel: ChannelState, user: int, power_row, assign_row, beta: float = 1.0) -> float:
    """Achieved rate of one user in bit/s."""
    p = np.asarray(power_row, dtype=float)
    x = np.asarray(assign_row, dtype=float)
    h = channel.gains[user]
    on = x > 0
    snr = np.zeros_like(p)
    snr[on] = beta * p[on] * h[on] / (x[on] * channel.noise_power_w)
    return float(channel.subchannel_bw_hz * np.sum(x[on] * np.log2(1.0 + snr[on])))


def rates(channel: ChannelState, power, assignment, beta=None) -> np.ndarray:
    """Rates of all users for power and assignment matrices."""
    n = channel.num_users
    beta = np.ones(n) if beta is None else np.asarray(beta, dtype=float)
    return np.array(
        [rate(channel, i, power[i], assignment[i], beta[i]) for i in range(n)], dtype=float
    )


def power_for_lambda(lambda_i, channel: ChannelState, user: int, assign_row, beta: float = 1.0):
    """Water-filling power of one user on its assigned subchannels."""
    level = lambda_i * channel.subchannel_bw_hz / LN2
    inv = channel.noise_power_w / (beta * channel.gains[user])
    return np.asarray(assign_row, dtype=float) * np.maximum(level - inv, 0.0)


def mu_value(lambda_i, h_over_sigma2, B):
    """Price of a subchannel to a user at multiplier ``lambda_i``.

    ``lambda_i B log2(1 + q h/sigma^2) - q`` with ``q = [lambda_i B/ln2 - sigma^2/h]^+``.
    Broadcasts over its arguments.
    """
    lam = np.asarray(lambda_i, dtype=float)
    g = np.asarray(h_over_sigma2, dtype=float)
    with np.errstate(divide="ignore"):
        q = np.maximum(lam * B / LN2 - 1.0 / g, 0.0)
    return lam * B * np.log2(1.0 + q * g) - q


def _price_matrix(lam, problem: AllocationProblem):
    g = problem.gain_ratio()
    lam = np.asarray(lam, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = mu_value(lam[:, None], g, problem.bandwidth)
    return np.where(g > 0, np.nan_to_num(mu, nan=0.0), 0.0)


def assign_subchannels(lam, problem: AllocationProblem):
    """Give each subchannel to its highest bidder.

    Returns ``(winner, owned)``: ``winner[j]`` is the user index or -1 when
    every price is zero; ``owned[i]`` lists the subchannels of user i. Ties go
    to the lowest user index.
    """
    mu = _price_matrix(lam, problem)
    n, k = mu.shape
    if n == 0:
        return np.full(k, -1), []
    winner = np.argmax(mu, axis=0)
    winner = np.where(mu[winner, np.arange(k)] > 0, winner, -1)
    owned = [np.flatnonzero(winner == i) for i in range(n)]
    return winner, owned


def dual_value(lam, problem: AllocationProblem) -> float:
    """``sum_i lambda_i r_o,i - sum_j max_i mu_ij(lambda_i)`` in watts."""
    lam = np.asarray(lam, dtype=float)
    mu = _price_matrix(lam, problem)
    top = mu.max(axis=0) if mu.shape[0] else np.zeros(mu.shape[1])
    return float(lam @ problem.target_bps - np.sum(np.maximum(top, 0.0)))


def subgradient(lam, problem: AllocationProblem, owned) -> np.ndarray:
    """Subgradient of :func:`dual_value` for the given subchannel sets."""
    lam = np.asarray(lam, dtype=float)
    B = problem.bandwidth
    g = problem.gain_ratio()
    out = problem.target_bps.copy()
    for i, js in enumerate(owned):
        if len(js) == 0:
            continue
        x = lam[i] * B / LN2 * g[i, js]
        out[i] -= np.sum(np.where(x > 1.0, B * np.log2(np.where(x > 1.0, x, 1.0)), 0.0))
    return out


def lambda_upper_bound(target_bps, h_over_sigma2_row, B) -> float:
    """``2^(r/B) ln2/B sum_j sigma^2/h_ij``, an upper bound on the optimal multiplier."""
    g = np.asarray(h_over_sigma2_row, dtype=float)
    g = g[g > 0]
    if g.size == 0:
        return math.inf
    log_val = target_bps / B * LN2 + math.log(LN2 / B) + math.log(np.sum(1.0 / g))
    return math.exp(log_val) if log_val < 709.0 else math.inf


def closed_form_lambda(target_bps, assigned_h_over_sigma2, B) -> float:
    """Stationary multiplier when every listed subchannel carries power.

    ``2^(r/(B m)) (prod sigma^2/h)^(1/m) ln2/B`` for ``m`` subchannels.
    """
    g = np.asarray(assigned_h_over_sigma2, dtype=float).reshape(-1)
    m = g.size
    if m == 0:
        raise ValueError("closed-form multiplier needs at least one subchannel")
    log_val = (target_bps / B * LN2 - np.sum(np.log(g))) / m + math.log(LN2 / B)
    return math.exp(log_val)


# ---------------------------------------------------------------------------
# solver


def _zero_result(problem, user_ids):
    n, k = problem.channel.gains.shape
    return AllocationResult(
        power=np.zeros((n, k)),
        assignment=np.zeros((n, k), dtype=np.int8),
        lam=np.zeros(n),
        rates=np.zeros(n),
        total_power_w=0.0,
        converged=True,
        iterations=0,
        dual_value=0.0,
        user_ids=user_ids,
    )


def _log_gains(problem):
    g = problem.gain_ratio()
    with np.errstate(divide="ignore"):
        lnG = np.log(g)
        invG = np.where(g > 0, 1.0 / np.where(g > 0, g, 1.0), np.inf)
    return np.ascontiguousarray(lnG), np.ascontiguousarray(invG)


def _slater_bounds(owner, lnG, rho, active, p0, d_lb):
    """Per-user water-level bounds from strictly feasible perturbations.

    Giving user i extra demand ``eta*rho_i`` on its own channels costs
    ``dP``; weak duality then caps ``w_i* <= (p0 - d_lb + dP)/(eta rho_i)``.
    """
    out = np.full(rho.shape, np.inf)
    base_gap = max(p0 - max(d_lb, 0.0), 0.0)
    for i in np.flatnonzero(active):
        lng = np.sort(lnG[i, owner == i])[::-1].copy()
        base, _ = K.waterfill_power(lng, rho[i])
        for eta in (0.05, 0.25, 1.0):
            up, _ = K.waterfill_power(lng, rho[i] * (1.0 + eta))
            out[i] = min(out[i], (base_gap + up - base) / (eta * rho[i]))
    return out


def solve(
    problem: AllocationProblem,
    options: SolveOptions = SolveOptions(),
) -> AllocationResult:
    """Minimum-power allocation meeting every user's target rate.

    Parameters
    ----------
    problem : AllocationProblem
    options : SolveOptions

    Raises
    ------
    InfeasibleError
        If a user with a positive target cannot receive any subchannel.
    """
    user_ids = problem.user_ids
    n, k = problem.channel.gains.shape
    B = problem.bandwidth
    r = problem.target_bps
    rho = r * LN2 / B
    active = rho > 0
    if not active.any():
        return _zero_result(problem, user_ids)

    lnG, invG = _log_gains(problem)
    no_channel = [user_ids[i] for i in np.flatnonzero(active) if not np.isfinite(lnG[i]).any()]
    if no_channel:
        raise InfeasibleError(no_channel)

    owner0 = K.greedy_start(lnG, rho, active)
    p0, owner0, lnw0 = K.recover(owner0, lnG, rho, active)
    if not np.isfinite(p0):
        counts = np.bincount(owner0[owner0 >= 0], minlength=n)
        raise InfeasibleError([user_ids[i] for i in np.flatnonzero(active & (counts == 0))])
    if options.polish:
        p0, owner0, lnw0 = K.polish(
            owner0, lnG, invG, rho, active, p0, lnw0, 20, False
        )

    w_heur = np.where(active, np.exp(lnw0), 0.0)
    d_lb, _, _ = K.dual_and_grad(w_heur, rho, lnG, invG, active)

    # enclosing box [0, w_up] for the optimal water levels
    with np.errstate(over="ignore"):
        rate_up = np.array(
            [
                lambda_upper_bound(r[i], np.exp(lnG[i]), B) * B / LN2 if active[i] else 0.0
                for i in range(n)
            ]
        )
    w_up = np.minimum(rate_up, _slater_bounds(owner0, lnG, rho, active, p0, d_lb))
    idx = np.flatnonzero(active)
    na = idx.size
    max_iter = options.max_iter
    if max_iter is None:
        max_iter = max(50 * na * na, options.min_iter)
    eps = options.rel_tol * p0

    center = np.where(active, 0.5 * w_up, 0.0)
    out = K.ellipsoid(
        center,
        np.diag(na * center[idx] ** 2),
        rho,
        lnG,
        invG,
        active,
        eps,
        options.gap_tol,
        max_iter,
        p0,
        owner0,
        lnw0,
        options.check_every,
    )
    f_best, _w_best, p_best, owner, lnw, iters, status = out
    f_best = max(f_best, d_lb)
    if options.polish:
        p_best, owner, lnw = K.polish(owner, lnG, invG, rho, active, p_best, lnw)

    return _package(problem, owner, lnw, active, lnG, invG, status in (1, 2), iters, f_best)


def _package(problem, owner, lnw, active, lnG, invG, converged, iterations, dual):
    n = problem.channel.gains.shape[0]
    B = problem.bandwidth
    w = np.where(active, np.exp(lnw), 0.0)
    assigned = (owner[None, :] == np.arange(n)[:, None]) & active[:, None]
    with np.errstate(invalid="ignore"):
        power = np.where(assigned, np.maximum(w[:, None] - invG, 0.0), 0.0)
    assignment = (power > 0).astype(np.int8)
    achieved = B * np.sum(
        np.log2(1.0 + power * np.where(assignment > 0, np.exp(lnG), 0.0)), axis=1
    )
    return AllocationResult(
        power=power,
        assignment=assignment,
        lam=w * LN2 / B,
        rates=achieved,
        total_power_w=float(power.sum()),
        converged=bool(converged),
        iterations=int(iterations),
        dual_value=float(dual),
        user_ids=problem.user_ids,
    )


def resolve(
    problem: AllocationProblem,
    previous: AllocationResult,
    options: SolveOptions = SolveOptions(),
) -> AllocationResult:
    """Re-optimise after a small change of targets, starting from ``previous``.

    Keeps the subchannel ownership of ``previous``, water-fills it for the new
    targets and polishes the assignment locally. No dual bound is computed
    (``dual_value`` is nan), so use :func:`solve` when a certificate is needed.
    Falls back to :func:`solve` if the old ownership leaves a user unserved.
    """
    r = problem.target_bps
    rho = r * LN2 / problem.bandwidth
    active = rho > 0
    if not active.any():
        return _zero_result(problem, problem.user_ids)
    if previous.assignment.shape != problem.channel.gains.shape:
        raise ValueError("previous result does not match the problem's shape")
    lnG, invG = _log_gains(problem)
    held = previous.assignment.any(axis=0)
    owner = np.where(held, previous.assignment.argmax(axis=0), -1).astype(np.int64)
    total, owner, lnw = K.recover(owner, lnG, rho, active)
    if not np.isfinite(total):
        return solve(problem, options)
    if options.polish:
        total, owner, lnw = K.polish(owner, lnG, invG, rho, active, total, lnw)
    return _package(problem, owner, lnw, active, lnG, invG, True, 0, math.nan)
    return AllocationResult(
        power=power,
        assignment=assignment,
        lam=w * LN2 / B,
        rates=achieved,
        total_power_w=float(power.sum()),
        converged=status in (1, 2),
        iterations=int(iters),
        dual_value=float(f_best),
        user_ids=user_ids,
    )
