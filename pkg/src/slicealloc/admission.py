"""Admission control by lowering CL targets when the BS runs out of power.

While the required power exceeds the budget, each CL user's target is cut
by ``(p_opt - 1) * lambda_i / sum(lambda)`` rate units, where
``p_opt = P_required / P_available`` and ``lambda`` are the rate multipliers
of the last solve. URLLC and TS targets are never touched.

Between cuts the allocation is re-solved incrementally from the previous
assignment, since targets move by a small fraction per iteration; the final
targets get a full solve.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .channel import dbm_to_w
from .dual import AllocationProblem, AllocationResult, SolveOptions, resolve, solve

__all__ = ["PowerBudget", "ReadjustmentReport", "HardInfeasibleError", "readjust"]


class HardInfeasibleError(RuntimeError):
    """Non-CL demand alone needs more power than the BS has."""


@dataclass(frozen=True)
class PowerBudget:
    available_w: float
    tolerance: float = 0.01

    def __post_init__(self):
        if not self.available_w > 0:
            raise ValueError("available_w must be positive")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")

    @classmethod
    def from_dbm(cls, p_dbm: float, tolerance: float = 0.01) -> "PowerBudget":
        return cls(float(dbm_to_w(p_dbm)), tolerance)


@dataclass
class ReadjustmentReport:
    iterations: int
    original_targets: dict
    final_targets: dict
    final_p_opt: float
    reduced_users: set
    converged: bool = True
    power_history: list = field(default_factory=list)

    @property
    def success(self) -> bool:
        return self.converged


def readjust(
    problem: AllocationProblem,
    cl_users: Iterable[str],
    budget: PowerBudget,
    options: SolveOptions = SolveOptions(),
    rate_unit_bps: float = 1e6,
    max_iter: int = 200,
    initial: Optional[AllocationResult] = None,
):
    """Cut CL targets until the allocation fits the power budget.

    Parameters
    ----------
    problem : AllocationProblem
    cl_users : iterable of str
        User ids whose targets may be reduced.
    budget : PowerBudget
    options : SolveOptions
        Passed to every solve.
    rate_unit_bps : float
        Rate unit in which the reduction step is expressed (Mbps by default).
    max_iter : int
        Cap on the number of reductions; hitting it leaves ``converged=False``.
    initial : AllocationResult, optional
        Solution of ``problem`` as given, if already computed.

    Returns
    -------
    (AllocationResult, ReadjustmentReport)

    Raises
    ------
    HardInfeasibleError
        If the power still exceeds the budget with every CL target at zero.
    """
    ids = problem.user_ids
    cl = set(cl_users)
    unknown = cl - set(ids)
    if unknown:
        raise ValueError(f"unknown CL users {sorted(unknown)}")
    is_cl = np.array([u in cl for u in ids], dtype=bool)
    targets = problem.target_bps.copy()
    original = {u: float(t) for u, t in zip(ids, targets) if u in cl}

    result = initial if initial is not None else solve(problem, options)
    p_opt = result.total_power_w / budget.available_w
    history = [result.total_power_w]
    iterations = 0
    converged = True
    if p_opt > 1.0 + budget.tolerance:
        # cutting CL traffic cannot help if the rest alone is over budget
        floor = solve(problem.with_targets(np.where(is_cl, 0.0, targets)), options)
        if floor.total_power_w > budget.available_w * (1.0 + budget.tolerance):
            raise HardInfeasibleError(
                f"{floor.total_power_w:.4g} W needed without any CL traffic, "
                f"{budget.available_w:.4g} W available"
            )
    while p_opt > 1.0 + budget.tolerance:
        if not np.any(targets[is_cl] > 0):
            raise HardInfeasibleError(
                f"{result.total_power_w:.4g} W needed without any CL traffic, "
                f"{budget.available_w:.4g} W available"
            )
        if iterations >= max_iter:
            converged = False
            break
        lam = result.lam
        share = lam / lam.sum()
        cut = (p_opt - 1.0) * share * rate_unit_bps
        targets = np.where(is_cl, np.maximum(targets - cut, 0.0), targets)
        result = resolve(problem.with_targets(targets), result, options)
        p_opt = result.total_power_w / budget.available_w
        history.append(result.total_power_w)
        iterations += 1

    if iterations:
        # the loop re-solves incrementally; finish with a full solve, which
        # also supplies the dual bound, and keep whichever uses less power
        full = solve(problem.with_targets(targets), options)
        if full.total_power_w <= result.total_power_w:
            result = full
        else:
            result = dataclasses.replace(
                result,
                converged=full.converged,
                iterations=full.iterations,
                dual_value=full.dual_value,
            )
        p_opt = result.total_power_w / budget.available_w

    final = {u: float(t) for u, t in zip(ids, targets) if u in cl}
    report = ReadjustmentReport(
        iterations=iterations,
        original_targets=original,
        final_targets=final,
        final_p_opt=float(p_opt),
        reduced_users={u for u in cl if final[u] < original[u]},
        converged=converged,
        power_history=history,
    )
    return result, report
