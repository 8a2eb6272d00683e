"""Slot-by-slot closed loop: channel, targets, controller, allocation, admission."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .admission import HardInfeasibleError, PowerBudget, ReadjustmentReport, readjust
from .channel import LinkParams, sample_channel, w_to_dbm
from .controller import ControllerState, on_population_change, update
from .dual import AllocationProblem, InfeasibleError, SolveOptions, solve
from .qos import SliceKind, SliceSpec, UserQoS, slice_target_rate

__all__ = [
    "SchedulePhase",
    "ScenarioConfig",
    "SlotMetrics",
    "SimulationAborted",
    "population_schedule",
    "run",
]


class SimulationAborted(RuntimeError):
    def __init__(self, slot, reason, users=()):
        self.slot = slot
        self.users = list(users)
        super().__init__(f"slot {slot}: {reason}")


@dataclass(frozen=True)
class SchedulePhase:
    """User counts per slice for slots ``start <= t < stop``."""

    start: int
    stop: int
    users: Mapping[str, int]

    def __post_init__(self):
        if not 0 <= self.start < self.stop:
            raise ValueError("schedule phase needs 0 <= start < stop")
        if any(int(c) != c or c < 0 for c in self.users.values()):
            raise ValueError("user counts must be nonnegative integers")


@dataclass(frozen=True)
class ScenarioConfig:
    link: LinkParams
    slices: Tuple[SliceSpec, ...]
    schedule: Tuple[SchedulePhase, ...]
    num_slots: int
    power_budget_dbm: float = 23.0
    admission_enabled: bool = True
    rng_seed: int = 0
    # Per-user target replacing the QoS translation of a URLLC/TS slice, bit/s.
    targets_override_bps: Mapping[str, float] = field(default_factory=dict)
    admission_tolerance: float = 0.01
    readjust_rate_unit_bps: float = 1e6
    readjust_max_iter: int = 200
    controller_gain_factor: float = 0.5
    # Restart every CL user at C_s/N_s when the slice population changes.
    reset_cl_targets_on_change: bool = True
    slot_duration_s: float = 0.01
    solver: SolveOptions = SolveOptions()

    def __post_init__(self):
        object.__setattr__(self, "slices", tuple(self.slices))
        object.__setattr__(self, "schedule", tuple(self.schedule))
        if self.num_slots < 0:
            raise ValueError("num_slots must be nonnegative")
        ids = [s.slice_id for s in self.slices]
        if len(set(ids)) != len(ids):
            raise ValueError("slice ids must be unique")
        for sid, value in self.targets_override_bps.items():
            spec = self.slice(sid)
            if spec.kind is SliceKind.CL:
                raise ValueError(f"CL slice {sid!r} is driven by its capacity, not an override")
            if value < 0:
                raise ValueError(f"override for {sid!r} must be nonnegative")
        for phase in self.schedule:
            for sid in phase.users:
                self.slice(sid)
        if self.schedule:
            phases = sorted(self.schedule, key=lambda p: p.start)
            if phases[0].start != 0:
                raise ValueError("schedule must start at slot 0")
            for a, b in zip(phases, phases[1:]):
                if a.stop != b.start:
                    raise ValueError(f"schedule gap or overlap at slot {a.stop}")
            if phases[-1].stop < self.num_slots:
                raise ValueError("schedule does not cover every slot")
        if not self.admission_tolerance > 0:
            raise ValueError("admission_tolerance must be positive")

    def slice(self, slice_id: str) -> SliceSpec:
        for s in self.slices:
            if s.slice_id == slice_id:
                return s
        raise ValueError(f"unknown slice {slice_id!r}")


@dataclass
class SlotMetrics:
    slot: int
    per_slice_sum_rate_bps: Dict[str, float]
    per_slice_mean_rate_bps: Dict[str, float]
    total_power_w: float
    converged: bool
    duality_gap: float
    readjustment: Optional[ReadjustmentReport] = None
    users: List[dict] = field(default_factory=list)

    @property
    def total_power_dbm(self) -> float:
        return float(w_to_dbm(self.total_power_w))

    @property
    def readjusted(self) -> bool:
        return self.readjustment is not None and self.readjustment.iterations > 0


def population_schedule(schedule: Sequence[SchedulePhase], num_slots: int, slice_ids=None):
    """User ids active in every slot.

    Ids are ``"<slice>-<n>"`` numbered in order of arrival and never reused.
    When a slice shrinks its most recent arrivals leave first.
    """
    phases = sorted(schedule, key=lambda p: p.start)
    if slice_ids is None:
        slice_ids = list(dict.fromkeys(s for p in phases for s in p.users))
    active = {sid: [] for sid in slice_ids}
    issued = {sid: 0 for sid in slice_ids}
    out = []
    for t in range(num_slots):
        phase = next((p for p in phases if p.start <= t < p.stop), None)
        for sid in slice_ids:
            want = 0 if phase is None else int(phase.users.get(sid, 0))
            users = active[sid]
            if want < len(users):
                del users[want:]
            while len(users) < want:
                users.append(f"{sid}-{issued[sid]}")
                issued[sid] += 1
        out.append({sid: list(users) for sid, users in active.items()})
    return out


def run(
    config: ScenarioConfig, on_slot: Optional[Callable[[SlotMetrics], None]] = None
) -> List[SlotMetrics]:
    """Simulate every slot of the scenario.

    Raises
    ------
    SimulationAborted
        When URLLC/TS demand alone cannot be met, or a user cannot be served.
    """
    link = config.link
    B = link.subchannel_bw_hz
    slice_ids = [s.slice_id for s in config.slices]
    populations = population_schedule(config.schedule, config.num_slots, slice_ids)
    budget = PowerBudget.from_dbm(config.power_budget_dbm, config.admission_tolerance)

    placement = np.random.default_rng([config.rng_seed, 0])
    distance: Dict[str, float] = {}
    controllers = {
        s.slice_id: ControllerState(
            s.slice_id, s.capacity_bps, {}, gain_factor=config.controller_gain_factor
        )
        for s in config.slices
        if s.kind is SliceKind.CL
    }
    fixed_target = {
        s.slice_id: config.targets_override_bps.get(s.slice_id, None)
        for s in config.slices
        if s.kind is not SliceKind.CL
    }
    for sid, value in fixed_target.items():
        if value is None:
            fixed_target[sid] = slice_target_rate(config.slice(sid))

    prev_rate: Dict[str, float] = {}
    metrics = []
    for t in range(config.num_slots):
        pop = populations[t]
        for sid in slice_ids:
            for u in pop[sid]:
                if u not in distance:
                    distance[u] = float(placement.uniform(1.0, link.cell_radius_m))

        for sid, state in controllers.items():
            users = pop[sid]
            if set(users) != set(state.targets):
                state = on_population_change(state, users, config.reset_cl_targets_on_change)
            elif users:
                state = update(state, {u: prev_rate.get(u, state.targets[u]) for u in users})
            controllers[sid] = state

        targets, betas, dists, cl_users = [], [], [], []
        for spec in config.slices:
            sid = spec.slice_id
            for u in pop[sid]:
                if spec.kind is SliceKind.CL:
                    r = controllers[sid].targets[u]
                    cl_users.append(u)
                else:
                    r = fixed_target[sid]
                targets.append(UserQoS(u, sid, float(r)))
                betas.append(spec.beta)
                dists.append(distance[u])

        channel = sample_channel(link, dists, [config.rng_seed, 1, t])
        problem = AllocationProblem(channel, targets, np.array(betas))
        try:
            result = solve(problem, config.solver)
        except InfeasibleError as exc:
            raise SimulationAborted(t, str(exc), exc.users) from exc

        report = None
        if config.admission_enabled and result.total_power_w > budget.available_w * (
            1.0 + budget.tolerance
        ):
            try:
                result, report = readjust(
                    problem,
                    cl_users,
                    budget,
                    config.solver,
                    rate_unit_bps=config.readjust_rate_unit_bps,
                    max_iter=config.readjust_max_iter,
                    initial=result,
                )
            except HardInfeasibleError as exc:
                raise SimulationAborted(t, str(exc)) from exc
            except InfeasibleError as exc:
                raise SimulationAborted(t, str(exc), exc.users) from exc
            for sid, state in controllers.items():
                if state.targets:
                    new = {u: report.final_targets[u] for u in state.targets}
                    controllers[sid] = ControllerState(
                        state.slice_id,
                        state.capacity_bps,
                        new,
                        gain=state.gain,
                        gain_factor=state.gain_factor,
                    )

        final_targets = (
            problem.target_bps
            if report is None
            else np.array(
                [report.final_targets.get(q.user_id, q.target_rate_bps) for q in targets]
            )
        )
        sums, means, users = {}, {}, []
        for sid in slice_ids:
            sums[sid] = 0.0
        for i, q in enumerate(targets):
            r = float(result.rates[i])
            sums[q.slice_id] += r
            users.append(
                {
                    "user_id": q.user_id,
                    "slice_id": q.slice_id,
                    "distance_m": dists[i],
                    "target_bps": float(final_targets[i]),
                    "rate_bps": r,
                    "lambda": float(result.lam[i]),
                    "power_w": float(result.power[i].sum()),
                    "subchannels": int(result.assignment[i].sum()),
                }
            )
        for sid in slice_ids:
            n = len(pop[sid])
            means[sid] = sums[sid] / n if n else math.nan

        m = SlotMetrics(
            slot=t,
            per_slice_sum_rate_bps=sums,
            per_slice_mean_rate_bps=means,
            total_power_w=result.total_power_w,
            converged=result.converged,
            duality_gap=result.duality_gap,
            readjustment=report,
            users=users,
        )
        metrics.append(m)
        if on_slot is not None:
            on_slot(m)
        prev_rate = {q.user_id: float(result.rates[i]) for i, q in enumerate(targets)}
    return metrics
