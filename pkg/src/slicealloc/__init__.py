"""Slice-aware OFDMA downlink power allocation.

Per-slot power minimisation under per-user target rates, a capacity
controller for best-effort (CL) slices, target readjustment when the base
station runs out of power, and a slot-by-slot scenario simulator.
"""

from .admission import HardInfeasibleError, PowerBudget, ReadjustmentReport, readjust
from .channel import ChannelState, LinkParams, dbm_to_w, sample_channel, w_to_dbm
from .controller import ControllerState, on_population_change, update
from .dual import (
    AllocationProblem,
    AllocationResult,
    InfeasibleError,
    SolveOptions,
    solve,
)
from .qos import (
    InfeasibleRateError,
    SliceKind,
    SliceSpec,
    UserQoS,
    slice_target_rate,
    ts_target_rate,
    urllc_target_rate,
)
from .simulator import (
    ScenarioConfig,
    SchedulePhase,
    SimulationAborted,
    SlotMetrics,
    population_schedule,
    run,
)

__all__ = [
    "AllocationProblem",
    "AllocationResult",
    "ChannelState",
    "ControllerState",
    "HardInfeasibleError",
    "InfeasibleError",
    "InfeasibleRateError",
    "LinkParams",
    "PowerBudget",
    "ReadjustmentReport",
    "ScenarioConfig",
    "SchedulePhase",
    "SimulationAborted",
    "SliceKind",
    "SliceSpec",
    "SlotMetrics",
    "SolveOptions",
    "UserQoS",
    "dbm_to_w",
    "on_population_change",
    "population_schedule",
    "readjust",
    "run",
    "sample_channel",
    "slice_target_rate",
    "solve",
    "ts_target_rate",
    "update",
    "urllc_target_rate",
    "w_to_dbm",
]
