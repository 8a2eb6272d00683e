"""Cutting CL targets until a congested slot fits the power budget.

Four CL users ask for 40 Mbps each next to two users whose targets are
fixed. Only the CL targets shrink, the users with the largest multipliers
by the most.
"""

import numpy as np

from slicealloc.admission import PowerBudget, readjust
from slicealloc.channel import LinkParams, sample_channel
from slicealloc.dual import AllocationProblem, solve
from slicealloc.qos import UserQoS

rng = np.random.default_rng(0)
channel = sample_channel(LinkParams(num_subchannels=64), rng.uniform(10, 100, 6), 1)
users = [UserQoS(f"cl{i}", "cl", 40e6) for i in range(4)]
users += [UserQoS("urllc0", "urllc", 10e6), UserQoS("ts0", "ts", 1.64e6)]
problem = AllocationProblem(channel, users)

base = solve(problem)
budget = PowerBudget(base.total_power_w / 1.5)
result, report = readjust(problem, [u.user_id for u in users[:4]], budget, initial=base)

print(f"power before {base.total_power_w:.4f} W, budget {budget.available_w:.4f} W")
print(f"power after  {result.total_power_w:.4f} W in {report.iterations} iterations")
for i, u in enumerate(users):
    before = problem.target_bps[i] / 1e6
    after = report.final_targets.get(u.user_id, problem.target_bps[i]) / 1e6
    print(f"{u.user_id:7s} lambda {base.lam[i]:.3e}  target {before:6.2f} -> {after:6.2f} Mbps")
