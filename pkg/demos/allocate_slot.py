"""Minimum-power allocation for one slot, checked against exhaustive search.

A three-user, four-subchannel instance is small enough to try every
subchannel ownership pattern, so the solver's answer can be compared with
the true optimum.
"""

import numpy as np

from slicealloc.dual import solve
from slicealloc.oracles import brute_force_allocation, random_problem

rng = np.random.default_rng(3)
problem = random_problem(rng, 3, 4)
result = solve(problem)
best = brute_force_allocation(problem)

print("targets (kbit/s):", np.round(problem.target_bps / 1e3, 1))
print("assignment (users x subchannels):")
print(result.assignment)
print("power per subchannel (mW):")
print(np.round(result.power * 1e3, 4))
print(f"total power     {result.total_power_w * 1e3:.5f} mW")
print(f"exhaustive best {best.total_power_w * 1e3:.5f} mW")
print(f"dual bound      {result.dual_value * 1e3:.5f} mW")
print(f"rates met: {np.all(result.rates >= problem.target_bps * (1 - 1e-9))}")
