"""Steering a CL slice's sum rate to its capacity.

With an ideal allocator every user gets exactly its target, so the loop
closes on the targets themselves. The error shrinks by the factor
``1 - k N`` each slot, halving with the default step.
"""

from slicealloc.controller import ControllerState, on_population_change, update

state = ControllerState("cl", 27e6)
state = on_population_change(state, [f"u{i}" for i in range(5)])
state = ControllerState("cl", 27e6, {u: 8e6 for u in state.targets})
for t in range(8):
    print(f"slot {t}: sum of targets {state.target_sum / 1e6:8.4f} Mbps")
    state = update(state, dict(state.targets))

print("\ntwo users leave, survivors keep their targets")
state = on_population_change(state, ["u0", "u1", "u2"])
for t in range(6):
    print(f"slot {t}: sum of targets {state.target_sum / 1e6:8.4f} Mbps")
    state = update(state, dict(state.targets))
