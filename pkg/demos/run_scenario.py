"""Run the bundled three-slice factory scenario and write its metrics.

Usage: python3 demos/run_scenario.py [output-dir]
"""

import sys

from slicealloc.io import bundled_scenario, load_scenario, write_metrics
from slicealloc.simulator import run

config = load_scenario(bundled_scenario("table2"))
metrics = run(config)
for m in metrics[::11]:
    rates = ", ".join(f"{k} {v / 1e6:7.3f}" for k, v in m.per_slice_sum_rate_bps.items())
    print(f"slot {m.slot:3d}: {rates} Mbps, {m.total_power_dbm:6.2f} dBm")

out = sys.argv[1] if len(sys.argv) > 1 else "demo-output"
for path in write_metrics(metrics, out, config):
    print("wrote", path)
