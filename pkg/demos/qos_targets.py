"""Turn slice QoS contracts into per-user target rates.

A URLLC user with 2 Mbps of arrivals, a 10 ms deadline met 99.9% of the
time and 1 ms of jitter needs a little more than its arrival rate; a TS
user sending 16400 bits every 10 ms needs exactly 1.64 Mbps. The last part
checks the delay-tail formula behind the URLLC rule against a queue
simulation.
"""

from slicealloc.qos import (
    delay_outage_probability,
    simulate_mm1_delay_tail,
    ts_target_rate,
    urllc_target_rate,
)

r = urllc_target_rate(2e6, 0.999, 0.010, 0.001)
print(f"URLLC target: {r / 1e6:.6f} Mbps")
print(f"TS target:    {ts_target_rate(16400, 0.010) / 1e6:.6f} Mbps")

# a strict deadline dominates the jitter term
tight = urllc_target_rate(2e6, 0.999, 0.001, 0.005)
print(f"URLLC target with a 1 ms deadline: {tight / 1e6:.6f} Mbps")

print("\nsojourn tail, M/M/1 with arrivals 100/s and service 1000/s")
print(" margin   formula     simulated")
for margin in (0.5, 2.0, 5.0):
    d = margin / 900.0
    exact = delay_outage_probability(1000.0, 100.0, d)
    sim = simulate_mm1_delay_tail(100.0, 1000.0, d, 1_000_000, 1)
    print(f"{margin:6.1f}   {exact:.5f}    {sim:.5f}")
