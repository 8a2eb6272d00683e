"""End-to-end acceptance checks, one test per criterion.

Each test appends a ``PASS``/``FAIL`` line to ``REPORT``; the lines are
printed as they happen (visible with ``-s``) and again in the terminal
summary. Run on its own with::

    python3 -m pytest tests/test_acceptance.py -v

The table3 scenario runs take a few minutes in total.
"""

import dataclasses
import math
import time

import numpy as np
import pytest

from slicealloc.channel import dbm_to_w, path_loss_inf_dl
from slicealloc.dual import LN2, assign_subchannels, dual_value, solve, subgradient
from slicealloc.io import bundled_scenario, load_scenario, write_metrics
from slicealloc.oracles import brute_force_allocation, grid_minimiser, random_problem
from slicealloc.qos import delay_outage_probability, simulate_mm1_delay_tail, urllc_target_rate
from slicealloc.simulator import run

REPORT = []


def record(number, passed, detail):
    line = f"{'PASS' if passed else 'FAIL'} criterion {number:2d}: {detail}"
    REPORT.append(line)
    print(line, flush=True)
    assert passed, line


def segments(config):
    return [(p.start, min(p.stop, config.num_slots)) for p in config.schedule]


@pytest.fixture(scope="module")
def table2():
    config = load_scenario(bundled_scenario("table2"))
    t = time.perf_counter()
    metrics = run(config)
    return config, metrics, time.perf_counter() - t


@pytest.fixture(scope="module")
def table3_open():
    config = dataclasses.replace(
        load_scenario(bundled_scenario("table3")), admission_enabled=False
    )
    t = time.perf_counter()
    metrics = run(config)
    return config, metrics, time.perf_counter() - t


@pytest.fixture(scope="module")
def table3_admission():
    config = load_scenario(bundled_scenario("table3"))
    t = time.perf_counter()
    metrics = run(config)
    return config, metrics, time.perf_counter() - t


def test_criterion_01_urllc_target():
    r = urllc_target_rate(2e6, 0.999, 0.010, 0.001)
    rel = abs(r - 2.001e6) / 2.001e6
    record(1, rel <= 1e-9, f"URLLC target {r:.6f} bps, relative error {rel:.2e} (limit 1e-9)")


def test_criterion_02_path_loss():
    pl = path_loss_inf_dl(100.0, 3.7)
    record(2, abs(pl - 101.36) <= 0.01, f"path loss at 100 m, 3.7 GHz = {pl:.4f} dB (101.36 +- 0.01)")


def test_criterion_03_allocator_vs_exhaustive_search():
    rng = np.random.default_rng(2025)
    t = time.perf_counter()
    excess, gaps, unconverged, skipped = [], [], 0, 0
    while len(excess) < 100:
        n = int(rng.integers(1, 4))
        k = int(rng.integers(2, 5))
        if n > k:
            # no exclusive assignment exists; nothing to compare
            skipped += 1
            continue
        problem = random_problem(rng, n, k)
        ref = brute_force_allocation(problem)
        res = solve(problem)
        unconverged += int(not res.converged)
        excess.append(res.total_power_w / ref.total_power_w - 1.0)
        gaps.append(res.duality_gap / res.total_power_w)
    elapsed = time.perf_counter() - t
    excess = np.array(excess)
    gaps = np.array(gaps)
    for row in range(0, 100, 10):
        REPORT.append(
            "      relative duality gap, instances %3d-%3d: " % (row, row + 9)
            + " ".join(f"{round(g, 3) + 0.0:.3f}" for g in gaps[row : row + 10])
        )
    ok = excess.max() <= 0.02 and unconverged == 0 and elapsed < 60
    record(
        3,
        ok,
        f"100 instances (N<=3, K<=4; {skipped} draws with N>K skipped): worst excess over "
        f"exhaustive search {excess.max():.2e} (limit 0.02), {unconverged} unconverged, "
        f"relative duality gap median {np.median(gaps):.3f} max {gaps.max():.3f}, {elapsed:.1f} s",
    )


def test_criterion_04_flat_region_minimiser():
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(1000):
        values = rng.uniform(-10.0, 10.0, size=int(rng.integers(1, 12)))
        arg, _, step = grid_minimiser(values, resolution=1e-3)
        worst = max(worst, abs(arg - values.max()) / step)
    record(4, worst < 1.0, f"1000 sequences, worst |argmin - max| = {worst:.2e} grid steps (< 1)")


def test_criterion_05_subgradient():
    rng = np.random.default_rng(5)
    points = draws = 0
    worst = 0.0
    while points < 100:
        draws += 1
        n = int(rng.integers(1, 5))
        k = int(rng.integers(1, 9))
        problem = random_problem(rng, n, k)
        B = problem.bandwidth
        w = np.exp(rng.uniform(-1.5, 2.5, size=n)) / np.median(problem.gain_ratio())
        lam = w * LN2 / B
        winner, owned = assign_subchannels(lam, problem)
        g = subgradient(lam, problem, owned)
        fd = np.empty(n)
        stable = True
        for i in range(n):
            h = 1e-6 * lam[i]
            up, down = lam.copy(), lam.copy()
            up[i] += h
            down[i] -= h
            if not (
                np.array_equal(assign_subchannels(up, problem)[0], winner)
                and np.array_equal(assign_subchannels(down, problem)[0], winner)
            ):
                stable = False
                break
            fd[i] = (dual_value(up, problem) - dual_value(down, problem)) / (2 * h)
        if not stable:
            continue
        points += 1
        worst = max(worst, float(np.max(np.abs(fd - g) / np.abs(g))))
    record(
        5,
        worst <= 1e-3,
        f"100 stable multiplier points ({draws} drawn), worst relative deviation {worst:.2e} "
        "(limit 1e-3)",
    )


def test_criterion_06_mm1_tail():
    a, r = 100.0, 1000.0
    seeds = np.random.SeedSequence(6).generate_state(8)
    worst = 0.0
    parts = []
    for margin, seed in zip((0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0), seeds):
        d = margin / (r - a)
        sim = simulate_mm1_delay_tail(a, r, d, 1_000_000, int(seed))
        dev = abs(sim / delay_outage_probability(r, a, d) - 1.0)
        worst = max(worst, dev)
        parts.append(f"{margin:g}:{dev:.3f}")
    record(
        6,
        worst <= 0.05,
        f"1e6 packets per margin, relative deviation by margin {' '.join(parts)}; "
        f"worst {worst:.3f} (limit 0.05)",
    )


@pytest.mark.slow
def test_criterion_07_table2(table2):
    config, metrics, elapsed = table2
    changes = [s for s, _ in segments(config)][1:]
    excluded = {c + i for c in changes for i in range(5)}
    window = [m for m in metrics if m.slot >= 30 and m.slot not in excluded]
    cl = np.array([m.per_slice_sum_rate_bps["cl"] for m in window]) / 27e6 - 1
    urllc = np.array([m.per_slice_mean_rate_bps["urllc"] for m in window]) / 2.001e6 - 1
    ts = np.array([m.per_slice_sum_rate_bps["ts"] for m in window]) / 1.64e6 - 1
    iso = 0.0
    for c in changes:
        before, after = metrics[c - 1], metrics[c]
        for sid, key in (("urllc", "per_slice_mean_rate_bps"), ("ts", "per_slice_mean_rate_bps")):
            x, y = getattr(before, key)[sid], getattr(after, key)[sid]
            iso = max(iso, abs(y / x - 1))
    ok = (
        np.abs(cl).max() <= 0.01
        and np.abs(urllc).max() <= 1e-3
        and np.abs(ts).max() <= 1e-3
        and iso < 1e-3
        and elapsed < 120
    )
    record(
        7,
        ok,
        f"{len(window)} slots from 30 (5 after each change at {changes} excluded): max deviation "
        f"CL {np.abs(cl).max():.2e} (0.01), URLLC mean {np.abs(urllc).max():.2e} (1e-3), "
        f"TS {np.abs(ts).max():.2e} (1e-3), across changes {iso:.2e} (< 1e-3); {elapsed:.1f} s",
    )


@pytest.mark.slow
def test_criterion_08_table3_without_admission(table3_open):
    config, metrics, elapsed = table3_open
    parts = []
    ok = elapsed < 300
    for start, stop in segments(config):
        p = np.array([metrics[t].total_power_dbm for t in range(start, stop)])
        ok &= bool(np.all(p > 23.0))
        parts.append(f"[{start},{stop}) min {p.min():.2f} dBm")
    record(8, ok, "power in every slot of every segment > 23 dBm: " + ", ".join(parts) + f"; {elapsed:.1f} s")


@pytest.mark.slow
def test_criterion_09_table3_with_admission(table3_admission):
    config, metrics, elapsed = table3_admission
    limit = dbm_to_w(config.power_budget_dbm) * (1 + config.admission_tolerance)
    over = [m.slot for m in metrics if m.total_power_w > limit]
    peak = max(m.total_power_dbm for m in metrics)
    urllc = max(abs(m.per_slice_sum_rate_bps["urllc"] / 80e6 - 1) for m in metrics)
    ts = max(abs(m.per_slice_sum_rate_bps["ts"] / 3.28e6 - 1) for m in metrics)
    capped = [m.slot for m in metrics if m.readjustment is not None and not m.readjustment.converged]
    reduction = []
    below = True
    for start, stop in segments(config):
        cl = np.array([metrics[t].per_slice_sum_rate_bps["cl"] for t in range(start, stop)])
        below &= bool(np.all(cl < 270e6))
        reduction.append(270.0 - cl.mean() / 1e6)
    ordered = reduction[2] > reduction[0] > reduction[1]
    ok = not over and urllc <= 1e-6 and ts <= 1e-6 and below and ordered and elapsed < 300
    record(
        9,
        ok,
        f"slots over budget*(1+eps) {over or 'none'} (peak {peak:.3f} dBm, limit "
        f"{10 * math.log10(limit * 1e3):.3f} dBm); readjustment capped at slots {capped or 'none'}; "
        f"URLLC dev {urllc:.1e}, TS dev {ts:.1e}; CL below 270 Mbps in every slot: {below}; "
        f"mean CL reduction per segment {', '.join(f'{x:.1f}' for x in reduction)} Mbps, "
        f"order seg3 > seg1 > seg2: {ordered}; {elapsed:.1f} s",
    )


@pytest.mark.slow
def test_criterion_10_determinism(table2, tmp_path):
    config, metrics, _ = table2
    t = time.perf_counter()
    write_metrics(metrics, tmp_path / "a", config)
    write_metrics(run(config), tmp_path / "b", config)
    a = (tmp_path / "a" / "slots.csv").read_bytes()
    b = (tmp_path / "b" / "slots.csv").read_bytes()
    elapsed = time.perf_counter() - t
    record(10, a == b and elapsed < 240, f"two table2 runs, slots.csv identical: {a == b} ({len(a)} bytes); {elapsed:.1f} s")
