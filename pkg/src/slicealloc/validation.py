"""Self-check of the allocator against independent reference computations.

Four suites, each on freshly drawn random instances:

* allocation: solver power vs exhaustive search on tiny problems;
* flat-region minimiser: ``F(mu) = sum (mu_i - mu)^+ + mu`` by grid search;
* queueing: simulated M/M/1 sojourn tail vs the exponential formula;
* subgradient: analytic dual subgradient vs central finite differences, and
  the compiled gradient vs the numpy one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List

import numpy as np

from . import _kernels as K
from .dual import (
    LN2,
    InfeasibleError,
    assign_subchannels,
    dual_value,
    solve,
    subgradient,
)
from .oracles import brute_force_allocation, grid_minimiser, random_problem
from .qos import delay_outage_probability, simulate_mm1_delay_tail

__all__ = ["SuiteResult", "OracleReport", "validate_oracle"]


@dataclass
class SuiteResult:
    name: str
    checked: int
    failures: int
    worst: float
    limit: float
    skipped: int = 0
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.failures == 0 and self.checked > 0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f", {self.skipped} skipped" if self.skipped else ""
        note = f" ({self.note})" if self.note else ""
        return (
            f"{status} {self.name}: {self.checked} checked{extra}, "
            f"{self.failures} failed, worst {self.worst:.3g} vs limit {self.limit:.3g}{note}"
        )


@dataclass
class OracleReport:
    seed: int
    suites: List[SuiteResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.suites)

    def lines(self) -> List[str]:
        out = [s.line() for s in self.suites]
        out.append(f"{'PASS' if self.passed else 'FAIL'} overall (seed {self.seed})")
        return out


def check_brute_force(rng, instances, max_users=3, max_subchannels=4, limit=0.02):
    """Relative power excess of :func:`solve` over exhaustive search."""
    worst = 0.0
    failures = 0
    for _ in range(instances):
        n = int(rng.integers(1, max_users + 1))
        k = int(rng.integers(1, max_subchannels + 1))
        problem = random_problem(rng, n, k)
        ref = brute_force_allocation(problem)
        try:
            got = solve(problem).total_power_w
        except InfeasibleError:
            got = math.inf
        if not math.isfinite(ref.total_power_w) or not math.isfinite(got):
            # both must agree that no allocation exists
            failures += int(math.isfinite(ref.total_power_w) != math.isfinite(got))
            continue
        excess = (got - ref.total_power_w) / ref.total_power_w
        worst = max(worst, excess)
        failures += int(excess > limit)
    return SuiteResult("allocation vs exhaustive search", instances, failures, worst, limit)


def check_flat_minimiser(rng, sequences=1000, limit_steps=1.0):
    """Largest minimiser of ``F`` sits at the largest value, and ``min F`` equals it."""
    worst = 0.0
    failures = 0
    for _ in range(sequences):
        values = rng.uniform(-10.0, 10.0, size=int(rng.integers(1, 12)))
        arg, fmin, step = grid_minimiser(values)
        top = values.max()
        dev = max(abs(arg - top), abs(fmin - top)) / step
        worst = max(worst, dev)
        failures += int(dev > limit_steps)
    return SuiteResult(
        "flat-region minimiser", sequences, failures, worst, limit_steps, note="grid steps"
    )


# (arrival, service, deadline): loads 0.3 to 0.7, tail probabilities 0.05 to 0.3.
MM1_CASES = ((300.0, 1000.0, 0.004), (500.0, 1000.0, 0.005), (700.0, 1000.0, 0.006))


def check_mm1(rng, num_packets=1_000_000, limit=0.05):
    worst = 0.0
    failures = 0
    for a, r, d in MM1_CASES:
        sim = simulate_mm1_delay_tail(a, r, d, num_packets, int(rng.integers(2**31)))
        ref = delay_outage_probability(r, a, d)
        dev = abs(sim - ref) / ref
        worst = max(worst, dev)
        failures += int(dev > limit)
    return SuiteResult("M/M/1 sojourn tail", len(MM1_CASES), failures, worst, limit)


def check_subgradient(rng, instances, rel_step=1e-6, limit=1e-5):
    """Central differences of the dual where every winner set is locally fixed."""
    worst = 0.0
    failures = 0
    checked = skipped = 0
    for _ in range(instances):
        n = int(rng.integers(1, 6))
        k = int(rng.integers(1, 9))
        problem = random_problem(rng, n, k)
        B = problem.bandwidth
        g = problem.gain_ratio()
        # water levels around the typical inverse gain, so channels are contested
        w = np.exp(rng.uniform(-1.5, 2.5, size=n)) / np.median(g)
        lam = w * LN2 / B
        winner, owned = assign_subchannels(lam, problem)
        analytic = subgradient(lam, problem, owned)
        scale = np.maximum(problem.target_bps, 1.0)

        # compiled route, in water-level units
        lnG = np.log(g)
        _, grad_w, kwinner = K.dual_and_grad(
            w, problem.target_bps * LN2 / B, lnG, 1.0 / g, np.ones(n, dtype=bool)
        )
        if np.array_equal(kwinner, winner):
            dev = np.max(np.abs(grad_w * B / LN2 - analytic) / scale)
            worst = max(worst, dev)
            failures += int(dev > limit)
            checked += 1
        else:
            skipped += 1

        for i in range(n):
            h = rel_step * lam[i]
            up, down = lam.copy(), lam.copy()
            up[i] += h
            down[i] -= h
            if not (
                np.array_equal(assign_subchannels(up, problem)[0], winner)
                and np.array_equal(assign_subchannels(down, problem)[0], winner)
            ):
                skipped += 1
                continue
            fd = (dual_value(up, problem) - dual_value(down, problem)) / (2 * h)
            dev = abs(fd - analytic[i]) / scale[i]
            worst = max(worst, dev)
            failures += int(dev > limit)
            checked += 1
    return SuiteResult(
        "dual subgradient vs finite differences", checked, failures, worst, limit, skipped
    )


def validate_oracle(seed: int = 0, instances: int = 100, sequences: int = 1000) -> OracleReport:
    """Run every oracle suite; ``report.passed`` is the overall verdict."""
    if instances < 1:
        raise ValueError("instances must be >= 1")
    rng = np.random.default_rng(seed)
    report = OracleReport(seed)
    report.suites.append(check_brute_force(rng, instances))
    report.suites.append(check_flat_minimiser(rng, sequences))
    report.suites.append(check_mm1(rng))
    report.suites.append(check_subgradient(rng, instances))
    return report
