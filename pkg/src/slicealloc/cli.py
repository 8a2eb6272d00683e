"""Command-line front end.

    slicealloc simulate --config FILE --out DIR [--seed N] [--no-admission]
    slicealloc solve-slot --config FILE --slot N
    slicealloc validate-oracle --instances N --seed N

``--config`` also accepts the names of the bundled scenarios (``table2``,
``table3``).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from pathlib import Path

from .io import ScenarioParseError, bundled_scenario, load_scenario, write_metrics
from .simulator import SimulationAborted, run
from .validation import validate_oracle

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_INFEASIBLE = 4
EXIT_ORACLE = 5
EXIT_IO = 6


def _config_path(arg: str) -> Path:
    p = Path(arg)
    if p.exists() or p.suffix:
        return p
    return bundled_scenario(arg)


def _load(args):
    config = load_scenario(_config_path(args.config))
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["rng_seed"] = args.seed
    if getattr(args, "no_admission", False):
        changes["admission_enabled"] = False
    return dataclasses.replace(config, **changes) if changes else config


def _mbps(x):
    return None if math.isnan(x) else round(x / 1e6, 6)


def _simulate(args) -> int:
    config = _load(args)

    def progress(m):
        if not args.quiet:
            rates = " ".join(f"{k}={v / 1e6:.3f}" for k, v in m.per_slice_sum_rate_bps.items())
            flag = " readjusted" if m.readjusted else ""
            print(f"slot {m.slot:4d}  {m.total_power_dbm:7.2f} dBm  {rates} Mbps{flag}")

    metrics = run(config, progress)
    paths = write_metrics(metrics, args.out, config)
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK


def _solve_slot(args) -> int:
    config = _load(args)
    if not 0 <= args.slot < config.num_slots:
        print(f"slot must lie in [0, {config.num_slots})", file=sys.stderr)
        return EXIT_USAGE
    # the controller and admission state carry over, so replay up to the slot
    config = dataclasses.replace(config, num_slots=args.slot + 1)
    m = run(config)[-1]
    out = {
        "slot": m.slot,
        "total_power_w": m.total_power_w,
        "total_power_dbm": m.total_power_dbm if math.isfinite(m.total_power_dbm) else None,
        "converged": m.converged,
        "readjusted": m.readjusted,
        "per_slice_sum_rate_mbps": {k: _mbps(v) for k, v in m.per_slice_sum_rate_bps.items()},
        "users": [
            {
                "user_id": u["user_id"],
                "slice_id": u["slice_id"],
                "target_mbps": round(u["target_bps"] / 1e6, 6),
                "rate_mbps": round(u["rate_bps"] / 1e6, 6),
                "power_w": u["power_w"],
                "subchannels": u["subchannels"],
            }
            for u in m.users
        ],
    }
    print(json.dumps(out, indent=1))
    return EXIT_OK


def _validate(args) -> int:
    report = validate_oracle(args.seed, args.instances)
    for line in report.lines():
        print(line)
    return EXIT_OK if report.passed else EXIT_ORACLE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slicealloc", description="Slice-aware downlink power allocation."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario and write slots.csv and run.json")
    p.add_argument("--config", required=True, help="scenario JSON file or bundled name")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--no-admission", action="store_true", help="disable rate readjustment")
    p.add_argument("--quiet", action="store_true", help="no per-slot progress")
    p.set_defaults(func=_simulate)

    p = sub.add_parser("solve-slot", help="print the allocation of one slot as JSON")
    p.add_argument("--config", required=True)
    p.add_argument("--slot", type=int, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--no-admission", action="store_true")
    p.set_defaults(func=_solve_slot)

    p = sub.add_parser("validate-oracle", help="check the solver against reference oracles")
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate-oracle" and args.instances < 1:
        print("--instances must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except ScenarioParseError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except SimulationAborted as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
