"""Scenario files and metric output.

Scenario files are JSON with the unit in every field name (``capacity_mbps``,
``delay_max_ms``, ``power_budget_dbm``...). The schema lives in
:data:`SCENARIO_SCHEMA`; :func:`load_scenario` validates against it and
reports every violation with its JSON path.
"""

from __future__ import annotations

import csv
import json
import math
from importlib import resources
from pathlib import Path
from typing import Iterable, List, Mapping, Optional, Sequence

import jsonschema

from .channel import LinkParams
from .dual import SolveOptions
from .qos import SliceKind, SliceSpec
from .simulator import ScenarioConfig, SchedulePhase, SlotMetrics

__all__ = [
    "SCENARIO_SCHEMA",
    "CSV_COLUMNS",
    "ScenarioParseError",
    "scenario_from_dict",
    "scenario_to_dict",
    "load_scenario",
    "bundled_scenario",
    "write_metrics",
    "load_run",
    "format_sig",
    "read_slots_csv",
]

CSV_COLUMNS = (
    "slot",
    "slice_id",
    "sum_rate_mbps",
    "mean_rate_mbps",
    "total_power_dbm",
    "readjusted_flag",
)

_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_PROB = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}
_COUNT = {"type": "integer", "minimum": 0}

_LINK = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "carrier_freq_ghz": _POS,
        "tx_antenna_gain_dbi": {"type": "number"},
        "rx_antenna_gain_dbi": {"type": "number"},
        "noise_psd_dbm_hz": {"type": "number"},
        "subchannel_bw_khz": _POS,
        "num_subchannels": {"type": "integer", "minimum": 1},
        "cell_radius_m": {"type": "number", "minimum": 1, "maximum": 100},
        "shadow_sigma_db": _NONNEG,
        "interference_margin_db": {"type": "number"},
    },
}

_KIND_FIELDS = {
    "CL": ["capacity_mbps"],
    "URLLC": ["arrival_rate_mbps", "delay_max_ms", "reliability", "jitter_ms"],
    "TS": ["packet_bits", "sched_period_ms"],
}
_ALL_KIND_FIELDS = sorted({f for fs in _KIND_FIELDS.values() for f in fs})


def _kind_rule(kind):
    own = _KIND_FIELDS[kind]
    return {
        "if": {"properties": {"kind": {"const": kind}}, "required": ["kind"]},
        "then": {
            "required": own,
            "not": {"anyOf": [{"required": [f]} for f in _ALL_KIND_FIELDS if f not in own]},
        },
    }


_SLICE = {
    "type": "object",
    "additionalProperties": False,
    "required": ["id", "kind"],
    "properties": {
        "id": {"type": "string", "minLength": 1},
        "kind": {"enum": ["CL", "URLLC", "TS"]},
        "capacity_mbps": _POS,
        "arrival_rate_mbps": _NONNEG,
        "delay_max_ms": _POS,
        "reliability": _PROB,
        "jitter_ms": _POS,
        "packet_bits": _POS,
        "sched_period_ms": _POS,
        "ber": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.2},
    },
    "allOf": [_kind_rule(k) for k in _KIND_FIELDS],
}

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "slice allocation scenario",
    "type": "object",
    "additionalProperties": False,
    "required": ["num_slots", "slices", "schedule"],
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "num_slots": _COUNT,
        "rng_seed": _COUNT,
        "power_budget_dbm": {"type": "number"},
        "slot_duration_ms": _POS,
        "link": _LINK,
        "slices": {"type": "array", "minItems": 1, "items": _SLICE},
        "schedule": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["start_slot", "stop_slot", "users"],
                "properties": {
                    "start_slot": _COUNT,
                    "stop_slot": {"type": "integer", "minimum": 1},
                    "users": {"type": "object", "additionalProperties": _COUNT},
                },
            },
        },
        "targets_override_mbps": {"type": "object", "additionalProperties": _NONNEG},
        "admission": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "enabled": {"type": "boolean"},
                "tolerance": _POS,
                "rate_unit_mbps": _POS,
                "max_iterations": _COUNT,
            },
        },
        "controller": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "gain_factor": _PROB,
                "reset_on_population_change": {"type": "boolean"},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "rel_tol": _POS,
                "gap_tol": _NONNEG,
                "max_iterations": {"type": ["integer", "null"], "minimum": 1},
                "min_iterations": _COUNT,
                "polish": {"type": "boolean"},
                "check_every": {"type": "integer", "minimum": 1},
            },
        },
    },
}

_VALIDATOR = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)


class ScenarioParseError(ValueError):
    """Scenario file that does not match the schema.

    ``problems`` holds ``(path, message)`` pairs, the path written as
    ``slices/0/capacity_mbps``.
    """

    def __init__(self, problems, source=None):
        self.problems = list(problems)
        self.source = source
        where = f"{source}: " if source else ""
        lines = [f"{p or '<root>'}: {m}" for p, m in self.problems]
        super().__init__(where + "; ".join(lines))


def _path(parts) -> str:
    return "/".join(str(p) for p in parts)


def _message(err) -> str:
    if err.validator == "not" and "anyOf" in err.validator_value:
        bad = [r["required"][0] for r in err.validator_value["anyOf"]]
        present = [f for f in bad if f in err.instance]
        return f"field(s) {present} do not belong to a {err.instance.get('kind')} slice"
    return err.message


def _errors(data):
    out = []
    for err in _VALIDATOR.iter_errors(data):
        # descend into the branch of if/then rules for sharper paths
        leaves = [err] if not err.context else err.context
        for leaf in leaves:
            out.append((_path(leaf.absolute_path), _message(leaf)))
    return sorted(set(out))


def scenario_from_dict(data: Mapping, source=None) -> ScenarioConfig:
    """Validate a parsed scenario document and build the configuration.

    Raises
    ------
    ScenarioParseError
        On any schema violation or inconsistent value.
    """
    problems = _errors(data)
    if problems:
        raise ScenarioParseError(problems, source)

    slices = []
    for n, s in enumerate(data["slices"]):
        kind = SliceKind(s["kind"])
        kw = {"ber": s.get("ber")}
        if kind is SliceKind.CL:
            kw["capacity_bps"] = s["capacity_mbps"] * 1e6
        elif kind is SliceKind.URLLC:
            kw.update(
                arrival_rate_bps=s["arrival_rate_mbps"] * 1e6,
                delay_max_s=s["delay_max_ms"] / 1e3,
                reliability=s["reliability"],
                jitter_s=s["jitter_ms"] / 1e3,
            )
        else:
            kw.update(packet_bits=s["packet_bits"], sched_period_s=s["sched_period_ms"] / 1e3)
        slices.append(_build(f"slices/{n}", SliceSpec, s["id"], kind, source=source, **kw))

    link_in = dict(data.get("link", {}))
    if "subchannel_bw_khz" in link_in:
        link_in["subchannel_bw_hz"] = link_in.pop("subchannel_bw_khz") * 1e3
    link = _build("link", LinkParams, source=source, **link_in)

    schedule = [
        _build(
            f"schedule/{n}",
            SchedulePhase,
            p["start_slot"],
            p["stop_slot"],
            dict(p["users"]),
            source=source,
        )
        for n, p in enumerate(data["schedule"])
    ]

    adm = data.get("admission", {})
    ctl = data.get("controller", {})
    sol = data.get("solver", {})
    solver_kw = {
        "rel_tol": sol.get("rel_tol"),
        "gap_tol": sol.get("gap_tol"),
        "min_iter": sol.get("min_iterations"),
        "polish": sol.get("polish"),
        "check_every": sol.get("check_every"),
    }
    solver_kw = {k: v for k, v in solver_kw.items() if v is not None}
    if "max_iterations" in sol:
        solver_kw["max_iter"] = sol["max_iterations"]

    kw = {
        "power_budget_dbm": data.get("power_budget_dbm"),
        "rng_seed": data.get("rng_seed"),
        "admission_enabled": adm.get("enabled"),
        "admission_tolerance": adm.get("tolerance"),
        "readjust_max_iter": adm.get("max_iterations"),
        "controller_gain_factor": ctl.get("gain_factor"),
        "reset_cl_targets_on_change": ctl.get("reset_on_population_change"),
    }
    if "rate_unit_mbps" in adm:
        kw["readjust_rate_unit_bps"] = adm["rate_unit_mbps"] * 1e6
    if "slot_duration_ms" in data:
        kw["slot_duration_s"] = data["slot_duration_ms"] / 1e3
    kw = {k: v for k, v in kw.items() if v is not None}
    return _build(
        "",
        ScenarioConfig,
        link=link,
        slices=tuple(slices),
        schedule=tuple(schedule),
        num_slots=data["num_slots"],
        targets_override_bps={
            k: v * 1e6 for k, v in data.get("targets_override_mbps", {}).items()
        },
        solver=SolveOptions(**solver_kw),
        source=source,
        **kw,
    )


def _build(path, cls, *args, source=None, **kw):
    try:
        return cls(*args, **kw)
    except (ValueError, TypeError) as exc:
        raise ScenarioParseError([(path, str(exc))], source) from exc


def scenario_to_dict(config: ScenarioConfig) -> dict:
    """Inverse of :func:`scenario_from_dict`, with every field written out."""
    link = config.link
    slices = []
    for s in config.slices:
        d = {"id": s.slice_id, "kind": s.kind.value}
        if s.kind is SliceKind.CL:
            d["capacity_mbps"] = s.capacity_bps / 1e6
        elif s.kind is SliceKind.URLLC:
            d.update(
                arrival_rate_mbps=s.arrival_rate_bps / 1e6,
                delay_max_ms=s.delay_max_s * 1e3,
                reliability=s.reliability,
                jitter_ms=s.jitter_s * 1e3,
            )
        else:
            d.update(packet_bits=s.packet_bits, sched_period_ms=s.sched_period_s * 1e3)
        if s.ber is not None:
            d["ber"] = s.ber
        slices.append(d)
    sol = config.solver
    return {
        "num_slots": config.num_slots,
        "rng_seed": config.rng_seed,
        "power_budget_dbm": config.power_budget_dbm,
        "slot_duration_ms": config.slot_duration_s * 1e3,
        "link": {
            "carrier_freq_ghz": link.carrier_freq_ghz,
            "tx_antenna_gain_dbi": link.tx_antenna_gain_dbi,
            "rx_antenna_gain_dbi": link.rx_antenna_gain_dbi,
            "noise_psd_dbm_hz": link.noise_psd_dbm_hz,
            "subchannel_bw_khz": link.subchannel_bw_hz / 1e3,
            "num_subchannels": link.num_subchannels,
            "cell_radius_m": link.cell_radius_m,
            "shadow_sigma_db": link.shadow_sigma_db,
            "interference_margin_db": link.interference_margin_db,
        },
        "slices": slices,
        "schedule": [
            {"start_slot": p.start, "stop_slot": p.stop, "users": dict(p.users)}
            for p in config.schedule
        ],
        "targets_override_mbps": {k: v / 1e6 for k, v in config.targets_override_bps.items()},
        "admission": {
            "enabled": config.admission_enabled,
            "tolerance": config.admission_tolerance,
            "rate_unit_mbps": config.readjust_rate_unit_bps / 1e6,
            "max_iterations": config.readjust_max_iter,
        },
        "controller": {
            "gain_factor": config.controller_gain_factor,
            "reset_on_population_change": config.reset_cl_targets_on_change,
        },
        "solver": {
            "rel_tol": sol.rel_tol,
            "gap_tol": sol.gap_tol,
            "max_iterations": sol.max_iter,
            "min_iterations": sol.min_iter,
            "polish": sol.polish,
            "check_every": sol.check_every,
        },
    }


def load_scenario(path) -> ScenarioConfig:
    """Read and validate a scenario file.

    Raises
    ------
    ScenarioParseError
        For unreadable JSON or schema violations.
    FileNotFoundError
        If ``path`` does not exist.
    """
    path = Path(path)
    text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError([("", f"invalid JSON: {exc}")], str(path)) from exc
    return scenario_from_dict(data, str(path))


def bundled_scenario(name: str) -> Path:
    """Path of a scenario file shipped with the package (``"table2"``, ``"table3"``)."""
    ref = resources.files("slicealloc") / "scenarios" / f"{name}.json"
    if not ref.is_file():
        raise FileNotFoundError(f"no bundled scenario {name!r}")
    return Path(str(ref))


def format_sig(x: float, digits: int = 6) -> str:
    """Fixed textual form with ``digits`` significant digits; ``nan`` for missing."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    return f"{x:.{digits}g}"


def _num(x):
    # JSON has no inf/nan; an idle slot has -inf dBm
    return x if math.isfinite(x) else None


def _slot_detail(m: SlotMetrics) -> dict:
    r = m.readjustment
    return {
        "slot": m.slot,
        "total_power_w": m.total_power_w,
        "total_power_dbm": _num(m.total_power_dbm),
        "converged": m.converged,
        "duality_gap_w": _num(m.duality_gap),
        "per_slice_sum_rate_mbps": {k: v / 1e6 for k, v in m.per_slice_sum_rate_bps.items()},
        "per_slice_mean_rate_mbps": {
            k: _num(v / 1e6) for k, v in m.per_slice_mean_rate_bps.items()
        },
        "readjustment": None
        if r is None
        else {
            "iterations": r.iterations,
            "converged": r.converged,
            "final_p_opt": _num(r.final_p_opt),
            "reduced_users": sorted(r.reduced_users),
            "original_targets_mbps": {k: v / 1e6 for k, v in r.original_targets.items()},
            "final_targets_mbps": {k: v / 1e6 for k, v in r.final_targets.items()},
        },
        "users": [
            {
                "user_id": u["user_id"],
                "slice_id": u["slice_id"],
                "distance_m": u["distance_m"],
                "target_mbps": u["target_bps"] / 1e6,
                "rate_mbps": u["rate_bps"] / 1e6,
                "lambda_w_per_bps": u["lambda"],
                "power_w": u["power_w"],
                "subchannels": u["subchannels"],
            }
            for u in m.users
        ],
    }


def write_metrics(
    metrics: Sequence[SlotMetrics], output_dir, config: Optional[ScenarioConfig] = None
) -> List[Path]:
    """Write ``slots.csv`` (one row per slot and slice) and ``run.json``.

    Returns the two paths.

    Raises
    ------
    OSError
        If the directory cannot be created or written; the message names the path.
    """
    out = Path(output_dir)
    csv_path = out / "slots.csv"
    json_path = out / "run.json"
    try:
        out.mkdir(parents=True, exist_ok=True)
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for m in metrics:
                for sid, total in m.per_slice_sum_rate_bps.items():
                    w.writerow(
                        [
                            m.slot,
                            sid,
                            format_sig(total / 1e6),
                            format_sig(m.per_slice_mean_rate_bps[sid] / 1e6),
                            format_sig(m.total_power_dbm),
                            int(m.readjusted),
                        ]
                    )
        doc = {
            "config": None if config is None else scenario_to_dict(config),
            "seed": None if config is None else config.rng_seed,
            "slots": [_slot_detail(m) for m in metrics],
        }
        json_path.write_text(json.dumps(doc, indent=1, allow_nan=False))
    except OSError as exc:
        raise OSError(f"cannot write metrics to {out}: {exc}") from exc
    return [csv_path, json_path]


def load_run(path) -> tuple:
    """Read a ``run.json``; returns ``(config, slots)`` with ``config`` rebuilt."""
    doc = json.loads(Path(path).read_text())
    config = doc.get("config")
    return (None if config is None else scenario_from_dict(config, str(path))), doc["slots"]


def read_slots_csv(path) -> List[dict]:
    """Rows of a ``slots.csv`` as dictionaries of strings."""
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))

