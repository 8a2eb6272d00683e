import json
from pathlib import Path

import pytest

from slicealloc.cli import (
    EXIT_INFEASIBLE,
    EXIT_IO,
    EXIT_OK,
    EXIT_ORACLE,
    EXIT_PARSE,
    EXIT_USAGE,
    main,
)
from slicealloc.io import (
    CSV_COLUMNS,
    ScenarioParseError,
    bundled_scenario,
    format_sig,
    load_run,
    load_scenario,
    read_slots_csv,
    scenario_from_dict,
    scenario_to_dict,
    write_metrics,
)
from slicealloc.qos import SliceKind
from slicealloc.simulator import run

from mini import mini

GOLDEN = Path(__file__).parent / "golden" / "mini_slots.csv"


def write_json(tmp_path, data, name="scenario.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


# -- loading -------------------------------------------------------------------------


def test_bundled_table2():
    c = load_scenario(bundled_scenario("table2"))
    assert c.num_slots == 100
    assert c.power_budget_dbm == 23.0
    assert c.link.num_subchannels == 133
    assert c.link.subchannel_bw_hz == 180e3
    assert c.slice("cl").capacity_bps == 27e6
    urllc = c.slice("urllc")
    assert urllc.kind is SliceKind.URLLC
    assert urllc.delay_max_s == pytest.approx(0.01)
    assert urllc.jitter_s == pytest.approx(0.001)
    assert c.slice("ts").packet_bits == 16400
    assert [(p.start, p.stop, dict(p.users)) for p in c.schedule] == [
        (0, 33, {"cl": 5, "urllc": 2, "ts": 1}),
        (33, 67, {"cl": 2, "urllc": 2, "ts": 1}),
        (67, 100, {"cl": 7, "urllc": 2, "ts": 1}),
    ]


def test_bundled_table3():
    c = load_scenario(bundled_scenario("table3"))
    assert c.slice("cl").capacity_bps == 270e6
    assert c.targets_override_bps == {"urllc": 20e6}
    assert [dict(p.users)["cl"] for p in c.schedule] == [10, 7, 12]


def test_unknown_bundled_name():
    with pytest.raises(FileNotFoundError):
        bundled_scenario("table9")


def test_negative_capacity_names_the_field():
    d = mini()
    d["slices"][0]["capacity_mbps"] = -1.0
    with pytest.raises(ScenarioParseError) as err:
        scenario_from_dict(d)
    assert any(path == "slices/0/capacity_mbps" for path, _ in err.value.problems)
    assert "slices/0/capacity_mbps" in str(err.value)


def test_missing_and_extra_fields():
    d = mini()
    del d["num_slots"]
    d["link"]["colour"] = "blue"
    with pytest.raises(ScenarioParseError) as err:
        scenario_from_dict(d)
    text = str(err.value)
    assert "num_slots" in text
    assert "colour" in text


def test_field_of_another_slice_kind_rejected():
    d = mini()
    d["slices"][2]["capacity_mbps"] = 5.0
    with pytest.raises(ScenarioParseError) as err:
        scenario_from_dict(d)
    assert any(path.startswith("slices/2") for path, _ in err.value.problems)


def test_semantic_errors_become_parse_errors():
    d = mini()
    d["schedule"][1]["start_slot"] = 5
    with pytest.raises(ScenarioParseError):
        scenario_from_dict(d)


def test_invalid_json_file(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{ not json")
    with pytest.raises(ScenarioParseError) as err:
        load_scenario(p)
    assert str(p) in str(err.value)


def test_dict_round_trip():
    for name in ("table2", "table3"):
        c = load_scenario(bundled_scenario(name))
        again = scenario_from_dict(scenario_to_dict(c))
        assert again == c


# -- output ----------------------------------------------------------------------------


def test_format_sig():
    assert format_sig(27.0) == "27"
    assert format_sig(2.0010000001) == "2.001"
    assert format_sig(-5.117718) == "-5.11772"
    assert format_sig(float("nan")) == "nan"


def test_empty_metrics_give_header_only(tmp_path):
    csv_path, json_path = write_metrics([], tmp_path)
    assert csv_path.read_text() == ",".join(CSV_COLUMNS) + "\n"
    assert json.loads(json_path.read_text()) == {"config": None, "seed": None, "slots": []}


@pytest.fixture(scope="module")
def mini_output(tmp_path_factory):
    config = scenario_from_dict(mini())
    out = tmp_path_factory.mktemp("mini")
    write_metrics(run(config), out, config)
    return config, out


def test_golden_csv(mini_output):
    assert (mini_output[1] / "slots.csv").read_text() == GOLDEN.read_text()


def test_csv_rows_per_slot_and_slice(mini_output):
    rows = read_slots_csv(mini_output[1] / "slots.csv")
    assert len(rows) == 8 * 3
    assert list(rows[0]) == list(CSV_COLUMNS)
    assert [r["slice_id"] for r in rows[:3]] == ["cl", "urllc", "ts"]


def test_run_json_reload_reproduces_run(mini_output, tmp_path):
    config, out = mini_output
    reloaded, slots = load_run(out / "run.json")
    assert reloaded == config
    assert len(slots) == 8
    write_metrics(run(reloaded), tmp_path, reloaded)
    assert (tmp_path / "slots.csv").read_bytes() == (out / "slots.csv").read_bytes()
    assert (tmp_path / "run.json").read_bytes() == (out / "run.json").read_bytes()


def test_unwritable_output_names_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError) as err:
        write_metrics([], blocker / "sub")
    assert str(blocker / "sub") in str(err.value)


# -- command line -------------------------------------------------------------------------


def test_cli_simulate(tmp_path, capsys):
    cfg = write_json(tmp_path, mini())
    code = main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o"), "--quiet"])
    assert code == EXIT_OK
    assert (tmp_path / "o" / "slots.csv").read_text() == GOLDEN.read_text()
    assert "wrote" in capsys.readouterr().out


def test_cli_seed_and_admission_overrides(tmp_path):
    cfg = write_json(tmp_path, mini())
    out = tmp_path / "o"
    main(["simulate", "--config", str(cfg), "--out", str(out), "--seed", "7", "--quiet",
          "--no-admission"])
    config, _ = load_run(out / "run.json")
    assert config.rng_seed == 7
    assert not config.admission_enabled


def test_cli_solve_slot(tmp_path, capsys):
    cfg = write_json(tmp_path, mini())
    assert main(["solve-slot", "--config", str(cfg), "--slot", "5"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["slot"] == 5
    assert len(doc["users"]) == 5
    assert doc["per_slice_sum_rate_mbps"]["ts"] == pytest.approx(1.64)


def test_cli_solve_slot_out_of_range(tmp_path):
    cfg = write_json(tmp_path, mini())
    assert main(["solve-slot", "--config", str(cfg), "--slot", "8"]) == EXIT_USAGE


def test_cli_parse_error(tmp_path):
    d = mini()
    d["slices"][0]["capacity_mbps"] = -1
    assert main(["simulate", "--config", str(write_json(tmp_path, d)), "--out",
                 str(tmp_path)]) == EXIT_PARSE


def test_cli_infeasible(tmp_path):
    cfg = write_json(tmp_path, mini(power_budget_dbm=-60.0))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path), "--quiet"]) == (
        EXIT_INFEASIBLE
    )


def test_cli_io_error(tmp_path):
    cfg = write_json(tmp_path, mini())
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["simulate", "--config", str(cfg), "--out", str(blocker), "--quiet"]) == EXIT_IO


def test_cli_validate_oracle(capsys):
    assert main(["validate-oracle", "--instances", "20", "--seed", "1"]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[-1].startswith("PASS overall")
    assert main(["validate-oracle", "--instances", "0"]) == EXIT_USAGE


def test_cli_oracle_failure_exit_code(monkeypatch):
    import slicealloc.cli as cli
    from slicealloc.validation import OracleReport, SuiteResult

    bad = OracleReport(0, [SuiteResult("x", 1, 1, 1.0, 0.1)])
    monkeypatch.setattr(cli, "validate_oracle", lambda seed, n: bad)
    assert main(["validate-oracle"]) == EXIT_ORACLE


def test_cli_usage_error():
    with pytest.raises(SystemExit) as err:
        main(["simulate"])
    assert err.value.code == EXIT_USAGE
