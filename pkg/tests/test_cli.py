import json

from multiarm import fixture_path
from multiarm.cli import main
from multiarm.harness import CSV_HEADER


def run_cli(tmp_path, name, *extra):
    metrics = tmp_path / "metrics.csv"
    events = tmp_path / "events.log"
    code = main(
        [
            "run",
            "--scenario",
            str(fixture_path(name)),
            "--metrics-out",
            str(metrics),
            "--events-out",
            str(events),
            *extra,
        ]
    )
    return code, metrics, events


def test_clean_run_exit_zero(tmp_path, capsys):
    code, metrics, events = run_cli(tmp_path, "disjoint.json")
    assert code == 0
    assert metrics.read_text().splitlines()[0] == ",".join(CSV_HEADER)
    assert events.read_text().endswith("\n")
    out = capsys.readouterr().out
    assert "makespan=" in out


def test_timeout_run_exit_two(tmp_path):
    code, _, events = run_cli(tmp_path, "timeout.json")
    assert code == 2
    assert "TIMEOUT_ABORT" in events.read_text()


def test_sync_mode_flag(tmp_path):
    code, metrics, _ = run_cli(tmp_path, "disjoint.json", "--mode", "sync")
    assert code == 0
    row = metrics.read_text().splitlines()[1].split(",")
    assert row[0] == "sync"
    assert abs(float(row[1]) - 5.0) <= 0.02


def test_parameter_overrides(tmp_path):
    code, metrics, events = run_cli(
        tmp_path,
        "crossing.json",
        "--time-step",
        "0.025",
        "--tick",
        "0.005",
        "--margin",
        "0.03",
        "--monitor-period",
        "10",
        "--backlog-timeout",
        "20",
    )
    assert code == 0
    # finer tick shows up in event clocks
    clocks = [line.split("\t")[0] for line in events.read_text().splitlines()]
    assert any(c.endswith("5000") for c in clocks)
    assert "deadline=20.000000" in events.read_text()


def test_determinism_byte_identical(tmp_path):
    m1 = tmp_path / "a"
    m2 = tmp_path / "b"
    m1.mkdir()
    m2.mkdir()
    code1, metrics1, events1 = run_cli(m1, "crossing.json")
    code2, metrics2, events2 = run_cli(m2, "crossing.json")
    assert code1 == code2 == 0
    assert metrics1.read_bytes() == metrics2.read_bytes()
    assert events1.read_bytes() == events2.read_bytes()


def test_bad_scenario_exit_one(tmp_path):
    missing = tmp_path / "nope.json"
    code = main(["run", "--scenario", str(missing)])
    assert code == 1


def test_collision_halt_exit_three(tmp_path):
    # park the idle left arm across the corridor and disable the
    # static-admission gate: the right arm's sweep is admitted blind and
    # only the online monitor stops it
    data = json.loads(fixture_path("crossing.json").read_text())
    data["robots"][0]["idle_posture"] = [1.5707963267948966, 0.0]
    data["tasks"] = [t for t in data["tasks"] if t["group_id"] == "right"]
    data["params"]["check_static"] = False
    path = tmp_path / "halting.json"
    path.write_text(json.dumps(data))
    events = tmp_path / "events.log"
    code = main(["run", "--scenario", str(path), "--events-out", str(events)])
    assert code == 3
    assert "COLLISION_HALT" in events.read_text()
