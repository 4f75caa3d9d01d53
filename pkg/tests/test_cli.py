from __future__ import annotations

import json
from pathlib import Path

import pytest

from redsim.cli import main
from redsim.netmodel import load_scenario
from redsim.generator import verify


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


# -- gen ---------------------------------------------------------------------

def test_gen_writes_verified_files(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "gen", "--seed", "1", "--count", "3", "--out-dir", str(tmp_path))
    assert code == 0
    names = out.strip().splitlines()
    assert len(names) == 3
    files = sorted(tmp_path.glob("*.json"))
    assert len(files) == 3
    for path, name in zip(files, sorted(names)):
        env = load_scenario(path.read_text())
        assert verify(env).all_reachable
        assert path.stem == name == env.name


def test_gen_respects_host_range(tmp_path, capsys):
    code, out, _ = run_cli(
        capsys, "gen", "--seed", "2", "--count", "1", "--out-dir", str(tmp_path), "--hosts", "3..5", "--subnets", "2..2"
    )
    assert code == 0
    env = load_scenario(next(tmp_path.glob("*.json")).read_text())
    for subnet in env.subnets:
        count = sum(1 for h in subnet.hosts if not env.host(h).is_attacker)
        assert 3 <= count <= 5


def test_gen_deterministic_bytes(tmp_path, capsys):
    run_cli(capsys, "gen", "--seed", "5", "--count", "2", "--out-dir", str(tmp_path / "a"))
    run_cli(capsys, "gen", "--seed", "5", "--count", "2", "--out-dir", str(tmp_path / "b"))
    for path in sorted((tmp_path / "a").iterdir()):
        assert path.read_bytes() == (tmp_path / "b" / path.name).read_bytes()


def test_gen_count_zero_is_usage_error(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["gen", "--seed", "1", "--count", "0", "--out-dir", str(tmp_path)])
    assert exc.value.code == 2


def test_unknown_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--env", "eq-mini", "--turbo"])
    assert exc.value.code == 2


# -- verify -------------------------------------------------------------------

def test_verify_bundled(capsys):
    code, out, _ = run_cli(capsys, "verify", "--env", "eq-mini")
    assert code == 0
    assert out.count("reachable") == 3


def test_verify_unreachable_exits_one(tmp_path, capsys):
    doc = json.loads(Path("src/redsim/scenarios/eq-mini.json").read_text())
    for host in doc["hosts"]:
        host.pop("stored_credentials", None)
    broken = tmp_path / "broken.json"
    broken.write_text(json.dumps(doc))
    code, out, _ = run_cli(capsys, "verify", "--env", str(broken))
    assert code == 1
    assert "UNREACHABLE" in out


# -- run / score / report ---------------------------------------------------------

def test_run_reference_and_score_identity(tmp_path, capsys):
    log_dir = tmp_path / "logs"
    code, out, _ = run_cli(
        capsys, "run", "--env", "eq-mini", "--planner", "reference", "--seed", "3", "--log", str(log_dir)
    )
    assert code == 0
    assert "success=1 reliability=5/5 total_acquisition=1.000" in out

    code, out, err = run_cli(capsys, "score", "--logs", str(log_dir))
    assert code == 0
    assert "differ" not in err
    recomputed = out[: out.rindex("eq-mini")]
    assert recomputed == (log_dir / "metrics.json").read_text()


def test_run_missing_env_file_exits_one(capsys):
    code, _, err = run_cli(capsys, "run", "--env", "missing.file")
    assert code == 1
    assert "missing.file" in err


def test_run_invalid_planner_exits_one(capsys):
    code, _, err = run_cli(capsys, "run", "--env", "eq-mini", "--planner", "psychic")
    assert code == 1
    assert "unknown planner" in err


def test_run_deterministic_logs(tmp_path, capsys):
    args = ["run", "--env", "dumbbell-mini", "--planner", "random", "--trials", "2", "--seed", "11", "--max-steps", "40"]
    run_cli(capsys, *args, "--log", str(tmp_path / "a"))
    run_cli(capsys, *args, "--log", str(tmp_path / "b"))
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_run_parallel_identical_to_serial(tmp_path, capsys):
    base = ["run", "--env", "eq-mini", "--planner", "reference", "--seed", "4"]
    run_cli(capsys, *base, "--log", str(tmp_path / "serial"))
    run_cli(capsys, *base, "--jobs", "3", "--log", str(tmp_path / "parallel"))
    for name in sorted(p.name for p in (tmp_path / "serial").iterdir()):
        assert (tmp_path / "serial" / name).read_bytes() == (tmp_path / "parallel" / name).read_bytes()


def test_score_with_reference_zero_irrelevant(tmp_path, capsys):
    log_dir = tmp_path / "logs"
    run_cli(capsys, "run", "--env", "eq-mini", "--planner", "reference", "--log", str(log_dir))
    for reference in (str(Path("src/redsim/scenarios/eq-mini.ref.json")), "eq-mini"):
        code, out, _ = run_cli(capsys, "score", "--logs", str(log_dir), "--reference", reference)
        assert code == 0
        assert out.count("irrelevant=0.0%") == 5


def test_score_corrupt_log_names_line(tmp_path, capsys):
    log_dir = tmp_path / "logs"
    run_cli(capsys, "run", "--env", "eq-mini", "--planner", "reference", "--log", str(log_dir))
    events = log_dir / "trial-00.events.jsonl"
    lines = events.read_text().splitlines()
    lines[4] = "{broken"
    events.write_text("\n".join(lines) + "\n")
    code, _, err = run_cli(capsys, "score", "--logs", str(log_dir))
    assert code == 1
    assert "trial-00.events.jsonl:5" in err


def test_score_truncated_log_exits_one(tmp_path, capsys):
    log_dir = tmp_path / "logs"
    run_cli(capsys, "run", "--env", "eq-mini", "--planner", "reference", "--log", str(log_dir))
    tasks = log_dir / "trial-01.tasks.jsonl"
    lines = tasks.read_text().splitlines()
    tasks.write_text("\n".join(lines[:-1]) + "\n")  # drop the end record
    code, _, err = run_cli(capsys, "score", "--logs", str(log_dir))
    assert code == 1
    assert "truncated" in err


def test_score_identity_for_random_planner(tmp_path, capsys):
    log_dir = tmp_path / "logs"
    run_cli(capsys, "run", "--env", "chain-4", "--planner", "random", "--seed", "2", "--trials", "2",
            "--max-steps", "50", "--log", str(log_dir))
    code, out, err = run_cli(capsys, "score", "--logs", str(log_dir))
    assert code == 0 and "differ" not in err
    assert out[: out.rindex("chain-4")] == (log_dir / "metrics.json").read_text()


def test_config_env_var_sets_defaults(tmp_path, capsys, monkeypatch):
    config = tmp_path / "defaults.json"
    config.write_text(json.dumps({"trials": 2, "seed": 7}))
    monkeypatch.setenv("REDSIM_CONFIG", str(config))
    code, out, _ = run_cli(capsys, "run", "--env", "star-mini")
    assert code == 0 and "reliability=2/2" in out
    # explicit flags still win
    code, out, _ = run_cli(capsys, "run", "--env", "star-mini", "--trials", "3")
    assert code == 0 and "reliability=3/3" in out


def test_report_table(tmp_path, capsys):
    run_cli(capsys, "run", "--env", "eq-mini", "--planner", "reference", "--log", str(tmp_path / "a"))
    run_cli(capsys, "run", "--env", "star-mini", "--planner", "reference", "--log", str(tmp_path / "b"))
    code, out, _ = run_cli(capsys, "report", "--logs", str(tmp_path / "a"), str(tmp_path / "b"))
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("environment")
    assert any(line.startswith("eq-mini") for line in lines)
    assert any(line.startswith("star-mini") for line in lines)


# -- serve-planner ------------------------------------------------------------------

def test_external_scripted_planner_completes_eq_mini(tmp_path, capsys):
    steps = [
        {"tasks": [{"kind": "Scan", "source": "attacker", "subnet": "s0"}]},
        {"tasks": [{"kind": "LateralMove", "target": "web2"}]},
        {"tasks": [{"kind": "FindInformation", "host": "web2"}]},
        {"tasks": [{"kind": "LateralMove", "target": "db1"},
                   {"kind": "LateralMove", "target": "db2"},
                   {"kind": "LateralMove", "target": "db3"}]},
        {"tasks": [{"kind": "FindInformation", "host": "db1"},
                   {"kind": "FindInformation", "host": "db2"},
                   {"kind": "FindInformation", "host": "db3"}]},
        {"tasks": [{"kind": "ExfiltrateData", "asset": "data1"},
                   {"kind": "ExfiltrateData", "asset": "data2"},
                   {"kind": "ExfiltrateData", "asset": "data3"}]},
        {"finished": {"reason": "done"}},
    ]
    script = tmp_path / "steps.json"
    script.write_text(json.dumps(steps))
    import sys

    command = f"{sys.executable} -m redsim.cli serve-planner --script {script}"
    code, out, _ = run_cli(
        capsys, "run", "--env", "eq-mini", "--planner", f"external:{command}", "--trials", "1",
        "--log", str(tmp_path / "logs"),
    )
    assert code == 0
    assert "success=1 reliability=1/1 total_acquisition=1.000" in out


def test_external_planner_crash_records_protocol_error(tmp_path, capsys):
    code, out, _ = run_cli(
        capsys, "run", "--env", "eq-mini", "--planner", "external:false", "--trials", "2",
        "--log", str(tmp_path / "logs"),
    )
    assert code == 0  # the report carries the failure
    manifest = json.loads((tmp_path / "logs" / "metrics.json").read_text())
    assert all(t["termination"] == "protocol_error" for t in manifest["trials"])
