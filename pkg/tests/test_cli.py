"""Command line interface: output documents and exit codes."""
import json

import pytest

from spsrecon.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_validate_json(capsys):
    code, out, err = run_cli(
        capsys, "validate", "--scenario", "six_zone", "--format", "json"
    )
    assert code == 0 and err == ""
    doc = json.loads(out)
    assert doc["scenario"] == "six-zone"
    assert doc["zones"] == 6
    assert doc["buses"] == 14
    assert doc["loads"] == 36
    assert doc["faultable_segments"] == 10
    assert doc["total_load_w"] == pytest.approx(10.8e6)
    assert doc["load_by_grade_w"]["vital"] == pytest.approx(5.2e6)
    assert doc["weights_ok"] is True


def test_validate_text(capsys):
    code, out, _ = run_cli(capsys, "validate", "--scenario", "two_zone")
    assert code == 0
    assert "K=2 zones" in out
    assert "L=12 loads" in out
    assert "layer-dominance" in out


def test_solve_intact_json(capsys):
    code, out, _ = run_cli(
        capsys, "solve", "--scenario", "two_zone", "--seed", "1"
    )
    assert code == 0
    doc = json.loads(out)
    assert doc["algorithm"] == "nrbbo"
    assert doc["faults"] == []
    assert doc["feasible"] and doc["vital_fully_serviced"]
    assert doc["restored_w"] == pytest.approx(3.6e6)
    assert len(doc["switch_table"]) == 12
    assert all(row["serviced"] for row in doc["switch_table"])
    assert doc["dc"]["kcl_residual_pu"] < 1e-6
    assert doc["shed_loads"] == []
    assert "wall_clock" not in json.dumps(doc)


def test_solve_out_file_reproducible(capsys, tmp_path):
    target = tmp_path / "plan.json"
    args = (
        "solve", "--scenario", "two_zone", "--faults", "pb:1-2",
        "--seed", "3", "--out", str(target),
    )
    code, out, _ = run_cli(capsys, *args)
    assert code == 0
    assert str(target) in out
    first = target.read_bytes()
    json.loads(first)

    code, _, _ = run_cli(capsys, *args)
    assert code == 0
    assert target.read_bytes() == first


def test_solve_csv_switch_table(capsys):
    code, out, _ = run_cli(
        capsys, "solve", "--scenario", "two_zone", "--format", "csv"
    )
    assert code == 0
    lines = out.strip().split("\n")
    assert lines[0] == "load,zone,grade,bus,side,serviced,rated_w"
    assert len(lines) == 1 + 12


def test_solve_text_format(capsys):
    code, out, _ = run_cli(
        capsys, "solve", "--scenario", "two_zone", "--faults", "pb:1-2",
        "--format", "text",
    )
    assert code == 0
    assert "restored" in out
    assert "pb:1-2" in out


def test_solve_exit_2_when_vital_stranded(capsys):
    # severing both port and starboard between zones 1 and 2 strands the
    # aft island with more vital demand than its generator can carry
    code, out, _ = run_cli(
        capsys, "solve", "--scenario", "six_zone",
        "--faults", "pb:1-2,sb:1-2", "--seed", "0",
    )
    assert code == 2
    doc = json.loads(out)
    assert doc["feasible"] is True
    assert doc["vital_fully_serviced"] is False


def test_missing_scenario_exits_1(capsys):
    code, out, err = run_cli(capsys, "solve", "--scenario", "no_such_plant")
    assert code == 1
    assert out == ""
    assert err.startswith("error:")
    assert "no_such_plant" in err


def test_unknown_fault_segment_exits_1(capsys):
    code, _, err = run_cli(
        capsys, "solve", "--scenario", "two_zone", "--faults", "pb:7-8"
    )
    assert code == 1
    assert err.startswith("error:")


def test_sweep_csv(capsys):
    code, out, _ = run_cli(
        capsys, "sweep", "--scenario", "two_zone", "--n-faults", "1",
        "--format", "csv",
    )
    assert code == 0
    lines = out.strip().split("\n")
    assert lines[0].startswith("faults,mode,")
    assert len(lines) == 1 + 2


def test_sweep_text(capsys):
    code, out, _ = run_cli(
        capsys, "sweep", "--scenario", "two_zone", "--n-faults", "2",
        "--format", "text",
    )
    assert code == 0
    assert "1 scenarios" in out
    assert "vital fully serviced in 1/1" in out


def test_compare_csv(capsys):
    code, out, _ = run_cli(
        capsys, "compare", "--scenario", "two_zone", "--faults", "sb:1-2",
        "--algorithm", "nrbbo,ga", "--runs", "2", "--format", "csv",
    )
    assert code == 0
    lines = out.strip().split("\n")
    assert lines[0].startswith("algorithm,runs,")
    assert len(lines) == 3
    assert lines[1].startswith("nrbbo,2,")
    assert lines[2].startswith("ga,2,")


def test_compare_rejects_unknown_algorithm(capsys):
    code, _, err = run_cli(
        capsys, "compare", "--scenario", "two_zone",
        "--algorithm", "nrbbo,magic", "--runs", "1",
    )
    assert code == 1
    assert "magic" in err


def test_seed_env_default(capsys, monkeypatch):
    monkeypatch.setenv("SPSRECON_SEED", "7")
    code, out, _ = run_cli(capsys, "solve", "--scenario", "two_zone")
    assert code == 0
    assert json.loads(out)["seed"] == 7

    monkeypatch.setenv("SPSRECON_SEED", "not-a-number")
    code, _, err = run_cli(capsys, "solve", "--scenario", "two_zone")
    assert code == 1
    assert "SPSRECON_SEED" in err


def test_explicit_seed_overrides_env(capsys, monkeypatch):
    monkeypatch.setenv("SPSRECON_SEED", "7")
    code, out, _ = run_cli(
        capsys, "solve", "--scenario", "two_zone", "--seed", "11"
    )
    assert code == 0
    assert json.loads(out)["seed"] == 11


def test_search_flag_plumbing(capsys):
    code, out, _ = run_cli(
        capsys, "solve", "--scenario", "two_zone", "--algorithm", "bbo",
        "--habitats", "8", "--generations", "6", "--seed", "2",
    )
    assert code == 0
    assert json.loads(out)["algorithm"] == "bbo"


def test_scenario_path_roundtrip(capsys, tmp_path, spec2):
    import shutil

    from spsrecon.scenario import fixture_path

    copy = tmp_path / "myplant.toml"
    shutil.copy(fixture_path("two_zone"), copy)
    code, out, _ = run_cli(capsys, "validate", "--scenario", str(copy), "--format", "json")
    assert code == 0
    assert json.loads(out)["loads"] == spec2.load_count
