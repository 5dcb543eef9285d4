"""Command line: exit codes, artifacts, determinism."""

import csv
import json

import pytest

from lamforge import cli


def run(tmp_path, name, *args):
    out = tmp_path / name
    code = cli.main([*args, "--out", str(out)])
    return code, out


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_laminate_command(tmp_path):
    code, out = run(tmp_path, "lam", "laminate", "--dim", "3", "--rate", "3", "--depth", "6")
    assert code == 0
    for name in ("laminate.json", "diagnostics.csv", "plot.gp", "report.json"):
        assert (out / name).exists()
    rows = read_csv(out / "diagnostics.csv")
    assert rows[0]["bad_mass"] == "1/64"
    report = json.loads((out / "report.json").read_text())
    assert rows[0]["config_hash"] == report["config_hash"]


def test_outputs_are_byte_identical(tmp_path):
    args = ("solve", "--dim", "2", "--n", "32", "--J", "2", "--iters", "2")
    _, a = run(tmp_path, "a", *args)
    _, b = run(tmp_path, "b", *args)
    for name in ("diagnostics.csv", "map.json", "report.json", "plot.gp"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_solve_command(tmp_path):
    code, out = run(tmp_path, "s", "solve", "--n", "32", "--J", "2", "--iters", "2", "--gradients")
    assert code == 0
    rows = read_csv(out / "diagnostics.csv")
    assert list(rows[0]) == ["iteration", "residual", "decay_ratio", "increment_lp", "violation_volume", "config_hash"]
    assert len(rows) == 2
    assert (out / "gradients.csv").exists()
    assert json.loads((out / "report.json").read_text())["boundary_pinned"] is True


@pytest.mark.parametrize(
    "args",
    [
        ("solve", "--p", "2.5", "--dim", "2"),
        ("solve", "--p", "2", "--dim", "2"),
        ("laminate", "--p", "3", "--dim", "3"),
        ("approx", "--p", "3.5", "--dim", "3"),
        ("lsc", "--p", "2", "--dim", "2"),
        ("gap", "--p", "4", "--dim", "2"),
        ("decay", "--p", "2.0", "--dim", "2"),
        ("laminate", "--J1", "3", "--J2", "1"),
        ("solve", "--n", "0"),
        ("solve", "--g", "bogus"),
        ("solve", "--bogus-flag", "1"),
        ("lsc", "--eps", "0.5,0"),
    ],
)
def test_invalid_configuration_exits_2(tmp_path, capsys, args):
    code, _ = run(tmp_path, "bad", *args)
    assert code == 2


def test_p_guard_message(tmp_path, capsys):
    run(tmp_path, "bad", "solve", "--p", "2.5", "--dim", "2")
    assert "p < d" in capsys.readouterr().err


def test_missing_inputs_and_unwritable_output(tmp_path):
    code, _ = run(tmp_path, "x", "solve", "--J-file", str(tmp_path / "missing.csv"), "--n", "4")
    assert code == 2
    # a cell table of the wrong length is a configuration error as well
    table = tmp_path / "J.csv"
    table.write_text("1,2,3\n")
    code, _ = run(tmp_path, "y", "solve", "--J-file", str(table), "--n", "4")
    assert code == 2
    # an unwritable output location is a runtime failure
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.main(["solve", "--n", "4", "--out", str(blocker / "sub")]) == 3


def test_config_file_and_seed_env(tmp_path, monkeypatch):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"dim": 2, "rate": 2.0, "depth": 3, "p": 1.5}))
    code, a = run(tmp_path, "a", "laminate", "--config", str(cfg), "--root", "random", "--seed", "1")
    assert code == 0
    monkeypatch.setenv("LAMFORGE_SEED", "7")
    code, b = run(tmp_path, "b", "laminate", "--config", str(cfg), "--root", "random", "--seed", "1")
    assert code == 0
    assert json.loads((b / "report.json").read_text())["config"]["seed"] == 7
    assert (a / "laminate.json").read_bytes() != (b / "laminate.json").read_bytes()
    cfg.write_text(json.dumps({"nonsense": 1}))
    assert run(tmp_path, "c", "laminate", "--config", str(cfg))[0] == 2


def test_gap_and_decay_commands(tmp_path):
    code, out = run(tmp_path, "g", "gap", "--n", "32", "--iters", "1")
    assert code == 0
    row = read_csv(out / "diagnostics.csv")[0]
    assert float(row["reference_det_integral"]) == pytest.approx(1.0)
    code, out = run(tmp_path, "d", "decay", "--n", "32", "--iters", "2")
    assert code == 0
