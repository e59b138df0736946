import csv
import json
import subprocess
import sys

import pytest

from colombeau import cli, scenarios

SMALL = ["--eps-max-pow", "1", "--eps-min-pow", "6"]

BAD_EXPECT = """[scenario]
name = wrong
[distributions]
d = delta(0)
[test: claims delta negligible]
kind = negligibility
object = embed(d)
m = 1
"""


def test_list_names_every_builtin(capsys):
    assert cli.main(["--list"]) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert all(name in out for name in scenarios.names())
    assert len(scenarios.names()) == 10


def test_builtin_run_writes_reports(tmp_path, capsys):
    assert cli.main(["run", "schwartz-product", "--out", str(tmp_path)]) == cli.EXIT_OK
    rows = list(csv.reader(open(tmp_path / "schwartz-product.csv")))
    assert rows[0] == ["scenario", "K", "m", "j", "eps", "value"]
    doc = json.load(open(tmp_path / "schwartz-product.json"))
    assert all(c["matched"] for c in doc["checks"])
    assert "verdicts match" in capsys.readouterr().out


def test_mismatch_exits_one(tmp_path):
    cfg = tmp_path / "wrong.cfg"
    cfg.write_text(BAD_EXPECT)
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "o")] + SMALL) == cli.EXIT_MISMATCH


@pytest.mark.parametrize("args", [["run", "no-such-scenario"], ["run", "schwartz-product", "--grid", "1"], []])
def test_configuration_errors_exit_two(args, tmp_path):
    extra = ["--out", str(tmp_path)] if args else []
    assert cli.main(args + extra) == cli.EXIT_CONFIG


def test_config_error_reports_position(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(BAD_EXPECT.replace("m = 1", "m = 9"))
    assert cli.main(["run", str(cfg), "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert f"{cfg}:8:5:" in capsys.readouterr().err


def test_grid_flags_set_the_sweep(tmp_path):
    cli.main(["run", "h-delta", "--out", str(tmp_path), "--eps-max-pow", "3", "--eps-min-pow", "7", "--grid", "5"])
    doc = json.load(open(tmp_path / "h-delta.json"))
    for rep in doc["reports"]:
        if rep["eps"]:
            assert rep["eps"][0] <= 2.0**-3 and rep["eps"][-1] == 2.0**-7 and len(rep["eps"]) <= 5


def test_parallel_output_is_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cli.main(["run", "delta-square", "--out", str(a)])
    cli.main(["run", "delta-square", "--out", str(b), "--parallel"])
    for ext in ("csv", "json"):
        assert (a / f"delta-square.{ext}").read_bytes() == (b / f"delta-square.{ext}").read_bytes()


def test_console_entry_uses_output_env(tmp_path):
    env = {"COLOMBEAU_OUT": str(tmp_path / "env-out"), "PATH": ""}
    proc = subprocess.run([sys.executable, "-m", "colombeau", "run", "hat-tilde-assoc"], env=env,
                          capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "env-out" / "hat-tilde-assoc.json").exists()
