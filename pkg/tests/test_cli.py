from pathlib import Path

import numpy as np
import pytest

from moistns import cli
from moistns.cli import EXIT_OK, EXIT_SOLVER, EXIT_USAGE, EXIT_VERIFY, Check, main
from moistns.snapshot import read_snapshot, read_timeseries


def write_cfg(path: Path, **kv) -> Path:
    base = {"nx": 8, "ny": 8, "nz": 8, "t_end": 0.1, "dt": 0.02, "snapshot_every": 5}
    base.update(kv)
    path.write_text("".join(f"{k} = {v}\n" for k, v in base.items()))
    return path


def test_equilibrium_run_is_stationary(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "eq.cfg")
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    snaps = sorted(out.glob("snapshot_*.bin"))
    assert [s.name for s in snaps] == ["snapshot_000000.bin", "snapshot_000005.bin"]
    (h0, s0), (h1, s1) = read_snapshot(snaps[0]), read_snapshot(snaps[-1])
    assert h0["params"] == h1["params"] and h1["t"] == pytest.approx(0.1)
    assert s0.max_abs_diff(s1) <= 1e-10
    ts = read_timeseries(out / "timeseries.csv")
    assert len(ts["t"]) == 5 and np.all(ts["perturbation_norm"] <= 1e-10)
    for png in ("timeseries.png", "final_state.png"):
        assert (out / png).stat().st_size > 0
    assert "output written" in capsys.readouterr().out


def test_both_modes_write_two_trees(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "b.cfg", t_end=0.04, delta=0.01)
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--mode", "both"]) == EXIT_OK
    assert (out / "timeseries.csv").exists() and (out / "lagrangian" / "timeseries.csv").exists()
    assert "discrepancy" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    [],
    ["run"],
    ["run", "--config", "/nonexistent/x.cfg"],
    ["verify", "nonsense"],
    ["run", "--config", "CFG", "--mode", "sideways"],
])
def test_usage_errors(tmp_path, argv, capsys):
    argv = [str(write_cfg(tmp_path / "c.cfg")) if a == "CFG" else a for a in argv]
    assert main(argv) == EXIT_USAGE
    assert "usage" in capsys.readouterr().err


def test_invalid_config_is_usage_error(tmp_path):
    cfg = write_cfg(tmp_path / "bad.cfg", nx=2)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_USAGE
    cfg.write_text("this is not a key value line\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_USAGE


def test_collapse_is_solver_error(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.cfg")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--delta", "50"]) == EXIT_SOLVER
    assert "StateInvalid" in capsys.readouterr().err


def test_verify_equilibrium_passes(tmp_path, capsys):
    out = tmp_path / "v"
    assert main(["verify", "equilibrium", "--levels", "8", "--out", str(out)]) == EXIT_OK
    text = capsys.readouterr().out
    assert "equilibrium: PASS" in text
    assert (out / "equilibrium_checks.csv").read_text().startswith("check,value,limit,status")


def test_verify_failure_exit_code(tmp_path, monkeypatch, capsys):
    monkeypatch.setitem(cli.VERIFIERS, "equilibrium", lambda args, out: [Check("always off", 1.0, 0.5)])
    assert main(["verify", "equilibrium", "--out", str(tmp_path)]) == EXIT_VERIFY
    assert "FAIL" in capsys.readouterr().out


def test_check_semantics():
    assert Check("a", 1.0, 1.0).passed and not Check("a", 1.1, 1.0).passed
    assert Check("b", 2.0, 1.8, "min").passed and not Check("b", 1.7, 1.8, "min").passed
    assert not Check("nan", float("nan"), 1.0).passed


def test_levels_parsing():
    assert cli._levels(None, (8, 16)) == (8, 16)
    assert cli._levels("4, 8,16", ()) == (4, 8, 16)
    with pytest.raises(cli.UsageError):
        cli._levels("4,x", ())


def test_max_workers(monkeypatch):
    monkeypatch.setenv("MOISTNS_THREADS", "3")
    assert cli.max_workers() == 3
    monkeypatch.setenv("MOISTNS_THREADS", "0")
    assert cli.max_workers() >= 1
