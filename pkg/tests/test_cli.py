import json
import subprocess
import sys

import pytest

from suolson_dlra import cli
from suolson_dlra.full import SolverError


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("problem = custom\nn_cells = 16\nn_moments = 6\ninitial_rank = 3\n"
                 "t_end = 0.05\nplots = false\n")
    return p


def test_run_success(cfg_file, tmp_path, capsys):
    out = tmp_path / "out"
    code = cli.main(["run", "--config", str(cfg_file), "--solver", "full",
                     "--set", "t_end=0.02", "--output-dir", str(out)])
    assert code == cli.EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["solver"] == "full_conservative" and summary["t_final"] == 0.02
    assert (out / "diagnostics.csv").exists()


def test_run_config_error(cfg_file, capsys):
    code = cli.main(["run", "--config", str(cfg_file), "--set", "cfl=3", "--set", "nope=1"])
    assert code == cli.EXIT_CONFIG
    err = capsys.readouterr().err
    assert "cfl" in err and "nope" in err


def test_run_solver_failure(cfg_file, tmp_path, monkeypatch, capsys):
    def broken(cfg):
        raise SolverError("B would become nonpositive", stage="coupled_solve", step=7)

    monkeypatch.setattr(cli, "run_experiment", broken)
    code = cli.main(["run", "--config", str(cfg_file), "--output-dir", str(tmp_path)])
    assert code == cli.EXIT_SOLVER
    assert "coupled_solve" in capsys.readouterr().err


def test_verify_pass_and_fail(monkeypatch, capsys):
    assert cli.main(["verify", "--suite", "stencils"]) == cli.EXIT_OK
    assert "[PASS]" in capsys.readouterr().out

    from suolson_dlra import verification

    failing = verification.Outcome(99, "dummy", False, "forced", 0.0)
    monkeypatch.setitem(verification.SUITES, "stencils", (lambda: failing,))
    assert cli.main(["verify", "--suite", "stencils"]) == cli.EXIT_ACCEPTANCE


def test_bad_log_level_is_ignored(monkeypatch, cfg_file, tmp_path):
    monkeypatch.setenv(cli.LOG_ENV, "LOUD")
    assert cli.main(["run", "--config", str(cfg_file), "--output-dir", str(tmp_path)]) == 0


def test_module_entry_point(cfg_file, tmp_path):
    proc = subprocess.run([sys.executable, "-m", "suolson_dlra", "run", "--config",
                           str(cfg_file), "--output-dir", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
