from importlib import resources

import numpy as np

from pfczm.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_SOLVER, main
from pfczm.writers import read_history_csv

from conftest import STRIP_CFG

DATA = resources.files("pfczm") / "data"


def test_run_writes_outputs(strip_dir, capsys):
    out = strip_dir / "res"
    assert main(["run", str(strip_dir / "strip.cfg"), "--out", str(out), "--quiet"]) == EXIT_OK
    names = sorted(p.name for p in out.iterdir())
    assert names == [
        "config.cfg",
        "history.csv",
        "interface_00000.csv",
        "interface_00002.csv",
        "interface_00004.csv",
        "state_00000.vtk",
        "state_00002.vtk",
        "state_00004.vtk",
    ]
    assert len(read_history_csv(out / "history.csv")["t"]) == 5
    assert capsys.readouterr().out == ""
    assert main(["audit", str(out / "history.csv")]) == EXIT_OK
    assert "final residual" in capsys.readouterr().out


def test_run_overrides(strip_dir, capsys):
    out = strip_dir / "res"
    code = main(["run", str(strip_dir / "strip.cfg"), "--out", str(out), "--tau", "5e-4", "--max-steps", "3", "--snapshot-every", "0"])
    assert code == EXIT_OK
    cols = read_history_csv(out / "history.csv")
    assert np.allclose(cols["t"], [0.0, 5e-4, 1e-3, 1.5e-3])
    assert not list(out.glob("*.vtk"))
    assert "done: 3 steps" in capsys.readouterr().out


def test_config_errors_exit_2(strip_dir, tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text(STRIP_CFG.replace("Kp = 3.1 GPa", "Kp = 3.1 apples", 1))
    assert main(["run", str(bad)]) == EXIT_CONFIG
    assert "error" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG
    assert main(["mesh-info", str(tmp_path / "missing.msh")]) == EXIT_CONFIG
    (tmp_path / "h.csv").write_text("t,F\n0,0\n")
    assert main(["audit", str(tmp_path / "h.csv")]) == EXIT_CONFIG


def test_solver_failure_exit_3(strip_dir):
    cfg = strip_dir / "strip.cfg"
    cfg.write_text(STRIP_CFG + "\n[solver]\nsqp_max_iter = 1\n")
    assert main(["run", str(cfg), "--out", str(strip_dir / "res"), "--quiet"]) == EXIT_SOLVER
    assert (strip_dir / "res" / "history.csv").exists()


def test_io_failure_exit_4(strip_dir):
    blocker = strip_dir / "file"
    blocker.write_text("")
    assert main(["run", str(strip_dir / "strip.cfg"), "--out", str(blocker / "sub"), "--quiet"]) == EXIT_IO


def test_criteria_and_mesh_info(tmp_path, capsys):
    assert main(["criteria", str(DATA / "three_inhomogeneities.cfg"), "--out", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "material matrix" in out and "interface iface1" in out and "sigma_crit" in out
    assert (tmp_path / "bulk_matrix.csv").exists() and (tmp_path / "interface_iface2.csv").exists()
    assert main(["mesh-info", str(DATA / "single_inhomogeneity.msh")]) == EXIT_OK
    out = capsys.readouterr().out
    assert "subdomain inclusion" in out and "point group pin_top: 1 nodes" in out
