import csv
import subprocess
import sys

import numpy as np
import pytest

from surfdmk import cli
from surfdmk.dmk import LOG_COLUMNS
from surfdmk.metrics import RATE_COLUMNS
from surfdmk.vtk import read_vtk


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def level0_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("run0")
    status = cli.main(["run", "--level", "0", "--out", str(out)])
    return status, out


def test_run_level0(level0_out):
    status, out = level0_out
    assert status == 0
    rows = read_rows(out / "summary.csv")
    assert tuple(rows[0]) == cli.SUMMARY_COLUMNS
    summary = dict(zip(rows[0], rows[1]))
    assert summary["converged"] == "1"
    # 2.6% observed at level 0, see the README
    assert float(summary["err_w1"]) < 0.03
    steps = read_rows(out / "steps.csv")
    assert tuple(steps[0]) == LOG_COLUMNS
    assert len(steps) - 1 == int(summary["steps"])


def test_run_vtk_contents(level0_out, level0):
    _, out = level0_out
    mesh, cells, points = read_vtk(out / "result.vtk")
    assert mesh.n_triangles == level0.pair.fine.n_triangles
    assert set(cells) == {"mu", "source", "velocity"}
    assert set(points) == {"potential"}
    assert cells["velocity"].shape == (mesh.n_triangles, 3)
    np.testing.assert_array_equal(cells["source"], level0.source)
    # density is constant over the 4 children of a coarse cell
    mu = cells["mu"].reshape(-1, 4)
    np.testing.assert_array_equal(mu, mu[:, :1].repeat(4, axis=1))


def test_run_is_bit_identical(level0_out, tmp_path):
    _, out = level0_out
    assert cli.main(["run", "--level", "0", "--out", str(tmp_path)]) == 0
    for name in ("steps.csv", "result.vtk"):
        assert (tmp_path / name).read_bytes() == (out / name).read_bytes()


def test_run_k_max_one_is_not_converged(tmp_path):
    assert cli.main(["run", "--level", "0", "--k-max", "1", "--out", str(tmp_path)]) == 2
    assert len(read_rows(tmp_path / "steps.csv")) == 2
    assert (tmp_path / "result.vtk").exists()
    assert read_rows(tmp_path / "summary.csv")[1][-1] == "0"


@pytest.mark.parametrize(
    "argv,field",
    [
        (["run", "--level", "7"], "level"),
        (["run", "--level", "-1"], "level"),
        (["run", "--n-r", "10"], "n_r"),
        (["run", "--n-phi", "6"], "n_phi"),
        (["run", "--eta", "1.5"], "eta"),
        (["run", "--tau-t", "0"], "tau_T"),
        (["run", "--k-max", "0"], "k_max"),
        (["run", "--level", "two"], "level"),
        (["frobnicate"], "frobnicate"),
    ],
)
def test_bad_config_exits_1_naming_field(argv, field, capsys):
    assert cli.main(argv) == 1
    assert field in capsys.readouterr().err


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# sweep settings\nlevel = 1\ntau-t = 1e-3\nk_max=5\neta = 0.25\n")
    config, _ = cli.parse_config(["run", "--config", str(cfg), "--level", "0"])
    assert config.level == 0
    assert config.k_max == 5
    dmk = config.dmk_config()
    assert (dmk.tau_T, dmk.eta, dmk.k_max) == (1e-3, 0.25, 5)


@pytest.mark.parametrize("text,field", [("colour = red\n", "colour"), ("level = x\n", "level"), ("level\n", "key = value")])
def test_bad_config_file(tmp_path, capsys, text, field):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(text)
    assert cli.main(["run", "--config", str(cfg)]) == 1
    assert field in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert cli.main(["run", "--config", str(tmp_path / "nope.cfg")]) == 1


def test_sweep_defaults_apply_only_when_unset():
    config = cli.RunConfig(command="convergence")
    assert config.dmk_config(cli.SWEEP_DEFAULTS).tau_T == cli.SWEEP_DEFAULTS["tau_T"]
    config = cli.RunConfig(command="convergence", tau_T=1e-3)
    assert config.dmk_config(cli.SWEEP_DEFAULTS).tau_T == 1e-3
    assert cli.RunConfig().dmk_config().tau_T == 1e-4


def test_export_exact(tmp_path):
    assert cli.main(["export-exact", "--level", "0", "--out", str(tmp_path)]) == 0
    text = (tmp_path / "exact.vtk").read_text()
    assert text.count("SCALARS") == 2 and text.count("VECTORS") == 1
    mesh, cells, points = read_vtk(tmp_path / "exact.vtk")
    assert set(cells) == {"mu_star", "v_star"} and set(points) == {"u_star"}
    assert mesh.n_triangles == 352
    assert np.all(cells["mu_star"] >= 0)
    peak = (np.cos(np.pi / 6) - np.cos(np.pi / 3)) / np.sin(np.pi / 3)
    assert 0.3660254 < cells["mu_star"].max() <= peak
    np.testing.assert_allclose(np.linalg.norm(cells["v_star"], axis=1), cells["mu_star"], atol=1e-12)
    np.testing.assert_allclose(points["u_star"][[0, -1]], [0.0, -np.pi], atol=1e-15)


def test_export_exact_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.main(["export-exact", "--out", str(blocker / "sub")]) == 1


def test_convergence_table_structure(tmp_path, monkeypatch):
    monkeypatch.setattr(cli, "LEVELS", range(0, 2))
    status = cli.main(["convergence", "--tau-t", "1e-3", "--out", str(tmp_path)])
    assert status == 0
    rows = read_rows(tmp_path / "rates.csv")
    assert tuple(rows[0]) == RATE_COLUMNS
    assert [r[0] for r in rows[1:]] == ["0", "1", "slope"]
    assert float(rows[2][1]) == pytest.approx(float(rows[1][1]) / 2, rel=0.03)
    for level in (0, 1):
        assert (tmp_path / f"level_{level}" / "steps.csv").exists()


def test_convergence_partial_table_on_failure(tmp_path, monkeypatch):
    monkeypatch.setattr(cli, "LEVELS", range(0, 2))
    assert cli.main(["convergence", "--k-max", "3", "--out", str(tmp_path)]) == 2
    rows = read_rows(tmp_path / "rates.csv")
    assert len(rows) == 4


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "surfdmk.cli", "run", "--level", "9"],
                         capture_output=True, text=True)
    assert out.returncode == 1 and "level" in out.stderr
