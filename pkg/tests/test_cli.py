import csv
import io

import numpy as np
import pytest

from accelfd.cli import main
from accelfd.config import parse_config
from accelfd.errors import ConfigError

HEAT = """\
[experiment]
problem = deterministic_heat_1d
n_coarse = 8
refinements = 3

[output]
name = heat
"""

TRANSPORT = """\
[experiment]
problem = transport_diffusion_1d
n_coarse = 8
refinements = 2
paths = 4
seed = 11

[richardson]
k = 1

[output]
name = tr
"""


@pytest.fixture
def write(tmp_path):
    def _write(text, name="run.ini"):
        path = tmp_path / name
        path.write_text(text)
        return str(path)

    return _write


def test_coeffs_table(capsys):
    assert main(["coeffs", "--k", "1", "--power-step", "2"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[:2] == ["# k=1 power_step=2", "j,rational,decimal"]
    assert out[2].startswith("0,-1/3,") and out[3].startswith("1,4/3,")


def test_coeffs_level_zero(capsys):
    assert main(["coeffs", "--k", "0"]) == 0
    assert capsys.readouterr().out.splitlines()[2] == "0,1,1.0"


def test_coeffs_out_of_range(capsys):
    assert main(["coeffs", "--k", "9"]) == 1
    assert "error" in capsys.readouterr().err


def test_check_reports(capsys):
    assert main(["check", "deterministic_heat_1d", "--n", "16"]) == 0
    out = capsys.readouterr().out
    assert "parabolicity: uniform" in out
    assert "quartic probe" in out
    assert main(["check", "transport_diffusion_1d"]) == 0
    assert "parabolicity: degenerate" in capsys.readouterr().out


def test_check_unknown_problem(capsys):
    assert main(["check", "nope"]) == 1
    assert "available" in capsys.readouterr().err


def test_missing_config(tmp_path, capsys):
    assert main(["converge", "--config", str(tmp_path / "absent.ini")]) == 1
    assert "cannot read config" in capsys.readouterr().err


def test_converge_writes_outputs(write, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["converge", "--config", write(HEAT), "--out", str(out), "--plot-data"]) == 0
    rows = list(csv.reader(io.StringIO((out / "heat.csv").read_text())))
    assert len(rows) == 1 + 3
    assert (out / "heat.meta.json").exists() and (out / "heat.plot.csv").exists()
    assert "fitted slope" in capsys.readouterr().out


def test_seed_override_is_reproducible(write, tmp_path):
    cfg = write(TRANSPORT)
    texts = []
    for d in ("a", "b", "c"):
        assert main(["converge", "--config", cfg, "--seed", "5" if d != "c" else "6", "--out", str(tmp_path / d)]) == 0
        texts.append((tmp_path / d / "tr.csv").read_bytes())
    assert texts[0] == texts[1]
    assert texts[0] != texts[2]


def test_overrides_reach_the_run(write, tmp_path):
    assert main(["converge", "--config", write(TRANSPORT), "--k", "0", "--paths", "2", "--power-step", "1", "--out", str(tmp_path)]) == 0
    rows = list(csv.reader(io.StringIO((tmp_path / "tr.csv").read_text())))
    assert rows[1][1:4] == ["0", "1", "2"]


def test_output_env_var(write, tmp_path, monkeypatch):
    monkeypatch.setenv("ACCELFD_OUT", str(tmp_path / "env"))
    assert main(["converge", "--config", write(HEAT)]) == 0
    assert (tmp_path / "env" / "heat.csv").exists()


def read_dump(text):
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["x", "value"]
    return np.array([[float(v) for v in r] for r in rows[1:]])


def test_solve_zero_operator_returns_initial(write, capsys):
    cfg = write(HEAT.replace("deterministic_heat_1d", "zero_operator_1d"))
    assert main(["solve", "--config", cfg]) == 0
    data = read_dump(capsys.readouterr().out)
    assert data.shape == (8, 2)
    np.testing.assert_array_equal(data[:, 1], np.sin(data[:, 0]))


def test_solve_accelerated_matches_two_solves(write, tmp_path):
    cfg = write(TRANSPORT)
    fine_cfg = write(TRANSPORT.replace("n_coarse = 8", "n_coarse = 16"), "fine.ini")
    files = {}
    for key, args in {
        "coarse": ["--config", cfg],
        "fine": ["--config", fine_cfg],
        "accel": ["--config", cfg, "--accelerate", "k=1"],
    }.items():
        files[key] = tmp_path / f"{key}.csv"
        assert main(["solve", *args, "--path-index", "3", "--out", str(files[key])]) == 0
    coarse, fine, accel = (read_dump(files[k].read_text()) for k in ("coarse", "fine", "accel"))
    np.testing.assert_allclose(accel[:, 1], -coarse[:, 1] / 3 + 4 * fine[::2, 1] / 3, atol=1e-13)


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("[experiment]\nproblem = x\nn_coarse = sixteen\n", "line 3"),
        ("[experiment]\nproblem = x\n\n[bogus]\nk = 1\n", "line 4"),
        ("[experiment]\nproblem = x\nwidth = 3\n", "line 3"),
        ("[richardson]\nk = 1\n", "problem is required"),
    ],
)
def test_config_errors_carry_context(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config(text)


def test_config_full_round():
    cfg = parse_config(TRANSPORT + "\n[integrator]\nscheme = drift_implicit ; comment\ntime_steps = 40\n")
    assert (cfg.problem, cfg.paths, cfg.seed, cfg.k, cfg.scheme, cfg.time_steps) == (
        "transport_diffusion_1d", 4, 11, 1, "drift_implicit", 40,
    )


def test_shipped_configs_parse():
    from pathlib import Path

    paths = sorted((Path(__file__).parents[1] / "configs").glob("*.ini"))
    assert paths
    for path in paths:
        cfg = parse_config(path.read_text(), str(path)).validate()
        assert cfg.refinements >= 2
