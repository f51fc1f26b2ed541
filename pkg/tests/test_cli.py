import numpy as np
import pytest

from pfem.assembly import read_coo
from pfem.cli import main
from pfem.config import ConfigError, config_from_dict, load_config


def _write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_assemble_shapes(tmp_path, capsys):
    cfg = _write(tmp_path, '[model]\nmodel = "swe1d"\nn = 4\nq_order = 1\np_order = 0\n')
    assert main(["assemble", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    shapes = {n: read_coo(tmp_path / "o" / f"{n}.coo").shape for n in ("M_q", "M_p", "D", "B", "M_psi")}
    assert shapes == {"M_q": (5, 5), "M_p": (4, 4), "D": (5, 4), "B": (5, 2), "M_psi": (2, 2)}
    assert "D: 5x4" in capsys.readouterr().out


def test_assemble_beam_single_element(tmp_path):
    cfg = _write(tmp_path, '[model]\nmodel = "beam"\nn = 1\n')
    assert main(["assemble", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    D = read_coo(tmp_path / "o" / "D.coo")
    B = read_coo(tmp_path / "o" / "B.coo")
    assert D.shape[0] == 4 and B.shape == (4, 4)


def test_missing_config_exit_2(tmp_path):
    assert main(["assemble", "--config", str(tmp_path / "nope.toml")]) == 2
    assert main(["simulate"]) == 2


@pytest.mark.parametrize("text", [
    '[model]\nmodel = "swe3d"\n',
    '[model]\nmodel = "swe1d"\ntypo = 1\n',
    '[model]\nmodel = "swe1d"\n[run]\ndt = 0.0\n',
    '[model]\nmodel = "swe1d"\n[run]\ndt = -1e-3\n',
    '[model]\nmodel = "swe1d"\n[signal]\nsides = { up = 1.0 }\n',
    '[model]\nmodel = "swe1d"\n[extra]\nx = 1\n',
    '[model\nmodel = "swe1d"\n',
])
def test_bad_configs_exit_2(tmp_path, text):
    assert main(["simulate", "--config", _write(tmp_path, text)]) == 2


def test_parse_error_reports_line(tmp_path):
    with pytest.raises(ConfigError, match="line 2"):
        load_config(_write(tmp_path, '[model]\nmodel = \n'))


def test_unknown_key_named():
    with pytest.raises(ConfigError, match="qorder"):
        config_from_dict({"model": {"model": "swe1d", "qorder": 2}})


def test_simulate_writes_outputs_and_is_idempotent(tmp_path, capsys):
    text = ('[model]\nmodel = "swe1d"\nn = 8\n[run]\ndt = 0.01\nt_end = 0.1\nsnapshots = [0.05, 0.1]\n'
            '[signal]\nsides = { left = 1.0, right = 1.0 }\namplitude = 0.01\n')
    cfg = _write(tmp_path, text)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    out = capsys.readouterr().out
    assert "final H" in out and "max volume drift" in out and "max power residual" in out
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    for name in ("trace.csv", "snap_0.05.csv", "snap_0.1.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_simulate_step_failure_exit_3(tmp_path):
    text = ('[model]\nmodel = "swe1d"\nn = 4\n[run]\ndt = 0.5\nt_end = 5.0\n'
            '[signal]\nsides = { left = 1.0 }\namplitude = 1e6\nfunc = "const"\n')
    out = tmp_path / "o"
    assert main(["simulate", "--config", _write(tmp_path, text), "--out", str(out)]) == 3
    assert (out / "trace.csv").exists()


def test_simulate_compare_linearized(tmp_path, capsys):
    text = ('[model]\nmodel = "swe1d"\nn = 16\n[run]\ndt = 0.01\nt_end = 0.5\nsnapshots = [0.5]\n'
            'compare_linearized = true\n[signal]\nsides = { left = 1.0, right = 1.0 }\n'
            'amplitude = "auto"\ntarget = 1e-3\nfactor = {f}\n')
    diffs = []
    for f in (1.0, 100.0):
        assert main(["simulate", "--config", _write(tmp_path, text.replace("{f}", str(f))),
                     "--out", str(tmp_path / str(f))]) == 0
        line = [l for l in capsys.readouterr().out.splitlines() if "difference at t=0.5" in l][0]
        diffs.append(float(line.split(":")[1]))
    assert diffs[1] > diffs[0]


def test_spectrum_beam(tmp_path):
    cfg = _write(tmp_path, '[model]\nmodel = "beam"\nn = 64\n[spectrum]\ncount = 3\n')
    assert main(["spectrum", "--config", cfg, "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "spectrum.csv").read_text().splitlines()
    assert rows[0] == "k,omega,rel_error_vs_omega1_ref" and len(rows) == 4
    assert abs(float(rows[1].split(",")[1]) / 4.73004 ** 2 - 1) < 5e-3


def test_converge_p1p1(tmp_path):
    cfg = _write(tmp_path, '[model]\nmodel = "swe1d"\n[converge]\npairs = [[1, 1]]\n'
                           'levels = [8, 16, 32, 64]\n')
    assert main(["converge", "--config", cfg, "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "convergence.csv").read_text().splitlines()
    errs = [float(l.split(",")[4]) for l in lines[1:]]
    assert len(errs) == 4 and all(a > b for a, b in zip(errs, errs[1:]))


def test_converge_2d_two_levels(tmp_path):
    cfg = _write(tmp_path, '[model]\nmodel = "swe2d"\n[converge]\npairs = [[1, 1]]\nlevels = [2, 4]\n')
    assert main(["converge", "--config", cfg, "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "convergence.csv").read_text().splitlines()
    assert lines[1].split(",")[5] == "" and lines[2].split(",")[5] != ""


def test_verify_default_and_seed(capsys):
    assert main(["verify", "--seed", "123"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("seed 123") and "overall PASS" in out


def test_verify_single_model(tmp_path):
    cfg = _write(tmp_path, '[model]\nmodel = "swe2d-polar"\nnr = 3\nntheta = 6\n'
                           '[verify]\nnstates = 10\nnfd = 2\n')
    assert main(["verify", "--config", cfg, "--out", str(tmp_path / "v")]) == 0
    assert "overall=pass" in (tmp_path / "v" / "verify.kv").read_text()


def test_verify_unknown_model_exit_2(tmp_path):
    assert main(["verify", "--config", _write(tmp_path, '[model]\nmodel = "plate"\n')]) == 2


def test_shipped_configs_parse():
    import pathlib

    for p in sorted(pathlib.Path(__file__).parents[1].joinpath("configs").glob("*.toml")):
        load_config(p)
