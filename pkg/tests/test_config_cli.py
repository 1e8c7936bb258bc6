import csv
import io
import math

import numpy as np
import pytest

from ttvib.cli import EXIT_CONFIG, EXIT_OK, main, run_solve
from ttvib.config import ConfigError, load_config, parse_config
from ttvib.container import header_bytes, read_block
from ttvib.models import lowest_coupled_energies

from reference_values import COUPLED_D2_B10

SMALL = """
[model]
kind = coupled
d = 2
n = 10
alpha = 0.1

[solver]
B = 4
seed = 1

[lobpcg]
rank = 6
max_iter = 20

[sii]
ranks = 8

[output]
directory = {out}
"""


def _write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


# ------------------------------------------------------------------ config

def test_defaults_and_overrides():
    cfg = parse_config("[solver]\nB = 3\n[sii]\nranks = 10, 12\n")
    assert cfg.model.kind == "coupled" and cfg.model.mode_sizes == (15, 15)
    assert cfg.solver.B == 3 and cfg.sii.ranks == (10, 12)
    assert cfg.lobpcg.block_method == "als"
    assert cfg.sii.als.local_tol == 1e-8


@pytest.mark.parametrize("text", [
    "[model]\ncolor = blue\n",
    "[extra]\nx = 1\n",
    "[model]\nkind = quantum\n",
    "[model]\nd = two\n",
    "[model]\nd = 3\nn = 5, 5\n",
    "[solver]\nB = 0\n",
    "[solver]\nB = 1000\n",
    "[lobpcg]\nblock_method = magic\n",
    "[sii]\nranks = 0\n",
    "[model]\nkind = pes\nn = 3, 3\n",
    "[model]\nkind = pes\nn = 3, 3\ncoefficients = nowhere.txt\n",
    "not an ini file",
])
def test_parse_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_echo_round_trip():
    cfg = parse_config("[model]\nd = 3\nn = 6\n[solver]\nB = 5\nseed = 9\n")
    again = parse_config(cfg.echo())
    assert again.echo() == cfg.echo()
    assert again.model == cfg.model and again.solver == cfg.solver
    assert again.lobpcg == cfg.lobpcg and again.sii == cfg.sii


def test_with_seed():
    cfg = parse_config("").with_seed(42)
    assert cfg.solver.seed == 42 and "seed = 42" in cfg.echo()


def test_pes_coefficients_resolved(tmp_path):
    (tmp_path / "ff.txt").write_text("w 0 1.0\nw 1 1.5\nc 0 0 1 0.01\n")
    path = _write(tmp_path, "[model]\nkind = pes\nn = 6, 6\ncoefficients = ff.txt\n"
                            "[solver]\nB = 2\n")
    cfg = load_config(path)
    assert cfg.model.coefficients == str((tmp_path / "ff.txt").resolve())


def test_bundled_configs_load():
    cfg = load_config("coupled_d2.cfg")
    assert cfg.model.d == 2 and cfg.solver.B == 10
    big = load_config("coupled_d16.cfg")
    assert big.model.d == 16 and big.solver.B == 20 and big.sii.ranks == (15,)
    with pytest.raises(ConfigError):
        load_config("no_such_config.cfg")


# --------------------------------------------------------------------- CLI

def test_run_small_config(tmp_path):
    out = tmp_path / "out"
    path = _write(tmp_path, SMALL.format(out=out))
    buf = io.StringIO()
    code, rep = run_solve(path, verify=True, out=buf)
    assert code == EXIT_OK
    ref, _ = lowest_coupled_energies((math.sqrt(0.5), 1.0), 0.1, 4)
    assert np.allclose(rep.eigenvalues, ref, rtol=1e-6)      # n=10 grid error only
    rows = list(csv.reader(open(out / "energies.csv")))
    assert rows[0] == ["index", "eigenvalue", "residual"] and len(rows) == 5
    assert float(rows[1][1]) == rep.eigenvalues[0]            # 17 digits round-trip
    hist = list(csv.reader(open(out / "history.csv")))
    assert hist[0] == ["stage", "iteration", "index", "eigenvalue", "residual"]
    assert {r[0] for r in hist[1:]} == {"lobpcg", "sii"}
    report = (out / "report.txt").read_text()
    assert "[config]" in report and "verify dense" in report and "storage: payload" in report
    block = read_block(out / "eigenvectors.ttv")
    size = (out / "eigenvectors.ttv").stat().st_size
    payload = 8 * sum(x.num_params for x in block)
    assert size - header_bytes(2, 4) == payload
    assert f"payload {payload} bytes" in report
    assert len(buf.getvalue().split()) == 4


def test_report_echo_reproduces_run(tmp_path):
    out = tmp_path / "out"
    path = _write(tmp_path, SMALL.format(out=out))
    run_solve(path, out=io.StringIO())
    first = (out / "energies.csv").read_bytes()
    report = (out / "report.txt").read_text()
    echo = report.split("[run]")[0].replace("[config]\n", "", 1)
    again = _write(tmp_path, echo, "echo.cfg")
    run_solve(again, out=io.StringIO())
    assert (out / "energies.csv").read_bytes() == first


def test_same_seed_byte_identical(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"out{k}"
        run_solve(_write(tmp_path, SMALL.format(out=out), f"r{k}.cfg"), out=io.StringIO())
        outs.append(((out / "energies.csv").read_bytes(), (out / "history.csv").read_bytes()))
    assert outs[0] == outs[1]


def test_resume_from_checkpoint(tmp_path):
    out = tmp_path / "out"
    path = _write(tmp_path, SMALL.format(out=out))
    _, first = run_solve(path, out=io.StringIO())
    ckpt = tmp_path / "saved.ttv"
    ckpt.write_bytes((out / "eigenvectors.ttv").read_bytes())
    code = main(["run", str(path), "--resume", str(ckpt)])
    assert code == EXIT_OK
    assert "resumed from" in (out / "report.txt").read_text()
    energies = [float(r[1]) for r in list(csv.reader(open(out / "energies.csv")))[1:]]
    assert np.allclose(energies, first.eigenvalues, rtol=1e-10)


def test_main_exit_codes(tmp_path, capsys):
    bad = _write(tmp_path, "[model]\ncolour = red\n")
    assert main(["run", str(bad)]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG
    with pytest.raises(SystemExit):
        main(["frobnicate"])


def test_seed_override(tmp_path):
    out = tmp_path / "out"
    path = _write(tmp_path, SMALL.format(out=out))
    assert main(["run", str(path), "--seed", "7"]) == EXIT_OK
    assert "seed = 7" in (out / "report.txt").read_text()


@pytest.mark.slow
def test_bundled_d2_config(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    code, rep = run_solve("coupled_d2.cfg", verify=True, out=io.StringIO())
    assert code == EXIT_OK
    assert np.all(np.abs(rep.eigenvalues - COUPLED_D2_B10) <= 1e-8 * np.abs(COUPLED_D2_B10))
    assert (tmp_path / "out_coupled_d2" / "energies.csv").exists()
