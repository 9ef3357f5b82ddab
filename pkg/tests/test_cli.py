import csv
import io
import subprocess
import sys

import numpy as np
import pytest

from igatwo import cli
from igatwo import reference as ref
from igatwo.cli import (
    EXIT_CONFIG,
    EXIT_DELTA,
    EXIT_OK,
    LFA_HEADER,
    RATE_HEADER,
    REPRODUCE_HEADER,
    SOLVE_HEADER,
    ResultTable,
    main,
    parse_config,
)


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_solve_csv_schema(capsys):
    code, out, _ = run(["solve", "--p", "2", "--m", "16"], capsys)
    assert code == EXIT_OK
    table = rows(out)
    assert table[0] == SOLVE_HEADER
    row = dict(zip(table[0], table[1]))
    assert row["preset"] == "square" and row["block"] == "9" and row["strategy"] == "aggressive+vcycle"
    assert 1 <= int(row["iterations"]) <= 10
    assert float(row["rel_residual"]) <= 1e-8
    assert float(row["l2_error"]) < 1e-3


def test_solve_annulus(capsys):
    code, out, _ = run(["solve", "--preset", "annulus", "--p", "3", "--m", "16", "--coarse", "direct"], capsys)
    assert code == EXIT_OK
    row = dict(zip(*rows(out)))
    assert row["strategy"] == "direct" and int(row["iterations"]) <= 10


def test_no_timings_is_byte_identical(tmp_path):
    outs = []
    for k in range(2):
        path = tmp_path / f"run{k}.csv"
        assert main(["solve", "--p", "3", "--m", "16", "--seed", "4", "--no-timings", "--out", str(path)]) == EXIT_OK
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
    assert b",," in outs[0]  # empty wall-time field


def test_rate_command(capsys):
    code, out, _ = run(["rate", "--p", "2", "--m", "16", "--sweeps", "30"], capsys)
    assert code == EXIT_OK
    table = rows(out)
    assert table[0] == RATE_HEADER
    row = dict(zip(*table))
    assert 0 < float(row["rho_h"]) < 0.3
    assert abs(float(row["delta"])) < 0.1


def test_lfa_command_four_significant_digits(capsys):
    code, out, _ = run(["lfa", "--p", "2", "--block", "9", "--n-torus", "30"], capsys)
    assert code == EXIT_OK
    table = rows(out)
    assert table[0] == LFA_HEADER
    rho = table[1][5]
    assert len(rho.replace("0.", "", 1).lstrip("0")) <= 4
    assert 0.05 < float(rho) < 0.2


def test_reproduce_schema(capsys):
    code, out, _ = run(["reproduce", "--table", "3", "--degrees", "2", "--n-torus", "30"], capsys)
    table = rows(out)
    assert table[0] == REPRODUCE_HEADER
    assert len(table) == 4
    assert code == (EXIT_OK if all(r[-1] == "true" for r in table[1:]) else EXIT_DELTA)


def test_reproduce_delta_exit_code(capsys, monkeypatch):
    monkeypatch.setitem(ref.SQUARE_ITERATIONS, (2, 64), 50)
    monkeypatch.setattr(ref, "DESK_MESHES", {4: (64,), 5: (32,)})
    code, out, _ = run(["reproduce", "--table", "4", "--degrees", "2"], capsys)
    assert code == EXIT_DELTA
    assert rows(out)[1][-1] == "false"


@pytest.mark.parametrize(
    "argv",
    [
        ["solve", "--p", "9"],
        ["solve", "--preset", "annulus", "--p", "2"],
        ["solve", "--block", "16"],
        ["solve", "--coarse", "amg"],
        ["lfa", "--n-torus", "40"],
        ["bogus"],
        ["rate", "--sweeps", "5"],
        ["reproduce", "--table", "7"],
    ],
)
def test_config_errors_exit_1(argv, capsys):
    code, out, err = run(argv, capsys)
    assert code == EXIT_CONFIG
    assert out == "" and "configuration error" in err


def test_config_file_and_precedence(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\npreset = annulus\np = 4\nm = 32  # inline\nn-torus = 54\ntimings = off\n")
    cfg = parse_config(["solve", "--config", str(path), "--m", "64"])
    assert (cfg.preset, cfg.p, cfg.m, cfg.n_torus, cfg.timings) == ("annulus", 4, 64, 54, False)
    assert cfg.p_low == 2 and cfg.block_size == 9


@pytest.mark.parametrize("text", ["p = four\n", "unknown = 1\n", "no equals sign\n", "timings = maybe\n"])
def test_bad_config_file(tmp_path, text, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text(text)
    assert main(["solve", "--config", str(path)]) == EXIT_CONFIG


def test_missing_config_file(tmp_path, capsys):
    assert main(["solve", "--config", str(tmp_path / "nope.cfg")]) == EXIT_CONFIG


def test_coarse_alias():
    assert parse_config(["solve", "--coarse", "aggressive"]).coarse == "aggressive+vcycle"


def test_result_table_formatting():
    t = ResultTable(["a", "b", "c", "d"])
    t.add([0.123456, True, None, np.nan])
    assert t.to_csv() == "a,b,c,d\n0.1235,true,,nan\n"
    with pytest.raises(ValueError):
        t.add([1])


def test_annulus_rhs_matches_finite_differences():
    x, y = 0.21, 0.33
    u = cli.annulus_exact

    def lap(h):
        return (u(x + h, y) + u(x - h, y) + u(x, y + h) + u(x, y - h) - 4 * u(x, y)) / h**2

    richardson = (4 * lap(1e-3) - lap(2e-3)) / 3
    assert cli.annulus_rhs(x, y) == pytest.approx(-richardson, rel=1e-7)


def test_console_entry_point():
    res = subprocess.run(
        [sys.executable, "-m", "igatwo.cli", "lfa", "--p", "1", "--block", "9", "--n-torus", "18"],
        capture_output=True, text=True,
    )
    assert res.returncode == 0
    assert res.stdout.splitlines()[0] == ",".join(LFA_HEADER)
