import csv
import math
import shutil
import subprocess
import sys

import numpy as np
import pytest

from coarea_tv import __version__
from coarea_tv.cli import data_path, eval_number, header_line, main, parse_experiment_config
from coarea_tv.exceptions import ConfigurationError
from coarea_tv.io import read_pgm, write_pgm
from coarea_tv.stencil import format_potential, zero_potential

HEADER_PREFIX = f"# coarea-tv {__version__} seed="


def read_table(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith(HEADER_PREFIX)
    return list(csv.DictReader(lines[1:]))


@pytest.fixture
def zero_file(tmp_path):
    p = tmp_path / "zero.pot"
    p.write_text(format_potential(zero_potential()))
    return p


@pytest.fixture
def corrupted_file(tmp_path):
    text = open(data_path("nearest_neighbor.pot")).read().splitlines()
    kept = [ln for ln in text if not ln.startswith("011")]
    assert len(kept) == len(text) - 1
    p = tmp_path / "corrupted.pot"
    p.write_text("\n".join(kept) + "\n")
    return p


# ---------------------------------------------------------------------------
# check

@pytest.mark.parametrize("name", ["nearest_neighbor.pot", "binary_euclidean.pot", "diagonal_pairs.pot"])
def test_check_bundled_passes(capsys, name):
    assert main(["check", data_path(name), "--samples", "300"]) == 0
    out = capsys.readouterr().out
    assert out.startswith(HEADER_PREFIX + "42 config=")
    assert "result: pass" in out


def test_check_reports_coercivity(capsys):
    main(["check", "nearest_neighbor", "--samples", "50"])
    assert "coercivity: c=1.0 pass" in capsys.readouterr().out
    main(["check", "binary_euclidean", "--samples", "50"])
    line = next(ln for ln in capsys.readouterr().out.splitlines() if ln.startswith("coercivity"))
    assert float(line.split("=")[1].split()[0]) == pytest.approx(1 / math.sqrt(2), abs=1e-15)


def test_check_corrupted_file_exits_two(corrupted_file, capsys):
    assert main(["check", str(corrupted_file)]) == 2
    assert "missing" in capsys.readouterr().err


def test_check_missing_file_exits_two(tmp_path):
    assert main(["check", str(tmp_path / "nope.pot")]) == 2


def test_check_zero_potential_fails(zero_file, capsys):
    assert main(["check", str(zero_file), "--samples", "50"]) == 1
    assert "coercivity: c=0.0 FAIL" in capsys.readouterr().out


def test_check_non_submodular_prints_witness(tmp_path, capsys):
    p = tmp_path / "bad.pot"
    p.write_text("dim 2\noffsets\n0 0\n1 0\n0 1\nvalues\n000 0\n001 1\n010 1\n011 3\n"
                 "100 0\n101 0\n110 0\n111 0\n")
    assert main(["check", str(p), "--samples", "200"]) == 1
    out = capsys.readouterr().out
    assert "submodular: FAIL" in out and "witness u=" in out


# ---------------------------------------------------------------------------
# anisotropy

def test_anisotropy_three_bundled(tmp_path, capsys):
    out = tmp_path / "new" / "dir"
    names = ["nearest_neighbor", "binary_euclidean", "diagonal_pairs"]
    assert main(["anisotropy", *[data_path(n + ".pot") for n in names], "--samples", "8",
                 "--output-dir", str(out)]) == 0
    for n in names:
        assert len(read_table(out / f"frank_{n}.csv")) == 8
    phi_nn = read_table(out / "phi_nearest_neighbor.csv")
    for row in phi_nn:
        assert float(row["phi"]) == pytest.approx(abs(float(row["nu_x"])) + abs(float(row["nu_y"])), abs=1e-12)
    # eight directions: index 1 is the diagonal, where binary_euclidean has phi = 1
    phi_be = read_table(out / "phi_binary_euclidean.csv")
    assert float(phi_be[1]["phi"]) == pytest.approx(1.0, abs=1e-12)
    assert float(phi_be[0]["phi"]) == pytest.approx(1.0, abs=1e-12)


def test_anisotropy_refuses_zero_potential(zero_file, tmp_path, capsys):
    assert main(["anisotropy", str(zero_file), "--output-dir", str(tmp_path / "o")]) == 1
    assert "coercive" in capsys.readouterr().err
    assert not (tmp_path / "o" / "frank_zero.csv").exists()


# ---------------------------------------------------------------------------
# converge

CONFIG = """\
name=axis
kind=halfspace
potential_file=nearest_neighbor
nu=1,0
h_max=2^-3
h_min=2^-5

name=square
kind=polygon
potential_file=binary_euclidean.pot
polygon=0.25,0.25; 0.75,0.25; 0.75,0.75; 0.25,0.75
h_max=1/8
h_min=1/32

name=layers
kind=function_tv
potential_file=nearest_neighbor
layers=3: 0.25,0.25; 0.75,0.25; 0.75,0.75; 0.25,0.75
h_max=2^-3
h_min=2^-4
"""


def test_converge_writes_tables(tmp_path, capsys):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(CONFIG)
    assert main(["converge", str(cfg), "--output-dir", str(tmp_path / "out")]) == 0
    axis = read_table(tmp_path / "out" / "axis.csv")
    assert [float(r["h"]) for r in axis] == [0.125, 0.0625, 0.03125]
    assert float(axis[0]["Jh"]) == 0.875 and float(axis[0]["limit"]) == 1.0
    sq = read_table(tmp_path / "out" / "square.csv")
    assert float(sq[0]["limit"]) == pytest.approx(2.0)
    lay = read_table(tmp_path / "out" / "layers.csv")
    assert float(lay[0]["limit"]) == pytest.approx(6.0)


def test_converge_byte_identical_reruns(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(CONFIG)
    main(["converge", str(cfg), "--output-dir", str(tmp_path / "a")])
    main(["converge", str(cfg), "--output-dir", str(tmp_path / "b")])
    for name in ("axis", "square", "layers"):
        assert (tmp_path / "a" / f"{name}.csv").read_bytes() == (tmp_path / "b" / f"{name}.csv").read_bytes()


def test_converge_empty_is_noop(tmp_path, capsys):
    cfg = tmp_path / "empty.cfg"
    cfg.write_text("# nothing here\n\n")
    assert main(["converge", str(cfg), "--output-dir", str(tmp_path / "out")]) == 0
    assert main(["converge", "--output-dir", str(tmp_path / "out")]) == 0
    assert "no experiments" in capsys.readouterr().out
    assert not (tmp_path / "out").exists()


def test_converge_bad_config_exits_two(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("kind halfspace\n")
    assert main(["converge", str(cfg), "--output-dir", str(tmp_path)]) == 2


def test_converge_margin_failure_exits_one(tmp_path, capsys):
    cfg = tmp_path / "m.cfg"
    cfg.write_text("name=big\nkind=polygon\npotential_file=nearest_neighbor\n"
                   "polygon=0.01,0.01; 0.99,0.01; 0.99,0.99; 0.01,0.99\nh_max=1/8\nh_min=1/16\n")
    assert main(["converge", str(cfg), "--output-dir", str(tmp_path / "o")]) == 1
    assert "margin" in capsys.readouterr().err


def test_bundled_configs_run(tmp_path, capsys):
    cfgs = [data_path("configs/halfspace.cfg"), data_path("configs/polygon.cfg")]
    assert main(["converge", *cfgs, "--output-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 9
    for line in out:
        assert float(line.rsplit("rel_err=", 1)[1]) < 0.05


def test_config_parsing_helpers():
    blocks = parse_experiment_config("a=1\nb = 2 # note\n\n\nc=3\n")
    assert blocks == [{"a": "1", "b": "2"}, {"c": "3"}]
    assert eval_number("2^-3") == 0.125 and eval_number("1/4") == 0.25
    assert eval_number("sqrt(2)") == math.sqrt(2)
    with pytest.raises(ConfigurationError):
        eval_number("two")


# ---------------------------------------------------------------------------
# denoise

def test_denoise_constant_image_is_unchanged(tmp_path, capsys):
    src = tmp_path / "in.pgm"
    write_pgm(src, np.full((6, 5), 0.4))
    dst = tmp_path / "out.pgm"
    assert main(["denoise", "--input", str(src), "--output", str(dst), "--output-dir", str(tmp_path / "r")]) == 0
    assert read_pgm(dst)[0].tolist() == read_pgm(src)[0].tolist()
    assert dst.read_bytes() == src.read_bytes()
    report = (tmp_path / "r" / "report.txt").read_text().splitlines()
    assert report[0].startswith(HEADER_PREFIX) and report[1].startswith("energy=0.0, iters=")
    assert (tmp_path / "r" / "trace.csv").read_text().splitlines()[1] == "iter,energy,residual"


def test_denoise_noisy_image(tmp_path, capsys, rng):
    img = np.full((12, 12), 0.25)
    img[:, 6:] = 0.75
    src = tmp_path / "in.pgm"
    write_pgm(src, img + 0.05 * rng.normal(size=img.shape), binary=False)
    dst = tmp_path / "out.pgm"
    assert main(["denoise", "--input", str(src), "--output", str(dst), "--lambda", "2", "--ascii"]) == 0
    assert dst.read_bytes().startswith(b"P2")
    out, _ = read_pgm(dst)
    noisy, _ = read_pgm(src)

    def tv(a):
        return np.abs(np.diff(a, axis=0)).sum() + np.abs(np.diff(a, axis=1)).sum()

    assert tv(out) < 0.5 * tv(noisy)
    assert noisy.min() <= out.min() and out.max() <= noisy.max()
    assert capsys.readouterr().out.startswith("energy=")


def test_denoise_oracle_solver(tmp_path):
    src = tmp_path / "in.pgm"
    write_pgm(src, np.array([[0.0, 1.0, 0.0], [1.0, 1.0, 0.0]]))
    assert main(["denoise", "--input", str(src), "--output", str(tmp_path / "o.pgm"), "--solver", "oracle"]) == 0


def test_denoise_unreadable_input(tmp_path):
    bad = tmp_path / "bad.pgm"
    bad.write_bytes(b"P9\n")
    assert main(["denoise", "--input", str(bad), "--output", str(tmp_path / "o.pgm")]) == 2


def test_denoise_oracle_too_large_exits_one(tmp_path):
    src = tmp_path / "in.pgm"
    write_pgm(src, np.eye(5))
    assert main(["denoise", "--input", str(src), "--output", str(tmp_path / "o.pgm"), "--solver", "oracle"]) == 1


# ---------------------------------------------------------------------------
# selftest and plumbing

def test_selftest_passes(capsys):
    assert main(["selftest", "--samples", "50"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith(HEADER_PREFIX + "0 config=")
    assert lines[1:] and all(ln.startswith("PASS ") for ln in lines[1:])


def test_header_line_records_config_hash():
    a = header_line(3, "x=1")
    assert a.startswith(HEADER_PREFIX + "3 config=") and len(a.rsplit("=", 1)[1]) == 16
    assert a != header_line(3, "x=2")


def test_parse_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_console_script():
    exe = shutil.which("coarea-tv")
    cmd = [exe] if exe else [sys.executable, "-m", "coarea_tv.cli"]
    res = subprocess.run(cmd + ["check", "nearest_neighbor", "--samples", "20"], capture_output=True, text=True)
    assert res.returncode == 0 and "result: pass" in res.stdout
