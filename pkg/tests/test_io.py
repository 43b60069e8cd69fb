import numpy as np
import pytest

from coarea_tv.exceptions import ConfigurationError
from coarea_tv.io import grid_function_csv, grid_function_from_image, read_pgm, write_csv, write_pgm
from coarea_tv.lattice import GridDomain, GridFunction


@pytest.mark.parametrize("binary", [True, False])
@pytest.mark.parametrize("maxval", [255, 65535])
def test_pgm_round_trip(tmp_path, rng, binary, maxval):
    raw = rng.integers(0, maxval + 1, size=(5, 7))
    path = tmp_path / "img.pgm"
    write_pgm(path, raw / maxval, maxval=maxval, binary=binary)
    img, mapping = read_pgm(path)
    assert img.shape == (5, 7) and mapping.maxval == maxval
    assert np.array_equal(np.rint(mapping.to_raw(img)).astype(int), raw)


def test_pgm_header_comments(tmp_path):
    path = tmp_path / "c.pgm"
    path.write_bytes(b"P2\n# comment\n2 1\n# another\n10\n0 10\n")
    img, _ = read_pgm(path)
    assert np.array_equal(img, [[0.0, 1.0]])


@pytest.mark.parametrize(
    "data",
    [b"P3\n1 1\n255\n0 0 0\n", b"P2\n2 2\n255\n1 2\n", b"P5\n2 2\n255\n\x00", b"P2\n2", b"P2\na b\n255\n"],
)
def test_pgm_rejects_bad_files(tmp_path, data):
    path = tmp_path / "bad.pgm"
    path.write_bytes(data)
    with pytest.raises(ConfigurationError):
        read_pgm(path)


def test_pgm_clips_out_of_range(tmp_path):
    path = tmp_path / "clip.pgm"
    write_pgm(path, np.array([[-1.0, 0.5, 2.0]]))
    img, _ = read_pgm(path)
    assert img[0, 0] == 0.0 and img[0, 2] == 1.0


def test_image_axes():
    img = np.arange(6.0).reshape(2, 3)
    u = grid_function_from_image(img, h=0.5)
    assert u.domain.shape == (2, 3) and u.domain.h == 0.5
    assert np.array_equal(u.values, img)


def test_grid_function_csv():
    dom = GridDomain.from_predicate((0, 0), (1, 1), 0.5, lambda c: c[..., 0] < 0.5)
    u = GridFunction(dom, np.array([[1.0, 2.0], [3.0, 4.0]]))
    lines = grid_function_csv(u, header="# h").splitlines()
    assert lines[0] == "# h" and lines[1] == "x_1,x_2,value"
    assert lines[2:] == ["0.0,0.0,1.0", "0.0,0.5,2.0"]


def test_write_csv(tmp_path):
    path = tmp_path / "t.csv"
    write_csv(path, ["a", "b"], [(1, 0.1), (2, 0.25)], header="# x")
    assert path.read_text() == "# x\na,b\n1,0.1\n2,0.25\n"
