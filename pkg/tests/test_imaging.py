import math

import numpy as np
import pytest

from gmmvlim.core import Circle, ContrastMap, Grid2D, SceneSpec, rasterize_scene
from gmmvlim.errors import GeometryError, GmmvError
from gmmvlim.imaging import (ImageField, blobs, dilate, export_field, gmmv_image, read_csv_grid,
                             support_metrics, threshold_support, to_db, write_curve)

G = Grid2D(-0.01, -0.01, 0.001, 20, 20)


def test_gmmv_image_is_row_energy(rng):
    J = rng.standard_normal((G.N, 3)) + 1j * rng.standard_normal((G.N, 3))
    img = gmmv_image(J, G)
    assert np.allclose(img.values, np.sum(np.abs(J) ** 2, axis=1))


def test_db_scaling():
    v = np.zeros(G.N)
    v[:3] = [1.0, 0.1, 0.01]
    db = to_db(ImageField(G, v))
    assert db.values[:3].tolist() == pytest.approx([0.0, -10.0, -20.0])
    assert np.isneginf(db.values[3])
    assert to_db(db) is db
    with pytest.raises(GmmvError) as e:
        to_db(ImageField(G, np.zeros(G.N)))
    assert e.value.code == "ALL_ZERO_IMAGE"


def test_image_validation():
    with pytest.raises(GeometryError):
        ImageField(G, np.ones(5))
    with pytest.raises(ValueError):
        ImageField(G, -np.ones(G.N))


def test_blobs_use_four_connectivity():
    m = np.zeros((5, 5), bool)
    m[1, 1] = m[2, 2] = True          # diagonal neighbours: separate
    m[4, 0] = m[4, 1] = True
    _, n = blobs(m)
    assert n == 3


def test_dilate_disc():
    m = np.zeros((9, 9), bool)
    m[4, 4] = True
    d = dilate(m, 2.0)
    assert d.sum() == 13 and d[4, 2] and not d[2, 2]
    assert np.array_equal(dilate(m, 0), m)


def test_support_metrics_on_truth():
    truth = rasterize_scene(SceneSpec((Circle(eps_r=2, center=(-0.005, 0.0), radius=0.003),
                                       Circle(eps_r=2, center=(0.005, 0.0), radius=0.003))), G)
    img = ImageField(G, truth.support.astype(float) + 1e-9)
    db = to_db(img)
    s = support_metrics(threshold_support(db), truth, db, wavelength_min=0.004)
    assert s.jaccard == 1.0 and s.n_blobs == 2
    assert np.allclose(s.centroid_errors, 0, atol=1e-12)
    assert s.peak_sidelobe_db == pytest.approx(-90.0)
    # exterior levels are floored at -60 dB
    assert s.mean_exterior_db == pytest.approx(-60.0)
    assert set(s.to_dict()) >= {"jaccard", "n_blobs", "mean_exterior_db"}


def test_jaccard_of_shifted_mask():
    truth = rasterize_scene(SceneSpec((Circle(eps_r=2, radius=0.005),)), G)
    t2 = truth.support.reshape(G.shape)
    shifted = np.roll(t2, 2, axis=1).ravel()
    img = ImageField(G, shifted.astype(float))
    s = support_metrics(shifted, truth, to_db(img), 0.004)
    inter = np.count_nonzero(shifted & truth.support)
    union = np.count_nonzero(shifted | truth.support)
    assert s.jaccard == pytest.approx(inter / union)
    assert s.centroid_errors[0] == pytest.approx(0.002, abs=1e-12)


def test_metrics_grid_mismatch():
    truth = ContrastMap.empty(Grid2D(0, 0, 1, 2, 2))
    with pytest.raises(GeometryError):
        support_metrics(np.zeros(G.N, bool), truth, to_db(ImageField(G, np.ones(G.N))), 1.0)


def test_csv_roundtrip(tmp_path, rng):
    img = ImageField(G, rng.random(G.N))
    p = export_field(img, tmp_path / "a.csv")
    back = read_csv_grid(p)
    assert back.grid == G and np.array_equal(back.values, img.values)
    first = p.read_text().splitlines()[0]
    assert first.split(",")[:2] == ["20", "20"]


def test_pgm_orientation(tmp_path):
    v = np.zeros(G.shape)
    v[-1, 0] = 1.0                      # largest y, smallest x
    p = export_field(ImageField(G, v.ravel()), tmp_path / "a.pgm", "pgm8")
    data = p.read_bytes()
    header = b"P5\n20 20\n255\n"
    assert data.startswith(header)
    pix = np.frombuffer(data[len(header):], np.uint8).reshape(20, 20)
    assert pix[0, 0] == 255 and pix.sum() == 255


def test_png_export(tmp_path):
    from PIL import Image
    v = np.linspace(0, 1, G.N) + 1e-6
    p = export_field(ImageField(G, v), tmp_path / "a.png", "png")
    assert Image.open(p).size == (20, 20)


def test_export_errors(tmp_path):
    img = ImageField(G, np.ones(G.N))
    with pytest.raises(ValueError):
        export_field(img, tmp_path / "x", "tiff")
    with pytest.raises(GmmvError) as e:
        export_field(img, tmp_path / "missing" / "x.csv")
    assert e.value.code == "IO_ERROR"


def test_write_curve(tmp_path):
    p = write_curve(tmp_path / "c.txt", [0.5, 0.25])
    assert p.read_text() == "0 0.5\n1 0.25\n"
