import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gmmvlim.checks import adjoint_error, column_errors
from gmmvlim.core import MU0, FrequencySet, Grid2D, MeasurementConfig, ring_positions
from gmmvlim.errors import DimensionError, GeometryError, GmmvError
from gmmvlim.greens import green2d, pairwise_distance
from gmmvlim.sensing import (SensingOperator, build_sensing_fdfd, build_sensing_greens, load_operator,
                             operator_key, refinement_factor, save_operator)


def test_greens_entries(small_cfg, small_op):
    g, cfg = small_cfg.grid, small_cfg.measurement
    i, q, n = 1, 5, 17
    omega = small_cfg.frequencies.omega[i]
    k = omega / 299_792_458.0
    r = np.hypot(*(cfg.receivers[q] - g.cell_centers()[n]))
    assert small_op.G[i][q, n] == pytest.approx(omega * MU0 * g.delta**2 * green2d(k, r), rel=1e-13)


def test_block_selects_links(small_cfg, small_op):
    p = 3
    B = small_op.block(p, 0)
    assert B.shape == (small_cfg.measurement.links[p].size, small_op.N)
    assert np.array_equal(B, small_op.G[0][small_cfg.measurement.links[p]])


def test_forward_matches_blockwise_products(small_cfg, small_op, rng):
    J = rng.standard_normal(small_op.shape_sources) + 1j * rng.standard_normal(small_op.shape_sources)
    Z = small_op.forward(J, "all")
    m = small_cfg.measurement
    for i in range(small_op.I):
        for p in range(small_op.P):
            col = i * small_op.P + p
            expect = small_op.block(p, i) @ J[:, col]
            assert np.allclose(Z[m.links[p], col], expect)
            others = np.setdiff1d(np.arange(m.n_receivers), m.links[p])
            assert not np.any(Z[others, col])


def test_row_classes_partition(small_op, rng):
    J = rng.standard_normal(small_op.shape_sources) + 0j
    assert np.allclose(small_op.forward(J, "recon") + small_op.forward(J, "cv"), small_op.forward(J, "all"))
    with pytest.raises(ValueError):
        small_op.mask("bogus")


@pytest.mark.parametrize("rows", ["recon", "cv", "all"])
def test_adjoint_identity(small_op, rows):
    assert adjoint_error(small_op, seed=7, rows=rows) < 1e-12


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_adjoint_identity_property(seed):
    g = Grid2D(-0.01, -0.01, 0.004, 5, 5)
    cfg = MeasurementConfig.full(ring_positions(0.3, 3), ring_positions(0.4, 7, 10))
    op = build_sensing_greens(g, cfg, FrequencySet([1e9, 3e9]))
    assert adjoint_error(op, seed) < 1e-12


def test_shape_errors(small_op):
    with pytest.raises(DimensionError):
        small_op.forward(np.zeros((3, 3)))
    with pytest.raises(DimensionError):
        small_op.adjoint(np.zeros((3, 3)))
    with pytest.raises(DimensionError):
        SensingOperator([small_op.G[0]], small_op.grid, small_op.config, small_op.frequencies)


def test_receiver_inside_grid_rejected():
    g = Grid2D(-0.1, -0.1, 0.01, 20, 20)
    cfg = MeasurementConfig.full(ring_positions(0.5, 2), ring_positions(0.05, 4))
    with pytest.raises(GeometryError) as e:
        build_sensing_greens(g, cfg, FrequencySet([1e9]))
    assert e.value.code == "RECEIVER_INSIDE_GRID"


def test_subset_frequencies(small_op):
    sub = small_op.subset_frequencies([1])
    assert sub.I == 1 and sub.G[0] is small_op.G[1]


def test_refinement_factor():
    assert refinement_factor(0.0025, 0.0375) == 3      # 2.67 -> 3
    assert refinement_factor(0.0025, 0.15) == 1
    assert refinement_factor(0.0025, 0.05) == 3        # exactly 2 -> next odd
    assert refinement_factor(0.0013, 0.01874) == 3


def test_fdfd_rows_match_greens(small_cfg):
    cfg = MeasurementConfig.full(small_cfg.measurement.sources[:1], small_cfg.measurement.receivers[::6])
    og = build_sensing_greens(small_cfg.grid, cfg, small_cfg.frequencies)
    of = build_sensing_fdfd(small_cfg.grid, cfg, small_cfg.frequencies)
    worst = max(e.max() for e in column_errors(og, of))
    assert worst < 0.05


def test_cache_roundtrip(tmp_path, small_cfg, small_op):
    key = operator_key(small_cfg.grid, small_cfg.measurement, small_cfg.frequencies)
    path = save_operator(small_op, tmp_path / "op.bin", key)
    op = load_operator(path, small_cfg.measurement, key)
    for a, b in zip(op.G, small_op.G):
        # complex64 payload
        assert np.allclose(a, b, rtol=1e-6, atol=1e-7 * np.abs(b).max())
    assert op.grid == small_op.grid
    assert save_operator(op, tmp_path / "op2.bin", key).read_bytes() == path.read_bytes()


def test_cache_corrupt_and_stale(tmp_path, small_cfg, small_op):
    path = save_operator(small_op, tmp_path / "op.bin", "abc")
    with pytest.raises(GmmvError) as e:
        load_operator(path, small_cfg.measurement, "xyz")
    assert e.value.code == "CACHE_STALE"
    data = bytearray(path.read_bytes())
    data[-5] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(GmmvError) as e:
        load_operator(path, small_cfg.measurement)
    assert e.value.code == "CACHE_CORRUPT"
    path.write_bytes(b"garbage")
    with pytest.raises(GmmvError) as e:
        load_operator(path, small_cfg.measurement)
    assert e.value.code == "CACHE_CORRUPT"


def test_operator_key_tracks_inputs(small_cfg):
    a = operator_key(small_cfg.grid, small_cfg.measurement, small_cfg.frequencies)
    b = operator_key(small_cfg.grid, small_cfg.measurement, small_cfg.frequencies.subset([0]))
    assert a != b and len(a) == 64
