import json

import numpy as np
import pytest

from gmmvlim.core import config_from_dict

# acceptance outcomes, printed as one line per criterion at the end of the run
ACCEPTANCE = {}


def record_criterion(number, passed, detail):
    ACCEPTANCE[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")


SMALL = {
    "name": "small",
    "grid": {"x_min": -0.03, "x_max": 0.03, "y_min": -0.03, "y_max": 0.03, "delta": 0.005},
    "frequencies": [2e9, 4e9],
    "sources": {"ring": {"radius": 0.5, "count": 8, "start_deg": 0, "step_deg": 45}},
    "receivers": {"ring": {"radius": 0.55, "count": 24, "start_deg": 0, "step_deg": 15},
                  "active_arc_deg": [60, 300], "cv": {"count": 3, "strategy": "every_kth"}},
    "scene": {"shapes": [{"type": "circle", "center": [0.0, 0.005], "radius": 0.01, "eps_r": 3.0}]},
    "solver": {"delta_n": 10, "max_iter": 400},
}


@pytest.fixture
def small_dict():
    return json.loads(json.dumps(SMALL))


@pytest.fixture(scope="session")
def small_cfg():
    return config_from_dict(json.loads(json.dumps(SMALL)))


@pytest.fixture(scope="session")
def small_data(small_cfg):
    from gmmvlim.synthetic import synthesize
    return synthesize(small_cfg, snr_db=30.0, seed=3)


@pytest.fixture(scope="session")
def small_op(small_cfg):
    from gmmvlim.sensing import build_sensing_greens
    return build_sensing_greens(small_cfg.grid, small_cfg.measurement, small_cfg.frequencies)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
