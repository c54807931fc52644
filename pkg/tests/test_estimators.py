import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from gmmvlim.estimators import GMMVShapeReconstructor, LSMImager
from gmmvlim.errors import DimensionError
from gmmvlim.lsm import lsm_image, rhs_from_operator
from gmmvlim.solver import solve_gmmv_cv
from gmmvlim.core import SolverOptions


def test_params_roundtrip():
    est = GMMVShapeReconstructor(delta_n=12, max_iter=50)
    p = est.get_params()
    assert p["delta_n"] == 12 and p["stopping"] == "cv"
    c = clone(est)
    assert c.get_params() == p and c is not est
    est.set_params(delta_n=4)
    assert est.delta_n == 4
    assert LSMImager().get_params() == {"reg_fraction": 0.01, "use_operator_rhs": True, "background": None}


def test_not_fitted():
    with pytest.raises(NotFittedError):
        GMMVShapeReconstructor().transform()
    with pytest.raises(NotFittedError):
        LSMImager().predict()


def test_gmmv_estimator_matches_function(small_op, small_data):
    est = GMMVShapeReconstructor(delta_n=10, max_iter=400).fit(small_op, small_data)
    ref = solve_gmmv_cv(small_op, small_data, SolverOptions(delta_n=10, max_iter=400))
    assert np.array_equal(est.J_, ref.J)
    assert est.n_iter_ == ref.n_iter
    db = est.transform()
    assert db.shape == (small_op.N,) and db.max() == 0.0
    assert est.predict().shape == small_op.shape_data
    s = est.score(small_op, small_data)
    assert -1.0 < s < 0.0


def test_gmmv_sigma_stopping(small_op, small_data):
    sigma = 0.05 * np.linalg.norm(small_data.Y[small_data.mask("recon")])
    est = GMMVShapeReconstructor(stopping="sigma", sigma=sigma, max_iter=2000).fit(small_op, small_data)
    assert est.result_.mode == "sigma"
    with pytest.raises(ValueError):
        GMMVShapeReconstructor(stopping="sigma").fit(small_op, small_data)
    with pytest.raises(ValueError):
        GMMVShapeReconstructor(stopping="magic").fit(small_op, small_data)


def test_lsm_estimator(small_cfg, small_op, small_data):
    est = LSMImager().fit(small_op, small_data)
    ref = lsm_image(small_data, small_cfg.grid, rhs=rhs_from_operator(small_op))
    assert np.allclose(est.predict(), ref)
    assert est.transform().max() == 0.0
    coarse = LSMImager(reg_fraction=0.5).fit(small_op, small_data)
    assert not np.allclose(coarse.predict(), ref)


def test_inconsistent_inputs(small_op, small_data):
    with pytest.raises(TypeError):
        LSMImager().fit("op", small_data)
    with pytest.raises(DimensionError):
        LSMImager().fit(small_op.subset_frequencies([0]), small_data)
