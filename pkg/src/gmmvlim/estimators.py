"""Estimator-style wrappers (``fit`` / ``predict`` / ``transform``,
``get_params``) around the function-level GMMV and LSM cores.

``X`` is a :class:`SensingOperator` and ``y`` a :class:`ScatterDataset`;
both wrappers produce a shape image on the operator's grid.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import lsm
from .core import SolverOptions
from .imaging import ImageField, gmmv_image, to_db
from .solver import InversionResult, solve_gmmv_cv, solve_gmmv_sigma
from .validation import check_consistent


def _check_fitted(est, attr):
    if not hasattr(est, attr):
        raise NotFittedError(f"{type(est).__name__} is not fitted yet; call fit first")


class GMMVShapeReconstructor(BaseEstimator):
    """Joint-sparse contrast-source inversion.

    Parameters
    ----------
    stopping : ``"cv"`` (cross-validation rule) or ``"sigma"`` (known
        residual target ``sigma``, physical units).
    sigma : residual target for ``stopping="sigma"``.
    delta_n, max_iter, max_inner, inner_tol : see :class:`SolverOptions`.
    """

    def __init__(self, stopping="cv", sigma=None, delta_n=30, max_iter=3000, max_inner=200,
                 inner_tol=1e-5):
        self.stopping = stopping
        self.sigma = sigma
        self.delta_n = delta_n
        self.max_iter = max_iter
        self.max_inner = max_inner
        self.inner_tol = inner_tol

    def _options(self):
        return SolverOptions(max_iter=int(self.max_iter), max_inner=int(self.max_inner),
                             inner_tol=float(self.inner_tol), delta_n=int(self.delta_n))

    def fit(self, X, y, callback=None):
        op, ds = check_consistent(X, y)
        if self.stopping == "cv":
            res = solve_gmmv_cv(op, ds, self._options(), callback)
        elif self.stopping == "sigma":
            if self.sigma is None:
                raise ValueError("stopping='sigma' needs a sigma value")
            res = solve_gmmv_sigma(op, ds, float(self.sigma), self._options(), callback)
        else:
            raise ValueError(f"unknown stopping rule {self.stopping!r}")
        self.operator_ = op
        self.result_: InversionResult = res
        self.J_ = res.J
        self.image_ = gmmv_image(res.J, op.grid)
        self.n_iter_ = res.n_iter
        self.noise_estimate_ = res.noise_estimate
        return self

    def predict(self, X=None, rows="all"):
        """Data predicted by the fitted contrast sources, ``Phi . J``."""
        _check_fitted(self, "J_")
        op = self.operator_ if X is None else X
        return op.forward(self.J_, rows)

    def transform(self, X=None):
        """dB image of the fitted contrast sources (flattened grid order)."""
        _check_fitted(self, "image_")
        return to_db(self.image_).values

    def fit_transform(self, X, y, **fit_params):
        return self.fit(X, y, **fit_params).transform()

    def score(self, X, y):
        """Negative relative residual on the CV rows (reconstruction rows when
        no CV split exists)."""
        _check_fitted(self, "J_")
        op, ds = check_consistent(X, y)
        rows = "cv" if ds.config.has_cv else "recon"
        m = op.mask(rows)
        ref = np.linalg.norm(ds.Y[m])
        return -float(np.linalg.norm(op.forward(self.J_, rows)[m] - ds.Y[m]) / ref)


class LSMImager(BaseEstimator):
    """Linear sampling method image on the operator's grid.

    ``use_operator_rhs`` takes the right-hand sides from the (Green's)
    sensing matrices instead of re-evaluating Hankel functions.
    """

    def __init__(self, reg_fraction=0.01, use_operator_rhs=True, background=None):
        self.reg_fraction = reg_fraction
        self.use_operator_rhs = use_operator_rhs
        self.background = background

    def fit(self, X, y):
        op, ds = check_consistent(X, y)
        rhs = lsm.rhs_from_operator(op) if self.use_operator_rhs else None
        kw = {} if self.background is None else {"background": self.background}
        gamma = lsm.lsm_image(ds, op.grid, rhs=rhs, reg_fraction=float(self.reg_fraction), **kw)
        self.image_ = ImageField(op.grid, gamma, "lsm")
        return self

    def transform(self, X=None):
        _check_fitted(self, "image_")
        return to_db(self.image_).values

    def fit_transform(self, X, y):
        return self.fit(X, y).transform()

    def predict(self, X=None):
        """Linear ``gamma_LSM`` values."""
        _check_fitted(self, "image_")
        return self.image_.values
