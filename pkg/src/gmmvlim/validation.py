"""Input checks shared by the solvers and the estimator wrappers."""

from __future__ import annotations

import numpy as np

from .dataset import ScatterDataset
from .errors import DimensionError, GmmvError
from .sensing import SensingOperator


def check_dataset(ds) -> ScatterDataset:
    if not isinstance(ds, ScatterDataset):
        raise TypeError(f"expected a ScatterDataset, got {type(ds).__name__}")
    if not np.all(np.isfinite(ds.Y)):
        raise GmmvError("dataset contains non-finite values", code="BAD_DATA")
    return ds


def check_operator(op) -> SensingOperator:
    if not isinstance(op, SensingOperator):
        raise TypeError(f"expected a SensingOperator, got {type(op).__name__}")
    return op


def check_consistent(op: SensingOperator, ds: ScatterDataset):
    """Operator and dataset must describe the same columns and receivers."""
    check_operator(op)
    check_dataset(ds)
    if op.n_columns != ds.n_columns:
        raise DimensionError(f"operator has {op.n_columns} columns, dataset {ds.n_columns}")
    if not np.allclose(op.frequencies.freqs, ds.frequencies.freqs, rtol=1e-12, atol=0):
        raise DimensionError("operator and dataset frequencies differ")
    a, b = op.config, ds.config
    if a.n_receivers != b.n_receivers or not np.allclose(a.receivers, b.receivers, atol=1e-12):
        raise DimensionError("operator and dataset receiver catalogues differ")
    if a.P != b.P or any(not np.array_equal(x, y) for x, y in zip(a.links, b.links)):
        raise DimensionError("operator and dataset receiver links differ")
    return op, ds


def check_positive(name, value, allow_inf=False):
    v = float(value)
    if not (v > 0) or (np.isinf(v) and not allow_inf):
        raise ValueError(f"{name} must be positive, got {value!r}")
    return v


def check_finite_matrix(name, X, shape=None):
    X = np.asarray(X)
    if shape is not None and X.shape != tuple(shape):
        raise DimensionError(f"{name} has shape {X.shape}, expected {tuple(shape)}")
    if not np.all(np.isfinite(X)):
        raise GmmvError(f"{name} contains non-finite values", code="BAD_DATA")
    return X
