"""Linear sampling method (LSM) with Tikhonov-filtered SVD and
multi-frequency fusion of normalised indicators."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import hankel2

from .core import MU0, BackgroundModel, Grid2D
from .dataset import ScatterDataset
from .errors import GmmvError
from .greens import pairwise_distance

REG_FRACTION = 0.01


def build_data_matrix(ds: ScatterDataset, i: int):
    """``(n_receivers, P)`` multistatic matrix at frequency ``i``; pairs that
    were not measured are zero."""
    if not 0 <= i < ds.I:
        raise GmmvError(f"frequency index {i} out of range [0, {ds.I})", code="EMPTY_FREQUENCY")
    F = np.array(ds.frequency_block(i))
    if not np.any(F):
        raise GmmvError(f"no data at frequency index {i}", code="EMPTY_FREQUENCY")
    return F


def lsm_rhs(points, receivers, omega, k):
    """Right-hand sides ``f_q = (omega mu0 / 4) H0^(1)(-k |x_s - x_q|)``.

    Evaluated as ``-(omega mu0 / 4) H0^(2)(k r)`` (``H0^(1)(-z) = -H0^(2)(z)``
    for ``z > 0``). Returns ``(n_receivers,)`` for one sampling point or
    ``(n_receivers, M)`` for ``M`` points.
    """
    pts = np.atleast_2d(points)
    r = pairwise_distance(receivers, pts)
    if np.any(r == 0):
        raise GmmvError("sampling point coincides with a receiver", code="SAMPLE_ON_RECEIVER")
    f = -0.25 * omega * MU0 * hankel2(0, k * r)
    return f[:, 0] if np.ndim(points) == 1 else f


@dataclass(frozen=True)
class LsmWorkspace:
    """SVD of one multistatic matrix plus its Tikhonov parameter."""

    U: np.ndarray       # (n_receivers, D) left singular vectors
    s: np.ndarray       # (D,) singular values, descending
    a: float

    @classmethod
    def from_matrix(cls, F, reg_fraction=REG_FRACTION):
        U, s, _ = np.linalg.svd(np.asarray(F, dtype=complex), full_matrices=False)
        return cls(U, s, reg_fraction * float(s.max()) if s.size else 0.0)

    @property
    def D(self):
        return self.s.size

    def filter(self):
        s2 = self.s**2
        return (self.s / (s2 + self.a**2)) ** 2


def lsm_indicator(ws: LsmWorkspace, f):
    """``||g||^2 = sum_d (s_d / (s_d^2 + a^2))^2 |u_d^H f|^2`` for one or
    many right-hand sides (columns of ``f``)."""
    c = ws.U.conj().T @ np.asarray(f)
    w = ws.filter()
    if c.ndim == 1:
        return float(np.sum(w * (c.real**2 + c.imag**2)))
    return w @ (c.real**2 + c.imag**2)


def lsm_image(ds: ScatterDataset, grid: Grid2D, background: BackgroundModel = BackgroundModel(),
              freq_indices: Optional[Sequence[int]] = None, rhs: Optional[Sequence[np.ndarray]] = None,
              reg_fraction: float = REG_FRACTION):
    """Multi-frequency LSM image ``gamma = 1 / mean_i(||g_i||^2 / max ||g_i||^2)``
    at the cell centres of ``grid``.

    ``rhs`` optionally supplies precomputed right-hand-side matrices
    ``(n_receivers, N)`` per frequency (any frequency-wise scale factor is
    normalised out).
    """
    idx = range(ds.I) if freq_indices is None else list(freq_indices)
    if len(idx) == 0:
        raise GmmvError("LSM needs at least one frequency", code="EMPTY_FREQUENCY")
    pts = grid.cell_centers()
    acc = np.zeros(grid.N)
    for j, i in enumerate(idx):
        ws = LsmWorkspace.from_matrix(build_data_matrix(ds, i), reg_fraction)
        if rhs is not None:
            f = rhs[j]
        else:
            omega = ds.frequencies.omega[i]
            f = lsm_rhs(pts, ds.config.receivers, omega, background.wavenumber(omega))
        g2 = lsm_indicator(ws, f)
        acc += g2 / g2.max()
    return len(idx) / acc


def rhs_from_operator(op, indices=None):
    """LSM right-hand sides recovered from Green's sensing matrices:
    ``f = -i Phi / delta^2`` column by column."""
    idx = range(op.I) if indices is None else indices
    scale = -1j / op.grid.delta**2
    return [scale * op.G[i] for i in idx]
