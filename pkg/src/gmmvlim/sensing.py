"""Sensing matrices ``Phi_{p,i}`` and the stacked actions ``Phi . J`` and
``Phi^H . R``.

The operator stores one dense ``(n_receivers, N)`` matrix ``G_i`` per
frequency over the whole receiver catalogue. The block for source ``p`` is
``G_i`` restricted to the rows ``links[p]``. Stacked quantities (data,
residuals) use the dataset layout: ``(n_receivers, P*I)`` with column
``i*P + p`` and zeros outside the selected rows.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import struct
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import MU0, BackgroundModel, FrequencySet, Grid2D, MeasurementConfig
from .errors import DimensionError, GeometryError, GmmvError
from .fdfd import FdfdFactorization, assemble_fdfd, padding_cells
from .greens import green2d, pairwise_distance

ROW_CLASSES = ("all", "recon", "cv")


class SensingOperator:
    """Family of sensing matrices for every (source, frequency) column.

    Parameters
    ----------
    G : sequence of ``(n_receivers, N)`` complex arrays, one per frequency.
    grid, config, frequencies : the geometry the matrices were built for.
    """

    def __init__(self, G: Sequence[np.ndarray], grid: Grid2D, config: MeasurementConfig,
                 frequencies: FrequencySet):
        mats = []
        for i, g in enumerate(G):
            g = np.ascontiguousarray(g, dtype=complex)
            if g.shape != (config.n_receivers, grid.N):
                raise DimensionError(f"frequency block {i} has shape {g.shape}, expected "
                                     f"{(config.n_receivers, grid.N)}")
            g.setflags(write=False)
            mats.append(g)
        if len(mats) != frequencies.I:
            raise DimensionError(f"{len(mats)} frequency blocks for {frequencies.I} frequencies")
        self.G = tuple(mats)
        self._Gc = None
        self.grid = grid
        self.config = config
        self.frequencies = frequencies
        self._masks = {r: self._build_mask(r) for r in ROW_CLASSES}

    def _build_mask(self, rows):
        m = {"all": self.config.active_mask, "recon": self.config.recon_mask,
             "cv": self.config.cv_mask}[rows]()
        return np.tile(m, (1, self.I))

    @property
    def P(self):
        return self.config.P

    @property
    def I(self):
        return self.frequencies.I

    @property
    def N(self):
        return self.grid.N

    @property
    def n_columns(self):
        return self.P * self.I

    @property
    def shape_data(self):
        return (self.config.n_receivers, self.n_columns)

    @property
    def shape_sources(self):
        return (self.N, self.n_columns)

    def mask(self, rows="recon"):
        rows = rows.lower()
        if rows not in self._masks:
            raise ValueError(f"unknown row class {rows!r}")
        return self._masks[rows]

    def block(self, p, i):
        """Dense ``Phi_{p,i}``: rows are the active receivers of source ``p``
        in measurement order."""
        return self.G[i][self.config.links[p]]

    def forward(self, J, rows="recon"):
        """``Phi . J`` restricted to the selected row class."""
        J = np.asarray(J)
        if J.shape != self.shape_sources:
            raise DimensionError(f"J has shape {J.shape}, expected {self.shape_sources}")
        P = self.P
        out = np.empty(self.shape_data, dtype=complex)
        for i, g in enumerate(self.G):
            out[:, i * P:(i + 1) * P] = g @ J[:, i * P:(i + 1) * P]
        return np.where(self.mask(rows), out, 0.0)

    def adjoint(self, R, rows="recon"):
        """``Phi^H . R``; entries of ``R`` outside the row class are ignored."""
        R = np.asarray(R)
        if R.shape != self.shape_data:
            raise DimensionError(f"R has shape {R.shape}, expected {self.shape_data}")
        R = np.where(self.mask(rows), R, 0.0)
        if self._Gc is None:
            self._Gc = tuple(g.conj() for g in self.G)
        P = self.P
        out = np.empty(self.shape_sources, dtype=complex)
        for i, gc in enumerate(self._Gc):
            out[:, i * P:(i + 1) * P] = gc.T @ R[:, i * P:(i + 1) * P]
        return out

    def block_norms(self):
        """Largest spectral norm over the per-frequency catalogue matrices
        (an upper bound on every ``||Phi_{p,i}||_2``)."""
        return np.array([np.linalg.norm(g, 2) for g in self.G])

    def subset_frequencies(self, indices) -> "SensingOperator":
        idx = np.asarray(indices, dtype=int)
        return SensingOperator([self.G[i] for i in idx], self.grid, self.config,
                               self.frequencies.subset(idx))

    def with_config(self, config: MeasurementConfig) -> "SensingOperator":
        """Same matrices with a different link / CV assignment over the same
        receiver catalogue."""
        if config.n_receivers != self.config.n_receivers or not np.array_equal(config.receivers,
                                                                                self.config.receivers):
            raise DimensionError("receiver catalogue differs")
        return SensingOperator(self.G, self.grid, config, self.frequencies)


def apply_forward(op: SensingOperator, J, rows="recon"):
    return op.forward(J, rows)


def apply_adjoint(op: SensingOperator, R, rows="recon"):
    return op.adjoint(R, rows)


def _check_receivers_outside(grid, config):
    if np.any(grid.contains(config.receivers)):
        raise GeometryError("a receiver lies inside the inversion grid", code="RECEIVER_INSIDE_GRID")


def build_sensing_greens(grid: Grid2D, config: MeasurementConfig, freqs: FrequencySet,
                         background: BackgroundModel = BackgroundModel()) -> SensingOperator:
    """Analytic sensing matrices in a homogeneous background:
    ``Phi[q, n] = omega mu0 g(x_q, x_n) delta^2`` (midpoint rule)."""
    _check_receivers_outside(grid, config)
    r = pairwise_distance(config.receivers, grid.cell_centers())
    G = []
    for omega, k in zip(freqs.omega, freqs.wavenumber(background)):
        G.append((omega * MU0 * grid.delta**2) * green2d(k, r))
    return SensingOperator(G, grid, config, freqs)


def refinement_factor(delta, wavelength, ppw=40):
    """Smallest odd factor ``r`` with ``delta / r <= wavelength / ppw``."""
    r = max(1, int(math.ceil(delta * ppw / wavelength - 1e-9)))
    return r if r % 2 else r + 1


def build_sensing_fdfd(grid: Grid2D, config: MeasurementConfig, freqs: FrequencySet,
                       background: BackgroundModel = BackgroundModel(),
                       facts: Optional[Sequence[FdfdFactorization]] = None,
                       ppw: int = 40, margin: int = 2) -> SensingOperator:
    """Sensing matrices from FDFD transpose solves (reciprocity).

    Each receiver ``q`` radiates as a unit source; its field is injected on
    a total-field / scattered-field box enclosing the inversion grid, and one
    transpose solve of the stiffness matrix propagates it through the meshed
    region. Row ``q`` of ``G_i`` is that field at the cell centres, scaled by
    ``omega``. Receivers stay unmeshed.

    The mesh is the inversion grid refined by an odd factor (so cell centres
    coincide) with at least ``ppw`` cells per background wavelength. Pass
    ``facts`` to reuse factorizations; each must belong to a system whose
    ``grid`` is that refined grid.
    """
    _check_receivers_outside(grid, config)
    G = []
    for i, (omega, lam) in enumerate(zip(freqs.omega, freqs.wavelength)):
        lam_bg = lam / math.sqrt(background.eps_r)
        if facts is not None:
            fact = facts[i]
            system = fact.system
            r = int(round(grid.delta / system.grid.delta))
            if system.grid.nx != grid.nx * r or system.grid.ny != grid.ny * r:
                raise DimensionError("factorization grid is not a refinement of the inversion grid")
        else:
            r = refinement_factor(grid.delta, lam_bg, ppw)
            fine = Grid2D(grid.x0, grid.y0, grid.delta / r, grid.nx * r, grid.ny * r)
            system = assemble_fdfd(fine, background, omega, pad=padding_cells(fine.delta, lam_bg)
                                   + margin)
            fact = system.factorize()
        ext = system.grid_ext
        offset = int(round((system.grid.x0 - ext.x0) / ext.delta))
        # total-field region: the meshed grid plus ``margin`` cells
        tf = np.zeros((ext.ny, ext.nx), dtype=bool)
        lo = offset - margin
        tf[lo:offset + system.grid.ny + margin, lo:offset + system.grid.nx + margin] = True
        tf = tf.ravel()
        k = system.k_bg
        u_inc = (MU0 * grid.delta**2) * green2d(k, pairwise_distance(ext.cell_centers(), config.receivers))
        A = system.A
        b = A @ np.where(tf[:, None], u_inc, 0.0)
        b -= np.where(tf[:, None], A @ u_inc, 0.0)
        u = fact.solve_transpose(b)
        # inversion-cell centres are the centre sub-cells of each r x r block
        h = r // 2
        fi = (np.arange(grid.ny)[:, None] * r + h + offset) * ext.nx + (np.arange(grid.nx)[None, :] * r + h
                                                                        + offset)
        G.append(omega * u[fi.ravel()].T)
    return SensingOperator(G, grid, config, freqs)


# --------------------------------------------------------------------------
# binary cache

CACHE_MAGIC = b"GMMVOP1\n"


def operator_key(grid: Grid2D, config: MeasurementConfig, freqs: FrequencySet,
                 background: BackgroundModel = BackgroundModel(), method="greens"):
    """Hex digest identifying the inputs an operator was built from."""
    h = hashlib.sha256()
    meta = {"grid": grid.to_dict(), "freqs": [float(f) for f in freqs.freqs],
            "background": [background.eps_r, background.sigma], "method": method}
    h.update(json.dumps(meta, sort_keys=True).encode())
    h.update(np.ascontiguousarray(config.receivers, dtype="<f8").tobytes())
    return h.hexdigest()


def save_operator(op: SensingOperator, path, key: str = "") -> Path:
    """Write ``op`` as a versioned header followed by row-major complex64
    blocks (one per frequency) and a SHA-256 of the payload."""
    path = Path(path)
    payload = b"".join(np.ascontiguousarray(g, dtype="<c8").tobytes() for g in op.G)
    header = {"key": key, "grid": op.grid.to_dict(), "freqs": [float(f) for f in op.frequencies.freqs],
              "n_receivers": op.config.n_receivers, "N": op.N,
              "sha256": hashlib.sha256(payload).hexdigest()}
    hb = json.dumps(header, sort_keys=True).encode()
    buf = io.BytesIO()
    buf.write(CACHE_MAGIC)
    buf.write(struct.pack("<Q", len(hb)))
    buf.write(hb)
    buf.write(payload)
    path.write_bytes(buf.getvalue())
    return path


def load_operator(path, config: MeasurementConfig, key: Optional[str] = None) -> SensingOperator:
    """Read an operator written by :func:`save_operator`.

    Raises :class:`GmmvError` with code ``CACHE_CORRUPT`` on a bad header or
    checksum and ``CACHE_STALE`` when ``key`` does not match.
    """
    data = Path(path).read_bytes()
    if not data.startswith(CACHE_MAGIC):
        raise GmmvError("not a sensing-operator cache", code="CACHE_CORRUPT")
    try:
        (n,) = struct.unpack_from("<Q", data, len(CACHE_MAGIC))
        start = len(CACHE_MAGIC) + 8
        header = json.loads(data[start:start + n])
    except (struct.error, ValueError) as exc:
        raise GmmvError(f"unreadable cache header: {exc}", code="CACHE_CORRUPT") from exc
    payload = data[start + n:]
    if hashlib.sha256(payload).hexdigest() != header.get("sha256"):
        raise GmmvError("cache checksum mismatch", code="CACHE_CORRUPT")
    if key is not None and header.get("key") != key:
        raise GmmvError("cache was built for different inputs", code="CACHE_STALE")
    nr, N = header["n_receivers"], header["N"]
    freqs = FrequencySet(header["freqs"])
    arr = np.frombuffer(payload, dtype="<c8").reshape(freqs.I, nr, N)
    grid = Grid2D(**header["grid"])
    return SensingOperator([a.astype(complex) for a in arr], grid, config, freqs)
