"""2-D TM finite-difference frequency-domain solver.

The stiffness matrix is scaled so that ``A e = omega**2 j`` for a contrast
source density ``j`` (A/m^2 / (rad/s)), i.e.
``A = (-lap_s) / mu0 - omega**2 * eps(x) * s_x * s_y`` where ``lap_s`` is
the stretched-coordinate 5-point Laplacian. Rows are scaled by ``s_x s_y``
which keeps ``A`` complex symmetric; outside the PML ``s_x = s_y = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import (GRID_RULE_SLACK, MU0, BackgroundModel, ContrastMap, FrequencySet, Grid2D,
                   MeasurementConfig)
from .dataset import ScatterDataset
from .errors import GeometryError, SolverError
from .greens import green2d, line_source_field, pairwise_distance

PML_CELLS = 10
PML_ORDER = 3
PML_REFLECTION = 1e-4


def padding_cells(delta, wavelength):
    """Free-space cells added around the domain: ``max(lambda/2, 10 delta)``."""
    return int(math.ceil(max(0.5 * wavelength, 10 * delta) / delta - 1e-9))


@dataclass(frozen=True)
class FdfdSystem:
    omega: float
    k_bg: complex
    grid: Grid2D          # the meshed region of interest
    grid_ext: Grid2D      # grid + padding + PML
    npml: int
    core_index: np.ndarray  # flattened grid cell -> flattened grid_ext cell
    A: sp.csr_matrix

    @property
    def N_ext(self):
        return self.grid_ext.N

    def factorize(self) -> "FdfdFactorization":
        return FdfdFactorization(self)


def _stretch(n, npml, a_max):
    """Stretch factors at cell centres (length n) and at the n+1 faces."""
    centers = np.arange(n) + 0.5
    faces = np.arange(n + 1, dtype=float)

    def depth(u):
        d = np.zeros_like(u)
        lo = u < npml
        hi = u > n - npml
        d[lo] = (npml - u[lo]) / npml
        d[hi] = (u[hi] - (n - npml)) / npml
        return d

    s_c = 1.0 - 1j * a_max * depth(centers) ** PML_ORDER
    s_f = 1.0 - 1j * a_max * depth(faces) ** PML_ORDER
    return s_c, s_f


def assemble_fdfd(grid: Grid2D, background: BackgroundModel, omega: float,
                  contrast: Optional[ContrastMap] = None, npml: int = PML_CELLS,
                  pad: Optional[int] = None, check: bool = True) -> FdfdSystem:
    """Assemble the FDFD stiffness matrix for one angular frequency.

    ``grid`` is extended by ``pad`` free-space cells (default
    ``max(lambda/2, 10 delta)``) and ``npml`` PML cells on every side. When
    ``contrast`` is given (on ``grid``) its permittivity replaces the
    background in the corresponding cells.
    """
    k_bg = background.wavenumber(omega)
    wavelength = 2 * np.pi / k_bg.real
    if check and grid.delta > wavelength / 15.0 * (1.0 + GRID_RULE_SLACK):
        raise GeometryError(f"grid spacing {grid.delta:.4g} m exceeds lambda/15 = {wavelength / 15:.4g} m",
                            code="GRID_TOO_COARSE")
    if contrast is not None and contrast.grid != grid:
        raise GeometryError("contrast map lives on a different grid", code="GRID_MISMATCH")
    if pad is None:
        pad = padding_cells(grid.delta, wavelength)
    ext = grid.padded(pad + npml)
    nx, ny, h = ext.nx, ext.ny, ext.delta

    a_max = (PML_ORDER + 1) * math.log(1.0 / PML_REFLECTION) / (2.0 * k_bg.real * npml * h)
    sx_c, sx_f = _stretch(nx, npml, a_max)
    sy_c, sy_f = _stretch(ny, npml, a_max)

    ix = np.arange(nx)
    iy = np.arange(ny)
    IX, IY = np.meshgrid(ix, iy)
    n = (IY * nx + IX).ravel()
    IX = IX.ravel()
    IY = IY.ravel()

    # row scaled by s_x(ix) s_y(iy): x-coupling sy/sx_face, y-coupling sx/sy_face
    cxm = sy_c[IY] / sx_f[IX]          # face ix - 1/2
    cxp = sy_c[IY] / sx_f[IX + 1]      # face ix + 1/2
    cym = sx_c[IX] / sy_f[IY]
    cyp = sx_c[IX] / sy_f[IY + 1]

    eps = np.full(ext.N, background.permittivity(omega), dtype=complex)
    if contrast is not None:
        core = _core_index(grid, ext, pad + npml)
        eps[core] = contrast.permittivity(omega)
    diag = (cxm + cxp + cym + cyp) / (h * h * MU0) - omega**2 * eps * sx_c[IX] * sy_c[IY]

    rows = [n]
    cols = [n]
    vals = [diag]
    for shift, coef, valid in ((-1, cxm, IX > 0), (1, cxp, IX < nx - 1),
                               (-nx, cym, IY > 0), (nx, cyp, IY < ny - 1)):
        rows.append(n[valid])
        cols.append(n[valid] + shift)
        vals.append(-coef[valid] / (h * h * MU0))
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(ext.N, ext.N))
    A.sort_indices()
    return FdfdSystem(float(omega), complex(k_bg), grid, ext, npml, _core_index(grid, ext, pad + npml), A)


def _core_index(grid, ext, offset):
    ix, iy = np.meshgrid(np.arange(grid.nx) + offset, np.arange(grid.ny) + offset)
    return (iy * ext.nx + ix).ravel()


class FdfdFactorization:
    """Sparse LU factorization of ``A`` with solve / transpose-solve.

    Solutions are checked against ``||A x - b|| <= 1e-10 ||b||`` and refined
    once if needed.
    """

    tol = 1e-10

    def __init__(self, system: FdfdSystem):
        self.system = system
        self._A = system.A.tocsc()
        try:
            self._lu = spla.splu(self._A, permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as exc:
            raise SolverError(f"FDFD factorization failed: {exc}", code="SINGULAR_MATRIX") from exc

    def _solve(self, b, trans):
        b = np.asarray(b, dtype=complex)
        if b.shape[0] != self._A.shape[0]:
            raise ValueError(f"source has length {b.shape[0]}, expected {self._A.shape[0]}")
        A = self._A.T if trans == "T" else self._A
        x = self._lu.solve(b, trans=trans)
        for _ in range(2):
            r = b - A @ x
            bn = np.linalg.norm(b, axis=0)
            rn = np.linalg.norm(r, axis=0)
            if np.all(rn <= self.tol * np.where(bn > 0, bn, 1.0)):
                return x
            x = x + self._lu.solve(r, trans=trans)
        if not np.all(np.isfinite(x)):
            raise SolverError("FDFD solve produced non-finite values", code="SINGULAR_MATRIX")
        return x

    def solve(self, b):
        return self._solve(b, "N")

    def solve_transpose(self, b):
        return self._solve(b, "T")


def solve_field(fact: FdfdFactorization, source):
    """Field ``e`` solving ``A e = source`` on the extended grid."""
    return fact.solve(source)


def point_source(system: FdfdSystem, point, current: complex = 1.0):
    """Right-hand side ``omega^2 j`` for a point current ``current`` (A/(rad/s))
    placed in the extended-grid cell containing ``point``."""
    ext = system.grid_ext
    ix = int(np.floor((point[0] - ext.x0) / ext.delta))
    iy = int(np.floor((point[1] - ext.y0) / ext.delta))
    b = np.zeros(ext.N, dtype=complex)
    b[iy * ext.nx + ix] = system.omega**2 * current / ext.delta**2
    return b


@dataclass(frozen=True)
class FieldSolution:
    """Incident, total and scattered fields on the meshed grid for one
    source and frequency."""

    e_inc: np.ndarray
    e_tot: np.ndarray
    e_sct: np.ndarray


def _check_receivers(config: MeasurementConfig, system: FdfdSystem):
    ext = system.grid_ext
    if np.any(system.grid.contains(config.receivers)):
        raise GeometryError("a receiver lies inside the simulation grid", code="RECEIVER_INSIDE_GRID")
    if np.any(ext.contains(config.receivers)):
        raise GeometryError("a receiver lies in the padding/PML region", code="RECEIVER_IN_PML")


def solve_scene_fields(contrast: ContrastMap, sources, omega, background=None, fact=None):
    """Scattered-field FDFD solve for every source at one frequency.

    ``A_obj e_sct = omega^2 chi e_inc`` with the analytic line-source
    incident field; ``e_tot = e_inc + e_sct``. Returns
    ``(system, e_inc, e_tot)`` with fields of shape ``(N, P)`` on the
    contrast grid.
    """
    background = background or contrast.background
    if fact is None:
        system = assemble_fdfd(contrast.grid, background, omega, contrast)
        fact = system.factorize()
    system = fact.system
    k = system.k_bg
    cells = contrast.grid.cell_centers()
    sources = np.atleast_2d(sources)
    e_inc = np.column_stack([line_source_field(omega, k, cells, s) for s in sources])
    chi = contrast.contrast(omega)
    rhs = np.zeros((system.N_ext, sources.shape[0]), dtype=complex)
    rhs[system.core_index] = omega**2 * chi[:, None] * e_inc
    if np.any(chi != 0):
        e_sct = fact.solve(rhs)[system.core_index]
    else:
        e_sct = np.zeros_like(e_inc)
    return system, e_inc, e_inc + e_sct


def simulate_fields(contrast: ContrastMap, source, omega, background=None) -> FieldSolution:
    _, e_inc, e_tot = solve_scene_fields(contrast, source, omega, background)
    return FieldSolution(e_inc[:, 0], e_tot[:, 0], e_tot[:, 0] - e_inc[:, 0])


def radiate(contrast: ContrastMap, omega, k, e_tot, points):
    """Field at ``points`` radiated by the contrast sources ``chi e_tot``
    (midpoint rule with the analytic Green's function)."""
    chi = contrast.contrast(omega)
    idx = np.nonzero(chi)[0]
    if idx.size == 0:
        return np.zeros((np.atleast_2d(points).shape[0], e_tot.shape[1]), dtype=complex)
    cells = contrast.grid.cell_centers()[idx]
    g = green2d(k, pairwise_distance(points, cells))
    j = chi[idx, None] * e_tot[idx]
    return (omega**2 * MU0 * contrast.grid.delta**2) * (g @ j)


def simulate_scene(contrast: ContrastMap, config: MeasurementConfig, freqs: FrequencySet,
                   background: Optional[BackgroundModel] = None) -> ScatterDataset:
    """Synthetic scattered-field data for a scene.

    For every frequency the FDFD system with the targets is factorized once
    and solved for all sources; the contrast sources are then radiated to the
    (unmeshed) receivers with the analytic Green's function.
    """
    background = background or contrast.background
    P = config.P
    Y = np.zeros((config.n_receivers, P * freqs.I), dtype=complex)
    mask = config.active_mask()
    for i, omega in enumerate(freqs.omega):
        system = assemble_fdfd(contrast.grid, background, omega, contrast)
        _check_receivers(config, system)
        if not np.any(contrast.contrast(omega) != 0):
            continue
        fact = system.factorize()
        _, _, e_tot = solve_scene_fields(contrast, config.sources, omega, background, fact)
        data = radiate(contrast, omega, system.k_bg, e_tot, config.receivers)
        Y[:, i * P:(i + 1) * P] = np.where(mask, data, 0.0)
    return ScatterDataset(freqs, config, Y)
