"""Grids, frequencies, media, measurement geometry, scenes and configuration.

Conventions shared by every module:

* time factor ``exp(+i w t)``; outgoing waves behave like ``H0^(2)(k r)``;
* a grid is cell centred and flattened row-major, ``n = iy * nx + ix``;
* all lengths in metres, frequencies in Hz, conductivities in S/m.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, GeometryError

C0 = 299_792_458.0
MU0 = 4e-7 * np.pi
EPS0 = 1.0 / (MU0 * C0**2)

#: Conductivity used to approximate perfectly conducting targets.
PEC_SIGMA = 1.0e4

#: Relative slack on the lambda/15 grid rule (the 8 GHz presets sit 0.07% over).
GRID_RULE_SLACK = 1e-3


def _frozen_array(values, dtype=float):
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Grid2D:
    """Square-cell grid: ``nx`` by ``ny`` cells of side ``delta``, lower-left
    corner at ``(x0, y0)``."""

    x0: float
    y0: float
    delta: float
    nx: int
    ny: int

    def __post_init__(self):
        if not self.delta > 0:
            raise ConfigError([("BAD_UNITS", f"grid spacing must be positive, got {self.delta}")])
        if self.nx < 1 or self.ny < 1:
            raise ConfigError([("BAD_UNITS", f"grid needs at least one cell, got {self.nx}x{self.ny}")])

    @classmethod
    def from_bounds(cls, x_min, x_max, y_min, y_max, delta):
        """Grid of spacing ``delta`` centred on the given box. The cell count is
        rounded, so the covered extent may differ from the box by < delta/2
        per side."""
        if not delta > 0:
            raise ConfigError([("BAD_UNITS", f"grid spacing must be positive, got {delta}")])
        nx = max(1, int(round((x_max - x_min) / delta)))
        ny = max(1, int(round((y_max - y_min) / delta)))
        cx = 0.5 * (x_min + x_max)
        cy = 0.5 * (y_min + y_max)
        return cls(cx - 0.5 * nx * delta, cy - 0.5 * ny * delta, float(delta), nx, ny)

    @property
    def N(self) -> int:
        return self.nx * self.ny

    @property
    def shape(self):
        """Array shape ``(ny, nx)`` for images on this grid."""
        return (self.ny, self.nx)

    @property
    def bounds(self):
        return (self.x0, self.x0 + self.nx * self.delta, self.y0, self.y0 + self.ny * self.delta)

    @property
    def center(self):
        x_min, x_max, y_min, y_max = self.bounds
        return 0.5 * (x_min + x_max), 0.5 * (y_min + y_max)

    def x_centers(self):
        return self.x0 + (np.arange(self.nx) + 0.5) * self.delta

    def y_centers(self):
        return self.y0 + (np.arange(self.ny) + 0.5) * self.delta

    def cell_centers(self):
        """``(N, 2)`` array of cell centres in flattened order."""
        xx, yy = np.meshgrid(self.x_centers(), self.y_centers())
        return np.column_stack([xx.ravel(), yy.ravel()])

    def flatten(self, ix, iy):
        return np.asarray(iy) * self.nx + np.asarray(ix)

    def unflatten(self, n):
        n = np.asarray(n)
        return n % self.nx, n // self.nx

    def contains(self, points):
        """Boolean mask of points inside the closed bounding box."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        x_min, x_max, y_min, y_max = self.bounds
        return (p[:, 0] >= x_min) & (p[:, 0] <= x_max) & (p[:, 1] >= y_min) & (p[:, 1] <= y_max)

    def padded(self, ncells: int) -> "Grid2D":
        return Grid2D(self.x0 - ncells * self.delta, self.y0 - ncells * self.delta,
                      self.delta, self.nx + 2 * ncells, self.ny + 2 * ncells)

    def to_dict(self):
        return {"x0": self.x0, "y0": self.y0, "delta": self.delta, "nx": self.nx, "ny": self.ny}


@dataclass(frozen=True)
class BackgroundModel:
    """Homogeneous background medium."""

    eps_r: float = 1.0
    sigma: float = 0.0

    def permittivity(self, omega):
        """Complex permittivity ``eps0*eps_r - i*sigma/omega`` (F/m)."""
        return EPS0 * self.eps_r - 1j * self.sigma / omega

    def wavenumber(self, omega):
        """Complex wavenumber with ``Im k <= 0`` (decaying ``exp(-i k r)``)."""
        k = omega * np.sqrt(MU0 * self.permittivity(omega) + 0j)
        return complex(k.real, -abs(k.imag)) if np.isscalar(omega) else k.real - 1j * np.abs(k.imag)


@dataclass(frozen=True)
class FrequencySet:
    freqs: np.ndarray

    def __post_init__(self):
        f = np.atleast_1d(np.asarray(self.freqs, dtype=float))
        if f.size == 0 or np.any(f <= 0):
            raise ConfigError([("BAD_UNITS", "frequencies must be positive")])
        if np.any(np.diff(f) <= 0):
            raise ConfigError([("BAD_UNITS", "frequencies must be strictly increasing")])
        object.__setattr__(self, "freqs", _frozen_array(f))

    def __len__(self):
        return self.freqs.size

    @property
    def I(self) -> int:
        return self.freqs.size

    @property
    def omega(self):
        return 2 * np.pi * self.freqs

    @property
    def wavelength(self):
        """Free-space wavelengths ``c / f``."""
        return C0 / self.freqs

    def wavenumber(self, background: BackgroundModel = BackgroundModel()):
        return np.array([background.wavenumber(w) for w in self.omega])

    def subset(self, indices) -> "FrequencySet":
        return FrequencySet(self.freqs[np.asarray(indices, dtype=int)])


# --------------------------------------------------------------------------
# scenes


@dataclass(frozen=True)
class Shape:
    eps_r: float = 1.0
    sigma: float = 0.0
    pec: bool = False

    @property
    def material(self):
        if self.pec:
            return 1.0, PEC_SIGMA
        return self.eps_r, self.sigma

    def inside(self, x, y):  # pragma: no cover - abstract
        raise NotImplementedError

    def bbox(self):  # pragma: no cover - abstract
        raise NotImplementedError


@dataclass(frozen=True)
class Circle(Shape):
    center: tuple = (0.0, 0.0)
    radius: float = 0.01

    def inside(self, x, y):
        return (x - self.center[0]) ** 2 + (y - self.center[1]) ** 2 <= self.radius**2

    def bbox(self):
        cx, cy = self.center
        r = self.radius
        return cx - r, cx + r, cy - r, cy + r

    @property
    def area(self):
        return np.pi * self.radius**2


def _to_local(x, y, center, rotation_deg):
    c, s = math.cos(math.radians(rotation_deg)), math.sin(math.radians(rotation_deg))
    dx, dy = x - center[0], y - center[1]
    return c * dx + s * dy, -s * dx + c * dy


def _rotated_bbox(center, width, height, rotation_deg):
    c, s = math.cos(math.radians(rotation_deg)), math.sin(math.radians(rotation_deg))
    hw = 0.5 * (abs(c) * width + abs(s) * height)
    hh = 0.5 * (abs(s) * width + abs(c) * height)
    return center[0] - hw, center[0] + hw, center[1] - hh, center[1] + hh


@dataclass(frozen=True)
class Rectangle(Shape):
    center: tuple = (0.0, 0.0)
    width: float = 0.01
    height: float = 0.01
    rotation: float = 0.0  # degrees, counter-clockwise

    def inside(self, x, y):
        u, v = _to_local(x, y, self.center, self.rotation)
        return (np.abs(u) <= 0.5 * self.width) & (np.abs(v) <= 0.5 * self.height)

    def bbox(self):
        return _rotated_bbox(self.center, self.width, self.height, self.rotation)

    @property
    def area(self):
        return self.width * self.height


@dataclass(frozen=True)
class UProfile(Shape):
    """Outer ``width`` x ``height`` box with a ``slot_width`` x ``slot_depth``
    slot cut in from the local +y side (opening faces +y before rotation)."""

    center: tuple = (0.0, 0.0)
    width: float = 0.08
    height: float = 0.05
    slot_width: float = 0.06
    slot_depth: float = 0.04
    rotation: float = 0.0

    def inside(self, x, y):
        u, v = _to_local(x, y, self.center, self.rotation)
        outer = (np.abs(u) <= 0.5 * self.width) & (np.abs(v) <= 0.5 * self.height)
        slot = (np.abs(u) < 0.5 * self.slot_width) & (v > 0.5 * self.height - self.slot_depth)
        return outer & ~slot

    def bbox(self):
        return _rotated_bbox(self.center, self.width, self.height, self.rotation)

    @property
    def area(self):
        return self.width * self.height - self.slot_width * self.slot_depth


SHAPE_TYPES = {"circle": Circle, "rectangle": Rectangle, "u_profile": UProfile}


@dataclass(frozen=True)
class SceneSpec:
    shapes: tuple = ()

    @classmethod
    def from_dict(cls, d):
        shapes = []
        for item in d.get("shapes", []):
            item = dict(item)
            kind = item.pop("type")
            if kind not in SHAPE_TYPES:
                raise ConfigError([("BAD_SHAPE", f"unknown shape type {kind!r}")])
            for key in ("center",):
                if key in item:
                    item[key] = tuple(float(v) for v in item[key])
            shapes.append(SHAPE_TYPES[kind](**item))
        return cls(tuple(shapes))

    def to_dict(self):
        out = []
        rev = {v: k for k, v in SHAPE_TYPES.items()}
        for s in self.shapes:
            d = {"type": rev[type(s)]}
            for f in fields(s):
                v = getattr(s, f.name)
                d[f.name] = list(v) if isinstance(v, tuple) else v
            out.append(d)
        return {"shapes": out}


@dataclass(frozen=True)
class ContrastMap:
    """Per-cell relative permittivity and conductivity on a grid.

    ``support`` marks cells that carry a scatterer (the truth mask).
    """

    grid: Grid2D
    eps_r: np.ndarray
    sigma: np.ndarray
    background: BackgroundModel = BackgroundModel()
    support: Optional[np.ndarray] = None

    def __post_init__(self):
        eps = _frozen_array(np.broadcast_to(self.eps_r, (self.grid.N,)))
        sig = _frozen_array(np.broadcast_to(self.sigma, (self.grid.N,)))
        if np.any(eps < 1.0 - 1e-12):
            raise ConfigError([("BAD_UNITS", "relative permittivity must be >= 1")])
        if np.any(sig < 0):
            raise ConfigError([("BAD_UNITS", "conductivity must be >= 0")])
        object.__setattr__(self, "eps_r", eps)
        object.__setattr__(self, "sigma", sig)
        if self.support is None:
            sup = (eps != self.background.eps_r) | (sig != self.background.sigma)
        else:
            sup = np.asarray(self.support, dtype=bool).ravel()
        object.__setattr__(self, "support", _frozen_array(sup, bool))

    @classmethod
    def empty(cls, grid, background=BackgroundModel()):
        return cls(grid, np.full(grid.N, background.eps_r), np.full(grid.N, background.sigma), background)

    def permittivity(self, omega):
        return EPS0 * self.eps_r - 1j * self.sigma / omega

    def contrast(self, omega):
        """``chi = eps_target - eps_background`` (F/m), zero off the scatterers."""
        return self.permittivity(omega) - self.background.permittivity(omega)

    def wavenumber_sq(self, omega):
        return omega**2 * MU0 * self.permittivity(omega)


def rasterize_scene(spec: SceneSpec, grid: Grid2D, background: BackgroundModel = BackgroundModel(),
                    supersample: int = 1, check_bounds: bool = True) -> ContrastMap:
    """Paint the shapes of ``spec`` onto ``grid``.

    With ``supersample == 1`` a cell takes a shape's material iff its centre is
    inside the shape; later shapes overwrite earlier ones. Cells whose final
    material differs from the background form the support. With
    ``supersample = s > 1`` each cell averages the material over an ``s x s``
    lattice of sub-cell samples (used by the forward simulator to reduce
    staircasing). ``support`` is always the centre-sampled mask.
    """
    if check_bounds:
        x_min, x_max, y_min, y_max = grid.bounds
        tol = 1e-9
        for s in spec.shapes:
            bx0, bx1, by0, by1 = s.bbox()
            if bx0 < x_min - tol or bx1 > x_max + tol or by0 < y_min - tol or by1 > y_max + tol:
                raise GeometryError(f"{type(s).__name__} extends outside the grid", code="SHAPE_OUT_OF_GRID")

    def paint(x, y):
        eps = np.full(x.shape, background.eps_r)
        sig = np.full(x.shape, background.sigma)
        for s in spec.shapes:
            m = s.inside(x, y)
            e, g = s.material
            eps[m] = e
            sig[m] = g
        # a shape of background material (e.g. a tube's bore) is not support
        return eps, sig, (eps != background.eps_r) | (sig != background.sigma)

    centers = grid.cell_centers()
    eps_c, sig_c, support = paint(centers[:, 0], centers[:, 1])
    if supersample <= 1:
        return ContrastMap(grid, eps_c, sig_c, background, support)

    s = int(supersample)
    offs = ((np.arange(s) + 0.5) / s - 0.5) * grid.delta
    ox, oy = np.meshgrid(offs, offs)
    xs = centers[:, 0:1] + ox.ravel()[None, :]
    ys = centers[:, 1:2] + oy.ravel()[None, :]
    eps, sig, _ = paint(xs, ys)
    return ContrastMap(grid, eps.mean(axis=1), sig.mean(axis=1), background, support)


# --------------------------------------------------------------------------
# measurement geometry


def ring_positions(radius, count, start_deg=0.0, step_deg=None):
    """Points on a circle; angles ``start + j*step`` in degrees."""
    if step_deg is None:
        step_deg = 360.0 / count
    ang = np.deg2rad(start_deg + step_deg * np.arange(count))
    return np.column_stack([radius * np.cos(ang), radius * np.sin(ang)])


@dataclass(frozen=True)
class MeasurementConfig:
    """Sources, a receiver catalogue and which receivers each source uses.

    ``links[p]`` lists, in measurement order, the catalogue indices of the
    receivers active for source ``p`` (its *local* receiver indices are
    positions in that list). ``cv[p]`` is a boolean array over the local
    indices flagging cross-validation receivers, or ``None`` when no split
    is defined.
    """

    sources: np.ndarray
    receivers: np.ndarray
    links: tuple
    cv: Optional[tuple] = None

    def __post_init__(self):
        src = _frozen_array(np.atleast_2d(self.sources))
        rx = _frozen_array(np.atleast_2d(self.receivers))
        links = tuple(_frozen_array(np.asarray(l, dtype=np.int64), np.int64) for l in self.links)
        if len(links) != src.shape[0]:
            raise ConfigError([("BAD_LINKS", "one receiver list per source is required")])
        for p, l in enumerate(links):
            if l.size == 0:
                raise ConfigError([("BAD_LINKS", f"source {p} has no active receivers")])
            if np.any(l < 0) or np.any(l >= rx.shape[0]) or np.unique(l).size != l.size:
                raise ConfigError([("BAD_LINKS", f"source {p} has invalid receiver indices")])
        object.__setattr__(self, "sources", src)
        object.__setattr__(self, "receivers", rx)
        object.__setattr__(self, "links", links)
        if self.cv is not None:
            cv = tuple(_frozen_array(np.asarray(c, dtype=bool), bool) for c in self.cv)
            if len(cv) != len(links) or any(c.size != l.size for c, l in zip(cv, links)):
                raise ConfigError([("BAD_LINKS", "cv flags must match the receiver lists")])
            for p, c in enumerate(cv):
                if c.all():
                    raise ConfigError([("CV_TOO_LARGE", f"source {p} has no reconstruction receivers")])
            object.__setattr__(self, "cv", cv)

    @classmethod
    def full(cls, sources, receivers):
        """Every source sees every receiver."""
        q = np.atleast_2d(receivers).shape[0]
        return cls(sources, receivers, tuple(np.arange(q) for _ in range(np.atleast_2d(sources).shape[0])))

    @property
    def P(self) -> int:
        return self.sources.shape[0]

    @property
    def n_receivers(self) -> int:
        """Size of the receiver catalogue."""
        return self.receivers.shape[0]

    @property
    def Q(self) -> int:
        """Largest number of active receivers of any source."""
        return max(l.size for l in self.links)

    @property
    def has_cv(self) -> bool:
        return self.cv is not None and any(c.any() for c in self.cv)

    def active_mask(self):
        """``(n_receivers, P)`` boolean mask of measured source/receiver pairs."""
        m = np.zeros((self.n_receivers, self.P), dtype=bool)
        for p, l in enumerate(self.links):
            m[l, p] = True
        return m

    def cv_mask(self):
        m = np.zeros((self.n_receivers, self.P), dtype=bool)
        if self.cv is not None:
            for p, (l, c) in enumerate(zip(self.links, self.cv)):
                m[l[c], p] = True
        return m

    def recon_mask(self):
        return self.active_mask() & ~self.cv_mask()

    def n_active(self) -> int:
        return int(sum(l.size for l in self.links))

    def with_cv(self, cv) -> "MeasurementConfig":
        return replace(self, cv=cv)

    def check_outside(self, grid: Grid2D):
        problems = []
        if np.any(grid.contains(self.sources)):
            problems.append(("GEOMETRY_VIOLATION", "a source lies inside the inversion grid"))
        if np.any(grid.contains(self.receivers)):
            problems.append(("GEOMETRY_VIOLATION", "a receiver lies inside the inversion grid"))
        return problems

    def to_dict(self):
        d = {
            "sources": {"positions": self.sources.tolist()},
            "receivers": {"positions": self.receivers.tolist(),
                          "links": [l.tolist() for l in self.links]},
        }
        if self.cv is not None:
            d["receivers"]["cv_flags"] = [c.astype(int).tolist() for c in self.cv]
        return d


def arc_links(sources, receivers, arc_deg):
    """Per-source receiver lists for rotating bistatic set-ups: receiver
    ``q`` is active for source ``p`` when its angle relative to the source lies
    in ``[arc_deg[0], arc_deg[1]]``. Lists are ordered by relative angle."""
    lo, hi = arc_deg
    sa = np.degrees(np.arctan2(sources[:, 1], sources[:, 0]))
    ra = np.degrees(np.arctan2(receivers[:, 1], receivers[:, 0]))
    links = []
    for a in sa:
        rel = np.mod(ra - a, 360.0)
        rel = np.where(rel > 360.0 - 1e-7, rel - 360.0, rel)
        sel = np.nonzero((rel >= lo - 1e-7) & (rel <= hi + 1e-7))[0]
        links.append(sel[np.argsort(rel[sel], kind="stable")])
    return tuple(links)


def split_cv(config: MeasurementConfig, count: int, strategy: str = "every_kth",
             seed: Optional[int] = None) -> MeasurementConfig:
    """Flag ``count`` receivers of every source for cross validation.

    ``every_kth`` picks local indices ``floor(j * Q / count)``;
    ``random`` draws them with ``numpy.random.default_rng(seed)``.
    """
    count = int(count)
    qs = [l.size for l in config.links]
    if count <= 0:
        raise ConfigError([("CV_TOO_LARGE", "cross validation needs at least one receiver")])
    if count >= min(qs):
        raise ConfigError([("CV_TOO_LARGE", f"{count} CV receivers leave no reconstruction receivers")])
    strategy = strategy.lower()
    flags = []
    if strategy == "every_kth":
        for q in qs:
            f = np.zeros(q, dtype=bool)
            f[(np.arange(count) * q) // count] = True
            flags.append(f)
    elif strategy == "random":
        rng = np.random.default_rng(seed)
        shared = None
        for q in qs:
            if shared is None or shared[0] != q:
                idx = np.sort(rng.choice(q, size=count, replace=False))
                shared = (q, idx)
            f = np.zeros(q, dtype=bool)
            f[shared[1]] = True
            flags.append(f)
    else:
        raise ConfigError([("BAD_STRATEGY", f"unknown CV strategy {strategy!r}")])
    return config.with_cv(tuple(flags))


def check_grid_rule(grid: Grid2D, freqs: FrequencySet, slack: float = GRID_RULE_SLACK):
    """``delta <= min(lambda)/15``, with a small relative slack.

    Returns ``{"pass": bool, "delta_max": float, "delta": float}``.
    """
    delta_max = float(np.min(freqs.wavelength)) / 15.0
    return {"pass": bool(grid.delta <= delta_max * (1.0 + slack)), "delta_max": delta_max,
            "delta": grid.delta}


# --------------------------------------------------------------------------
# configuration files


@dataclass(frozen=True)
class SolverOptions:
    """Options of the SPGL1/GMMV solver. Defaults follow the package design."""

    max_iter: int = 3000          # cumulative inner iterations
    max_inner: int = 200          # inner iterations per tau subproblem
    inner_tol: float = 1e-5       # optimality certificate that ends a subproblem
    step_min: float = 1e-16
    step_max: float = 1e5
    nonmonotone_memory: int = 3
    gamma: float = 1e-4           # sufficient decrease constant
    max_backtracks: int = 12
    delta_n: int = 30             # CV patience
    sigma_tol: float = 1e-4       # |phi - sigma| <= sigma_tol * ||Y||_F ends BP_sigma

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not v > 0:
                raise ConfigError([("BAD_OPTION", f"solver option {f.name} must be positive")])

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError([("BAD_OPTION", f"unknown solver options {sorted(unknown)}")])
        return cls(**d)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    grid: Grid2D
    frequencies: FrequencySet
    background: BackgroundModel
    measurement: MeasurementConfig
    scene: SceneSpec
    solver: SolverOptions = field(default_factory=SolverOptions)
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def truth(self) -> ContrastMap:
        return rasterize_scene(self.scene, self.grid, self.background)


REQUIRED_SECTIONS = ("grid", "frequencies", "sources", "receivers")


def _positions(section, name, problems):
    if "positions" in section:
        pts = np.asarray(section["positions"], dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            problems.append(("MISSING_FIELD", f"{name}.positions must be a list of [x, y]"))
            return None
        return pts
    if "ring" in section:
        ring = section["ring"]
        missing = [k for k in ("radius", "count") if k not in ring]
        if missing:
            problems.append(("MISSING_FIELD", f"{name}.ring needs {missing}"))
            return None
        if ring["radius"] <= 0:
            problems.append(("BAD_UNITS", f"{name}.ring.radius must be positive"))
            return None
        return ring_positions(ring["radius"], int(ring["count"]), ring.get("start_deg", 0.0),
                              ring.get("step_deg"))
    problems.append(("MISSING_FIELD", f"{name} needs 'positions' or 'ring'"))
    return None


def config_from_dict(d: dict, name: Optional[str] = None) -> ExperimentConfig:
    """Validate a configuration mapping, collecting every problem before
    raising :class:`ConfigError`."""
    problems = []
    for sec in REQUIRED_SECTIONS:
        if sec not in d:
            problems.append(("MISSING_FIELD", f"section {sec!r} is missing"))

    grid = None
    if "grid" in d:
        g = d["grid"]
        missing = [k for k in ("x_min", "x_max", "y_min", "y_max", "delta") if k not in g]
        if missing:
            problems.append(("MISSING_FIELD", f"grid needs {missing}"))
        elif g["delta"] <= 0:
            problems.append(("BAD_UNITS", f"grid.delta must be positive, got {g['delta']}"))
        elif g["x_max"] <= g["x_min"] or g["y_max"] <= g["y_min"]:
            problems.append(("BAD_UNITS", "grid bounds are empty"))
        else:
            grid = Grid2D.from_bounds(g["x_min"], g["x_max"], g["y_min"], g["y_max"], g["delta"])

    bg_d = d.get("background", {})
    if bg_d.get("eps_r", 1.0) < 1.0 or bg_d.get("sigma", 0.0) < 0:
        problems.append(("BAD_UNITS", "background needs eps_r >= 1 and sigma >= 0"))
        background = BackgroundModel()
    else:
        background = BackgroundModel(float(bg_d.get("eps_r", 1.0)), float(bg_d.get("sigma", 0.0)))

    freqs = None
    if "frequencies" in d:
        f = np.asarray(d["frequencies"], dtype=float)
        if f.size == 0 or np.any(f <= 0):
            problems.append(("BAD_UNITS", "frequencies must be positive"))
        elif np.any(np.diff(f) <= 0):
            problems.append(("BAD_UNITS", "frequencies must be strictly increasing and unique"))
        else:
            freqs = FrequencySet(f)

    sources = _positions(d["sources"], "sources", problems) if "sources" in d else None
    receivers = _positions(d["receivers"], "receivers", problems) if "receivers" in d else None

    measurement = None
    if sources is not None and receivers is not None:
        rx = d["receivers"]
        if "links" in rx:
            links = tuple(np.asarray(l, dtype=int) for l in rx["links"])
        elif "active_arc_deg" in rx:
            links = arc_links(sources, receivers, rx["active_arc_deg"])
        else:
            links = tuple(np.arange(len(receivers)) for _ in range(len(sources)))
        try:
            measurement = MeasurementConfig(sources, receivers, links)
            if "cv_flags" in rx:
                measurement = measurement.with_cv(tuple(np.asarray(c, bool) for c in rx["cv_flags"]))
            elif "cv" in rx and rx["cv"]:
                cv = rx["cv"]
                measurement = split_cv(measurement, cv.get("count", 0), cv.get("strategy", "every_kth"),
                                       cv.get("seed"))
        except ConfigError as exc:
            problems.extend(exc.problems)
            measurement = None
        if grid is not None:
            probe = MeasurementConfig.full(sources, receivers)
            problems.extend(probe.check_outside(grid))

    scene = SceneSpec()
    if "scene" in d:
        try:
            scene = SceneSpec.from_dict(d["scene"])
        except (TypeError, KeyError) as exc:
            problems.append(("MISSING_FIELD", f"bad scene entry: {exc}"))
        except ConfigError as exc:
            problems.extend(exc.problems)
        if grid is not None:
            try:
                rasterize_scene(scene, grid, background)
            except GeometryError as exc:
                problems.append((exc.code, str(exc)))
            except ConfigError as exc:
                problems.extend(exc.problems)

    solver = SolverOptions()
    if "solver" in d:
        try:
            solver = SolverOptions.from_dict(d["solver"])
        except (ConfigError, TypeError) as exc:
            problems.extend(getattr(exc, "problems", [("BAD_OPTION", str(exc))]))

    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(name or d.get("name", "experiment"), grid, freqs, background, measurement,
                            scene, solver, raw=d)


def load_config(path) -> ExperimentConfig:
    """Read and validate a JSON experiment configuration."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([("MISSING_FILE", f"cannot read {path}: {exc}")]) from exc
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([("PARSE_ERROR", f"{path}: {exc}")]) from exc
    return config_from_dict(d, name=d.get("name", path.stem))
