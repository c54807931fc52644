"""Images from inversion outputs, dB scaling, support masks, comparison
metrics and field export."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import ndimage

from .core import ContrastMap, Grid2D
from .errors import GeometryError, GmmvError

DISPLAY_FLOOR_DB = -25.0
METRIC_LEVEL_DB = -10.0
EXTERIOR_FLOOR_DB = -60.0


@dataclass(frozen=True)
class ImageField:
    grid: Grid2D
    values: np.ndarray
    kind: str = "gmmv"          # gmmv | lsm
    db: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size != self.grid.N:
            raise GeometryError(f"image has {v.size} values for a grid of {self.grid.N} cells",
                                code="GRID_MISMATCH")
        if not self.db and np.any(v < 0):
            raise ValueError("linear image values must be nonnegative")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def as_2d(self):
        return self.values.reshape(self.grid.shape)


def gmmv_image(J, grid: Grid2D) -> ImageField:
    """``gamma_n = sum_{p,i} |J[n, (p,i)]|^2``."""
    J = np.asarray(J)
    return ImageField(grid, np.sum(J.real**2 + J.imag**2, axis=1), "gmmv")


def to_db(img: ImageField) -> ImageField:
    """``10 log10(gamma / max gamma)``; zeros map to ``-inf``."""
    if img.db:
        return img
    m = float(img.values.max())
    if not m > 0:
        raise GmmvError("cannot scale an all-zero image to dB", code="ALL_ZERO_IMAGE")
    with np.errstate(divide="ignore"):
        v = 10.0 * np.log10(img.values / m)
    return replace(img, values=v, db=True)


def threshold_support(img_db: ImageField, level_db: float = METRIC_LEVEL_DB):
    """Boolean mask ``gamma_dB >= level_db``."""
    return to_db(img_db).values >= level_db


@dataclass(frozen=True)
class SupportMetrics:
    jaccard: float
    n_blobs: int
    blob_centroids: np.ndarray          # (n_blobs, 2) m
    centroid_errors: np.ndarray         # distance of each blob centroid to the nearest truth centroid, m
    peak_sidelobe_db: float             # highest level outside the dilated truth
    mean_exterior_db: float             # mean level (floored) outside the dilated truth
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {"jaccard": self.jaccard, "n_blobs": self.n_blobs,
                "blob_centroids": self.blob_centroids.tolist(),
                "centroid_errors": self.centroid_errors.tolist(),
                "peak_sidelobe_db": self.peak_sidelobe_db, "mean_exterior_db": self.mean_exterior_db}


def blobs(mask2d):
    """4-connected components: ``(labels, count)``."""
    return ndimage.label(mask2d, structure=ndimage.generate_binary_structure(2, 1))


def _centroids(grid, labels, n):
    if n == 0:
        return np.zeros((0, 2))
    ys, xs = grid.y_centers(), grid.x_centers()
    idx = np.arange(1, n + 1)
    cy = ndimage.mean(np.broadcast_to(ys[:, None], labels.shape), labels, idx)
    cx = ndimage.mean(np.broadcast_to(xs[None, :], labels.shape), labels, idx)
    return np.column_stack([cx, cy])


def dilate(mask2d, radius_cells):
    r = int(math.ceil(radius_cells))
    if r <= 0:
        return mask2d.copy()
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    disk = xx**2 + yy**2 <= radius_cells**2
    return ndimage.binary_dilation(mask2d, structure=disk)


def support_metrics(mask, truth: ContrastMap, img_db: ImageField, wavelength_min: float,
                    floor_db: float = EXTERIOR_FLOOR_DB) -> SupportMetrics:
    """Compare a support mask and dB image with the true scene.

    Exterior levels are taken outside the truth support dilated by
    ``wavelength_min / 2``; the mean uses levels clipped at ``floor_db``.
    """
    grid = img_db.grid
    if truth.grid != grid:
        raise GeometryError("truth and image live on different grids", code="GRID_MISMATCH")
    mask = np.asarray(mask, dtype=bool).ravel()
    if mask.size != grid.N:
        raise GeometryError("mask does not match the grid", code="GRID_MISMATCH")
    t = truth.support
    union = np.count_nonzero(mask | t)
    jac = np.count_nonzero(mask & t) / union if union else 1.0

    lab, n = blobs(mask.reshape(grid.shape))
    cen = _centroids(grid, lab, n)
    tlab, tn = blobs(t.reshape(grid.shape))
    tcen = _centroids(grid, tlab, tn)
    if n and tn:
        d = np.hypot(cen[:, None, 0] - tcen[None, :, 0], cen[:, None, 1] - tcen[None, :, 1])
        err = d.min(axis=1)
    else:
        err = np.full(n, np.nan)

    db = to_db(img_db).values
    ext = ~dilate(t.reshape(grid.shape), 0.5 * wavelength_min / grid.delta).ravel()
    if ext.any():
        peak = float(db[ext].max())
        mean = float(np.mean(np.maximum(db[ext], floor_db)))
    else:
        peak = mean = float("nan")
    return SupportMetrics(float(jac), int(n), cen, err, peak, mean,
                          {"truth_centroids": tcen.tolist()})


# --------------------------------------------------------------------------
# export

FORMATS = ("csv_grid", "pgm8", "png")


def _gray(img: ImageField, floor_db):
    db = to_db(img).values if not img.db else img.values
    x = (np.clip(db, floor_db, 0.0) - floor_db) / (0.0 - floor_db)
    g = np.rint(x * 255.0).astype(np.uint8).reshape(img.grid.shape)
    return g[::-1]      # first image row at the top (largest y)


def export_field(img: ImageField, path, fmt: str = "csv_grid", floor_db: float = DISPLAY_FLOOR_DB) -> Path:
    """Write an image as ``csv_grid``, ``pgm8`` or ``png``.

    ``csv_grid``: a header line ``nx,ny,delta,x0,y0`` followed by ``ny`` rows
    of ``nx`` values, the first row at the smallest y. ``pgm8`` and ``png``
    map ``[floor_db, 0]`` dB linearly onto ``[0, 255]`` with the largest y at
    the top.
    """
    path = Path(path)
    fmt = fmt.lower()
    g = img.grid
    try:
        if fmt == "csv_grid":
            lines = [f"{g.nx},{g.ny},{g.delta!r},{g.x0!r},{g.y0!r}"]
            for row in img.as_2d():
                lines.append(",".join(repr(float(v)) for v in row))
            path.write_text("\n".join(lines) + "\n")
        elif fmt == "pgm8":
            header = f"P5\n{g.nx} {g.ny}\n255\n".encode()
            path.write_bytes(header + _gray(img, floor_db).tobytes())
        elif fmt == "png":
            from PIL import Image
            Image.fromarray(_gray(img, floor_db), mode="L").save(path, format="PNG")
        else:
            raise ValueError(f"unknown format {fmt!r}; choose from {FORMATS}")
    except OSError as exc:
        raise GmmvError(f"cannot write {path}: {exc}", code="IO_ERROR") from exc
    return path


def read_csv_grid(path, kind="gmmv", db=False) -> ImageField:
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise GmmvError(f"cannot read {path}: {exc}", code="IO_ERROR") from exc
    nx, ny, delta, x0, y0 = lines[0].split(",")
    grid = Grid2D(float(x0), float(y0), float(delta), int(nx), int(ny))
    vals = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:1 + grid.ny]])
    return ImageField(grid, vals.ravel(), kind, db)


def write_curve(path, values, start=0) -> Path:
    """Two-column text ``iteration value``."""
    path = Path(path)
    try:
        path.write_text("".join(f"{start + k} {float(v)!r}\n" for k, v in enumerate(values)))
    except OSError as exc:
        raise GmmvError(f"cannot write {path}: {exc}", code="IO_ERROR") from exc
    return path
