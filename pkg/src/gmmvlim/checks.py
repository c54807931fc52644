"""Numerical self-checks: grid rule, adjoint identity, Green's vs FDFD
sensing rows and the FDFD solver against the cylinder series solution.

Each check returns a :class:`CheckResult` carrying its measured value and
the tolerance it was held to.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .core import (BackgroundModel, C0, Circle, FrequencySet, Grid2D, MeasurementConfig, SceneSpec,
                   check_grid_rule, rasterize_scene, ring_positions)
from .fdfd import radiate, solve_scene_fields
from .mie import mie_reference
from .sensing import SensingOperator, build_sensing_fdfd, build_sensing_greens


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: dict = field(default_factory=dict)

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} {self.name}: {self.value:.4g} (tolerance {self.tolerance:.4g})"

    def to_dict(self):
        return {"name": self.name, "passed": self.passed, "value": self.value,
                "tolerance": self.tolerance, "detail": self.detail}


def grid_rule_check(grid: Grid2D, freqs: FrequencySet) -> CheckResult:
    r = check_grid_rule(grid, freqs)
    return CheckResult("grid_rule", r["pass"], r["delta"], r["delta_max"])


def adjoint_error(op: SensingOperator, seed=0, rows="recon"):
    """``|<Phi J, R> - <J, Phi^H R>| / (||Phi J|| ||R||)`` for random ``J``, ``R``."""
    rng = np.random.default_rng(seed)
    J = rng.standard_normal(op.shape_sources) + 1j * rng.standard_normal(op.shape_sources)
    R = rng.standard_normal(op.shape_data) + 1j * rng.standard_normal(op.shape_data)
    R = np.where(op.mask(rows), R, 0.0)
    PJ = op.forward(J, rows)
    lhs = np.vdot(R, PJ)
    rhs = np.vdot(op.adjoint(R, rows), J)
    return float(abs(lhs - rhs) / (np.linalg.norm(PJ) * np.linalg.norm(R)))


def adjoint_check(op: SensingOperator, tol=1e-10, seed=0) -> CheckResult:
    err = max(adjoint_error(op, seed, rows) for rows in ("recon", "all"))
    ok = bool(np.isfinite(err) and err <= tol and all(np.all(np.isfinite(g)) for g in op.G))
    return CheckResult("adjoint", ok, err, tol)


def column_errors(a: SensingOperator, b: SensingOperator):
    """Relative L2 difference of every matrix column, per frequency."""
    out = []
    for ga, gb in zip(a.G, b.G):
        out.append(np.linalg.norm(ga - gb, axis=0) / np.linalg.norm(ga, axis=0))
    return out


def greens_fdfd_check(grid: Grid2D, config: MeasurementConfig, freqs: FrequencySet,
                      background: BackgroundModel = BackgroundModel(), tol=0.05,
                      max_receivers=None) -> CheckResult:
    """Largest columnwise relative difference between the analytic and the
    FDFD sensing matrices. ``max_receivers`` thins the receiver catalogue to
    evenly spaced entries to bound the cost."""
    if max_receivers is not None and config.n_receivers > max_receivers:
        keep = np.unique(np.linspace(0, config.n_receivers - 1, max_receivers).round().astype(int))
        config = MeasurementConfig.full(config.sources[:1], config.receivers[keep])
    t0 = time.perf_counter()
    og = build_sensing_greens(grid, config, freqs, background)
    of = build_sensing_fdfd(grid, config, freqs, background)
    errs = column_errors(og, of)
    worst = float(max(e.max() for e in errs))
    return CheckResult("greens_vs_fdfd", worst <= tol, worst, tol,
                       {"per_frequency_max": [float(e.max()) for e in errs],
                        "n_receivers": config.n_receivers, "seconds": time.perf_counter() - t0})


def cylinder_grid(radius, delta, margin_cells=2):
    """Square grid with an odd number of cells whose centre cell sits at the
    origin, covering the cylinder plus ``margin_cells``."""
    n = int(math.ceil(2 * radius / delta)) + 2 * margin_cells
    n += 1 - n % 2
    return Grid2D(-0.5 * n * delta, -0.5 * n * delta, delta, n, n)


def mie_error(freq=4e9, radius=0.015, eps_r=3.0, delta=None, ring_radius=0.76, n_receivers=72,
              source=(0.72, 0.0), supersample=16):
    """Relative L2 error of the FDFD scattered field of a centred cylinder
    against the series solution on a receiver ring, with its runtime (s).

    ``delta`` defaults to ``lambda / 15``.
    """
    lam = C0 / freq
    delta = lam / 15.0 if delta is None else delta
    t0 = time.perf_counter()
    grid = cylinder_grid(radius, delta)
    cm = rasterize_scene(SceneSpec((Circle(eps_r=eps_r, radius=radius),)), grid, supersample=supersample)
    omega = 2 * np.pi * freq
    rx = ring_positions(ring_radius, n_receivers)
    system, _, e_tot = solve_scene_fields(cm, np.asarray(source)[None, :], omega)
    y = radiate(cm, omega, system.k_bg, e_tot, rx)[:, 0]
    elapsed = time.perf_counter() - t0
    ref = mie_reference((0.0, 0.0), radius, eps_r, freq, rx, source=source)
    return float(np.linalg.norm(y - ref) / np.linalg.norm(ref)), elapsed


def mie_check(freq=4e9, delta=None, tol=0.03, **kw) -> CheckResult:
    err, sec = mie_error(freq, delta=delta, **kw)
    return CheckResult("fdfd_vs_series", err <= tol, err, tol, {"seconds": sec, "freq": freq})
