"""Synthetic data for experiment configurations.

Data are simulated on a grid ``SIM_RATIO`` times finer than the inversion
grid (an incommensurate factor, so the simulator and the inversion model do
not share a discretisation) with sub-cell material averaging.
"""

from __future__ import annotations

from typing import Optional

from .core import ContrastMap, ExperimentConfig, Grid2D, rasterize_scene
from .dataset import ScatterDataset, add_noise
from .fdfd import simulate_scene

SIM_RATIO = 1.5
SUPERSAMPLE = 8


def simulation_grid(grid: Grid2D, ratio: float = SIM_RATIO) -> Grid2D:
    """Grid over the same region with spacing ``delta / ratio``."""
    x_min, x_max, y_min, y_max = grid.bounds
    return Grid2D.from_bounds(x_min, x_max, y_min, y_max, grid.delta / ratio)


def simulation_contrast(cfg: ExperimentConfig, ratio: float = SIM_RATIO,
                        supersample: int = SUPERSAMPLE) -> ContrastMap:
    return rasterize_scene(cfg.scene, simulation_grid(cfg.grid, ratio), cfg.background, supersample)


def synthesize(cfg: ExperimentConfig, snr_db: float = float("inf"), seed: Optional[int] = None,
               ratio: float = SIM_RATIO) -> ScatterDataset:
    """Simulate the scene of ``cfg`` and add noise at ``snr_db``."""
    contrast = simulation_contrast(cfg, ratio)
    ds = simulate_scene(contrast, cfg.measurement, cfg.frequencies, cfg.background)
    return add_noise(ds, snr_db, seed)
