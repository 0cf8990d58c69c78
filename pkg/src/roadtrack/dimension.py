"""Object length/width/height estimation with 1D log-odds grids.

Each axis keeps a grid of cells ``[0, d_max)`` of width ``cell``. Cell ``j``
holds the log-odds that the object is at least as large as the cell
midpoint, so ``P(d <= d_j) = 1 / (1 + exp(L_j))``. A measurement updates
every cell through a smooth three-branch logistic likelihood and a
forgetting factor ``alpha`` on the previous log-odds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from roadtrack.model import ModelError

AXES = ("length", "width", "height")


@dataclass(frozen=True)
class GridConfig:
    cell: float = 0.1
    d_max: tuple[float, float, float] = (20.0, 5.0, 5.0)
    p_ref: float = 0.5
    p_max: float = 0.9
    p_min: float = 0.1
    alpha: float = 0.92
    clamp: float = 100.0
    sigma_floor: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.p_min < self.p_ref < self.p_max < 1.0:
            raise ModelError("need 0 < p_min < p_ref < p_max < 1")
        if not 0.0 < self.alpha <= 1.0:
            raise ModelError("alpha must lie in (0, 1]")
        if not self.cell > 0 or any(not d > 0 for d in self.d_max):
            raise ModelError("cell size and d_max must be positive")
        object.__setattr__(self, "d_max", tuple(float(d) for d in self.d_max))


@dataclass(frozen=True, eq=False)
class Grid1D:
    log_odds: np.ndarray
    cell: float
    d_max: float

    def __post_init__(self):
        arr = np.array(self.log_odds, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "log_odds", arr)

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.log_odds.shape[0]) + 0.5) * self.cell

    @property
    def boundaries(self) -> np.ndarray:
        """Interior cell boundaries, where finite-difference masses live."""
        return (np.arange(1, self.log_odds.shape[0])) * self.cell


@dataclass(frozen=True)
class DimensionGrid:
    axes: tuple[Grid1D, Grid1D, Grid1D]

    def __getitem__(self, i: int) -> Grid1D:
        return self.axes[i]


@dataclass(frozen=True, eq=False)
class DimensionEstimate:
    d: np.ndarray
    sigma: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        d = np.array(self.d, dtype=float).reshape(3)
        s = np.array(self.sigma, dtype=float).reshape(3)
        if np.any(d < 0) or np.any(s < 0):
            raise ModelError("dimension estimate must be nonnegative")
        d.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "sigma", s)


def n_cells(d_max: float, cell: float) -> int:
    # tolerate float noise such as 20 / 0.1 = 200.00000000000003
    return max(1, int(math.ceil(d_max / cell - 1e-9)))


def init_axis(d_max: float, cfg: GridConfig) -> Grid1D:
    l0 = math.log(cfg.p_ref / (1.0 - cfg.p_ref))
    return Grid1D(np.full(n_cells(d_max, cfg.cell), l0), cfg.cell, d_max)


def init_grid(cfg: GridConfig) -> DimensionGrid:
    return DimensionGrid(tuple(init_axis(dm, cfg) for dm in cfg.d_max))


def measurement_likelihood(d_j, d_meas: float, sigma_meas: float, cfg: GridConfig):
    """Probability that the object is at least as large as ``d_j``.

    Cells below the measurement rise from ``p_ref`` toward ``p_max``, cells
    above fall toward ``p_min``; both branches meet at ``p_ref`` when
    ``d_j == d_meas``.
    """
    d_j = np.asarray(d_j, dtype=float)
    sigma = max(float(sigma_meas), cfg.sigma_floor)
    z = np.clip((d_j - d_meas) / sigma, -700.0, 700.0)
    s = 1.0 / (1.0 + np.exp(-z))
    below = cfg.p_max - 2.0 * (cfg.p_max - cfg.p_ref) * s
    above = 2.0 * cfg.p_ref - cfg.p_min - 2.0 * (cfg.p_ref - cfg.p_min) * s
    out = np.where(d_j < d_meas, below, np.where(d_j > d_meas, above, cfg.p_ref))
    return out if out.ndim else float(out)


def update_axis(grid: Grid1D, d_meas: float, sigma_meas: float, cfg: GridConfig) -> Grid1D:
    if not (math.isfinite(d_meas) and d_meas >= 0):
        raise ModelError("dimension measurement must be finite and >= 0")
    p = measurement_likelihood(grid.midpoints, d_meas, sigma_meas, cfg)
    lo = np.log(p / (1.0 - p)) + cfg.alpha * grid.log_odds
    return Grid1D(np.clip(lo, -cfg.clamp, cfg.clamp), grid.cell, grid.d_max)


def update_grid(grid: DimensionGrid, d_meas, sigma_meas, cfg: GridConfig) -> DimensionGrid:
    d_meas = np.asarray(d_meas, dtype=float).reshape(3)
    sigma_meas = np.asarray(sigma_meas, dtype=float).reshape(3)
    return DimensionGrid(
        tuple(update_axis(g, d_meas[i], sigma_meas[i], cfg) for i, g in enumerate(grid.axes))
    )


def cell_likelihood(grid: Grid1D) -> np.ndarray | None:
    """Normalized finite-difference masses of the cumulative curve.

    Returns ``None`` when every difference is non-positive.
    """
    cdf = 1.0 / (1.0 + np.exp(np.clip(grid.log_odds, -700, 700)))
    p = np.clip(np.diff(cdf), 0.0, None)
    total = p.sum()
    if not total > 0:
        return None
    return p / total


def moments(p: np.ndarray, locations: np.ndarray) -> tuple[float, float]:
    p = np.asarray(p, dtype=float)
    mean = float(np.dot(p, locations))
    var = float(np.dot(p, (locations - mean) ** 2))
    return mean, math.sqrt(max(var, 0.0))


def estimate_axis(grid: Grid1D) -> tuple[float, float, bool]:
    p = cell_likelihood(grid)
    if p is None:
        loc = grid.midpoints
        mean, sd = moments(np.full(loc.shape, 1.0 / loc.shape[0]), loc)
        return mean, sd, True
    mean, sd = moments(p, grid.boundaries)
    return min(max(mean, 0.0), grid.d_max), sd, False


def estimate(grid: DimensionGrid) -> DimensionEstimate:
    vals = [estimate_axis(g) for g in grid.axes]
    return DimensionEstimate(
        [v[0] for v in vals], [v[1] for v in vals], any(v[2] for v in vals)
    )


def _resize(values: np.ndarray, n: int) -> np.ndarray:
    if values.shape[0] >= n:
        return values[:n]
    return np.concatenate([values, np.full(n - values.shape[0], values[-1])])


def swap_length_width(grid: DimensionGrid) -> DimensionGrid:
    """Exchange the length and width beliefs, e.g. after a quarter-turn of the
    box frame. Cells beyond the shorter axis' extent repeat its last value."""
    ln, wd, ht = grid.axes
    return DimensionGrid(
        (
            Grid1D(_resize(wd.log_odds, ln.log_odds.shape[0]), ln.cell, ln.d_max),
            Grid1D(_resize(ln.log_odds, wd.log_odds.shape[0]), wd.cell, wd.d_max),
            ht,
        )
    )
