"""Bird's-eye-view projection: per-bin maximum heights on a square grid."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cloud import PointCloud, Z_MAX, Z_MIN

# Heights are stored relative to the Z_MIN floor so that an empty bin (0)
# sits below every real return.
HEIGHT_OFFSET = -Z_MIN


@dataclass
class BevImage:
    """Square height image; entry 0 means no return fell in that bin."""

    data: np.ndarray
    window_m: float
    grid_size: int


def _round_half_away(v: np.ndarray) -> np.ndarray:
    # np.round ties to even; the binning rule rounds halves away from zero.
    return np.sign(v) * np.floor(np.abs(v) + 0.5)


def _bin_indices(x, y, window_m: float, grid_size: int):
    half = window_m / 2.0
    width = window_m / grid_size
    r = _round_half_away((np.asarray(x) + half) / width)
    c = _round_half_away((np.asarray(y) + half) / width)
    r = np.clip(r, 0, grid_size - 1).astype(np.int64)
    c = np.clip(c, 0, grid_size - 1).astype(np.int64)
    return r, c


def bin_index(x: float, y: float, window_m: float, grid_size: int) -> tuple[int, int]:
    """Grid cell of a point, row from x and column from y.

    Rounding is half-away-from-zero and results are clamped to the grid,
    so the window boundary row/column absorbs exact-edge points.
    """
    half = window_m / 2.0
    if abs(x) > half or abs(y) > half:
        raise ValueError(f"point ({x}, {y}) lies outside the {window_m} m window")
    r, c = _bin_indices(x, y, window_m, grid_size)
    return int(r), int(c)


def make_bev(cloud: PointCloud, window_m: float = 80.0, grid_size: int = 128) -> BevImage:
    """Project a cloud to a top-down max-height image.

    Points outside the window or the [Z_MIN, Z_MAX] band are ignored.  Each
    bin holds max(z) - Z_MIN over its points, so all entries are >= 0.
    """
    if window_m <= 0:
        raise ValueError("window_m must be positive")
    if grid_size < 8:
        raise ValueError("grid_size must be at least 8")
    half = window_m / 2.0
    x, y, z = cloud.xyz.T if len(cloud) else (np.empty(0),) * 3
    keep = (np.abs(x) <= half) & (np.abs(y) <= half) & (z >= Z_MIN) & (z <= Z_MAX)
    data = np.zeros(grid_size * grid_size)
    if keep.any():
        r, c = _bin_indices(x[keep], y[keep], window_m, grid_size)
        np.maximum.at(data, r * grid_size + c, z[keep] + HEIGHT_OFFSET)
    return BevImage(data.reshape(grid_size, grid_size), window_m, grid_size)


def write_pgm(bev: BevImage, path) -> None:
    """Debug dump as a 16-bit PGM, heights scaled to millimeters."""
    mm = np.clip(_round_half_away(bev.data * 1000.0), 0, 65535).astype(">u2")
    header = f"P5\n{bev.grid_size} {bev.grid_size}\n65535\n".encode("ascii")
    Path(path).write_bytes(header + mm.tobytes())
