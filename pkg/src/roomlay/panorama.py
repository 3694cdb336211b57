"""Analytic equirectangular boundary maps of room layouts.

A full-sphere panorama of width W and height H (W = 2H) is sampled at column
centers: column u looks along azimuth ((u + 0.5) / W) * 2*pi - pi, so the +x
axis sits at the image center and column 0 starts at -pi.  For each column
the nearest wall is found by horizontal ray casting; the wall-floor and
wall-ceiling boundary elevations follow from the camera height and wall
distance, and wall-wall verticals appear wherever the visible wall index
changes between adjacent columns (circularly).  Curves are splatted with a
Gaussian and each channel is peak-normalized to 1.

Channel order: 0 = wall-floor, 1 = wall-ceiling, 2 = wall-wall.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layout import ParseError, RoomLayout

CHANNELS = ("wall-floor", "wall-ceiling", "wall-wall")
DEFAULT_SIGMA_PX = 1.5


class CastError(RuntimeError):
    """A ray from an interior camera failed to hit any wall."""


@dataclass(frozen=True)
class BoundaryMap:
    """3 x H x W boundary intensities in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3 or v.shape[0] != 3:
            raise ValueError(f"boundary map must be (3, H, W), got {v.shape}")
        if v.size and (v.min() < 0.0 or v.max() > 1.0):
            raise ValueError("boundary map values must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]


def _ray_wall_hits(layout: RoomLayout, azimuths: np.ndarray):
    """Distances (K, n_walls) from the camera along each azimuth to each wall.

    Entries are +inf where a ray misses the wall segment.  Segment endpoints
    use a half-open [0, 1) parameter so shared corners count for exactly one
    of the two adjacent walls.
    """
    cam = np.array([layout.camera.x, layout.camera.y])
    d = np.stack([np.cos(azimuths), np.sin(azimuths)], axis=1)  # (K, 2)
    a = layout.corners                                          # (n, 2)
    b = np.roll(layout.corners, -1, axis=0)
    e = b - a                                                   # wall directions
    # solve cam + t*d = a + s*e for each (ray, wall)
    denom = d[:, None, 0] * (-e[None, :, 1]) + d[:, None, 1] * e[None, :, 0]
    rel = a[None, :, :] - cam[None, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (rel[:, :, 0] * (-e[None, :, 1]) + rel[:, :, 1] * e[None, :, 0]) / denom
        s = (d[:, None, 0] * rel[:, :, 1] - d[:, None, 1] * rel[:, :, 0]) / denom
    valid = (np.abs(denom) > 1e-300) & (t > 1e-9) & (s >= 0.0) & (s < 1.0)
    return np.where(valid, t, np.inf)


def cast_column(layout: RoomLayout, azimuth: float) -> tuple[float, int]:
    """Nearest wall hit by the horizontal ray at ``azimuth`` (radians).

    Ties (corner directions) resolve to the lower wall index.
    """
    t = _ray_wall_hits(layout, np.array([float(azimuth)]))[0]
    idx = int(np.argmin(t))  # argmin takes the first (lowest) index on ties
    if not np.isfinite(t[idx]):
        raise CastError(f"ray at azimuth {azimuth:.6f} escaped layout {layout.id!r}")
    return float(t[idx]), idx


def cast_columns(layout: RoomLayout, width: int) -> tuple[np.ndarray, np.ndarray]:
    """(distances, wall indices) for all ``width`` column-center azimuths."""
    azimuths = column_azimuths(width)
    t = _ray_wall_hits(layout, azimuths)
    idx = np.argmin(t, axis=1)
    dist = t[np.arange(width), idx]
    if not np.isfinite(dist).all():
        bad = int(np.argmax(~np.isfinite(dist)))
        raise CastError(f"column {bad} escaped layout {layout.id!r}")
    return dist, idx


def column_azimuths(width: int) -> np.ndarray:
    return ((np.arange(width) + 0.5) / width) * 2.0 * np.pi - np.pi


def boundary_rows(layout: RoomLayout, distances: np.ndarray,
                  height: int) -> tuple[np.ndarray, np.ndarray]:
    """Fractional (floor_row, ceiling_row) per column from wall distances."""
    cam_h = layout.camera.height
    phi_f = np.arctan2(-cam_h, distances)
    phi_c = np.arctan2(layout.ceiling_height - cam_h, distances)
    v_f = (0.5 - phi_f / np.pi) * height
    v_c = (0.5 - phi_c / np.pi) * height
    return v_f, v_c


def render_boundaries(layout: RoomLayout, width: int, height: int,
                      sigma_px: float = DEFAULT_SIGMA_PX) -> BoundaryMap:
    """Ground-truth visible boundary map of ``layout``."""
    if width != 2 * height:
        raise ValueError(f"equirectangular panorama needs W = 2H, got {width}x{height}")
    if sigma_px <= 0:
        raise ValueError(f"sigma_px must be positive, got {sigma_px}")
    dist, wall_idx = cast_columns(layout, width)
    v_f, v_c = boundary_rows(layout, dist, height)

    rows = np.arange(height) + 0.5
    inv2s2 = 1.0 / (2.0 * sigma_px * sigma_px)
    maps = np.zeros((3, height, width))
    maps[0] = np.exp(-(rows[:, None] - v_f[None, :]) ** 2 * inv2s2)
    maps[1] = np.exp(-(rows[:, None] - v_c[None, :]) ** 2 * inv2s2)

    cols = np.arange(width) + 0.5
    changes = np.nonzero(wall_idx != np.roll(wall_idx, -1))[0]
    for u in changes:
        u2 = (u + 1) % width
        x_edge = float(u + 1)  # boundary between columns u and u+1
        top = min(v_c[u], v_c[u2])
        bottom = max(v_f[u], v_f[u2])
        dx = (cols - x_edge + width / 2.0) % width - width / 2.0
        dy = np.maximum.reduce([top - rows, rows - bottom, np.zeros(height)])
        seg = np.exp(-(dx[None, :] ** 2 + dy[:, None] ** 2) * inv2s2)
        np.maximum(maps[2], seg, out=maps[2])

    for ch in range(3):
        peak = maps[ch].max()
        if peak > 0:
            maps[ch] /= peak
    return BoundaryMap(maps)


def write_boundary_map(bm: BoundaryMap, path):
    """Store as one P5 PGM with the 3 channels stacked vertically."""
    stacked = np.rint(255.0 * np.vstack([bm.values[0], bm.values[1], bm.values[2]]))
    data = stacked.astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{bm.width} {3 * bm.height}\n255\n".encode())
        fh.write(data.tobytes())


def read_boundary_map(path) -> BoundaryMap:
    from .layout import _read_pgm_raw

    values, _ = _read_pgm_raw(path)
    total, width = values.shape
    if total % 3:
        raise ParseError(f"stacked boundary map height {total} is not divisible by 3")
    h = total // 3
    return BoundaryMap(values.reshape(3, h, width) / 255.0)
