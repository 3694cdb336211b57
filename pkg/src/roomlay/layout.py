"""Room layout geometry: polygons, rasterization, sampling, IoU, contours, file I/O.

Coordinate conventions
----------------------
Layouts live in meters (x right, y up, corners counter-clockwise).  Grids live
in normalized coordinates: the raster spans [-1, 1]^2 and pixel (i, j) has its
center at

    x = (j + 0.5) * 2 / R - 1,      y = 1 - (i + 0.5) * 2 / R,

so row 0 is the +y edge of the grid.  ``rasterize`` centers the layout and
scales it uniformly so its bounding box fits inside [-margin, margin]^2
(margin 0.9 by default); the applied scale/offset is recorded on the grid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

DEGENERATE_AREA = 1e-9  # m^2


class LayoutError(ValueError):
    """Raised when a layout violates its geometric invariants."""


class UndefinedIoUError(ValueError):
    """Raised when both grids are empty and IoU is 0/0."""


class ParseError(ValueError):
    """Malformed layout/grid file.  Carries ``line`` or ``offset`` when known."""

    def __init__(self, message, line=None, offset=None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if offset is not None:
            loc.append(f"offset {offset}")
        super().__init__(message + (f" ({', '.join(loc)})" if loc else ""))
        self.line = line
        self.offset = offset


# ---------------------------------------------------------------------------
# Polygon primitives


def polygon_area(corners) -> float:
    """Signed shoelace area; positive for counter-clockwise polygons."""
    c = np.asarray(corners, dtype=float)
    x, y = c[:, 0], c[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _on_segment(p, a, b) -> bool:
    # p known collinear with a-b; check it lies within the segment's bbox
    return (min(a[0], b[0]) <= p[0] <= max(a[0], b[0])
            and min(a[1], b[1]) <= p[1] <= max(a[1], b[1]))


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _segments_cross(a, b, c, d) -> bool:
    """True if segment ab intersects segment cd (including collinear overlap)."""
    o1, o2 = _orient(a, b, c), _orient(a, b, d)
    o3, o4 = _orient(c, d, a), _orient(c, d, b)
    if ((o1 > 0) != (o2 > 0)) and ((o3 > 0) != (o4 > 0)) and o1 != 0 and o2 != 0 and o3 != 0 and o4 != 0:
        return True
    if o1 == 0 and _on_segment(c, a, b):
        return True
    if o2 == 0 and _on_segment(d, a, b):
        return True
    if o3 == 0 and _on_segment(a, c, d):
        return True
    if o4 == 0 and _on_segment(b, c, d):
        return True
    return False


def polygon_is_simple(corners) -> bool:
    """No two non-adjacent edges intersect; adjacent edges meet only at the
    shared corner (no collinear backtracking)."""
    c = np.asarray(corners, dtype=float)
    n = len(c)
    if n < 3:
        return False
    edges = [(c[i], c[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        a, b = edges[i]
        if np.all(a == b):
            return False
        for j in range(i + 1, n):
            p, q = edges[j]
            adjacent = (j == i + 1) or (i == 0 and j == n - 1)
            if adjacent:
                # shared endpoint is legal, anything more means a spike/overlap
                shared = b if j == i + 1 else a
                other1 = a if j == i + 1 else b
                other2 = q if j == i + 1 else p
                if _orient(shared, other1, other2) == 0:
                    # collinear neighbors: reject if they overlap beyond the corner
                    d1 = other1 - shared
                    d2 = other2 - shared
                    if np.dot(d1, d2) > 0:
                        return False
                continue
            if _segments_cross(a, b, p, q):
                return False
    return True


def point_in_polygon(point, corners) -> bool:
    """Even-odd ray-crossing test.  Points exactly on an edge count as inside."""
    px, py = float(point[0]), float(point[1])
    c = np.asarray(corners, dtype=float)
    n = len(c)
    inside = False
    for i in range(n):
        x1, y1 = c[i]
        x2, y2 = c[(i + 1) % n]
        # exact on-edge tie-break
        if _orient((x1, y1), (x2, y2), (px, py)) == 0 and _on_segment((px, py), (x1, y1), (x2, y2)):
            return True
        if (y1 > py) != (y2 > py):
            xc = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
            if px < xc:
                inside = not inside
    return inside


def points_in_polygon(points, corners) -> np.ndarray:
    """Vectorized ``point_in_polygon`` over an (N, 2) array."""
    pts = np.asarray(points, dtype=float)
    c = np.asarray(corners, dtype=float)
    px, py = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    on_edge = np.zeros(len(pts), dtype=bool)
    n = len(c)
    for i in range(n):
        x1, y1 = c[i]
        x2, y2 = c[(i + 1) % n]
        cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
        within = ((px >= min(x1, x2)) & (px <= max(x1, x2))
                  & (py >= min(y1, y2)) & (py <= max(y1, y2)))
        on_edge |= (cross == 0.0) & within
        spans = (y1 > py) != (y2 > py)
        if np.any(spans):
            xc = x1 + (py[spans] - y1) * (x2 - x1) / (y2 - y1)
            hit = np.zeros(len(pts), dtype=bool)
            hit[spans] = px[spans] < xc
            inside ^= hit
    return inside | on_edge


# ---------------------------------------------------------------------------
# Domain types


@dataclass(frozen=True)
class Camera:
    x: float
    y: float
    height: float


@dataclass(frozen=True)
class RoomLayout:
    """Simple CCW polygon (meters), ceiling height, and an interior camera."""

    id: str
    corners: np.ndarray  # (n, 2) float64
    ceiling_height: float
    camera: Camera

    def __post_init__(self):
        object.__setattr__(self, "corners", np.asarray(self.corners, dtype=float))
        self.validate()

    def validate(self):
        c = self.corners
        if c.ndim != 2 or c.shape[1] != 2 or len(c) < 3:
            raise LayoutError(f"layout {self.id!r}: need >= 3 (x, y) corners, got shape {c.shape}")
        if not polygon_is_simple(c):
            raise LayoutError(f"layout {self.id!r}: polygon is not simple")
        if polygon_area(c) <= 0:
            raise LayoutError(f"layout {self.id!r}: corners must be counter-clockwise")
        if not self.ceiling_height > 0:
            raise LayoutError(f"layout {self.id!r}: ceiling_height must be > 0")
        if not (0 < self.camera.height < self.ceiling_height):
            raise LayoutError(f"layout {self.id!r}: camera height {self.camera.height} "
                              f"not in (0, {self.ceiling_height})")
        if not self._camera_strictly_inside():
            raise LayoutError(f"layout {self.id!r}: camera not strictly inside the polygon")

    def _camera_strictly_inside(self) -> bool:
        p = (self.camera.x, self.camera.y)
        if not point_in_polygon(p, self.corners):
            return False
        # on-edge resolves to inside in the tie-break; exclude it here
        c = self.corners
        for i in range(len(c)):
            a, b = c[i], c[(i + 1) % len(c)]
            if _orient(a, b, p) == 0 and _on_segment(p, a, b):
                return False
        return True

    @property
    def num_walls(self) -> int:
        return len(self.corners)

    def wall(self, i: int):
        """Endpoints (p, q) of wall i, from corner i to corner i+1."""
        c = self.corners
        return c[i], c[(i + 1) % len(c)]

    def wall_lengths(self) -> np.ndarray:
        c = self.corners
        return np.linalg.norm(np.roll(c, -1, axis=0) - c, axis=1)

    def area(self) -> float:
        return polygon_area(self.corners)


@dataclass(frozen=True)
class FitPolicy:
    """Center the polygon and scale so its bbox fits [-margin, margin]^2."""

    margin: float = 0.9


@dataclass
class OccupancyGrid:
    """Binary top-view raster.  ``values[i, j]`` in {0, 1}; row 0 is +y.

    ``scale`` is meters per normalized unit, ``offset`` the meter-space point
    mapped to the origin, so meters = normalized * scale + offset.
    """

    values: np.ndarray
    scale: float = 1.0
    offset: tuple = (0.0, 0.0)

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise LayoutError(f"grid must be square, got shape {v.shape}")
        if v.shape[0] < 2:
            raise LayoutError(f"grid resolution {v.shape[0]} too small")
        if not np.isin(v, (0, 1)).all():
            raise LayoutError("grid values must be exactly 0 or 1")
        self.values = v.astype(np.uint8)

    @property
    def resolution(self) -> int:
        return self.values.shape[0]

    def pixel_centers(self) -> np.ndarray:
        """All R^2 pixel centers in row-major order, shape (R^2, 2)."""
        r = self.resolution
        return pixel_centers(r)


def pixel_centers(resolution: int) -> np.ndarray:
    """Normalized centers of an R x R grid in row-major order, shape (R^2, 2)."""
    r = resolution
    j = np.arange(r)
    xs = (j + 0.5) * 2.0 / r - 1.0
    ys = 1.0 - (j + 0.5) * 2.0 / r
    gx, gy = np.meshgrid(xs, ys)  # gy[i, :] = y of row i
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


@dataclass(frozen=True)
class CoordBatch:
    """Homogeneous query coordinates, shape (3, N); third row identically 1."""

    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float)
        if c.ndim != 2 or c.shape[0] != 3:
            raise LayoutError(f"coords must be (3, N), got {c.shape}")
        if not np.all(c[2] == 1.0):
            raise LayoutError("homogeneous row of CoordBatch must be identically 1")
        object.__setattr__(self, "coords", c)

    @property
    def count(self) -> int:
        return self.coords.shape[1]

    @property
    def xy(self) -> np.ndarray:
        return self.coords[:2].T  # (N, 2)


def coord_batch(points) -> CoordBatch:
    """Lift (N, 2) points to a homogeneous CoordBatch."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise LayoutError(f"points must be (N, 2), got {pts.shape}")
    return CoordBatch(np.vstack([pts.T, np.ones(pts.shape[0])]))


@dataclass(frozen=True)
class IoUReport:
    intersection: int
    union: int

    @property
    def iou(self) -> float:
        return self.intersection / self.union


# ---------------------------------------------------------------------------
# Operations


def rasterize(layout: RoomLayout, resolution: int, fit: FitPolicy = FitPolicy()) -> OccupancyGrid:
    """Rasterize a layout: pixel is 1 iff its center falls inside the polygon."""
    if resolution < 2:
        raise LayoutError(f"resolution {resolution} too small")
    area = polygon_area(layout.corners)
    if abs(area) < DEGENERATE_AREA:
        raise LayoutError(f"layout {layout.id!r}: degenerate polygon (area {area:.3g} m^2)")
    lo = layout.corners.min(axis=0)
    hi = layout.corners.max(axis=0)
    center = (lo + hi) / 2.0
    extent = float(max(hi - lo))
    scale = extent / (2.0 * fit.margin)
    corners_norm = (layout.corners - center) / scale
    centers = pixel_centers(resolution)
    inside = points_in_polygon(centers, corners_norm)
    values = inside.reshape(resolution, resolution).astype(np.uint8)
    return OccupancyGrid(values, scale=scale, offset=(float(center[0]), float(center[1])))


def bilinear_sample(grid: OccupancyGrid | np.ndarray, xy) -> np.ndarray:
    """Bilinear interpolation of grid values at normalized (x, y) coordinates.

    Coordinates outside [-1, 1]^2 clamp to the border.  At pixel centers the
    result equals the stored value exactly.
    """
    values = grid.values if isinstance(grid, OccupancyGrid) else np.asarray(grid)
    r = values.shape[0]
    pts = np.asarray(xy, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    jf = np.clip((x + 1.0) * r / 2.0 - 0.5, 0.0, r - 1.0)
    if_ = np.clip((1.0 - y) * r / 2.0 - 0.5, 0.0, r - 1.0)
    j0 = np.floor(jf).astype(int)
    i0 = np.floor(if_).astype(int)
    j1 = np.minimum(j0 + 1, r - 1)
    i1 = np.minimum(i0 + 1, r - 1)
    fj = jf - j0
    fi = if_ - i0
    v = values.astype(float)
    return ((1 - fi) * (1 - fj) * v[i0, j0] + (1 - fi) * fj * v[i0, j1]
            + fi * (1 - fj) * v[i1, j0] + fi * fj * v[i1, j1])


SAMPLE_MODES = ("uniform-random", "pixel-centers", "boundary-biased")


def sample_coords(grid: OccupancyGrid, n: int, mode: str = "uniform-random",
                  seed: int = 0):
    """Draw query coordinates and their bilinearly interpolated ground truth.

    Modes: ``uniform-random`` draws n points uniform in [-1, 1]^2;
    ``pixel-centers`` returns all R^2 centers in row-major order (n ignored);
    ``boundary-biased`` draws n//2 points within 3 pixels of the in/out
    boundary and the rest uniformly.

    Returns (CoordBatch, truth) with truth shape (N,).
    """
    if mode not in SAMPLE_MODES:
        raise ValueError(f"unknown sampling mode {mode!r}; expected one of {SAMPLE_MODES}")
    if mode != "pixel-centers" and n < 1:
        raise ValueError(f"need n >= 1 samples, got {n}")
    r = grid.resolution
    if mode == "pixel-centers":
        xy = pixel_centers(r)
    elif mode == "uniform-random":
        rng = np.random.default_rng(seed)
        xy = rng.uniform(-1.0, 1.0, size=(n, 2))
    else:
        rng = np.random.default_rng(seed)
        band = _boundary_band(grid.values, radius=3)
        bi, bj = np.nonzero(band)
        n_band = n // 2 if len(bi) else 0
        pick = rng.integers(0, len(bi), size=n_band) if n_band else np.empty(0, dtype=int)
        # jitter inside the picked pixel
        jit = rng.uniform(-0.5, 0.5, size=(n_band, 2))
        px = (bj[pick] + 0.5 + jit[:, 0]) * 2.0 / r - 1.0
        py = 1.0 - (bi[pick] + 0.5 + jit[:, 1]) * 2.0 / r
        rest = rng.uniform(-1.0, 1.0, size=(n - n_band, 2))
        xy = np.concatenate([np.stack([px, py], axis=1), rest], axis=0)
    coords = np.vstack([xy.T, np.ones(len(xy))])
    truth = bilinear_sample(grid, xy)
    return CoordBatch(coords), truth


def _boundary_band(values: np.ndarray, radius: int = 3) -> np.ndarray:
    """Pixels within ``radius`` (Chebyshev) of an in/out transition."""
    from scipy import ndimage

    v = values.astype(bool)
    edge = np.zeros_like(v)
    edge[:-1] |= v[:-1] != v[1:]
    edge[1:] |= v[:-1] != v[1:]
    edge[:, :-1] |= v[:, :-1] != v[:, 1:]
    edge[:, 1:] |= v[:, :-1] != v[:, 1:]
    if not edge.any():
        return edge
    return ndimage.binary_dilation(edge, structure=np.ones((3, 3), dtype=bool),
                                   iterations=radius)


def compute_iou(a, b) -> IoUReport:
    """Pixel-wise intersection over union of two same-resolution binary grids."""
    va = a.values if isinstance(a, OccupancyGrid) else np.asarray(a)
    vb = b.values if isinstance(b, OccupancyGrid) else np.asarray(b)
    if va.shape != vb.shape:
        raise LayoutError(f"grid shapes differ: {va.shape} vs {vb.shape}")
    va = va.astype(bool)
    vb = vb.astype(bool)
    inter = int(np.count_nonzero(va & vb))
    union = int(np.count_nonzero(va | vb))
    if union == 0:
        raise UndefinedIoUError("both grids are empty; IoU is undefined")
    return IoUReport(intersection=inter, union=union)


# ---------------------------------------------------------------------------
# Marching-squares contour extraction

# Cell corners are numbered 0..3 = (top-left, top-right, bottom-right,
# bottom-left) in array orientation and map to case bits 3..0; edges 0..3 =
# (top, right, bottom, left).  Each case lists the crossed-edge pairs.
_CASE_EDGES = {
    1: [(2, 3)], 2: [(1, 2)], 3: [(1, 3)], 4: [(0, 1)],
    6: [(0, 2)], 7: [(0, 3)], 8: [(0, 3)], 9: [(0, 2)],
    11: [(0, 1)], 12: [(1, 3)], 13: [(1, 2)], 14: [(2, 3)],
}


def extract_contour(field, threshold: float = 0.5) -> list:
    """Marching-squares contours of ``field >= threshold``.

    Returns a list of polylines in normalized coordinates, each (k, 2) with
    first point repeated at the end when the loop closes.  Level sets fully
    interior to the grid always produce closed loops.
    """
    f = np.asarray(field, dtype=float)
    if not np.isfinite(f).all():
        raise ValueError("contour field must be finite")
    r0, r1 = f.shape
    segments = {}  # vertex key -> list of (other vertex key)

    def edge_key(ci, cj, edge):
        # unique id of a cell edge in the global lattice
        if edge == 0:
            return (ci, cj, "h")
        if edge == 2:
            return (ci + 1, cj, "h")
        if edge == 3:
            return (ci, cj, "v")
        return (ci, cj + 1, "v")

    inside = f >= threshold
    for ci in range(r0 - 1):
        for cj in range(r1 - 1):
            corners = (inside[ci, cj], inside[ci, cj + 1],
                       inside[ci + 1, cj + 1], inside[ci + 1, cj])
            case = (corners[0] << 3) | (corners[1] << 2) | (corners[2] << 1) | corners[3]
            if case in (0, 15):
                continue
            if case in (5, 10):
                # ambiguous saddle: disambiguate with the cell average
                vals = (f[ci, cj], f[ci, cj + 1], f[ci + 1, cj + 1], f[ci + 1, cj])
                center_inside = (sum(vals) / 4.0) >= threshold
                if case == 5:  # top-right and bottom-left corners inside
                    pairs = [(0, 3), (1, 2)] if center_inside else [(0, 1), (2, 3)]
                else:  # case 10: top-left and bottom-right corners inside
                    pairs = [(0, 1), (2, 3)] if center_inside else [(0, 3), (1, 2)]
            else:
                pairs = _CASE_EDGES[case]
            for e_a, e_b in pairs:
                ka, kb = edge_key(ci, cj, e_a), edge_key(ci, cj, e_b)
                segments.setdefault(ka, []).append(kb)
                segments.setdefault(kb, []).append(ka)

    def vertex_pos(key):
        i, j, kind = key
        if kind == "h":
            v0, v1 = f[i, j], f[i, j + 1]
            t = 0.5 if v0 == v1 else np.clip((threshold - v0) / (v1 - v0), 0.0, 1.0)
            return (i, j + t)
        v0, v1 = f[i, j], f[i + 1, j]
        t = 0.5 if v0 == v1 else np.clip((threshold - v0) / (v1 - v0), 0.0, 1.0)
        return (i + t, j)

    # chain segments into polylines
    contours = []
    visited = set()
    for start in list(segments):
        if start in visited:
            continue
        # walk to one end (or all the way around a loop)
        chain = [start]
        visited.add(start)
        cur = start
        while True:
            nexts = [k for k in segments[cur] if k not in visited]
            if not nexts:
                break
            cur = nexts[0]
            visited.add(cur)
            chain.append(cur)
        closed = start in segments[cur] and len(chain) > 2
        if not closed:
            # open chain: extend backwards from the start
            back = start
            while True:
                nexts = [k for k in segments[back] if k not in visited]
                if not nexts:
                    break
                back = nexts[0]
                visited.add(back)
                chain.insert(0, back)
        pts = np.array([vertex_pos(k) for k in chain])
        if closed:
            pts = np.vstack([pts, pts[:1]])
        # (row, col) fractional indices -> normalized coordinates
        x = (pts[:, 1] + 0.5) * 2.0 / r1 - 1.0
        y = 1.0 - (pts[:, 0] + 0.5) * 2.0 / r0
        contours.append(np.stack([x, y], axis=1))
    return contours


# ---------------------------------------------------------------------------
# File I/O


def layout_to_dict(layout: RoomLayout) -> dict:
    return {
        "id": layout.id,
        "corners": [[float(x), float(y)] for x, y in layout.corners],
        "ceiling_height": float(layout.ceiling_height),
        "camera": {"x": float(layout.camera.x), "y": float(layout.camera.y),
                   "height": float(layout.camera.height)},
    }


def layout_from_dict(d: dict) -> RoomLayout:
    try:
        cam = d["camera"]
        return RoomLayout(
            id=str(d["id"]),
            corners=np.asarray(d["corners"], dtype=float),
            ceiling_height=float(d["ceiling_height"]),
            camera=Camera(float(cam["x"]), float(cam["y"]), float(cam["height"])),
        )
    except (KeyError, TypeError) as exc:
        raise ParseError(f"layout JSON missing/invalid field: {exc}") from exc


def write_layout(layout: RoomLayout, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(layout_to_dict(layout), fh, indent=2)
        fh.write("\n")


def read_layout(path) -> RoomLayout:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc.msg}", line=exc.lineno, offset=exc.colno) from exc
    return layout_from_dict(data)


def write_grid_pgm(grid: OccupancyGrid, path):
    """Binary PGM (P5), maxval 255, values {0, 255}, row 0 = +y edge."""
    r = grid.resolution
    header = f"P5\n{r} {r}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write((grid.values * 255).astype(np.uint8).tobytes())


def _read_pgm_raw(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P5"):
        raise ParseError(f"{path}: not a binary PGM (bad magic)", offset=0)
    # header = magic, width, height, maxval separated by whitespace
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ParseError(f"{path}: truncated PGM header", offset=pos)
        fields.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        width, height, maxval = (int(f) for f in fields)
    except ValueError:
        raise ParseError(f"{path}: non-numeric PGM header field", offset=pos) from None
    if maxval != 255:
        raise ParseError(f"{path}: PGM maxval must be 255, got {maxval}", offset=pos)
    payload = data[pos:pos + width * height]
    if len(payload) != width * height:
        raise ParseError(f"{path}: PGM payload truncated "
                         f"({len(payload)} of {width * height} bytes)", offset=pos)
    values = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    return values, pos


def read_grid_pgm(path, scale: float = 1.0, offset=(0.0, 0.0)) -> OccupancyGrid:
    values, payload_pos = _read_pgm_raw(path)
    if values.shape[0] != values.shape[1]:
        raise ParseError(f"{path}: occupancy grid must be square, got {values.shape}",
                         offset=payload_pos)
    bad = (values != 0) & (values != 255)
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        raise ParseError(f"{path}: grid pixel value {int(values.ravel()[idx])} "
                         "(only 0/255 allowed)", offset=payload_pos + idx)
    return OccupancyGrid((values // 255).astype(np.uint8), scale=scale, offset=offset)
