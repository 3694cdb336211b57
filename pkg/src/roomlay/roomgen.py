"""Synthetic rectilinear room generation and wall-translation augmentation.

Anchors are staircase-shaped rectilinear polygons (rectangle, L, and deeper
step counts for 8 or 10 walls) with randomized step sizes, randomly rotated
by quarter turns, optionally mirrored, and translated.  Augmentation picks
one wall uniformly at random and translates it along its outward normal by
an offset drawn uniformly from [-L_min/2, +L_min/2], where L_min is the
shortest wall of the source room; invalid results resample the offset only.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .layout import (Camera, LayoutError, RoomLayout, layout_to_dict,
                     polygon_is_simple, point_in_polygon, polygon_area,
                     write_layout)

VALID_WALL_COUNTS = (4, 6, 8, 10)
MIN_EDGE_M = 0.5
MIN_AUGMENTED_EDGE_M = 1e-3
CEILING_RANGE_M = (2.4, 3.2)
CAMERA_HEIGHT_RANGE_M = (1.2, 1.7)


class GenerationError(RuntimeError):
    """Rejection sampling failed to produce a valid layout."""


class AugmentationError(RuntimeError):
    """No valid offset found for the chosen wall."""


@dataclass(frozen=True)
class AugmentationRecord:
    anchor_id: str
    wall_index: int
    offset: float
    l_min: float

    def __post_init__(self):
        if self.wall_index < 0:
            raise ValueError(f"wall index must be >= 0, got {self.wall_index}")
        if abs(self.offset) > self.l_min / 2.0 + 1e-12:
            raise ValueError(f"|offset| {abs(self.offset):.6f} exceeds "
                             f"l_min/2 = {self.l_min / 2.0:.6f}")


def _spaced_cuts(rng: np.random.Generator, k: int, total: float, gap: float):
    """k ascending positions in (0, total) with pairwise and border gaps >= gap.

    Returns None when total cannot host k+1 gaps.
    """
    slack = total - gap * (k + 1)
    if slack < 0:
        return None
    u = np.sort(rng.uniform(0.0, slack, size=k))
    return u + gap * (1 + np.arange(k))


def _staircase(rng: np.random.Generator, steps: int, width: float, height: float):
    """CCW staircase polygon with ``steps`` steps inside width x height.

    Corner count is 2 * steps + 2; all edges are >= MIN_EDGE_M or the
    construction returns None for a retry with a fresh size draw.
    """
    xs = _spaced_cuts(rng, steps - 1, width, MIN_EDGE_M)
    levels = _spaced_cuts(rng, steps - 1, height, MIN_EDGE_M)
    if xs is None or levels is None:
        return None
    # descending step heights: tallest (== height) at the left
    heights = np.concatenate([[height], np.sort(levels)[::-1]])
    corners = [(0.0, 0.0), (width, 0.0), (width, heights[-1])]
    for i in range(steps - 1, 0, -1):
        corners.append((xs[i - 1], heights[i]))
        corners.append((xs[i - 1], heights[i - 1]))
    corners.append((0.0, heights[0]))
    return np.array(corners)


_QUARTER_TURNS = (
    lambda p: p,
    lambda p: np.stack([-p[:, 1], p[:, 0]], axis=1),
    lambda p: -p,
    lambda p: np.stack([p[:, 1], -p[:, 0]], axis=1),
)


def _point_segment_distance(p, a, b) -> float:
    ab = b - a
    t = np.clip(np.dot(p - a, ab) / max(np.dot(ab, ab), 1e-300), 0.0, 1.0)
    return float(np.linalg.norm(p - (a + t * ab)))


def _interior_clearance(corners: np.ndarray, p: np.ndarray) -> float:
    n = len(corners)
    return min(_point_segment_distance(p, corners[i], corners[(i + 1) % n])
               for i in range(n))


def _sample_interior_point(rng: np.random.Generator, corners: np.ndarray,
                           margin: float, tries: int = 200):
    lo, hi = corners.min(axis=0), corners.max(axis=0)
    for attempt in range(tries):
        p = rng.uniform(lo, hi)
        if not point_in_polygon(p, corners):
            continue
        clearance = _interior_clearance(corners, p)
        # relax the wall-clearance requirement if tight rooms keep rejecting
        need = margin if attempt < tries // 2 else margin / 4.0
        if clearance > max(need, 1e-6):
            return p
    return None


def generate_anchor(seed: int, walls: int = 6,
                    size_range: tuple[float, float] = (3.0, 8.0),
                    layout_id: str | None = None) -> RoomLayout:
    """Random rectilinear room with the requested wall count.

    ``size_range`` bounds the bounding-box side lengths in meters.
    """
    if walls not in VALID_WALL_COUNTS:
        raise ValueError(f"walls must be one of {VALID_WALL_COUNTS}, got {walls}")
    lo, hi = size_range
    if not (0 < lo <= hi):
        raise ValueError(f"invalid size range {size_range}")
    rng = np.random.default_rng(seed)
    steps = (walls - 2) // 2
    for _ in range(1000):
        width, height = rng.uniform(lo, hi, size=2)
        corners = _staircase(rng, steps, width, height)
        if corners is None:
            continue
        corners = _QUARTER_TURNS[rng.integers(4)](corners)
        if rng.integers(2):  # mirror; reverse to restore CCW orientation
            corners = np.stack([-corners[:, 0], corners[:, 1]], axis=1)[::-1]
        corners = corners + rng.uniform(-3.0, 3.0, size=2)
        cam_xy = _sample_interior_point(rng, corners, margin=0.25)
        if cam_xy is None:
            continue
        ceiling = rng.uniform(*CEILING_RANGE_M)
        cam_h = rng.uniform(*CAMERA_HEIGHT_RANGE_M)
        try:
            return RoomLayout(id=layout_id or f"gen{seed}",
                              corners=corners, ceiling_height=ceiling,
                              camera=Camera(x=cam_xy[0], y=cam_xy[1], height=cam_h))
        except LayoutError:
            continue
    raise GenerationError(f"no valid {walls}-wall layout after 1000 attempts "
                          f"(seed {seed}, size range {size_range})")


def translate_wall(layout: RoomLayout, wall_index: int, offset: float,
                   layout_id: str | None = None) -> RoomLayout:
    """Move wall ``wall_index`` by ``offset`` along its outward normal.

    Adjacent walls stretch or shrink; the corner count is preserved.  Raises
    LayoutError if the result is not a valid layout (non-simple, a collapsed
    edge, or the camera no longer inside).
    """
    n = layout.num_walls
    if not 0 <= wall_index < n:
        raise ValueError(f"wall index {wall_index} out of range [0, {n})")
    a, b = layout.wall(wall_index)
    d = b - a
    length = np.linalg.norm(d)
    normal = np.array([d[1], -d[0]]) / length  # outward for CCW polygons
    corners = layout.corners.copy()
    corners[wall_index] += offset * normal
    corners[(wall_index + 1) % n] += offset * normal
    moved = RoomLayout(id=layout_id or f"{layout.id}+w{wall_index}",
                       corners=corners, ceiling_height=layout.ceiling_height,
                       camera=layout.camera)
    lengths = moved.wall_lengths()
    if lengths.min() < MIN_AUGMENTED_EDGE_M:
        raise LayoutError(f"augmented edge collapsed to {lengths.min():.2e} m")
    return moved


def augment(anchor: RoomLayout, seed: int,
            layout_id: str | None = None) -> tuple[RoomLayout, AugmentationRecord]:
    """One wall-translation variant of ``anchor``.

    The wall is chosen once; offsets resample (up to 100 draws) until the
    translated room validates.
    """
    rng = np.random.default_rng(seed)
    l_min = float(anchor.wall_lengths().min())
    wall_index = int(rng.integers(anchor.num_walls))
    half = l_min / 2.0
    for _ in range(100):
        offset = float(rng.uniform(-half, half))
        try:
            moved = translate_wall(anchor, wall_index, offset, layout_id=layout_id)
        except LayoutError:
            continue
        record = AugmentationRecord(anchor_id=anchor.id, wall_index=wall_index,
                                    offset=offset, l_min=l_min)
        return moved, record
    raise AugmentationError(f"wall {wall_index} of {anchor.id!r}: no valid offset "
                            f"in 100 draws (l_min {l_min:.3f})")


def split_of(layout_id: str) -> str:
    """Deterministic 80/10/10 train/val/test split keyed on the id."""
    h = int(hashlib.sha1(layout_id.encode()).hexdigest()[:8], 16) % 10
    return "train" if h < 8 else ("val" if h == 8 else "test")


def build_dataset(anchors: int, augment_factor: int, seed: int, out_dir,
                  walls_choices=VALID_WALL_COUNTS,
                  size_range: tuple[float, float] = (3.0, 8.0)) -> dict:
    """Generate anchors plus variants, write layout JSONs and a manifest.

    Variants inherit their anchor's split so near-duplicates never straddle
    splits.  Every layout derives its own seed from (seed, indices), making
    the output independent of generation order.
    """
    if augment_factor < 0:
        raise ValueError(f"augment factor must be >= 0, got {augment_factor}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(anchors):
        a_rng = np.random.default_rng(np.random.SeedSequence((seed, i)))
        walls = int(a_rng.choice(walls_choices))
        a_id = f"a{i:05d}"
        anchor = generate_anchor(int(a_rng.integers(2 ** 63)), walls=walls,
                                 size_range=size_range, layout_id=a_id)
        write_layout(anchor, out / f"{a_id}.json")
        split = split_of(a_id)
        entries.append({"id": a_id, "split": split, "anchor": None,
                        "wall_index": None, "offset": None})
        for j in range(augment_factor):
            v_id = f"{a_id}v{j:02d}"
            v_seed = np.random.SeedSequence((seed, i, j)).generate_state(1)[0]
            variant, record = augment(anchor, int(v_seed), layout_id=v_id)
            write_layout(variant, out / f"{v_id}.json")
            entries.append({"id": v_id, "split": split, "anchor": a_id,
                            "wall_index": record.wall_index,
                            "offset": record.offset})
    manifest = {"layouts": sorted(entries, key=lambda e: e["id"])}
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")
    return manifest
