"""Latent shape codes, hyperplane decoding, and differentiable occupancy.

The model family implemented here encodes a top-view occupancy grid into a
code vector, decodes the code into a set of oriented 2D hyperplanes, and
renders occupancy at arbitrary query points in three stages:

    o1 = relu(P @ c)            per-plane signed violations (0 inside)
    o2 = clamp01(1 - W_g @ o1)  soft convex primitives via grouping weights
    o3 = clamp01(W_c @ o2)      soft union via combining weights

Planes are rows (a, b, c) of ax + by + c = 0 in normalized coordinates with
the positive side outside, so a query point is inside a primitive when every
grouped plane reports 0 violation.  Everything is differentiable through
``diffnet``; the training losses keep W_g in [0,1] and W_c near 1.

A second encoder with the same trunk regresses the code from rendered
boundary-map panoramas (or raw grids, for ablations), enabling end-to-end
layout estimation by decoding the regressed code.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diffnet as dn
from .layout import CoordBatch, OccupancyGrid


@dataclass(frozen=True)
class ShapeCode:
    """Latent code; entries are open-interval (0,1) sigmoid outputs."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise ValueError(f"code must be a vector, got shape {v.shape}")
        if not ((v > 0.0) & (v < 1.0)).all():
            raise ValueError("code entries must lie strictly in (0, 1)")
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class HyperplaneSet:
    """Rows (a, b, c) of ax + by + c = 0; positive side is outside."""

    planes: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.planes, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] != 3:
            raise ValueError(f"planes must be (N_p, 3), got {p.shape}")
        if not np.isfinite(p).all():
            raise ValueError("plane parameters must be finite")
        object.__setattr__(self, "planes", p)

    @property
    def count(self) -> int:
        return self.planes.shape[0]


@dataclass(frozen=True)
class RenderOutput:
    """Occupancy tensors of one render call (diffnet Tensors).

    halfspace: (..., N_p, N_c) nonnegative; convex: (..., N_s, N_c) in [0,1];
    occupancy: (..., N_c) in [0,1].
    """

    halfspace: dn.Tensor
    convex: dn.Tensor
    occupancy: dn.Tensor


def _coords_tensor(coords) -> dn.Tensor:
    if isinstance(coords, CoordBatch):
        return dn.Tensor(coords.coords, _op="coords")
    if isinstance(coords, dn.Tensor):
        return coords
    arr = np.asarray(coords, dtype=np.float64)
    if arr.shape[-2] != 3:
        raise dn.ShapeError(f"coords must be (..., 3, N) homogeneous, got {arr.shape}")
    return dn.Tensor(arr, _op="coords")


def render(planes, w_g, w_c, coords) -> RenderOutput:
    """Evaluate the three-stage occupancy at homogeneous coords (..., 3, N).

    ``planes`` is (..., N_p, 3), ``w_g`` (N_s, N_p), ``w_c`` (1, N_s);
    leading batch dimensions broadcast.  The occupancy tensor drops the
    singleton combining axis.
    """
    planes = dn.as_tensor(planes)
    w_g = dn.as_tensor(w_g)
    w_c = dn.as_tensor(w_c)
    c = _coords_tensor(coords)
    o1 = dn.relu(dn.matmul(planes, c))
    o2 = dn.clamp01(dn.one_minus(dn.matmul(w_g, o1)))
    o3 = dn.clamp01(dn.matmul(w_c, o2))
    shape = o3.shape
    o3 = dn.reshape(o3, shape[:-2] + shape[-1:])
    return RenderOutput(halfspace=o1, convex=o2, occupancy=o3)


def loss_occupancy(occupancy: dn.Tensor, truth) -> dn.Tensor:
    """Squared reconstruction error, averaged over batch and query points."""
    return dn.mse(occupancy, np.asarray(truth, dtype=np.float64))


def loss_grouping(w_g) -> dn.Tensor:
    """Penalty on grouping weights outside [0, 1] (zero inside the box)."""
    w_g = dn.as_tensor(w_g)
    over = dn.relu(dn.add(w_g, -1.0))
    under = dn.relu(dn.mul(w_g, -1.0))
    return dn.add(dn.tsum(over), dn.tsum(under))


def loss_combining(w_c) -> dn.Tensor:
    """Sum of per-element distances of combining weights from 1."""
    w_c = dn.as_tensor(w_c)
    return dn.tsum(dn.absolute(dn.add(w_c, -1.0)))


def total_objective(occupancy, truth, w_g, w_c) -> dn.Tensor:
    """Reconstruction + grouping + combining penalties, unit weights."""
    return dn.add(dn.add(loss_occupancy(occupancy, truth), loss_grouping(w_g)),
                  loss_combining(w_c))


def regression_loss(pred: dn.Tensor, target, kind: str = "L2") -> dn.Tensor:
    """Code-matching loss: 0.5 * mean squared (L2) or mean absolute (L1)."""
    if kind == "L2":
        return dn.mul(dn.mse(pred, target), 0.5)
    if kind == "L1":
        return dn.l1(pred, target)
    raise ValueError(f"unknown regression loss {kind!r}; expected 'L1' or 'L2'")


# ---------------------------------------------------------------------------
# Networks


ENCODER_CHANNELS = (16, 32, 64, 128, 256)
GENERATOR_WIDTHS = (256, 512)


class GridEncoder:
    """Strided conv tower + pooled head mapping images to sigmoid codes.

    ``head`` is "gap" (global average pool, then dense) or "fc" (flatten the
    final feature map, then dense).  ``input_hw`` fixes the expected spatial
    size; non-square inputs are fine as long as every stride-2 stage keeps
    both dimensions >= 1.
    """

    def __init__(self, name: str, rng: np.random.Generator, code_dim: int,
                 in_channels: int, input_hw: tuple[int, int],
                 channels=ENCODER_CHANNELS, head: str = "gap"):
        if head not in ("gap", "fc"):
            raise ValueError(f"unknown encoder head {head!r}; expected 'gap' or 'fc'")
        self.name = name
        self.code_dim = code_dim
        self.in_channels = in_channels
        self.input_hw = tuple(input_hw)
        self.channels = tuple(channels)
        self.head = head
        self.convs = []
        c_prev = in_channels
        h, w = self.input_hw
        for i, c in enumerate(self.channels):
            self.convs.append(dn.Conv(f"{name}.conv{i}", c_prev, c, rng))
            c_prev = c
            h, w = (h + 1) // 2, (w + 1) // 2
            if h < 1 or w < 1:
                raise ValueError(f"input {self.input_hw} too small for "
                                 f"{len(self.channels)} stride-2 stages")
        self.final_hw = (h, w)
        n_feat = c_prev if head == "gap" else c_prev * h * w
        self.fc = dn.Dense(f"{name}.fc", n_feat, code_dim, rng)

    def parameters(self):
        ps = []
        for c in self.convs:
            ps.extend(c.parameters())
        ps.extend(self.fc.parameters())
        return ps

    def forward(self, x: dn.Tensor) -> dn.Tensor:
        """(B, C, H, W) -> (B, D) codes in (0, 1)."""
        if x.shape[1:] != (self.in_channels,) + self.input_hw:
            raise dn.ShapeError(f"encoder expects (B, {self.in_channels}, "
                                f"{self.input_hw[0]}, {self.input_hw[1]}), got {x.shape}")
        h = x
        for conv in self.convs:
            h = dn.relu(conv(h))
        if self.head == "gap":
            feat = dn.global_avg_pool(h)
        else:
            feat = dn.reshape(h, (h.shape[0], -1))
        return dn.sigmoid(self.fc(feat))


class PlaneGenerator:
    """MLP decoding a code into hyperplanes, optionally Manhattan-constrained.

    Free mode emits N_p * 3 raw plane parameters.  Manhattan mode emits one
    global angle plus per-plane (axis logit, offset); normals are exactly
    (cos t, sin t) or (-sin t, cos t), with the axis chosen by the logit's
    sign (the choice itself gets no gradient).
    """

    def __init__(self, name: str, rng: np.random.Generator, code_dim: int,
                 n_planes: int, manhattan: bool = False, widths=GENERATOR_WIDTHS):
        self.name = name
        self.code_dim = code_dim
        self.n_planes = n_planes
        self.manhattan = manhattan
        self.widths = tuple(widths)
        n_out = 1 + 2 * n_planes if manhattan else n_planes * 3
        self.layers = []
        w_prev = code_dim
        for i, w in enumerate(self.widths):
            self.layers.append(dn.Dense(f"{name}.fc{i}", w_prev, w, rng))
            w_prev = w
        self.out = dn.Dense(f"{name}.out", w_prev, n_out, rng)

    def parameters(self):
        ps = []
        for layer in self.layers:
            ps.extend(layer.parameters())
        ps.extend(self.out.parameters())
        return ps

    def forward(self, code: dn.Tensor) -> dn.Tensor:
        """(B, D) -> (B, N_p, 3) plane parameters."""
        if code.shape[-1] != self.code_dim:
            raise dn.ShapeError(f"generator expects code dim {self.code_dim}, "
                                f"got shape {code.shape}")
        h = code
        for layer in self.layers:
            h = dn.relu(layer(h))
        raw = self.out(h)
        b = raw.shape[0]
        n = self.n_planes
        if not self.manhattan:
            return dn.reshape(raw, (b, n, 3))
        theta = dn.narrow(raw, 1, 0, 1)            # (B, 1)
        logits = dn.narrow(raw, 1, 1, n)           # (B, N_p)
        offsets = dn.narrow(raw, 1, 1 + n, n)      # (B, N_p)
        pick = dn.Tensor((logits.data >= 0).astype(np.float64), _op="axis-pick")
        cos_t, sin_t = dn.cos(theta), dn.sin(theta)
        nx = dn.add(dn.mul(pick, cos_t), dn.mul(dn.one_minus(pick), dn.mul(sin_t, -1.0)))
        ny = dn.add(dn.mul(pick, sin_t), dn.mul(dn.one_minus(pick), cos_t))
        return dn.stack([nx, ny, offsets], axis=-1)


@dataclass
class ModelConfig:
    """Architecture knobs shared by the model and its checkpoints."""

    resolution: int = 64
    code_dim: int = 128
    n_planes: int = 128
    n_primitives: int = 16
    encoder_head: str = "gap"
    manhattan: bool = False
    channels: tuple = ENCODER_CHANNELS
    widths: tuple = GENERATOR_WIDTHS
    regressor_input: str = "boundary"  # or "grid" for the no-panorama ablation
    map_height: int = 64
    map_width: int = 128

    def regressor_shape(self) -> tuple[int, tuple[int, int]]:
        """(channels, (H, W)) expected by the code regressor."""
        if self.regressor_input == "boundary":
            return 3, (self.map_height, self.map_width)
        if self.regressor_input == "grid":
            return 1, (self.resolution, self.resolution)
        raise ValueError(f"unknown regressor input {self.regressor_input!r}")


class ImplicitModel:
    """Self-encoder, plane generator, and render weights as one unit."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        self.config = config
        self.encoder = GridEncoder("se", rng, config.code_dim, 1,
                                   (config.resolution, config.resolution),
                                   channels=config.channels, head=config.encoder_head)
        self.generator = PlaneGenerator("hg", rng, config.code_dim, config.n_planes,
                                        manhattan=config.manhattan, widths=config.widths)
        # small positive grouping weights let primitives claim planes gradually;
        # uniform combining weights start o3 at full coverage
        self.w_g = dn.Parameter(rng.uniform(0.0, 0.02,
                                            (config.n_primitives, config.n_planes)), "wg")
        self.w_c = dn.Parameter(np.full((1, config.n_primitives),
                                        1.0 / config.n_primitives), "wc")

    def parameters(self):
        return dn.check_unique_names(self.encoder.parameters()
                                     + self.generator.parameters()
                                     + [self.w_g, self.w_c])

    # -- graph-building forward passes --
    def encode_batch(self, grids: dn.Tensor) -> dn.Tensor:
        return self.encoder.forward(grids)

    def planes_batch(self, codes: dn.Tensor) -> dn.Tensor:
        return self.generator.forward(codes)

    def render_batch(self, grids: dn.Tensor, coords) -> RenderOutput:
        return render(self.planes_batch(self.encode_batch(grids)),
                      self.w_g, self.w_c, coords)

    # -- typed single-sample API --
    def encode(self, grid: OccupancyGrid) -> ShapeCode:
        if grid.resolution != self.config.resolution:
            raise dn.ShapeError(f"grid resolution {grid.resolution} != model "
                                f"resolution {self.config.resolution}")
        x = dn.Tensor(grid.values.astype(np.float64)[None, None])
        return ShapeCode(self.encode_batch(x).data[0])

    def generate_planes(self, code: ShapeCode) -> HyperplaneSet:
        if code.dim != self.config.code_dim:
            raise dn.ShapeError(f"code dim {code.dim} != model dim {self.config.code_dim}")
        t = dn.Tensor(code.values[None])
        return HyperplaneSet(self.planes_batch(t).data[0])

    def reconstruct(self, grid: OccupancyGrid, coords) -> np.ndarray:
        """Occupancy values at coords for one grid (no gradients kept)."""
        planes = self.generate_planes(self.encode(grid))
        return render(planes.planes, self.w_g.data, self.w_c.data, coords).occupancy.data


class CodeRegressor:
    """Encoder from boundary maps (or raw grids) to codes; same trunk shape."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        self.config = config
        in_ch, hw = config.regressor_shape()
        self.encoder = GridEncoder("ie", rng, config.code_dim, in_ch, hw,
                                   channels=config.channels, head=config.encoder_head)

    def parameters(self):
        return dn.check_unique_names(self.encoder.parameters())

    def forward(self, images: dn.Tensor) -> dn.Tensor:
        return self.encoder.forward(images)

    def regress(self, image: np.ndarray) -> ShapeCode:
        arr = np.asarray(image, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[None]
        return ShapeCode(self.forward(dn.Tensor(arr[None])).data[0])
