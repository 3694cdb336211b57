"""Experiment configuration: one dataclass, JSON round trip, stable hash."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass

from .layout import SAMPLE_MODES
from .pipeline import ENCODER_CHANNELS, GENERATOR_WIDTHS, ModelConfig


@dataclass
class TrainConfig:
    """Everything a training or evaluation run depends on.

    Architecture: ``resolution`` (grid side R), ``code_dim`` (D), ``n_planes``
    / ``n_primitives`` (decoder capacity), ``encoder_head`` ("gap" or "fc"),
    ``manhattan`` (orthogonal wall normals), ``channels`` / ``widths`` (conv
    tower and generator MLP sizes).

    Training: ``coord_samples`` query points per sample per step drawn with
    ``sample_mode``, ``batch_size``, ``lr``, ``epochs``, ``seed``.

    Regression: ``regressor_input`` ("boundary" or "grid"),
    ``regression_loss`` ("L1" or "L2"), ``cache_codes`` (precompute frozen
    target codes once instead of re-encoding each batch).

    Panoramas: ``map_width`` x ``map_height`` pixels, ``sigma_px`` splat width.
    """

    resolution: int = 64
    code_dim: int = 128
    n_planes: int = 128
    n_primitives: int = 16
    encoder_head: str = "gap"
    manhattan: bool = False
    channels: tuple = ENCODER_CHANNELS
    widths: tuple = GENERATOR_WIDTHS
    coord_samples: int = 256
    sample_mode: str = "boundary-biased"
    batch_size: int = 16
    lr: float = 1e-4
    epochs: int = 20
    seed: int = 0
    regressor_input: str = "boundary"
    regression_loss: str = "L2"
    cache_codes: bool = False
    map_width: int = 128
    map_height: int = 64
    sigma_px: float = 1.5

    def __post_init__(self):
        self.channels = tuple(self.channels)
        self.widths = tuple(self.widths)
        positive = ("resolution", "code_dim", "n_planes", "n_primitives",
                    "coord_samples", "batch_size", "lr", "map_width", "map_height",
                    "sigma_px")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"config field {name} must be positive, "
                                 f"got {getattr(self, name)}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.encoder_head not in ("gap", "fc"):
            raise ValueError(f"encoder_head must be 'gap' or 'fc', got {self.encoder_head!r}")
        if self.sample_mode not in SAMPLE_MODES:
            raise ValueError(f"sample_mode must be one of {SAMPLE_MODES}, "
                             f"got {self.sample_mode!r}")
        if self.regression_loss not in ("L1", "L2"):
            raise ValueError(f"regression_loss must be 'L1' or 'L2', "
                             f"got {self.regression_loss!r}")
        if self.regressor_input not in ("boundary", "grid"):
            raise ValueError(f"regressor_input must be 'boundary' or 'grid', "
                             f"got {self.regressor_input!r}")
        if self.map_width != 2 * self.map_height:
            raise ValueError(f"map dims must satisfy W = 2H, got "
                             f"{self.map_width}x{self.map_height}")

    def model(self) -> ModelConfig:
        return ModelConfig(resolution=self.resolution, code_dim=self.code_dim,
                           n_planes=self.n_planes, n_primitives=self.n_primitives,
                           encoder_head=self.encoder_head, manhattan=self.manhattan,
                           channels=self.channels, widths=self.widths,
                           regressor_input=self.regressor_input,
                           map_height=self.map_height, map_width=self.map_width)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["channels"] = list(self.channels)
        d["widths"] = list(self.widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        return cls.from_dict(json.loads(text))

    def hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def load_config(path) -> TrainConfig:
    with open(path) as fh:
        return TrainConfig.from_json(fh.read())
