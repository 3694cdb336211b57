"""Dataset access, training loops, IoU evaluation, and checkpoint glue.

A dataset is a directory holding ``manifest.json`` plus one layout JSON per
room and optional ``<id>.sbm.pgm`` boundary maps.  Training of the implicit
encoder optimizes the self-encoder, plane generator, and render weights
jointly; regressor training freezes those and fits only the image encoder
against the frozen codes.  Evaluation renders occupancy at all pixel
centers, thresholds at 0.5 (ties count as inside), and reports top-view IoU
against the rasterized ground truth.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import diffnet as dn
from . import pipeline as pl
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import TrainConfig
from .layout import (OccupancyGrid, RoomLayout, compute_iou, coord_batch,
                     pixel_centers, rasterize, read_layout, sample_coords)
from .panorama import read_boundary_map, render_boundaries, write_boundary_map

THRESHOLD = 0.5  # fixed decision threshold for all reported IoUs
EVAL_CHUNK = 8


class DatasetError(RuntimeError):
    """Missing or inconsistent dataset files."""


class TrainAbort(RuntimeError):
    """Training hit a non-finite loss; carries the failing location."""

    def __init__(self, epoch: int, batch: int, term: str):
        super().__init__(f"non-finite {term} loss at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
        self.term = term


class Dataset:
    """Read-only view of a generated dataset directory."""

    def __init__(self, root):
        self.root = Path(root)
        manifest_path = self.root / "manifest.json"
        if not manifest_path.exists():
            raise DatasetError(f"no manifest.json under {self.root}")
        raw = manifest_path.read_bytes()
        self.manifest = json.loads(raw)
        self.manifest_hash = hashlib.sha256(raw).hexdigest()
        self.entries = {e["id"]: e for e in self.manifest["layouts"]}
        self._layouts: dict[str, RoomLayout] = {}
        self._grids: dict[tuple[str, int], OccupancyGrid] = {}

    def ids(self, split: str | None = None) -> list[str]:
        return sorted(e["id"] for e in self.manifest["layouts"]
                      if split is None or e["split"] == split)

    def layout(self, layout_id: str) -> RoomLayout:
        if layout_id not in self._layouts:
            path = self.root / f"{layout_id}.json"
            if not path.exists():
                raise DatasetError(f"layout file missing: {path}")
            self._layouts[layout_id] = read_layout(path)
        return self._layouts[layout_id]

    def grid(self, layout_id: str, resolution: int) -> OccupancyGrid:
        key = (layout_id, resolution)
        if key not in self._grids:
            self._grids[key] = rasterize(self.layout(layout_id), resolution)
        return self._grids[key]

    def map_path(self, layout_id: str) -> Path:
        return self.root / f"{layout_id}.sbm.pgm"

    def boundary_values(self, layout_id: str) -> np.ndarray:
        path = self.map_path(layout_id)
        if not path.exists():
            raise DatasetError(f"boundary map missing: {path} "
                               f"(run the panorama step for this dataset)")
        return read_boundary_map(path).values


def ensure_boundary_maps(dataset: Dataset, config: TrainConfig,
                         split: str | None = None) -> int:
    """Render missing or wrongly sized <id>.sbm.pgm files; returns count written."""
    written = 0
    want = (3, config.map_height, config.map_width)
    for layout_id in dataset.ids(split):
        path = dataset.map_path(layout_id)
        if path.exists() and read_boundary_map(path).values.shape == want:
            continue
        bm = render_boundaries(dataset.layout(layout_id), config.map_width,
                               config.map_height, config.sigma_px)
        write_boundary_map(bm, path)
        written += 1
    return written


# ---------------------------------------------------------------------------
# Model construction and checkpoint glue


def build_model(config: TrainConfig) -> pl.ImplicitModel:
    return pl.ImplicitModel(config.model(), np.random.default_rng(
        np.random.SeedSequence((config.seed, 0xA001))))


def build_regressor(config: TrainConfig) -> pl.CodeRegressor:
    return pl.CodeRegressor(config.model(), np.random.default_rng(
        np.random.SeedSequence((config.seed, 0xA002))))


def _params_dict(params) -> dict:
    return {p.name: p.data for p in params}


def _load_params(params, arrays: dict, source: str):
    named = {p.name: p for p in params}
    missing = set(named) - set(arrays)
    extra = set(arrays) - set(named)
    if missing or extra:
        raise CheckpointError(f"{source}: parameter names do not match "
                              f"(missing {sorted(missing)}, unexpected {sorted(extra)})")
    for name, p in named.items():
        arr = np.asarray(arrays[name], dtype=np.float64)
        if arr.shape != p.data.shape:
            raise CheckpointError(f"{source}: {name} has shape {arr.shape}, "
                                  f"model expects {p.data.shape}")
        p.data = arr


def save_model(path, kind: str, params, config: TrainConfig, float32: bool = False):
    save_checkpoint(path, _params_dict(params),
                    {"kind": kind, "train_config": config.to_dict()},
                    float32=float32)


def _load_kind(path, kind: str) -> tuple[TrainConfig, dict]:
    arrays, blob = load_checkpoint(path)
    if blob.get("kind") != kind:
        raise CheckpointError(f"{path}: checkpoint kind {blob.get('kind')!r}, "
                              f"expected {kind!r}")
    return TrainConfig.from_dict(blob["train_config"]), arrays


def load_model(path) -> tuple[TrainConfig, pl.ImplicitModel]:
    config, arrays = _load_kind(path, "ie")
    model = build_model(config)
    _load_params(model.parameters(), arrays, str(path))
    return config, model


def load_regressor(path) -> tuple[TrainConfig, pl.CodeRegressor]:
    config, arrays = _load_kind(path, "sr")
    reg = build_regressor(config)
    _load_params(reg.parameters(), arrays, str(path))
    return config, reg


# ---------------------------------------------------------------------------
# Training


def _sub_seed(*parts) -> int:
    return int(np.random.SeedSequence(tuple(int(p) for p in parts))
               .generate_state(1)[0])


def _grid_batch(dataset: Dataset, ids, resolution: int) -> np.ndarray:
    return np.stack([dataset.grid(i, resolution).values for i in ids]
                    ).astype(np.float64)[:, None]


def _finite_or_abort(value: dn.Tensor, epoch: int, batch: int, term: str) -> dn.Tensor:
    if not np.isfinite(value.data).all():
        raise TrainAbort(epoch, batch, term)
    return value


def train_ie(dataset: Dataset, config: TrainConfig, split: str | None = None,
             model: pl.ImplicitModel | None = None) -> tuple[pl.ImplicitModel, list]:
    """Joint optimization of encoder, generator, and render weights.

    Returns the trained model and a per-epoch log (list of dicts).  Pass
    ``model`` to continue from an existing initialization.
    """
    model = model or build_model(config)
    params = model.parameters()
    opt = dn.Adam(params, lr=config.lr)
    ids = dataset.ids(split)
    if not ids:
        raise DatasetError(f"dataset has no layouts in split {split!r}")
    log = []
    for epoch in range(1, config.epochs + 1):
        order = np.random.default_rng(
            np.random.SeedSequence((config.seed, 0xE, epoch))).permutation(len(ids))
        total = np.zeros(3)
        n_batches = 0
        for b0 in range(0, len(ids), config.batch_size):
            batch_ids = [ids[k] for k in order[b0:b0 + config.batch_size]]
            step = b0 // config.batch_size
            xs = _grid_batch(dataset, batch_ids, config.resolution)
            coords = np.empty((len(batch_ids), 3, config.coord_samples))
            truth = np.empty((len(batch_ids), config.coord_samples))
            for k, layout_id in enumerate(batch_ids):
                cb, tv = sample_coords(dataset.grid(layout_id, config.resolution),
                                       config.coord_samples, config.sample_mode,
                                       seed=_sub_seed(config.seed, epoch, step, k))
                coords[k] = cb.coords
                truth[k] = tv
            try:
                out = model.render_batch(dn.Tensor(xs), coords)
            except dn.NonFiniteError as exc:
                raise TrainAbort(epoch, step, f"forward ({exc})") from exc
            l_o = _finite_or_abort(pl.loss_occupancy(out.occupancy, truth),
                                   epoch, step, "occupancy")
            l_g = _finite_or_abort(pl.loss_grouping(model.w_g), epoch, step, "grouping")
            l_c = _finite_or_abort(pl.loss_combining(model.w_c), epoch, step, "combining")
            objective = dn.add(dn.add(l_o, l_g), l_c)
            opt.zero_grad()
            objective.backward()
            opt.step()
            total += (float(l_o.data), float(l_g.data), float(l_c.data))
            n_batches += 1
        log.append({"epoch": epoch,
                    "objective": float(total.sum() / n_batches),
                    "occupancy": float(total[0] / n_batches),
                    "grouping": float(total[1] / n_batches),
                    "combining": float(total[2] / n_batches)})
    return model, log


def fit_code_targets(dataset: Dataset, model: pl.ImplicitModel,
                     config: TrainConfig, ids) -> dict:
    """Frozen self-encoder codes for every id (the regression targets)."""
    targets = {}
    for c0 in range(0, len(ids), EVAL_CHUNK):
        chunk = ids[c0:c0 + EVAL_CHUNK]
        xs = _grid_batch(dataset, chunk, config.resolution)
        codes = model.encode_batch(dn.Tensor(xs)).data
        for k, layout_id in enumerate(chunk):
            targets[layout_id] = codes[k]
    return targets


def _regressor_inputs(dataset: Dataset, ids, config: TrainConfig) -> np.ndarray:
    if config.regressor_input == "boundary":
        return np.stack([dataset.boundary_values(i) for i in ids])
    return _grid_batch(dataset, ids, config.resolution)


def train_sr(dataset: Dataset, config: TrainConfig, ie_model: pl.ImplicitModel,
             split: str | None = None,
             regressor: pl.CodeRegressor | None = None
             ) -> tuple[pl.CodeRegressor, list]:
    """Fit the image-to-code regressor against frozen self-encoder codes."""
    regressor = regressor or build_regressor(config)
    params = regressor.parameters()
    opt = dn.Adam(params, lr=config.lr)
    ids = dataset.ids(split)
    if not ids:
        raise DatasetError(f"dataset has no layouts in split {split!r}")
    if config.regressor_input == "boundary":
        missing = [i for i in ids if not dataset.map_path(i).exists()]
        if missing:
            raise DatasetError(f"{len(missing)} boundary maps missing "
                               f"(first: {dataset.map_path(missing[0])})")
    cached = (fit_code_targets(dataset, ie_model, config, ids)
              if config.cache_codes else None)
    log = []
    for epoch in range(1, config.epochs + 1):
        order = np.random.default_rng(
            np.random.SeedSequence((config.seed, 0x5, epoch))).permutation(len(ids))
        total = 0.0
        n_batches = 0
        for b0 in range(0, len(ids), config.batch_size):
            batch_ids = [ids[k] for k in order[b0:b0 + config.batch_size]]
            step = b0 // config.batch_size
            xs = _regressor_inputs(dataset, batch_ids, config)
            if cached is not None:
                targets = np.stack([cached[i] for i in batch_ids])
            else:
                gx = _grid_batch(dataset, batch_ids, config.resolution)
                targets = ie_model.encode_batch(dn.Tensor(gx)).data
            try:
                pred = regressor.forward(dn.Tensor(xs))
                loss = pl.regression_loss(pred, targets, config.regression_loss)
            except dn.NonFiniteError as exc:
                raise TrainAbort(epoch, step, f"regression ({exc})") from exc
            _finite_or_abort(loss, epoch, step, "regression")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.data)
            n_batches += 1
        log.append({"epoch": epoch, "loss": total / n_batches,
                    "regression_loss": config.regression_loss})
    return regressor, log


# ---------------------------------------------------------------------------
# Evaluation


@dataclass(frozen=True)
class EvalReport:
    samples: tuple          # of {"id", "iou_ie", "iou_le"|None}
    mean_iou_ie: float
    mean_iou_le: float | None
    config_hash: str
    manifest_hash: str

    def to_json_bytes(self) -> bytes:
        doc = {"mean_iou_ie": self.mean_iou_ie,
               "mean_iou_le": self.mean_iou_le,
               "samples": list(self.samples),
               "config_hash": self.config_hash,
               "manifest_hash": self.manifest_hash}
        return (json.dumps(doc, sort_keys=True, separators=(",", ": "),
                           indent=1) + "\n").encode()


def _occupancy_grids(planes: np.ndarray, w_g: np.ndarray, w_c: np.ndarray,
                     resolution: int) -> np.ndarray:
    """Thresholded occupancy at all pixel centers; (B, R, R) uint8."""
    coords = coord_batch(pixel_centers(resolution))
    out = pl.render(planes, w_g, w_c, coords.coords[None])
    occ = out.occupancy.data.reshape(-1, resolution, resolution)
    return (occ >= THRESHOLD).astype(np.uint8)


def _iou_map(dataset: Dataset, ids, config: TrainConfig, codes_of) -> dict:
    """IoU of decoded codes vs ground-truth grids, id -> float."""
    ious = {}
    for c0 in range(0, len(ids), EVAL_CHUNK):
        chunk = ids[c0:c0 + EVAL_CHUNK]
        planes, w_g, w_c = codes_of(chunk)
        rendered = _occupancy_grids(planes, w_g, w_c, config.resolution)
        for k, layout_id in enumerate(chunk):
            gt = dataset.grid(layout_id, config.resolution).values
            ious[layout_id] = compute_iou(rendered[k], gt).iou
    return ious


def _decode_via(model: pl.ImplicitModel, codes: np.ndarray):
    planes = model.planes_batch(dn.Tensor(codes)).data
    return planes, model.w_g.data, model.w_c.data


def eval_ie(model: pl.ImplicitModel, dataset: Dataset, config: TrainConfig,
            split: str | None = None) -> EvalReport:
    """Self-encoding IoU: grid -> code -> planes -> occupancy vs same grid."""
    ids = dataset.ids(split)
    if not ids:
        raise DatasetError(f"dataset has no layouts in split {split!r}")

    def codes_of(chunk):
        xs = _grid_batch(dataset, chunk, config.resolution)
        return _decode_via(model, model.encode_batch(dn.Tensor(xs)).data)

    ious = _iou_map(dataset, ids, config, codes_of)
    samples = tuple({"id": i, "iou_ie": ious[i], "iou_le": None} for i in ids)
    return EvalReport(samples=samples,
                      mean_iou_ie=float(np.mean([ious[i] for i in ids])),
                      mean_iou_le=None,
                      config_hash=config.hash(),
                      manifest_hash=dataset.manifest_hash)


def eval_le(regressor: pl.CodeRegressor, ie_model: pl.ImplicitModel,
            dataset: Dataset, config: TrainConfig,
            split: str | None = None) -> EvalReport:
    """End-to-end IoU (regressed codes) next to self-encoding IoU."""
    if regressor.config.code_dim != ie_model.config.code_dim:
        raise CheckpointError(f"code dim mismatch: regressor {regressor.config.code_dim}"
                              f" vs implicit model {ie_model.config.code_dim}")
    ids = dataset.ids(split)
    if not ids:
        raise DatasetError(f"dataset has no layouts in split {split!r}")

    def codes_ie(chunk):
        xs = _grid_batch(dataset, chunk, config.resolution)
        return _decode_via(ie_model, ie_model.encode_batch(dn.Tensor(xs)).data)

    def codes_le(chunk):
        xs = _regressor_inputs(dataset, chunk, config)
        return _decode_via(ie_model, regressor.forward(dn.Tensor(xs)).data)

    iou_ie = _iou_map(dataset, ids, config, codes_ie)
    iou_le = _iou_map(dataset, ids, config, codes_le)
    samples = tuple({"id": i, "iou_ie": iou_ie[i], "iou_le": iou_le[i]} for i in ids)
    return EvalReport(samples=samples,
                      mean_iou_ie=float(np.mean([iou_ie[i] for i in ids])),
                      mean_iou_le=float(np.mean([iou_le[i] for i in ids])),
                      config_hash=config.hash(),
                      manifest_hash=dataset.manifest_hash)
