"""Tests for dataset access, training loops, evaluation, and model files."""

import json

import numpy as np
import pytest

import roomlay.diffnet as dn
import roomlay.pipeline as pl
from roomlay.checkpoint import CheckpointError, save_checkpoint
from roomlay.config import TrainConfig
from roomlay.harness import (
    THRESHOLD,
    Dataset,
    DatasetError,
    TrainAbort,
    build_model,
    build_regressor,
    ensure_boundary_maps,
    eval_ie,
    eval_le,
    fit_code_targets,
    load_model,
    load_regressor,
    save_model,
    train_ie,
    train_sr,
)
from roomlay.layout import Camera, RoomLayout, compute_iou, coord_batch, \
    pixel_centers, rasterize
from roomlay.roomgen import build_dataset

TINY = dict(resolution=16, code_dim=6, n_planes=8, n_primitives=2,
            channels=(2, 3, 4), widths=(12,), coord_samples=32,
            batch_size=4, lr=3e-3, epochs=2, seed=0,
            map_height=8, map_width=16)


def tiny_cfg(**overrides):
    return TrainConfig(**{**TINY, **overrides})


@pytest.fixture(scope="module")
def ds(tmp_path_factory):
    root = tmp_path_factory.mktemp("rooms") / "ds"
    build_dataset(8, 0, 13, root)
    return Dataset(root)


def params_snapshot(params):
    return {p.name: p.data.copy() for p in params}


# ---------------------------------------------------------------------------
# dataset access


def test_dataset_requires_manifest(tmp_path):
    with pytest.raises(DatasetError, match="manifest"):
        Dataset(tmp_path)


def test_dataset_ids_and_layouts(ds):
    ids = ds.ids()
    assert ids == sorted(ids) and len(ids) == 8
    by_split = [ds.ids(s) for s in ("train", "val", "test")]
    assert sorted(sum(by_split, [])) == ids
    room = ds.layout(ids[0])
    assert room.id == ids[0]
    assert ds.layout(ids[0]) is room  # cached
    grid = ds.grid(ids[0], 16)
    assert grid.resolution == 16
    assert ds.grid(ids[0], 16) is grid


def test_dataset_missing_layout_file(tmp_path):
    build_dataset(2, 0, 1, tmp_path / "d")
    ds2 = Dataset(tmp_path / "d")
    (tmp_path / "d" / "a00001.json").unlink()
    with pytest.raises(DatasetError, match="missing"):
        ds2.layout("a00001")


def test_dataset_manifest_hash_matches_bytes(ds):
    import hashlib
    raw = (ds.root / "manifest.json").read_bytes()
    assert ds.manifest_hash == hashlib.sha256(raw).hexdigest()


def test_boundary_values_error_names_path(ds):
    with pytest.raises(DatasetError, match="sbm.pgm"):
        ds.boundary_values(ds.ids()[0])


def test_ensure_boundary_maps_writes_once_and_tracks_dims(tmp_path):
    build_dataset(3, 0, 2, tmp_path / "d")
    ds2 = Dataset(tmp_path / "d")
    cfg = tiny_cfg()
    assert ensure_boundary_maps(ds2, cfg) == 3
    assert ensure_boundary_maps(ds2, cfg) == 0
    for i in ds2.ids():
        assert ds2.boundary_values(i).shape == (3, 8, 16)
    wider = tiny_cfg(map_height=16, map_width=32)
    assert ensure_boundary_maps(ds2, wider) == 3  # re-render on size change
    assert ds2.boundary_values(ds2.ids()[0]).shape == (3, 16, 32)


# ---------------------------------------------------------------------------
# model construction and files


def test_build_model_is_seed_deterministic():
    a = params_snapshot(build_model(tiny_cfg()).parameters())
    b = params_snapshot(build_model(tiny_cfg()).parameters())
    assert all(np.array_equal(a[k], b[k]) for k in a)
    c = params_snapshot(build_model(tiny_cfg(seed=1)).parameters())
    assert any(not np.array_equal(a[k], c[k]) for k in a)


def test_model_checkpoint_round_trip(tmp_path):
    cfg = tiny_cfg()
    model = build_model(cfg)
    path = tmp_path / "m.ckpt"
    save_model(path, "ie", model.parameters(), cfg)
    cfg_back, model_back = load_model(path)
    assert cfg_back == cfg
    a = params_snapshot(model.parameters())
    b = params_snapshot(model_back.parameters())
    assert set(a) == set(b)
    assert all(np.array_equal(a[k], b[k]) for k in a)


def test_load_rejects_wrong_kind(tmp_path):
    cfg = tiny_cfg()
    save_model(tmp_path / "m.ckpt", "ie", build_model(cfg).parameters(), cfg)
    with pytest.raises(CheckpointError, match="kind"):
        load_regressor(tmp_path / "m.ckpt")


def test_load_rejects_name_and_shape_mismatches(tmp_path):
    cfg = tiny_cfg()
    arrays = {p.name: p.data for p in build_model(cfg).parameters()}
    blob = {"kind": "ie", "train_config": cfg.to_dict()}

    missing = dict(arrays)
    del missing["wc"]
    save_checkpoint(tmp_path / "miss.ckpt", missing, blob)
    with pytest.raises(CheckpointError, match="names do not match"):
        load_model(tmp_path / "miss.ckpt")

    bent = dict(arrays)
    bent["wc"] = np.zeros((2, 2))
    save_checkpoint(tmp_path / "bent.ckpt", bent, blob)
    with pytest.raises(CheckpointError, match="shape"):
        load_model(tmp_path / "bent.ckpt")


# ---------------------------------------------------------------------------
# implicit-encoder training


def test_train_zero_epochs_keeps_initialization(ds):
    cfg = tiny_cfg(epochs=0)
    model, log = train_ie(ds, cfg)
    assert log == []
    init = params_snapshot(build_model(cfg).parameters())
    now = params_snapshot(model.parameters())
    assert all(np.array_equal(init[k], now[k]) for k in init)


def test_training_is_bit_deterministic(ds):
    cfg = tiny_cfg()
    m1, log1 = train_ie(ds, cfg)
    m2, log2 = train_ie(ds, cfg)
    assert log1 == log2
    a, b = params_snapshot(m1.parameters()), params_snapshot(m2.parameters())
    assert all(np.array_equal(a[k], b[k]) for k in a)


def test_objective_decreases_over_training(ds):
    model, log = train_ie(ds, tiny_cfg(epochs=6))
    assert log[-1]["objective"] <= log[0]["objective"]
    assert [e["epoch"] for e in log] == list(range(1, 7))
    for entry in log:
        assert set(entry) == {"epoch", "objective", "occupancy",
                              "grouping", "combining"}


def test_training_continues_from_passed_model(ds):
    cfg = tiny_cfg()
    m1, _ = train_ie(ds, cfg)
    before = params_snapshot(m1.parameters())
    m2, _ = train_ie(ds, cfg, model=m1)
    assert m2 is m1
    after = params_snapshot(m2.parameters())
    assert any(not np.array_equal(before[k], after[k]) for k in before)


@pytest.mark.filterwarnings("ignore:overflow")
@pytest.mark.filterwarnings("ignore:invalid value")
def test_train_abort_reports_location(ds):
    with pytest.raises(TrainAbort) as info:
        train_ie(ds, tiny_cfg(lr=1e200, epochs=3))
    exc = info.value
    assert exc.epoch >= 1 and exc.batch >= 0
    assert "epoch" in str(exc) and exc.term


def test_train_empty_split_is_an_error(ds):
    with pytest.raises(DatasetError, match="no layouts"):
        train_ie(ds, tiny_cfg(), split="nosuch")


# ---------------------------------------------------------------------------
# regressor training


def test_fit_code_targets_matches_single_encodes(ds):
    cfg = tiny_cfg()
    model = build_model(cfg)
    ids = ds.ids()[:3]
    targets = fit_code_targets(ds, model, cfg, ids)
    for i in ids:
        assert np.allclose(targets[i], model.encode(ds.grid(i, 16)).values,
                           atol=1e-12)


def test_train_sr_requires_boundary_maps(tmp_path):
    build_dataset(3, 0, 4, tmp_path / "d")
    bare = Dataset(tmp_path / "d")
    with pytest.raises(DatasetError, match="boundary maps missing"):
        train_sr(bare, tiny_cfg(), build_model(tiny_cfg()))


def test_train_sr_runs_and_caching_is_equivalent(ds):
    cfg = tiny_cfg()
    ensure_boundary_maps(ds, cfg)
    model = build_model(cfg)
    r1, log1 = train_sr(ds, cfg, model)
    r2, log2 = train_sr(ds, tiny_cfg(cache_codes=True), model)
    assert log1[-1]["loss"] == log2[-1]["loss"]
    assert log1[0]["regression_loss"] == "L2"
    a, b = params_snapshot(r1.parameters()), params_snapshot(r2.parameters())
    assert all(np.array_equal(a[k], b[k]) for k in a)


def test_train_sr_l1_mode_logs_choice(ds):
    cfg = tiny_cfg(regression_loss="L1", epochs=1)
    ensure_boundary_maps(ds, cfg)
    _, log = train_sr(ds, cfg, build_model(cfg))
    assert log[0]["regression_loss"] == "L1"


def test_perfect_regressor_matches_self_encoding_exactly(ds):
    cfg = tiny_cfg(regressor_input="grid")
    model = build_model(cfg)
    reg = build_regressor(cfg)
    for src, dst in zip(model.encoder.parameters(), reg.encoder.parameters()):
        dst.data = src.data.copy()
    report = eval_le(reg, model, ds, cfg)
    for s in report.samples:
        assert s["iou_le"] == s["iou_ie"]
    assert report.mean_iou_le == report.mean_iou_ie


def test_eval_le_rejects_code_dim_mismatch(ds):
    cfg = tiny_cfg()
    small = tiny_cfg(code_dim=5)
    with pytest.raises(CheckpointError, match="code dim"):
        eval_le(build_regressor(small), build_model(cfg), ds, cfg)


# ---------------------------------------------------------------------------
# evaluation


def square_layout(side=4.0):
    s = side / 2
    return RoomLayout(id="sq", corners=[(-s, -s), (s, -s), (s, s), (-s, s)],
                      ceiling_height=2.5, camera=Camera(0, 0, 1.4))


def test_hand_planes_reproduce_ground_truth_exactly():
    # bypass the networks entirely: sharp planes on the fitted square must
    # reproduce the rasterized grid pixel for pixel
    r = 32
    grid = rasterize(square_layout(), r)
    m = 0.9  # fit margin maps the square onto [-0.9, 0.9]^2
    k = 1e6
    planes = k * np.array([[1, 0, -m], [-1, 0, -m], [0, 1, -m], [0, -1, -m]], dtype=float)
    occ = pl.render(planes, np.ones((1, 4)), np.ones((1, 1)),
                    coord_batch(pixel_centers(r))).occupancy.data
    rendered = (occ >= THRESHOLD).astype(np.uint8).reshape(r, r)
    report = compute_iou(rendered, grid.values)
    assert report.iou == 1.0


def test_all_zero_planes_score_coverage_ratio(ds):
    cfg = tiny_cfg()
    gt = ds.grid(ds.ids()[0], cfg.resolution).values
    occ = pl.render(np.zeros((8, 3)), np.zeros((2, 8)), np.full((1, 2), 0.5),
                    coord_batch(pixel_centers(cfg.resolution))).occupancy.data
    rendered = (occ >= THRESHOLD).astype(np.uint8).reshape(16, 16)
    assert rendered.all()  # combining weights sum to 1 -> solid coverage
    assert compute_iou(rendered, gt).iou == pytest.approx(gt.mean())


def test_eval_report_means_and_hashes(ds):
    cfg = tiny_cfg()
    model = build_model(cfg)
    report = eval_ie(model, ds, cfg)
    assert len(report.samples) == 8
    assert all(s["iou_le"] is None for s in report.samples)
    assert report.mean_iou_le is None
    assert report.mean_iou_ie == pytest.approx(
        np.mean([s["iou_ie"] for s in report.samples]))
    assert report.config_hash == cfg.hash()
    assert report.manifest_hash == ds.manifest_hash


def test_eval_report_bytes_are_deterministic_and_parse(ds):
    cfg = tiny_cfg()
    model = build_model(cfg)
    one = eval_ie(model, ds, cfg).to_json_bytes()
    two = eval_ie(model, ds, cfg).to_json_bytes()
    assert one == two
    doc = json.loads(one)
    assert set(doc) == {"mean_iou_ie", "mean_iou_le", "samples",
                        "config_hash", "manifest_hash"}


def test_eval_empty_split_is_an_error(ds):
    with pytest.raises(DatasetError, match="no layouts"):
        eval_ie(build_model(tiny_cfg()), ds, tiny_cfg(), split="nosuch")


def test_eval_is_split_consistent(ds):
    # evaluating a split yields exactly the per-sample values of the full run
    cfg = tiny_cfg()
    model = build_model(cfg)
    full = {s["id"]: s["iou_ie"] for s in eval_ie(model, ds, cfg).samples}
    split = ds.ids("train") and "train" or "val"
    part = eval_ie(model, ds, cfg, split=split)
    for s in part.samples:
        assert s["iou_ie"] == full[s["id"]]
