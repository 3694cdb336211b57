"""Command-line entry points.

Subcommands: gen, augment, rasterize, panorama, train-ie, eval-ie, train-sr,
eval-le, render-png, grad-check.  Shared flags: --config (JSON file),
--data (dataset dir or layout file), --out (output path), --seed.  The seed
flag, when given, overrides the config seed wherever randomness exists.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import diffnet as dn
from . import harness as hn
from . import pipeline as pl
from .config import TrainConfig, load_config
from .layout import extract_contour, pixel_centers, coord_batch, rasterize, \
    read_layout, write_grid_pgm, write_layout
from .panorama import render_boundaries, write_boundary_map
from .roomgen import augment, build_dataset, generate_anchor


def _load_cfg(args) -> TrainConfig:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = TrainConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _gen_options(args) -> dict:
    opts = {"anchors": 100, "augment_factor": 0, "seed": 0,
            "walls_choices": [4, 6, 8, 10], "size_range": [3.0, 8.0]}
    if args.config:
        with open(args.config) as fh:
            given = json.load(fh)
        unknown = set(given) - set(opts)
        if unknown:
            raise ValueError(f"unknown gen options: {sorted(unknown)}")
        opts.update(given)
    if args.seed is not None:
        opts["seed"] = args.seed
    return opts


def cmd_gen(args) -> int:
    opts = _gen_options(args)
    manifest = build_dataset(opts["anchors"], opts["augment_factor"], opts["seed"],
                             args.out, walls_choices=tuple(opts["walls_choices"]),
                             size_range=tuple(opts["size_range"]))
    print(f"wrote {len(manifest['layouts'])} layouts to {args.out}")
    return 0


def cmd_augment(args) -> int:
    anchor = read_layout(args.data)
    variant, record = augment(anchor, args.seed or 0)
    write_layout(variant, args.out)
    print(f"wall {record.wall_index} offset {record.offset:+.4f} m "
          f"(l_min {record.l_min:.4f} m) -> {args.out}")
    return 0


def cmd_rasterize(args) -> int:
    cfg = _load_cfg(args)
    grid = rasterize(read_layout(args.data), cfg.resolution)
    write_grid_pgm(grid, args.out)
    print(f"{grid.resolution}x{grid.resolution} grid -> {args.out}")
    return 0


def cmd_panorama(args) -> int:
    cfg = _load_cfg(args)
    data = Path(args.data)
    if data.is_dir():
        ds = hn.Dataset(data)
        n = hn.ensure_boundary_maps(ds, cfg)
        print(f"rendered {n} boundary maps under {data}")
    else:
        bm = render_boundaries(read_layout(data), cfg.map_width, cfg.map_height,
                               cfg.sigma_px)
        write_boundary_map(bm, args.out)
        print(f"{bm.width}x{bm.height}x3 boundary map -> {args.out}")
    return 0


def cmd_train_ie(args) -> int:
    cfg = _load_cfg(args)
    ds = hn.Dataset(args.data)
    model = None
    if args.init_from:
        _, model = hn.load_model(args.init_from)
    model, log = hn.train_ie(ds, cfg, split=args.split, model=model)
    hn.save_model(args.out, "ie", model.parameters(), cfg)
    log_path = Path(args.out).with_suffix(".log.json")
    log_path.write_text(json.dumps(log, indent=1) + "\n")
    last = log[-1]["objective"] if log else float("nan")
    print(f"trained {cfg.epochs} epochs (final objective {last:.6f}) -> {args.out}")
    return 0


def cmd_eval_ie(args) -> int:
    cfg, model = hn.load_model(args.checkpoint)
    report = hn.eval_ie(model, hn.Dataset(args.data), cfg, split=args.split)
    Path(args.out).write_bytes(report.to_json_bytes())
    print(f"mean IoU-IE {report.mean_iou_ie:.4f} over "
          f"{len(report.samples)} layouts -> {args.out}")
    return 0


def cmd_train_sr(args) -> int:
    ie_cfg, ie_model = hn.load_model(args.checkpoint)
    cfg = _load_cfg(args) if args.config else ie_cfg
    if args.seed is not None:
        cfg.seed = args.seed
    ds = hn.Dataset(args.data)
    reg, log = hn.train_sr(ds, cfg, ie_model, split=args.split)
    hn.save_model(args.out, "sr", reg.parameters(), cfg)
    log_path = Path(args.out).with_suffix(".log.json")
    log_path.write_text(json.dumps(log, indent=1) + "\n")
    print(f"trained regressor ({cfg.regression_loss}) -> {args.out}")
    return 0


def cmd_eval_le(args) -> int:
    sr_cfg, reg = hn.load_regressor(args.checkpoint)
    _, ie_model = hn.load_model(args.ie_checkpoint)
    report = hn.eval_le(reg, ie_model, hn.Dataset(args.data), sr_cfg,
                        split=args.split)
    Path(args.out).write_bytes(report.to_json_bytes())
    print(f"mean IoU-LE {report.mean_iou_le:.4f} (IoU-IE {report.mean_iou_ie:.4f}) "
          f"-> {args.out}")
    return 0


def cmd_render_png(args) -> int:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    layout = read_layout(args.data)
    model = None
    if args.checkpoint:
        ckpt_cfg, model = hn.load_model(args.checkpoint)
        # without an explicit --config, render at the checkpoint's resolution
        cfg = _load_cfg(args) if args.config else ckpt_cfg
    else:
        cfg = _load_cfg(args)
    grid = rasterize(layout, cfg.resolution)
    two = model is not None
    fig, axes = plt.subplots(1, 2 if two else 1, squeeze=False,
                             figsize=(8 if two else 4, 4))
    axes[0][0].imshow(grid.values, cmap="gray_r", extent=(-1, 1, -1, 1))
    axes[0][0].set_title(f"{layout.id}: ground truth")
    if two:
        occ = model.reconstruct(grid, coord_batch(pixel_centers(cfg.resolution)))
        field = occ.reshape(cfg.resolution, cfg.resolution)
        axes[0][1].imshow(field, cmap="gray_r", extent=(-1, 1, -1, 1))
        for contour in extract_contour(field, hn.THRESHOLD):
            axes[0][1].plot(contour[:, 0], contour[:, 1], "r-", lw=1)
        axes[0][1].set_title("reconstruction")
    fig.tight_layout()
    fig.savefig(args.out, dpi=120)
    print(f"figure -> {args.out}")
    return 0


def cmd_grad_check(args) -> int:
    if args.config:
        cfg = _load_cfg(args)
    else:
        # the analytic/numeric comparison is size-independent and the numeric
        # side costs two renders per scalar parameter, so default small
        cfg = TrainConfig(resolution=16, code_dim=8, n_planes=8, n_primitives=2,
                          channels=(2, 3, 4), widths=(12, 12), coord_samples=16,
                          seed=args.seed if args.seed is not None else 0)
    rng = np.random.default_rng(cfg.seed)
    model = pl.ImplicitModel(cfg.model(), rng)
    # generic init: the training init parks 1 - W_g @ o1 on the clamp kink at
    # interior points, which would exclude most elements from the comparison
    model.w_g.data = rng.normal(0.0, 0.3, model.w_g.shape)
    model.w_c.data = rng.normal(1.0, 0.3, model.w_c.shape)
    xs = rng.uniform(size=(1, 1, cfg.resolution, cfg.resolution)).round()
    coords = np.vstack([rng.uniform(-1, 1, size=(2, 16)), np.ones((1, 16))])
    truth = rng.uniform(size=(1, 16)).round()

    def loss_fn():
        out = model.render_batch(dn.Tensor(xs), coords[None])
        return pl.total_objective(out.occupancy, truth, model.w_g, model.w_c)

    report = dn.grad_check(loss_fn, model.parameters(), h=1e-5, tol=1e-4)
    for line in report.lines():
        print(line)
    print(f"max relative error {report.max_rel_err:.3e} "
          f"({'pass' if report.ok else 'FAIL'})")
    return 0 if report.ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="roomlay",
                                     description="Parametric room-layout encoding")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, **flags):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="override config seed")
        if flags.get("data", True):
            p.add_argument("--data", required=flags.get("data_required", True),
                           help="dataset directory or layout file")
        if flags.get("out", True):
            p.add_argument("--out", required=flags.get("out_required", True),
                           help="output path")
        if flags.get("split"):
            p.add_argument("--split", default=None,
                           help="restrict to a manifest split (train/val/test)")
        for extra in flags.get("extra", ()):
            p.add_argument(extra[0], **extra[1])
        p.set_defaults(fn=fn)
        return p

    add("gen", cmd_gen, data=False)
    add("augment", cmd_augment)
    add("rasterize", cmd_rasterize)
    add("panorama", cmd_panorama, out_required=False)
    add("train-ie", cmd_train_ie, split=True,
        extra=[("--init-from", {"help": "checkpoint to continue from"})])
    add("eval-ie", cmd_eval_ie, split=True,
        extra=[("--checkpoint", {"required": True, "help": "trained model"})])
    add("train-sr", cmd_train_sr, split=True,
        extra=[("--checkpoint", {"required": True, "help": "frozen implicit model"})])
    add("eval-le", cmd_eval_le, split=True,
        extra=[("--checkpoint", {"required": True, "help": "trained regressor"}),
               ("--ie-checkpoint", {"required": True, "help": "frozen implicit model"})])
    add("render-png", cmd_render_png,
        extra=[("--checkpoint", {"help": "optional model for reconstruction"})])
    add("grad-check", cmd_grad_check, data=False, out=False)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # surface a clean one-line error, nonzero exit
        print(f"roomlay {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
