"""Overfit the self-encoder on a single room and inspect the decoded shape.

The self-encoder maps a top-view occupancy grid to a compact code; a
generator expands the code into hyperplanes that re-render the room.  With
one room and a few hundred steps the reconstruction should be near-perfect,
which is a quick sanity check that the code/generator/render chain can
actually represent rectilinear shapes.

Run:  python3 demos/05_self_encode_room.py
"""

import pathlib
import time

import numpy as np

from roomlay import diffnet as dn
from roomlay.config import TrainConfig
from roomlay.harness import Dataset, eval_ie, load_model, save_model, train_ie
from roomlay.layout import coord_batch, pixel_centers
from roomlay.pipeline import render
from roomlay.roomgen import build_dataset

OUT = pathlib.Path(__file__).resolve().parent / "out"


def side_by_side(gt, pred):
    rows = []
    for a, b in zip(gt, pred):
        left = "".join("#" if v else "." for v in a)
        right = "".join("#" if v else "." for v in b)
        rows.append(left + "   " + right)
    return "\n".join(rows)


def main():
    OUT.mkdir(exist_ok=True)
    root = OUT / "one_room"
    build_dataset(anchors=1, augment_factor=0, seed=77, out_dir=root)
    ds = Dataset(root)
    room_id = ds.ids()[0]
    print(f"room {room_id}: {ds.layout(room_id).num_walls} walls")

    cfg = TrainConfig(resolution=32, code_dim=16, n_planes=24, n_primitives=4,
                      channels=(4, 8, 16), widths=(32, 32), coord_samples=512,
                      batch_size=1, lr=3e-3, epochs=200, seed=0)
    t0 = time.time()
    model, log = train_ie(ds, cfg)
    print(f"trained {cfg.epochs} steps in {time.time() - t0:.1f} s "
          f"(objective {log[0]['objective']:.3f} -> {log[-1]['objective']:.4f})")

    report = eval_ie(model, ds, cfg)
    print(f"self-encoding IoU: {report.mean_iou_ie:.4f}")

    # decode once more by hand to draw ground truth and reconstruction
    gt = ds.grid(room_id, cfg.resolution).values
    code = model.encode_batch(dn.Tensor(gt[None, None].astype(float))).data
    planes = model.planes_batch(dn.Tensor(code)).data
    coords = coord_batch(pixel_centers(cfg.resolution))
    occ = render(planes, model.w_g.data, model.w_c.data, coords.coords[None])
    pred = (occ.occupancy.data.reshape(cfg.resolution, cfg.resolution) >= 0.5)
    print("\nground truth (left) vs decoded (right):")
    print(side_by_side(gt[::2, ::2], pred[::2, ::2].astype(int)))

    ckpt = OUT / "one_room_ie.ckpt"
    save_model(ckpt, "ie", model.parameters(), cfg)
    _, reloaded = load_model(ckpt)
    again = eval_ie(reloaded, ds, cfg)
    assert again.to_json_bytes() == report.to_json_bytes()
    print(f"\ncheckpoint round trip reproduces the report byte for byte "
          f"({ckpt.stat().st_size} bytes)")


if __name__ == "__main__":
    main()
