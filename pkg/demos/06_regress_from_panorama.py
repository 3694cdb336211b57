"""End-to-end demo: panorama boundary maps in, room layouts out.

Two stages mirror the full pipeline.  First a self-encoder learns shape
codes from top-view grids (it defines what a "layout code" means).  Then a
regressor learns to predict those frozen codes from panoramic boundary maps,
so at test time a room is recovered from the panorama alone and scored by
top-view IoU.

The run is sized for a demo (small model, 180 rooms, a minute or so), so the
numbers are modest next to a full training; the point is the plumbing.

Run:  python3 demos/06_regress_from_panorama.py
"""

import pathlib
import time

from roomlay.config import TrainConfig
from roomlay.harness import (Dataset, ensure_boundary_maps, eval_ie, eval_le,
                             train_ie, train_sr)
from roomlay.roomgen import build_dataset

OUT = pathlib.Path(__file__).resolve().parent / "out"


def main():
    OUT.mkdir(exist_ok=True)
    root = OUT / "e2e"
    build_dataset(anchors=60, augment_factor=2, seed=5, out_dir=root)
    ds = Dataset(root)
    print(f"dataset: {len(ds.ids())} rooms "
          f"({len(ds.ids('train'))} train / {len(ds.ids('val'))} val / "
          f"{len(ds.ids('test'))} test)")

    cfg = TrainConfig(resolution=32, code_dim=24, n_planes=32, n_primitives=6,
                      channels=(6, 12, 24), widths=(48, 48), coord_samples=256,
                      batch_size=8, lr=1e-3, epochs=150, seed=0,
                      map_height=32, map_width=64, cache_codes=True)

    n = ensure_boundary_maps(ds, cfg)
    print(f"rendered {n} boundary maps at {cfg.map_width}x{cfg.map_height}")

    t0 = time.time()
    model, _ = train_ie(ds, cfg, split="train")
    print(f"stage 1 (self-encoder) trained in {time.time() - t0:.0f} s")
    ie_report = eval_ie(model, ds, cfg, split="test")
    print(f"  test self-encoding IoU: {ie_report.mean_iou_ie:.3f}")

    t0 = time.time()
    regressor, _ = train_sr(ds, cfg, model, split="train")
    print(f"stage 2 (panorama regressor) trained in {time.time() - t0:.0f} s")

    report = eval_le(regressor, model, ds, cfg, split="test")
    print(f"  test IoU from panoramas: {report.mean_iou_le:.3f} "
          f"(self-encoding ceiling {report.mean_iou_ie:.3f})")

    print("\nper-room scores (first five):")
    for s in report.samples[:5]:
        print(f"  {s['id']}: panorama {s['iou_le']:.3f}, "
              f"self-encode {s['iou_ie']:.3f}")

    out_path = OUT / "e2e_report.json"
    out_path.write_bytes(report.to_json_bytes())
    print(f"\nwrote {out_path}")


if __name__ == "__main__":
    main()
