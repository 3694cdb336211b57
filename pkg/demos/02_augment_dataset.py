"""Grow a room dataset by translating one wall per variant.

Each augmentation picks a random wall of an anchor room and slides it along
its normal by an offset drawn uniformly from [-L/2, L/2], where L is the
anchor's shortest wall.  The variant keeps the anchor's wall count and stays
a valid room (simple polygon, camera inside); offsets that would break that
are resampled.  Variants inherit the anchor's train/val/test split so no
augmented copy of a training room leaks into evaluation.

Run:  python3 demos/02_augment_dataset.py
"""

import collections
import json
import pathlib

from roomlay.roomgen import augment, build_dataset, generate_anchor

OUT = pathlib.Path(__file__).resolve().parent / "out"


def main():
    OUT.mkdir(exist_ok=True)

    anchor = generate_anchor(1, walls=6)
    shortest = anchor.wall_lengths().min()
    print(f"anchor: 6 walls, shortest {shortest:.2f} m "
          f"so offsets span +-{shortest / 2:.2f} m")

    print("\n== five variants of the same anchor ==")
    for seed in range(5):
        variant, rec = augment(anchor, seed)
        print(f"seed {seed}: wall {rec.wall_index} moved {rec.offset:+.3f} m, "
              f"still {len(variant.corners)} walls")

    root = OUT / "dataset"
    manifest = build_dataset(anchors=20, augment_factor=3, seed=42, out_dir=root)
    rows = json.loads((root / "manifest.json").read_text())["layouts"]
    assert rows == manifest["layouts"]
    splits = collections.Counter(r["split"] for r in rows)
    kinds = collections.Counter("anchor" if r["anchor"] is None else "variant"
                                for r in rows)
    print(f"\n== dataset at {root} ==")
    print(f"{len(rows)} layouts ({kinds['anchor']} anchors, "
          f"{kinds['variant']} variants), splits {dict(splits)}")
    for r in rows[:3]:
        print(" ", json.dumps(r))

    # variants always share their anchor's split
    by_id = {r["id"]: r for r in rows}
    assert all(r["split"] == by_id[r["anchor"]]["split"]
               for r in rows if r["anchor"] is not None)
    print("split inheritance verified for all variants")


if __name__ == "__main__":
    main()
