"""Sample rectilinear room layouts and rasterize them to top-view grids.

Rooms are axis-aligned simple polygons with 4 to 12 walls, a camera strictly
inside, and per-room floor/ceiling heights.  Rasterization normalizes the
room into [-1, 1]^2 (preserving aspect ratio) and marks each pixel whose
center falls inside the polygon.

Run:  python3 demos/01_generate_rooms.py
"""

import pathlib

from roomlay.layout import polygon_area, rasterize, write_grid_pgm, write_layout
from roomlay.roomgen import generate_anchor

OUT = pathlib.Path(__file__).resolve().parent / "out"


def ascii_art(grid):
    return "\n".join("".join("#" if v else "." for v in row) for row in grid.values)


def main():
    OUT.mkdir(exist_ok=True)

    print("== a few anchor rooms ==")
    for seed, walls in [(0, 4), (1, 6), (2, 8), (3, 10)]:
        room = generate_anchor(seed, walls=walls)
        print(f"seed {seed}: {room.num_walls} walls, "
              f"area {polygon_area(room.corners):6.2f} m^2, "
              f"camera ({room.camera.x:.2f}, {room.camera.y:.2f}) at "
              f"{room.camera.height:.2f} m, ceiling {room.ceiling_height:.2f} m")

    room = generate_anchor(7, walls=8)
    print(f"\n== rasterizing seed-7 room ({len(room.corners)} walls) at 32x32 ==")
    grid = rasterize(room, 32)
    print(ascii_art(grid))
    print(f"occupied fraction: {grid.values.mean():.3f}")
    print(f"meters per unit: {grid.scale:.3f}, origin offset: "
          f"({grid.offset[0]:.2f}, {grid.offset[1]:.2f})")

    write_layout(room, OUT / "room.json")
    write_grid_pgm(rasterize(room, 64), OUT / "room.pgm")
    print(f"\nwrote {OUT / 'room.json'} and {OUT / 'room.pgm'}")


if __name__ == "__main__":
    main()
