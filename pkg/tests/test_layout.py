"""Geometry, rasterization, IoU, contour, and file-format tests."""

import json

import numpy as np
import pytest

from roomlay import layout as L


def square_room(side=2.0, ceiling=2.5, cam_h=1.2, layout_id="sq"):
    s = side / 2.0
    corners = np.array([[-s, -s], [s, -s], [s, s], [-s, s]])
    return L.RoomLayout(id=layout_id, corners=corners, ceiling_height=ceiling,
                        camera=L.Camera(x=0.0, y=0.0, height=cam_h))


L_SHAPE = np.array([[0, 0], [4, 0], [4, 2], [2, 2], [2, 4], [0, 4]], dtype=float)


# ---------------------------------------------------------------------------
# polygon primitives


def test_shoelace_area_examples():
    assert L.polygon_area(np.array([[0, 0], [1, 0], [1, 1], [0, 1]])) == 1.0
    assert L.polygon_area(L_SHAPE) == pytest.approx(12.0)
    # clockwise order gives negative signed area
    assert L.polygon_area(L_SHAPE[::-1]) == pytest.approx(-12.0)


def test_simple_polygon_detection():
    assert L.polygon_is_simple(L_SHAPE)
    bowtie = np.array([[0, 0], [2, 2], [2, 0], [0, 2]], dtype=float)
    assert not L.polygon_is_simple(bowtie)


def test_point_in_polygon_examples():
    square = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=float)
    assert L.point_in_polygon(np.array([0.0, 0.0]), square)
    assert not L.point_in_polygon(np.array([2.0, 0.0]), square)
    # boundary points resolve to inside
    assert L.point_in_polygon(np.array([1.0, 0.0]), square)
    assert L.point_in_polygon(np.array([1.0, 1.0]), square)


def _winding_number_inside(p, corners):
    # independent oracle: nonzero winding via summed signed angles
    d = corners - p
    ang = np.arctan2(d[:, 1], d[:, 0])
    dang = np.diff(np.concatenate([ang, ang[:1]]))
    dang = (dang + np.pi) % (2 * np.pi) - np.pi
    return abs(dang.sum()) > np.pi


def test_point_in_polygon_matches_winding_oracle():
    rng = np.random.default_rng(4)
    for _ in range(20):
        n = rng.integers(3, 9)
        angles = np.sort(rng.uniform(0, 2 * np.pi, n))
        radii = rng.uniform(0.5, 2.0, n)
        corners = np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)
        if not L.polygon_is_simple(corners):
            continue
        edges = np.roll(corners, -1, 0) - corners
        for _ in range(50):
            p = rng.uniform(-2.5, 2.5, 2)
            rel = p - corners
            cross = edges[:, 0] * rel[:, 1] - edges[:, 1] * rel[:, 0]
            if np.abs(cross).min() < 1e-9:
                continue  # skip near-edge points where oracles may disagree
            assert L.point_in_polygon(p, corners) == _winding_number_inside(p, corners)


def test_vectorized_point_in_polygon_agrees():
    rng = np.random.default_rng(5)
    pts = rng.uniform(-3, 5, size=(200, 2))
    got = L.points_in_polygon(pts, L_SHAPE)
    want = np.array([L.point_in_polygon(p, L_SHAPE) for p in pts])
    assert np.array_equal(got, want)


# ---------------------------------------------------------------------------
# layout validation


def test_layout_rejects_bad_inputs():
    cam = L.Camera(x=0.5, y=0.5, height=1.0)
    square = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    with pytest.raises(L.LayoutError):  # clockwise = negative area
        L.RoomLayout(id="cw", corners=square[::-1], ceiling_height=2.5, camera=cam)
    with pytest.raises(L.LayoutError):  # camera outside
        L.RoomLayout(id="o", corners=square, ceiling_height=2.5,
                     camera=L.Camera(x=3.0, y=0.5, height=1.0))
    with pytest.raises(L.LayoutError):  # camera above ceiling
        L.RoomLayout(id="h", corners=square, ceiling_height=2.5,
                     camera=L.Camera(x=0.5, y=0.5, height=2.6))
    with pytest.raises(L.LayoutError):  # self-intersecting
        L.RoomLayout(id="x", corners=np.array([[0, 0], [2, 2], [2, 0], [0, 2.0]]),
                     ceiling_height=2.5, camera=cam)


def test_wall_accessors():
    room = square_room(2.0)
    assert room.num_walls == 4
    a, b = room.wall(0)
    assert np.allclose(a, [-1, -1]) and np.allclose(b, [1, -1])
    assert np.allclose(room.wall_lengths(), 2.0)
    assert room.area() == pytest.approx(4.0)


# ---------------------------------------------------------------------------
# rasterization and sampling


def test_rasterize_square_all_inside():
    grid = L.rasterize(square_room(4.0), 4)
    assert np.array_equal(grid.values, np.ones((4, 4), dtype=np.uint8))


def test_rasterize_pixel_count_matches_shoelace_area():
    room = L.RoomLayout(id="l", corners=L_SHAPE, ceiling_height=2.5,
                        camera=L.Camera(x=1.0, y=1.0, height=1.2))
    resolution = 64
    grid = L.rasterize(room, resolution)
    # normalized pixel area is (2/R)^2; the fit maps extent to 2 * margin
    extent = grid.scale * 2.0
    expected = L.polygon_area(L_SHAPE) * resolution ** 2 / extent ** 2
    assert abs(int(grid.values.sum()) - expected) <= 2 * resolution


def test_rasterize_fit_margin():
    room = L.RoomLayout(id="l", corners=L_SHAPE, ceiling_height=2.5,
                        camera=L.Camera(x=1.0, y=1.0, height=1.2))
    grid = L.rasterize(room, 32)
    norm = (L_SHAPE - np.array(grid.offset)) / grid.scale
    assert np.abs(norm).max() == pytest.approx(0.9)


def test_rasterize_rejects_degenerate():
    sliver = L.RoomLayout(id="d", corners=np.array([[0, 0], [1, 0], [2, 0], [1, 1e-12]]),
                          ceiling_height=2.5, camera=L.Camera(x=1.0, y=1e-13, height=1.0))
    with pytest.raises(L.LayoutError):
        L.rasterize(sliver, 8)


def test_bilinear_exact_at_pixel_centers_and_clamped_outside():
    rng = np.random.default_rng(0)
    values = rng.uniform(size=(8, 8))
    centers = L.pixel_centers(8)
    got = L.bilinear_sample(values, centers)
    assert np.allclose(got, values.ravel())
    # far outside clamps to the border pixel
    assert L.bilinear_sample(values, np.array([[5.0, 5.0]]))[0] == values[0, 7]
    assert L.bilinear_sample(values, np.array([[-5.0, -5.0]]))[0] == values[7, 0]


def test_bilinear_midpoint_interpolates():
    values = np.zeros((2, 2))
    values[0, 1] = 1.0  # top-right pixel
    # midpoint between the two top pixel centers
    assert L.bilinear_sample(values, np.array([[0.0, 0.5]]))[0] == pytest.approx(0.5)


def test_sample_coords_modes_and_determinism():
    grid = L.rasterize(square_room(3.0), 16)
    for mode in L.SAMPLE_MODES:
        cb, truth = L.sample_coords(grid, 64, mode, seed=7)
        cb2, truth2 = L.sample_coords(grid, 64, mode, seed=7)
        assert np.array_equal(cb.coords, cb2.coords)
        assert np.array_equal(truth, truth2)
        assert np.allclose(truth, L.bilinear_sample(grid, cb.xy))
        if mode == "pixel-centers":
            assert cb.count == 16 * 16
        else:
            assert cb.count == 64
            assert np.abs(cb.xy).max() <= 1.0
    with pytest.raises(ValueError):
        L.sample_coords(grid, 64, "bogus", seed=0)


def test_coord_batch_validation():
    with pytest.raises(L.LayoutError):
        L.CoordBatch(np.ones((2, 5)))
    with pytest.raises(L.LayoutError):
        L.CoordBatch(np.zeros((3, 5)))  # homogeneous row not 1
    cb = L.coord_batch(np.array([[0.5, -0.5], [0.1, 0.2]]))
    assert cb.count == 2
    assert np.allclose(cb.coords[2], 1.0)


# ---------------------------------------------------------------------------
# IoU


def test_iou_identical_and_disjoint():
    grid = L.rasterize(square_room(2.0), 8)
    report = L.compute_iou(grid, grid)
    assert report.iou == 1.0
    a = np.zeros((8, 8), dtype=np.uint8)
    b = np.zeros((8, 8), dtype=np.uint8)
    a[:2] = 1
    b[6:] = 1
    assert L.compute_iou(a, b).iou == 0.0
    with pytest.raises(L.UndefinedIoUError):
        L.compute_iou(np.zeros((4, 4)), np.zeros((4, 4)))


def test_iou_matches_counting_oracle():
    rng = np.random.default_rng(3)
    for _ in range(10):
        a = (rng.uniform(size=(16, 16)) > 0.5).astype(np.uint8)
        b = (rng.uniform(size=(16, 16)) > 0.5).astype(np.uint8)
        inter = sum(1 for i in range(16) for j in range(16) if a[i, j] and b[i, j])
        union = sum(1 for i in range(16) for j in range(16) if a[i, j] or b[i, j])
        report = L.compute_iou(a, b)
        assert (report.intersection, report.union) == (inter, union)
        assert report.iou == pytest.approx(inter / union)


def test_iou_shape_mismatch():
    with pytest.raises(L.LayoutError):
        L.compute_iou(np.ones((4, 4)), np.ones((8, 8)))


# ---------------------------------------------------------------------------
# contour extraction


def test_contour_of_binary_disc_is_single_closed_loop():
    r = 32
    centers = L.pixel_centers(r).reshape(r, r, 2)
    field = (centers[..., 0] ** 2 + centers[..., 1] ** 2 < 0.49).astype(float)
    contours = L.extract_contour(field, 0.5)
    assert len(contours) == 1
    loop = contours[0]
    assert np.allclose(loop[0], loop[-1])
    radii = np.linalg.norm(loop, axis=1)
    assert 0.6 < radii.min() and radii.max() < 0.8


def test_contour_level_set_position_on_smooth_field():
    r = 64
    centers = L.pixel_centers(r).reshape(r, r, 2)
    field = np.clip(1.1 - np.linalg.norm(centers, axis=2), 0.0, 1.0)
    (loop,) = L.extract_contour(field, 0.5)
    radii = np.linalg.norm(loop, axis=1)
    assert np.abs(radii - 0.6).max() < 0.01


def test_contour_two_components():
    field = np.zeros((16, 16))
    field[2:6, 2:6] = 1.0
    field[10:14, 10:14] = 1.0
    assert len(L.extract_contour(field, 0.5)) == 2


def test_contour_rejects_nonfinite():
    with pytest.raises(ValueError):
        L.extract_contour(np.array([[0.0, np.nan], [0.0, 0.0]]))


# ---------------------------------------------------------------------------
# file formats


def test_layout_json_round_trip(tmp_path):
    room = square_room(3.0)
    path = tmp_path / "room.json"
    L.write_layout(room, path)
    back = L.read_layout(path)
    assert back.id == room.id
    assert np.array_equal(back.corners, room.corners)
    assert back.ceiling_height == room.ceiling_height
    assert (back.camera.x, back.camera.y, back.camera.height) == \
        (room.camera.x, room.camera.y, room.camera.height)


def test_layout_json_parse_error_carries_location(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"id": "x", "corners": [[0, 0], [1 BROKEN')
    with pytest.raises(L.ParseError) as err:
        L.read_layout(path)
    assert err.value.line is not None


def test_layout_json_rejects_missing_fields(tmp_path):
    path = tmp_path / "short.json"
    path.write_text(json.dumps({"id": "x"}))
    with pytest.raises(L.ParseError):
        L.read_layout(path)


def test_pgm_round_trip(tmp_path):
    grid = L.rasterize(square_room(2.0), 16)
    path = tmp_path / "grid.pgm"
    L.write_grid_pgm(grid, path)
    back = L.read_grid_pgm(path)
    assert np.array_equal(back.values, grid.values)
    assert back.resolution == 16


def test_pgm_rejects_gray_values(tmp_path):
    path = tmp_path / "gray.pgm"
    body = bytes([0, 255, 7, 255] + [0] * 12)
    path.write_bytes(b"P5\n4 4\n255\n" + body)
    with pytest.raises(L.ParseError) as err:
        L.read_grid_pgm(path)
    assert "7" in str(err.value)


def test_pgm_truncation_reports_offset(tmp_path):
    path = tmp_path / "trunc.pgm"
    path.write_bytes(b"P5\n4 4\n255\n" + bytes(5))
    with pytest.raises(L.ParseError) as err:
        L.read_grid_pgm(path)
    assert err.value.offset is not None


def test_pgm_bad_magic(tmp_path):
    path = tmp_path / "bad.pgm"
    path.write_bytes(b"P6\n2 2\n255\n" + bytes(12))
    with pytest.raises(L.ParseError):
        L.read_grid_pgm(path)
