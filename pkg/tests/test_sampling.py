import numpy as np
import pytest

from segmerge.sampling import (
    extraction_centers,
    extract_patch,
    interior_pole,
    multi_level_patches,
    multi_level_widths,
    segment_patch_sets,
)


def brute_force_depth(mask):
    """Min distance from each segment pixel to any non-segment pixel
    (image border counts as outside)."""
    h, w = mask.shape
    out = np.full((h, w), -1.0)
    outside = [(x, y) for y in range(-1, h + 1) for x in range(-1, w + 1)
               if not (0 <= y < h and 0 <= x < w) or not mask[y, x]]
    for y in range(h):
        for x in range(w):
            if mask[y, x]:
                out[y, x] = min(np.hypot(x - ox, y - oy) for ox, oy in outside)
    return out


def test_single_pixel_center():
    mask = np.zeros((6, 6), dtype=bool)
    mask[2, 4] = True
    assert extraction_centers(mask) == [(4, 2)]


def test_rectangle_three_centers():
    mask = np.zeros((14, 24), dtype=bool)
    mask[0:10, 0:20] = True
    centers = extraction_centers(mask)
    assert len(centers) == 3
    for x, y in centers:
        assert mask[y, x]
    # whole-segment pole sits near the middle
    assert centers[0] in [(9, 4), (10, 5), (9, 5), (10, 4)]
    # one center in each 10x10 half
    half_x = sorted(c[0] for c in centers[1:])
    assert half_x[0] < 10 <= half_x[1]


def test_l_shape_centers_inside():
    mask = np.zeros((16, 16), dtype=bool)
    mask[0:12, 0:4] = True
    mask[8:12, 0:12] = True
    centers = extraction_centers(mask, three_center_min=10)
    depth = brute_force_depth(mask)
    for x, y in centers:
        assert mask[y, x], "center outside segment"
        assert depth[y, x] > 0
    # whole-segment pole is as deep as the brute-force optimum
    x0, y0 = centers[0]
    assert depth[y0, x0] == pytest.approx(depth.max())


def test_worked_width_example():
    # 12x12 segment centered in a large image
    mask = np.zeros((64, 64), dtype=bool)
    mask[20:32, 20:32] = True
    center = interior_pole(mask)
    widths = multi_level_widths(mask, center)
    assert widths == (15, 25, 35, 45)


def test_whole_image_segment_terminates():
    mask = np.ones((40, 40), dtype=bool)
    center = (20, 20)
    w1, w2, w3, w4 = multi_level_widths(mask, center)
    assert w1 <= w2 <= w3 <= w4
    # ratio falls only through border clipping against the nominal area
    assert w2 > 40


def test_tiny_segment_degenerates():
    mask = np.zeros((10, 10), dtype=bool)
    mask[4, 4] = True
    widths = multi_level_widths(mask, (4, 4))
    assert widths == (5, 5, 5, 5)


def test_ratio_monotone_once_contained():
    mask = np.zeros((64, 64), dtype=bool)
    mask[20:33, 22:31] = True
    center = interior_pole(mask)
    from segmerge.sampling import _integral, _window_count

    integral = _integral(mask)
    prev = None
    for width in range(15, 120, 5):  # segment contained from width 15 up
        ratio = _window_count(integral, center, width) / width**2
        if prev is not None:
            assert ratio <= prev + 1e-12
        prev = ratio


def test_patchset_geometry_and_edge_replication():
    rng = np.random.default_rng(21)
    data = rng.integers(0, 256, size=(30, 30, 3), dtype=np.uint8)
    mask = np.zeros((30, 30), dtype=bool)
    mask[0:12, 0:12] = True
    sets = segment_patch_sets(mask, data)
    assert len(sets) == 3
    ps = sets[0]
    w1, w2, w3, w4 = ps.widths
    assert w3 == w2 + (w2 - w1) and w4 == w2 + 2 * (w2 - w1)
    for p, w in zip(ps.patches, ps.widths):
        assert p.shape == (w, w, 3)
    # all patch sets share widths, differ in center
    assert all(s.widths == ps.widths for s in sets)
    # cropping P2 at P1's offset reproduces P1
    cx, cy = ps.center
    off = (w2 - 1) // 2 - (w1 - 1) // 2
    crop = ps.patches[1][off : off + w1, off : off + w1]
    assert np.array_equal(crop, ps.patches[0])


def test_edge_replication_values():
    data = np.arange(16, dtype=np.uint8).reshape(4, 4, 1)
    patch = extract_patch(data, (0, 0), 5)
    # window spans [-2, 3); replicated rows/cols repeat the border values
    assert patch.shape == (5, 5, 1)
    assert patch[0, 0, 0] == data[0, 0, 0]
    assert patch[2, 2, 0] == data[0, 0, 0]
    assert patch[4, 4, 0] == data[2, 2, 0]


def test_center_outside_segment_rejected():
    mask = np.zeros((8, 8), dtype=bool)
    mask[1, 1] = True
    data = np.zeros((8, 8, 3), dtype=np.uint8)
    with pytest.raises(ValueError, match="outside segment"):
        multi_level_patches(mask, data, (5, 5))
