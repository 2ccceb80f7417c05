import numpy as np
import pytest

from segmerge.features import (
    FeatureNorm,
    compute_all_stats,
    compute_stats,
    feature_vector,
    min_area_rect,
)
from segmerge.raster import SegmentMap
from segmerge.vector import ring_edge_count, trace_boundaries

from helpers import random_connected_map


def test_ten_by_ten_worked_example():
    data = np.full((16, 16, 1), 50, dtype=np.uint8)
    mask = np.zeros((16, 16), dtype=bool)
    mask[3:13, 2:12] = True
    s = compute_stats(data, mask)
    assert s.n == 100
    assert s.mean[0] == 50
    assert s.std[0] == 0
    assert s.perimeter == 40
    assert s.mbr_length == pytest.approx(10)
    assert s.mbr_width == pytest.approx(10)
    assert s.shape == pytest.approx(40 / (4 * np.sqrt(40)), abs=1e-12)
    assert s.shape == pytest.approx(1.5811, abs=1e-4)
    assert s.compactness == pytest.approx(400)
    assert s.brightness == pytest.approx(50)
    assert s.border == pytest.approx(1.0)


def test_single_pixel():
    data = np.full((4, 4, 1), 7, dtype=np.uint8)
    mask = np.zeros((4, 4), dtype=bool)
    mask[1, 2] = True
    s = compute_stats(data, mask)
    assert s.n == 1
    assert s.mean[0] == 7
    assert s.std[0] == 0
    assert s.perimeter == 4
    assert (s.mbr_length, s.mbr_width) == (1, 1)
    assert s.shape == pytest.approx(4 / (4 * 2))
    assert s.compactness == pytest.approx(4)
    assert s.border == pytest.approx(1.0)


def test_two_band_brightness():
    data = np.zeros((4, 4, 2), dtype=np.uint8)
    data[:, :, 1] = 255
    mask = np.ones((4, 4), dtype=bool)
    s = compute_stats(data, mask)
    assert s.brightness == pytest.approx(127.5)


def test_empty_segment_rejected():
    with pytest.raises(ValueError, match="empty"):
        compute_stats(np.zeros((2, 2, 1), dtype=np.uint8), np.zeros((2, 2), dtype=bool))


def test_translation_invariance():
    rng = np.random.default_rng(11)
    patch = rng.integers(0, 256, size=(5, 7, 3), dtype=np.uint8)
    blob = rng.random((5, 7)) < 0.7
    blob[2, :] = True  # keep it connected enough to be one segment
    data1 = np.zeros((20, 20, 3), dtype=np.uint8)
    mask1 = np.zeros((20, 20), dtype=bool)
    data1[2:7, 3:10] = patch
    mask1[2:7, 3:10] = blob
    data2 = np.zeros((20, 20, 3), dtype=np.uint8)
    mask2 = np.zeros((20, 20), dtype=bool)
    data2[11:16, 9:16] = patch
    mask2[11:16, 9:16] = blob
    a, b = compute_stats(data1, mask1), compute_stats(data2, mask2)
    assert np.allclose(a.raw_vector(), b.raw_vector())


def test_intensity_shift():
    rng = np.random.default_rng(12)
    data = rng.integers(0, 100, size=(9, 9, 3), dtype=np.uint8)
    mask = np.zeros((9, 9), dtype=bool)
    mask[2:7, 2:7] = True
    a = compute_stats(data, mask)
    b = compute_stats(data + 40, mask)
    assert np.allclose(b.mean, a.mean + 40)
    assert b.brightness == pytest.approx(a.brightness + 40)
    assert np.allclose(b.std, a.std)
    for attr in ("shape", "compactness", "border", "perimeter"):
        assert getattr(b, attr) == getattr(a, attr)


def test_perimeter_matches_traced_boundaries():
    rng = np.random.default_rng(13)
    m = random_connected_map(32, 32, 9, rng)
    data = rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
    stats = compute_all_stats(data, m.labels)
    refs = trace_boundaries(m)
    for poly in refs:
        edges = ring_edge_count(poly.ring) + sum(ring_edge_count(h) for h in poly.holes)
        assert stats[poly.id].perimeter == edges


def test_rotated_mbr():
    # diagonal staircase: rotated rectangle is thinner than axis-aligned box
    mask = np.zeros((12, 12), dtype=bool)
    for i in range(8):
        mask[i, i] = True
        mask[i + 1, i] = True
    length, width = min_area_rect(mask)
    assert length > width
    assert length * width < 9 * 9  # beats the axis-aligned bounding box


def test_feature_vector_identity_and_determinism():
    data = np.full((6, 6, 3), 9, dtype=np.uint8)
    mask = np.zeros((6, 6), dtype=bool)
    mask[1:5, 1:4] = True
    s = compute_stats(data, mask)
    ident = FeatureNorm.identity(10)
    v1 = feature_vector(s, ident)
    v2 = feature_vector(s, ident)
    assert np.array_equal(v1, s.raw_vector())
    assert np.array_equal(v1, v2)


def test_zscore_normalization_oracle():
    rng = np.random.default_rng(14)
    m = random_connected_map(40, 40, 15, rng)
    data = rng.integers(0, 256, size=(40, 40, 3), dtype=np.uint8)
    stats = compute_all_stats(data, m.labels)
    raw = np.stack([s.raw_vector() for s in stats.values()])
    norm = FeatureNorm.fit_zscore(raw)
    cols = np.stack([feature_vector(s, norm) for s in stats.values()])
    assert np.all(np.abs(cols.mean(axis=0)) < 1e-9)
    varying = raw.std(axis=0) > 0
    assert np.all(np.abs(cols.std(axis=0)[varying] - 1) < 1e-9)


def test_zero_scale_rejected():
    with pytest.raises(ValueError, match="scale"):
        FeatureNorm(np.zeros(10), np.zeros(10))
