import numpy as np
import pytest

from segmerge.raster import (
    Raster,
    RasterFormatError,
    SegmentMap,
    SegmentMapError,
    adjacency_pairs,
    load_raster,
    load_segment_map,
    relabel_dense,
    save_raster,
    save_segment_map,
    split_disconnected_labels,
)

from helpers import random_connected_map


def test_ppm_round_trip_zeros(tmp_path):
    r = Raster(np.zeros((2, 2, 3), dtype=np.uint8))
    p = tmp_path / "z.ppm"
    save_raster(r, p)
    back = load_raster(p)
    assert back.width == 2 and back.height == 2 and back.bands == 3
    assert (back.data == 0).all()


def test_ppm_round_trip_random(tmp_path):
    rng = np.random.default_rng(0)
    data = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
    p = tmp_path / "r.ppm"
    save_raster(Raster(data), p)
    assert (load_raster(p).data == data).all()


def test_png_round_trip_random(tmp_path):
    rng = np.random.default_rng(1)
    data = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
    p = tmp_path / "r.png"
    save_raster(Raster(data), p)
    assert (load_raster(p).data == data).all()


def test_truncated_ppm_errors(tmp_path):
    p = tmp_path / "t.ppm"
    rng = np.random.default_rng(2)
    data = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
    save_raster(Raster(data), p)
    whole = p.read_bytes()
    p.write_bytes(whole[: len(whole) - 10])
    with pytest.raises(RasterFormatError, match="unexpected EOF"):
        load_raster(p)


def test_ppm_bad_depth_and_overflow(tmp_path):
    p = tmp_path / "bad.ppm"
    p.write_bytes(b"P6\n2 2\n65535\n" + b"\x00" * 24)
    with pytest.raises(RasterFormatError, match="unsupported bit depth"):
        load_raster(p)
    p.write_bytes(b"P6\n100000 100000\n255\n")
    with pytest.raises(RasterFormatError, match="dimension overflow"):
        load_raster(p)


def test_segment_map_round_trip_tiny(tmp_path):
    m = SegmentMap(np.zeros((1, 1), dtype=np.int32))
    p = tmp_path / "m.segr"
    save_segment_map(m, p)
    assert (load_segment_map(p).labels == m.labels).all()


def test_checkerboard_rejected(tmp_path):
    yy, xx = np.mgrid[0:4, 0:4]
    m = SegmentMap(((yy + xx) % 2).astype(np.int32))
    with pytest.raises(SegmentMapError, match="not 4-connected"):
        save_segment_map(m, tmp_path / "c.segr")


def test_non_dense_rejected(tmp_path):
    labels = np.zeros((2, 2), dtype=np.int32)
    labels[1, 1] = 5
    with pytest.raises(SegmentMapError, match="dense"):
        save_segment_map(SegmentMap(labels), tmp_path / "d.segr")


def test_magic_mismatch(tmp_path):
    p = tmp_path / "x.segr"
    p.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(SegmentMapError, match="magic mismatch"):
        load_segment_map(p)


def test_large_random_map_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    m = random_connected_map(512, 512, 400, rng)
    p = tmp_path / "big.segr"
    save_segment_map(m, p)
    assert (load_segment_map(p).labels == m.labels).all()


def test_relabel_dense_scan_order():
    labels = np.array([[7, 7, 12], [7, 12, 12]], dtype=np.int32)
    out = relabel_dense(labels)
    assert (out == np.array([[0, 0, 1], [0, 1, 1]])).all()


def test_split_disconnected():
    labels = np.zeros((3, 5), dtype=np.int32)
    labels[:, 2] = 1  # label 0 split into two blobs by a stripe of 1
    out = split_disconnected_labels(labels)
    assert out.max() == 2
    assert len(np.unique(out)) == 3
    assert len(np.unique(out[:, :2])) == 1
    assert len(np.unique(out[:, 3:])) == 1


def test_adjacency_pairs_stripes():
    labels = np.repeat(np.array([[0, 1, 2]], dtype=np.int32), 3, axis=0)
    pairs = adjacency_pairs(labels)
    assert pairs.tolist() == [[0, 1], [1, 2]]
