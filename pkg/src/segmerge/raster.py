"""Raster imagery and segment-label maps with lossless file I/O.

Rasters are 8-bit, band-interleaved arrays read and written as PPM (P6)
or PNG. Segment maps are dense non-negative label rasters stored in a
small binary container (magic ``SEGR``, little-endian u32 width/height,
then width*height u32 labels). A valid segment map labels every pixel,
uses ids dense in ``[0, count)``, and keeps every label 4-connected.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

SEGR_MAGIC = b"SEGR"
_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
_MAX_PIXELS = 2**31  # refuse absurd headers before allocating


class RasterFormatError(ValueError):
    """Malformed or unsupported raster file."""


class SegmentMapError(ValueError):
    """Segment map violates the density or connectivity invariants."""


@dataclass
class Raster:
    """8-bit multi-band image; ``data`` has shape (height, width, bands)."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.uint8)
        if self.data.ndim == 2:
            self.data = self.data[:, :, None]
        if self.data.ndim != 3 or self.data.shape[2] < 1:
            raise RasterFormatError(f"bad raster shape {self.data.shape}")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def bands(self) -> int:
        return self.data.shape[2]


@dataclass
class SegmentMap:
    """Dense per-pixel segment labels; ``labels`` has shape (height, width)."""

    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int32)
        if self.labels.ndim != 2:
            raise SegmentMapError(f"bad label shape {self.labels.shape}")

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def count(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    def validate(self) -> None:
        """Raise SegmentMapError unless labels are dense and 4-connected."""
        if self.labels.size == 0:
            raise SegmentMapError("empty segment map")
        if self.labels.min() < 0:
            raise SegmentMapError("negative label")
        if not labels_dense(self.labels):
            raise SegmentMapError("labels not dense in [0, count)")
        bad = first_disconnected_label(self.labels)
        if bad is not None:
            raise SegmentMapError(f"label {bad} is not 4-connected")


# ---------------------------------------------------------------------------
# label-array utilities
# ---------------------------------------------------------------------------

_FOUR = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


def labels_dense(labels: np.ndarray) -> bool:
    n = int(labels.max()) + 1
    return bool(np.all(np.bincount(labels.ravel(), minlength=n) > 0))


def first_disconnected_label(labels: np.ndarray) -> int | None:
    """Return the smallest label split into >1 four-connected component."""
    slices = ndimage.find_objects(labels + 1)
    for lab, sl in enumerate(slices):
        if sl is None:
            continue
        mask = labels[sl] == lab
        _, ncomp = ndimage.label(mask, structure=_FOUR)
        if ncomp != 1:
            return lab
    return None


def split_disconnected_labels(labels: np.ndarray) -> np.ndarray:
    """Give each 4-connected component its own label, then renumber densely."""
    out = labels.copy()
    next_id = int(labels.max()) + 1
    slices = ndimage.find_objects(labels + 1)
    for lab, sl in enumerate(slices):
        if sl is None:
            continue
        mask = labels[sl] == lab
        comp, ncomp = ndimage.label(mask, structure=_FOUR)
        for k in range(2, ncomp + 1):
            out[sl][comp == k] = next_id
            next_id += 1
    return relabel_dense(out)


def relabel_dense(labels: np.ndarray) -> np.ndarray:
    """Renumber labels to 0..n-1 in order of first raster-scan occurrence."""
    flat = labels.ravel()
    uniq, first = np.unique(flat, return_index=True)
    order = np.argsort(first, kind="stable")
    mapping = np.empty(int(uniq.max()) + 1, dtype=np.int32)
    mapping[uniq[order]] = np.arange(len(uniq), dtype=np.int32)
    return mapping[labels]


def adjacency_pairs(labels: np.ndarray) -> np.ndarray:
    """Unique (a, b) label pairs, a < b, sharing a 4-neighbour pixel border."""
    h = np.stack([labels[:, :-1].ravel(), labels[:, 1:].ravel()], axis=1)
    v = np.stack([labels[:-1, :].ravel(), labels[1:, :].ravel()], axis=1)
    pairs = np.concatenate([h, v], axis=0)
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    if len(pairs) == 0:
        return pairs.reshape(0, 2)
    pairs = np.sort(pairs, axis=1)
    return np.unique(pairs, axis=0)


# ---------------------------------------------------------------------------
# raster I/O
# ---------------------------------------------------------------------------


def load_raster(path) -> Raster:
    """Load a PPM (P6) or 8-bit PNG; fails loudly on malformed input."""
    path = Path(path)
    with open(path, "rb") as f:
        head = f.read(8)
    if head[:2] == b"P6":
        return _read_ppm(path)
    if head == _PNG_MAGIC:
        return _read_png(path)
    raise RasterFormatError(f"{path}: not a PPM(P6) or PNG file")


def save_raster(raster: Raster, path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        _write_ppm(raster, path)
    elif path.suffix.lower() == ".png":
        _write_png(raster, path)
    else:
        raise RasterFormatError(f"{path}: unsupported raster extension")


def _ppm_token(f) -> bytes:
    tok = b""
    while True:
        c = f.read(1)
        if c == b"":
            raise RasterFormatError("unexpected EOF")
        if c == b"#":
            while c not in (b"\n", b""):
                c = f.read(1)
            continue
        if c.isspace():
            if tok:
                return tok
            continue
        tok += c


def _read_ppm(path: Path) -> Raster:
    with open(path, "rb") as f:
        if f.read(2) != b"P6":
            raise RasterFormatError("malformed header: missing P6 magic")
        try:
            width = int(_ppm_token(f))
            height = int(_ppm_token(f))
            maxval = int(_ppm_token(f))
        except ValueError as e:
            raise RasterFormatError(f"malformed header: {e}") from e
        if width <= 0 or height <= 0 or width * height * 3 > _MAX_PIXELS:
            raise RasterFormatError("dimension overflow")
        if maxval != 255:
            raise RasterFormatError(f"unsupported bit depth (maxval {maxval})")
        raw = f.read(width * height * 3)
        if len(raw) != width * height * 3:
            raise RasterFormatError("unexpected EOF")
    data = np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3)
    return Raster(data)


def _write_ppm(raster: Raster, path: Path) -> None:
    if raster.bands != 3:
        raise RasterFormatError("PPM requires exactly 3 bands")
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (raster.width, raster.height))
        f.write(raster.data.tobytes())


def _read_png(path: Path) -> Raster:
    from PIL import Image

    try:
        with Image.open(path) as im:
            if im.mode in ("I", "I;16", "I;16B", "F"):
                raise RasterFormatError(f"unsupported bit depth (mode {im.mode})")
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB")
            data = np.asarray(im, dtype=np.uint8)
    except RasterFormatError:
        raise
    except Exception as e:
        raise RasterFormatError(f"{path}: {e}") from e
    return Raster(data)


def _write_png(raster: Raster, path: Path) -> None:
    from PIL import Image

    if raster.bands == 1:
        im = Image.fromarray(raster.data[:, :, 0], mode="L")
    elif raster.bands == 3:
        im = Image.fromarray(raster.data, mode="RGB")
    else:
        raise RasterFormatError(f"PNG supports 1 or 3 bands, got {raster.bands}")
    im.save(path)


# ---------------------------------------------------------------------------
# segment-map I/O
# ---------------------------------------------------------------------------


def save_segment_map(segmap: SegmentMap, path) -> None:
    """Write the SEGR container; rejects maps violating the invariants."""
    segmap.validate()
    with open(path, "wb") as f:
        f.write(SEGR_MAGIC)
        f.write(struct.pack("<II", segmap.width, segmap.height))
        f.write(segmap.labels.astype("<u4").tobytes())


def load_segment_map(path) -> SegmentMap:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != SEGR_MAGIC:
            raise SegmentMapError(f"magic mismatch: {magic!r}")
        hdr = f.read(8)
        if len(hdr) != 8:
            raise SegmentMapError("unexpected EOF")
        width, height = struct.unpack("<II", hdr)
        if width == 0 or height == 0 or width * height > _MAX_PIXELS:
            raise SegmentMapError("dimension overflow")
        raw = f.read(width * height * 4)
        if len(raw) != width * height * 4:
            raise SegmentMapError("unexpected EOF")
    labels = np.frombuffer(raw, dtype="<u4").reshape(height, width)
    if labels.max() >= 2**31:
        raise SegmentMapError("label id overflow")
    segmap = SegmentMap(labels.astype(np.int32))
    if not labels_dense(segmap.labels):
        raise SegmentMapError("labels not dense in [0, count)")
    return segmap
