"""Engineered per-segment statistics and the normalized feature vector.

Ten features for a 3-band raster: per-band mean and sample standard
deviation, a shape indicator (perimeter over 4*sqrt(MBR perimeter)),
compactness (perimeter times sqrt(area)), brightness (equal-weight mean
of band means), and a border indicator (perimeter over MBR perimeter).
The MBR is the minimum-area rotated rectangle of the pixel-corner point
set; the perimeter counts 4-neighbour boundary edges, image border
included.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull


@dataclass
class SegmentStats:
    n: int
    mean: np.ndarray  # per band
    std: np.ndarray  # per band, sample (n-1), 0 for single pixel
    perimeter: float  # l, in unit pixel edges
    mbr_length: float  # long side
    mbr_width: float  # short side
    shape: float
    compactness: float
    brightness: float
    border: float

    @property
    def mbr_perimeter(self) -> float:
        return 2.0 * (self.mbr_length + self.mbr_width)

    def raw_vector(self) -> np.ndarray:
        """Bands' means, bands' stds, shape, compactness, brightness, border."""
        return np.concatenate(
            [self.mean, self.std, [self.shape, self.compactness, self.brightness, self.border]]
        )


def feature_dim(bands: int) -> int:
    return 2 * bands + 4


def perimeter_edges(mask: np.ndarray) -> int:
    """Count of unit edges between mask pixels and anything else."""
    h, w = mask.shape
    padded = np.pad(mask, 1, constant_values=False)
    total = 0
    for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        neighbor = padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
        total += int((mask & ~neighbor).sum())
    return total


def min_area_rect_axis(mask: np.ndarray) -> tuple[float, float, np.ndarray]:
    """(length, width, long-axis unit vector) of the minimum-area rotated
    rectangle of the pixel-corner points; length >= width."""
    boundary = mask & ~ndimage.binary_erosion(mask)
    ys, xs = np.nonzero(boundary)
    corners = np.concatenate(
        [
            np.stack([xs, ys], axis=1),
            np.stack([xs + 1, ys], axis=1),
            np.stack([xs, ys + 1], axis=1),
            np.stack([xs + 1, ys + 1], axis=1),
        ]
    ).astype(np.float64)
    corners = np.unique(corners, axis=0)
    hull = corners[ConvexHull(corners).vertices]

    best = (np.inf, 0.0, 0.0, np.array([1.0, 0.0]))
    m = len(hull)
    for i in range(m):
        edge = hull[(i + 1) % m] - hull[i]
        norm = np.hypot(edge[0], edge[1])
        if norm == 0:
            continue
        u = edge / norm
        v = np.array([-u[1], u[0]])
        pu = hull @ u
        pv = hull @ v
        a, b = pu.max() - pu.min(), pv.max() - pv.min()
        if a * b < best[0] - 1e-12:
            axis = u if a >= b else v
            best = (a * b, a, b, axis)
    _, a, b, axis = best
    if axis[0] < 0 or (axis[0] == 0 and axis[1] < 0):
        axis = -axis
    return (max(a, b), min(a, b), axis)


def min_area_rect(mask: np.ndarray) -> tuple[float, float]:
    length, width, _ = min_area_rect_axis(mask)
    return (length, width)


def compute_stats(raster_data: np.ndarray, mask: np.ndarray) -> SegmentStats:
    """Statistics for one segment given the full image and its pixel mask."""
    n = int(mask.sum())
    if n == 0:
        raise ValueError("empty segment")
    values = raster_data[mask].astype(np.float64)  # (n, K)
    mean = values.mean(axis=0)
    std = values.std(axis=0, ddof=1) if n > 1 else np.zeros_like(mean)
    l = float(perimeter_edges(mask))
    length, width = min_area_rect(mask)
    c = 2.0 * (length + width)
    shape = l / (4.0 * np.sqrt(c))
    compactness = l * np.sqrt(n)
    brightness = float(mean.mean())
    border = l / c
    return SegmentStats(n, mean, std, l, length, width, shape, compactness, brightness, border)


def compute_all_stats(raster_data: np.ndarray, labels: np.ndarray) -> dict[int, SegmentStats]:
    """Per-segment stats for every label, bbox-cropped for speed."""
    out: dict[int, SegmentStats] = {}
    slices = ndimage.find_objects(labels + 1)
    for lab, sl in enumerate(slices):
        if sl is None:
            continue
        out[lab] = compute_stats(raster_data[sl], labels[sl] == lab)
    return out


@dataclass
class FeatureNorm:
    """Per-feature affine normalization: v = (raw - shift) / scale."""

    shift: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        self.shift = np.asarray(self.shift, dtype=np.float64)
        self.scale = np.asarray(self.scale, dtype=np.float64)
        if not np.all(np.isfinite(self.shift)) or not np.all(np.isfinite(self.scale)):
            raise ValueError("non-finite normalization parameters")
        if np.any(self.scale <= 0):
            raise ValueError("zero or negative scale")

    @classmethod
    def identity(cls, dim: int) -> "FeatureNorm":
        return cls(np.zeros(dim), np.ones(dim))

    @classmethod
    def fit_zscore(cls, raw: np.ndarray) -> "FeatureNorm":
        """Column z-score over a corpus; constant columns get scale 1."""
        shift = raw.mean(axis=0)
        scale = raw.std(axis=0)
        scale[scale == 0] = 1.0
        return cls(shift, scale)


def feature_vector(stats: SegmentStats, norm: FeatureNorm) -> np.ndarray:
    raw = stats.raw_vector()
    if raw.shape != norm.shift.shape:
        raise ValueError(f"norm dim {norm.shift.shape} != feature dim {raw.shape}")
    return (raw - norm.shift) / norm.scale
