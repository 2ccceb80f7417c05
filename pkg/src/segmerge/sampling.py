"""Per-segment patch extraction centers and four-level concentric patches.

Centers: the deepest interior pixel of the whole segment and, for
segments of at least ``three_center_min`` pixels, of each half of one
area-balanced split perpendicular to the MBR long axis (up to three
centers total). Patch widths grow from 5 in steps of 5 until the
segment/patch area ratio first drops to 90% (level 1) and 30% (level
2); levels 3 and 4 extend the window by the level-1/2 width difference.
Widths are computed once at the first center and shared by the others.
Out-of-image pixels are edge-replicated; the ratio denominator stays
the nominal squared width even when the window is clipped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .features import min_area_rect_axis

RATIO_HIGH = 0.90
RATIO_LOW = 0.30
WIDTH_STEP = 5
THREE_CENTER_MIN = 64


@dataclass
class PatchSet:
    """Four concentric square patches, smallest (P1) to largest (P4)."""

    patches: list  # four (w, w, bands) uint8 arrays
    widths: tuple  # (w1, w2, w3, w4), w3 = w2 + (w2-w1), w4 = w2 + 2*(w2-w1)
    center: tuple  # (x, y)


def interior_pole(mask: np.ndarray) -> tuple[int, int]:
    """(x, y) of the deepest interior pixel. Depth plateaus (common in
    rectangles) resolve toward the segment centroid, then raster order."""
    padded = np.pad(mask, 1, constant_values=False)
    dist = ndimage.distance_transform_edt(padded)[1:-1, 1:-1]
    dist[~mask] = -1.0
    ys, xs = np.nonzero(dist == dist.max())
    my, mx = np.nonzero(mask)
    cy, cx = my.mean() + 0.5, mx.mean() + 0.5
    d2 = (ys + 0.5 - cy) ** 2 + (xs + 0.5 - cx) ** 2
    k = int(np.lexsort((xs, ys, d2))[0])
    return (int(xs[k]), int(ys[k]))


def extraction_centers(mask: np.ndarray, three_center_min: int = THREE_CENTER_MIN) -> list:
    """Up to three (x, y) patch centers, all inside the segment."""
    n = int(mask.sum())
    if n == 0:
        raise ValueError("empty segment")
    centers = [interior_pole(mask)]
    if n >= three_center_min:
        _, _, axis = min_area_rect_axis(mask)
        ys, xs = np.nonzero(mask)
        proj = (xs + 0.5) * axis[0] + (ys + 0.5) * axis[1]
        order = np.argsort(proj, kind="stable")
        cut = (n + 1) // 2
        for part in (order[:cut], order[cut:]):
            half = np.zeros_like(mask)
            half[ys[part], xs[part]] = True
            centers.append(interior_pole(half))
    seen = []
    for c in centers:
        if c not in seen:
            seen.append(c)
    return seen


def _window(center: int, width: int) -> tuple[int, int]:
    start = center - (width - 1) // 2
    return start, start + width


def _integral(mask: np.ndarray) -> np.ndarray:
    s = np.zeros((mask.shape[0] + 1, mask.shape[1] + 1), dtype=np.int64)
    s[1:, 1:] = mask.cumsum(axis=0).cumsum(axis=1)
    return s


def _window_count(integral: np.ndarray, center, width: int) -> int:
    h, w = integral.shape[0] - 1, integral.shape[1] - 1
    cx, cy = center
    x0, x1 = _window(cx, width)
    y0, y1 = _window(cy, width)
    x0, x1 = max(0, x0), min(w, x1)
    y0, y1 = max(0, y0), min(h, y1)
    if x0 >= x1 or y0 >= y1:
        return 0
    return int(integral[y1, x1] - integral[y0, x1] - integral[y1, x0] + integral[y0, x0])


def multi_level_widths(mask: np.ndarray, center) -> tuple:
    """(w1, w2, w3, w4) from the growth loop; w1/w2 may coincide for tiny
    segments, which degenerates but keeps the level structure intact."""
    integral = _integral(mask)
    w1 = w2 = None
    width = WIDTH_STEP
    limit = WIDTH_STEP * (2 * max(mask.shape) // WIDTH_STEP + 4)
    while w1 is None or w2 is None:
        ratio = _window_count(integral, center, width) / float(width * width)
        if ratio <= RATIO_HIGH and w1 is None:
            w1 = width
        if ratio <= RATIO_LOW and w2 is None:
            w2 = width
        width += WIDTH_STEP
        if width > limit:
            raise AssertionError("patch growth failed to terminate")
    return (w1, w2, w2 + (w2 - w1), w2 + 2 * (w2 - w1))


def extract_patch(data: np.ndarray, center, width: int) -> np.ndarray:
    """Square crop centered at (x, y); out-of-image pixels edge-replicated."""
    cx, cy = center
    x0, x1 = _window(cx, width)
    y0, y1 = _window(cy, width)
    xs = np.clip(np.arange(x0, x1), 0, data.shape[1] - 1)
    ys = np.clip(np.arange(y0, y1), 0, data.shape[0] - 1)
    return data[np.ix_(ys, xs)]


def multi_level_patches(mask: np.ndarray, data: np.ndarray, center, widths=None) -> PatchSet:
    """The four-level PatchSet at one center (widths computed if absent)."""
    if not mask[center[1], center[0]]:
        raise ValueError(f"center {center} outside segment")
    if widths is None:
        widths = multi_level_widths(mask, center)
    patches = [extract_patch(data, center, w) for w in widths]
    return PatchSet(patches, tuple(widths), tuple(center))


def segment_patch_sets(
    mask: np.ndarray, data: np.ndarray, three_center_min: int = THREE_CENTER_MIN
) -> list:
    """PatchSets for every extraction center of one segment. Widths are
    shared across centers, computed at the first."""
    centers = extraction_centers(mask, three_center_min)
    widths = multi_level_widths(mask, centers[0])
    return [multi_level_patches(mask, data, c, widths) for c in centers]
