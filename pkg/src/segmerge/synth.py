"""Synthetic textured mosaics with exact ground truth.

The mosaic is a full partition: horizontal base bands overlaid with
rectangles, ellipses, and diagonal bands, each painted with one of a
fixed palette of texture classes. Two classes are composite (a coarse
checkerboard and wide stripes) so that adjacent segments inside one
object can look locally different - the case where single-patch models
fail and multi-level context is needed. Ground-truth regions are the
4-connected components of the class map; reference polygons are their
traced boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .raster import Raster, SegmentMap, adjacency_pairs, split_disconnected_labels
from .training import SamplePair
from .vector import ReferenceSet, trace_boundaries

# class id -> (kind, colors); colors are RGB base values. The composite
# classes make adjacent segments inside one object look locally different,
# which is what multi-level context has to resolve.
PALETTE = {
    0: ("plain", [(70, 55, 40)]),  # dark soil
    1: ("plain", [(40, 120, 50)]),  # vegetation
    2: ("plain", [(30, 60, 140)]),  # water
    3: ("plain", [(185, 185, 185)]),  # concrete
    4: ("plain", [(165, 60, 50)]),  # red roof
    5: ("plain", [(215, 195, 140)]),  # sand
    6: ("checker", [(125, 125, 60), (60, 100, 135)]),  # plaza, 12 px cells
    7: ("stripes", [(50, 90, 40), (135, 110, 70)]),  # orchard rows, 14 px
}
CHECKER_CELL = 12
STRIPE_PERIOD = 14


@dataclass
class SynthConfig:
    size: int = 512
    seed: int = 11
    noise: float = 4.0  # uniform per-band noise amplitude
    n_objects: int = 16
    min_region: int = 300


@dataclass
class SynthResult:
    raster: Raster
    class_map: np.ndarray
    gt: SegmentMap
    refs: ReferenceSet


def _stamp_objects(class_map: np.ndarray, rng: np.random.Generator, n_objects: int) -> None:
    size = class_map.shape[0]
    classes = list(PALETTE)
    rect_lo, rect_hi = max(24, size // 8), max(32, size * 7 // 26)
    rad_lo, rad_hi = max(12, size // 15), max(18, size // 7)
    band_lo, band_hi = max(14, size // 18), max(20, size // 10)
    for i in range(n_objects):
        kind = ("rect", "ellipse", "band")[int(rng.integers(0, 3))]
        cls = classes[int(rng.integers(0, len(classes)))]
        if kind == "rect":
            w = int(rng.integers(rect_lo, rect_hi))
            h = int(rng.integers(rect_lo, rect_hi))
            x0 = int(rng.integers(0, size - w))
            y0 = int(rng.integers(0, size - h))
            class_map[y0 : y0 + h, x0 : x0 + w] = cls
        elif kind == "ellipse":
            rx = int(rng.integers(rad_lo, rad_hi))
            ry = int(rng.integers(rad_lo, rad_hi))
            cx = int(rng.integers(rx, size - rx))
            cy = int(rng.integers(ry, size - ry))
            yy, xx = np.mgrid[0:size, 0:size]
            inside = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
            class_map[inside] = cls
        else:
            # axis-aligned bands: shallow-angle boundaries shed sub-cell
            # slivers during over-segmentation, which poisons ground truth
            width = int(rng.integers(band_lo, band_hi))
            offset = int(rng.uniform(0.2, 0.8) * size)
            lo, hi = max(0, offset - width // 2), min(size, offset + width - width // 2)
            if rng.integers(0, 2) == 0:
                class_map[lo:hi, :] = cls
            else:
                class_map[:, lo:hi] = cls


def _cleanup_small_regions(class_map: np.ndarray, min_region: int) -> np.ndarray:
    """Reassign tiny ground-truth fragments to the neighbour class with the
    longest shared border until all regions are big enough."""
    for _ in range(8):
        regions = split_disconnected_labels(class_map)
        sizes = np.bincount(regions.ravel())
        small = np.nonzero(sizes < min_region)[0]
        if len(small) == 0:
            return class_map
        pairs = adjacency_pairs(regions)
        border = {}
        lab = regions
        for axis in (0, 1):
            a = lab[1:, :].ravel() if axis == 0 else lab[:, 1:].ravel()
            b = lab[:-1, :].ravel() if axis == 0 else lab[:, :-1].ravel()
            diff = a != b
            for x, y in zip(a[diff].tolist(), b[diff].tolist()):
                key = (min(x, y), max(x, y))
                border[key] = border.get(key, 0) + 1
        for reg in small.tolist():
            touching = [(p, c) for p, c in border.items() if reg in p]
            if not touching:
                continue
            (pa, pb), _ = max(touching, key=lambda t: (t[1], -t[0][0], -t[0][1]))
            other = pb if pa == reg else pa
            # adopt the neighbour's class
            swap_cls = class_map[regions == other].flat[0]
            class_map[regions == reg] = swap_cls
    regions = split_disconnected_labels(class_map)
    if np.bincount(regions.ravel()).min() < min_region:
        raise AssertionError("could not clean up small ground-truth regions")
    return class_map


def _render(class_map: np.ndarray, rng: np.random.Generator, noise: float) -> np.ndarray:
    size = class_map.shape[0]
    yy, xx = np.mgrid[0:size, 0:size]
    base = np.zeros((size, size, 3), dtype=np.float64)
    for cls, (kind, colors) in PALETTE.items():
        mask = class_map == cls
        if not mask.any():
            continue
        if kind == "plain":
            base[mask] = colors[0]
        elif kind == "checker":
            pick = ((xx // CHECKER_CELL + yy // CHECKER_CELL) % 2)[mask]
            base[mask] = np.array(colors)[pick]
        else:
            pick = (((xx + yy) // STRIPE_PERIOD) % 2)[mask]
            base[mask] = np.array(colors)[pick]
    noisy = base + rng.uniform(-noise, noise, size=base.shape)
    return np.clip(np.round(noisy), 0, 255).astype(np.uint8)


def generate_mosaic(cfg: SynthConfig) -> SynthResult:
    rng = np.random.default_rng(cfg.seed)
    size = cfg.size
    class_map = np.zeros((size, size), dtype=np.int32)
    # base bands
    cuts = sorted(rng.integers(size // 5, size - size // 5, size=2).tolist())
    class_map[: cuts[0], :] = 5
    class_map[cuts[0] : cuts[1], :] = 1
    class_map[cuts[1] :, :] = 0
    _stamp_objects(class_map, rng, cfg.n_objects)
    # anchor one orchard and one plaza so both composite textures always occur
    h = max(24, min(size // 5, cuts[1] - cuts[0] - 8))
    w = max(32, size // 4)
    y0 = (cuts[0] + cuts[1] - h) // 2
    class_map[y0 : y0 + h, size // 8 : size // 8 + w] = 7
    class_map[y0 : y0 + h, size * 5 // 8 : size * 5 // 8 + w] = 6
    class_map = _cleanup_small_regions(class_map, cfg.min_region)
    gt = SegmentMap(split_disconnected_labels(class_map))
    raster = Raster(_render(class_map, rng, cfg.noise))
    refs = trace_boundaries(gt)
    return SynthResult(raster, class_map, gt, refs)


def majority_region(segmap: SegmentMap, gt: SegmentMap) -> np.ndarray:
    """Ground-truth region claiming the most pixels of each segment."""
    nseg = segmap.count
    ngt = gt.count
    counts = np.bincount(
        segmap.labels.ravel().astype(np.int64) * ngt + gt.labels.ravel(), minlength=nseg * ngt
    ).reshape(nseg, ngt)
    return counts.argmax(axis=1)


def derive_pairs(
    segmap: SegmentMap,
    gt: SegmentMap,
    n_train: int,
    n_heldout: int,
    seed: int = 0,
    positive_share: float = 0.45,
):
    """Label adjacent segment pairs by ground truth and sample disjoint
    training and held-out sets (stratified, deterministic)."""
    owner = majority_region(segmap, gt)
    pairs = adjacency_pairs(segmap.labels)
    labels = (owner[pairs[:, 0]] == owner[pairs[:, 1]]).astype(int)
    rng = np.random.default_rng(seed)
    pos_idx = np.nonzero(labels == 1)[0]
    neg_idx = np.nonzero(labels == 0)[0]
    rng.shuffle(pos_idx)
    rng.shuffle(neg_idx)

    def take(count, pos_cursor, neg_cursor):
        n_pos = min(int(round(count * positive_share)), len(pos_idx) - pos_cursor)
        n_neg = min(count - n_pos, len(neg_idx) - neg_cursor)
        chosen = np.concatenate(
            [pos_idx[pos_cursor : pos_cursor + n_pos], neg_idx[neg_cursor : neg_cursor + n_neg]]
        )
        out = [SamplePair(int(pairs[i, 0]), int(pairs[i, 1]), int(labels[i])) for i in chosen]
        return out, pos_cursor + n_pos, neg_cursor + n_neg

    train, pc, nc = take(n_train, 0, 0)
    heldout, _, _ = take(n_heldout, pc, nc)
    return train, heldout
