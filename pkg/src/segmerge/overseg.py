"""Initial over-segmentation when no external primitive map is supplied.

Grid-seeded connected-component growth: each grid cell is segmented into
4-connected components of pixels whose max per-band distance to the
component seed stays within the colour tolerance. Components smaller
than ``min_segment`` are absorbed into their most-similar touching
neighbour. Deterministic given inputs.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .raster import Raster, SegmentMap, adjacency_pairs, relabel_dense, split_disconnected_labels


@dataclass
class OversegConfig:
    grid_step: int = 16
    color_tolerance: float = 12.0
    min_segment: int = 4

    def __post_init__(self):
        if self.grid_step < 2:
            raise ValueError("grid_step must be >= 2")
        if self.color_tolerance < 0:
            raise ValueError("color_tolerance must be >= 0")
        if self.min_segment < 1:
            raise ValueError("min_segment must be >= 1")


def oversegment(raster: Raster, cfg: OversegConfig) -> SegmentMap:
    if raster.width == 0 or raster.height == 0:
        raise ValueError("empty raster")
    h, w = raster.height, raster.width
    labels = np.full((h, w), -1, dtype=np.int32)
    next_label = 0
    data = raster.data.astype(np.int16)

    for y0 in range(0, h, cfg.grid_step):
        for x0 in range(0, w, cfg.grid_step):
            y1, x1 = min(y0 + cfg.grid_step, h), min(x0 + cfg.grid_step, w)
            next_label = _grow_cell(
                data[y0:y1, x0:x1], labels[y0:y1, x0:x1], cfg.color_tolerance, next_label
            )

    labels = _absorb_small(data, labels, cfg.min_segment)
    return SegmentMap(relabel_dense(labels))


def _grow_cell(sub: np.ndarray, out: np.ndarray, tol: float, next_label: int) -> int:
    """Seeded BFS components within one grid cell; returns next free label."""
    hc, wc, _ = sub.shape
    px = sub.tolist()
    assigned = out.tolist()
    for sy in range(hc):
        for sx in range(wc):
            if assigned[sy][sx] != -1:
                continue
            seed = px[sy][sx]
            lab = next_label
            next_label += 1
            assigned[sy][sx] = lab
            queue = deque([(sy, sx)])
            while queue:
                y, x = queue.popleft()
                for ny, nx in ((y + 1, x), (y - 1, x), (y, x + 1), (y, x - 1)):
                    if 0 <= ny < hc and 0 <= nx < wc and assigned[ny][nx] == -1:
                        v = px[ny][nx]
                        if max(abs(a - b) for a, b in zip(v, seed)) <= tol:
                            assigned[ny][nx] = lab
                            queue.append((ny, nx))
    out[:] = np.asarray(assigned, dtype=np.int32)
    return next_label


def _absorb_small(data: np.ndarray, labels: np.ndarray, min_segment: int) -> np.ndarray:
    """Merge undersized components into the closest-colour touching neighbour."""
    n = int(labels.max()) + 1
    flat = labels.ravel()
    sizes = np.bincount(flat, minlength=n).astype(np.int64)
    sums = np.zeros((n, data.shape[2]), dtype=np.float64)
    for k in range(data.shape[2]):
        sums[:, k] = np.bincount(flat, weights=data[:, :, k].ravel(), minlength=n)

    neighbors: list[set[int]] = [set() for _ in range(n)]
    for a, b in adjacency_pairs(labels).tolist():
        neighbors[a].add(b)
        neighbors[b].add(a)

    parent = np.arange(n, dtype=np.int64)

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    while True:
        small = [
            r for r in range(n) if parent[r] == r and sizes[r] < min_segment and neighbors[r]
        ]
        if not small:
            break
        r = min(small, key=lambda s: (sizes[s], s))
        mean_r = sums[r] / sizes[r]

        def dist(t: int) -> float:
            return float(np.linalg.norm(sums[t] / sizes[t] - mean_r))

        target = min(neighbors[r], key=lambda t: (dist(t), t))
        # absorb r into target
        parent[r] = target
        sizes[target] += sizes[r]
        sums[target] += sums[r]
        for t in neighbors[r]:
            neighbors[t].discard(r)
            if t != target:
                neighbors[t].add(target)
                neighbors[target].add(t)
        neighbors[target].discard(target)
        neighbors[r] = set()

    roots = np.array([find(i) for i in range(n)], dtype=np.int64)
    return roots[labels].astype(np.int32)


def ingest_external(segmap: SegmentMap) -> SegmentMap:
    """Adopt a label raster from another tool: enforce 4-connectivity by
    splitting disconnected labels and renumber ids densely."""
    return SegmentMap(split_disconnected_labels(segmap.labels))
