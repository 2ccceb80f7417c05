"""Reference polygons, rasterization, and segment-boundary tracing.

Polygons live in pixel coordinates: vertices are points of the corner
lattice, pixel (x, y) spans [x, x+1] x [y, y+1]. Rasterization samples
pixel centers with the even-odd rule; a center lying exactly on a ring
edge counts as inside. Boundary tracing walks pixel edges, so tracing a
segment map and rasterizing the result reproduces the map exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .raster import SegmentMap

_EDGE_EPS = 1e-9


class PolygonError(ValueError):
    """Degenerate or out-of-bounds polygon."""


@dataclass
class Polygon:
    id: int
    ring: list  # [(x, y), ...] closed implicitly
    holes: list = field(default_factory=list)


@dataclass
class ReferenceSet:
    polygons: list

    def __iter__(self):
        return iter(self.polygons)

    def __len__(self):
        return len(self.polygons)


def save_reference_set(refs: ReferenceSet, path) -> None:
    doc = {
        "polygons": [
            {
                "id": int(p.id),
                "ring": [[float(x), float(y)] for x, y in p.ring],
                **({"holes": [[[float(x), float(y)] for x, y in h] for h in p.holes]} if p.holes else {}),
            }
            for p in refs.polygons
        ]
    }
    Path(path).write_text(json.dumps(doc))


def load_reference_set(path) -> ReferenceSet:
    doc = json.loads(Path(path).read_text())
    polys = []
    for rec in doc["polygons"]:
        ring = [(float(x), float(y)) for x, y in rec["ring"]]
        holes = [[(float(x), float(y)) for x, y in h] for h in rec.get("holes", [])]
        polys.append(Polygon(int(rec["id"]), ring, holes))
    return ReferenceSet(polys)


# ---------------------------------------------------------------------------
# rasterization
# ---------------------------------------------------------------------------


def _ring_edges(ring):
    n = len(ring)
    return [(ring[i], ring[(i + 1) % n]) for i in range(n)]


def polygon_mask(polygon: Polygon, width: int, height: int) -> np.ndarray:
    """Boolean pixel mask of one polygon (holes subtracted, even-odd)."""
    if len(polygon.ring) < 3:
        raise PolygonError(f"polygon {polygon.id}: ring has <3 vertices")
    for hole in polygon.holes:
        if len(hole) < 3:
            raise PolygonError(f"polygon {polygon.id}: hole has <3 vertices")

    mask = np.zeros((height, width), dtype=bool)
    edges = []
    for ring in [polygon.ring] + list(polygon.holes):
        edges.extend(_ring_edges(ring))

    # scanline even-odd fill at pixel centers (y + 0.5)
    rows: dict[int, list[float]] = {}
    for (x1, y1), (x2, y2) in edges:
        if y1 == y2:
            continue
        ylo, yhi = (y1, y2) if y1 < y2 else (y2, y1)
        j0 = max(0, math.ceil(ylo - 0.5))
        j1 = min(height - 1, math.ceil(yhi - 0.5) - 1)
        for j in range(j0, j1 + 1):
            py = j + 0.5
            if ylo <= py < yhi:  # half-open rule avoids double counts at vertices
                cx = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
                rows.setdefault(j, []).append(cx)

    for j, xs in rows.items():
        xs.sort()
        for a, b in zip(xs[::2], xs[1::2]):
            i0 = max(0, math.floor(a - 0.5) + 1)
            i1 = min(width - 1, math.ceil(b - 0.5) - 1)
            if i0 <= i1:
                mask[j, i0 : i1 + 1] = True

    _mark_on_edge_centers(mask, edges)
    return mask


def _mark_on_edge_centers(mask: np.ndarray, edges) -> None:
    """Pixel centers lying exactly on a ring edge count as inside."""
    height, width = mask.shape
    for (x1, y1), (x2, y2) in edges:
        xlo, xhi = sorted((x1, x2))
        ylo, yhi = sorted((y1, y2))
        i0 = max(0, math.floor(xlo - 0.5))
        i1 = min(width - 1, math.ceil(xhi))
        j0 = max(0, math.floor(ylo - 0.5))
        j1 = min(height - 1, math.ceil(yhi))
        if i1 < i0 or j1 < j0:
            continue
        dx, dy = x2 - x1, y2 - y1
        norm = math.hypot(dx, dy)
        if norm == 0:
            continue
        for j in range(j0, j1 + 1):
            for i in range(i0, i1 + 1):
                px, py = i + 0.5, j + 0.5
                cross = (px - x1) * dy - (py - y1) * dx
                if abs(cross) / norm > _EDGE_EPS:
                    continue
                t = ((px - x1) * dx + (py - y1) * dy) / (norm * norm)
                if -_EDGE_EPS <= t <= 1 + _EDGE_EPS:
                    mask[j, i] = True


def rasterize_polygons(refs: ReferenceSet, width: int, height: int) -> np.ndarray:
    """Per-pixel polygon id map, -1 where uncovered; higher id wins overlaps."""
    out = np.full((height, width), -1, dtype=np.int64)
    for poly in sorted(refs.polygons, key=lambda p: p.id):
        out[polygon_mask(poly, width, height)] = poly.id
    return out


# ---------------------------------------------------------------------------
# boundary tracing
# ---------------------------------------------------------------------------


def _boundary_loops(mask: np.ndarray, x_off: int, y_off: int):
    """Closed lattice loops around a pixel mask, segment kept on the left.

    At pinch vertices (4 incident wall edges) the walk turns right in
    screen coordinates, which keeps exterior and hole loops separate.
    """
    h, w = mask.shape
    padded = np.zeros((h + 2, w + 2), dtype=bool)
    padded[1:-1, 1:-1] = mask

    # directed wall edges keyed by start vertex
    outgoing: dict[tuple[int, int], list[tuple[int, int]]] = {}

    def add(a, b):
        outgoing.setdefault(a, []).append(b)

    ys, xs = np.nonzero(mask)
    for y, x in zip(ys.tolist(), xs.tolist()):
        py, px = y + 1, x + 1
        if not padded[py - 1, px]:  # wall above: westward
            add((x + 1, y), (x, y))
        if not padded[py + 1, px]:  # wall below: eastward
            add((x, y + 1), (x + 1, y + 1))
        if not padded[py, px - 1]:  # wall left: southward
            add((x, y), (x, y + 1))
        if not padded[py, px + 1]:  # wall right: northward
            add((x + 1, y + 1), (x + 1, y))

    loops = []
    while outgoing:
        start = min(outgoing)
        prev = start
        cur = outgoing[start].pop(0)
        if not outgoing[start]:
            del outgoing[start]
        loop = [start]
        while cur != start:
            loop.append(cur)
            options = outgoing[cur]
            if len(options) == 1:
                nxt = options.pop(0)
            else:
                # pinch vertex: prefer the right turn (screen coords)
                dx, dy = cur[0] - prev[0], cur[1] - prev[1]
                right = (cur[0] - dy, cur[1] + dx)
                nxt = right if right in options else options[0]
                options.remove(nxt)
            if not options:
                del outgoing[cur]
            prev, cur = cur, nxt
        loops.append([(x + x_off, y + y_off) for x, y in loop])
    return loops


def _signed_area(ring) -> float:
    s = 0.0
    n = len(ring)
    for i in range(n):
        x1, y1 = ring[i]
        x2, y2 = ring[(i + 1) % n]
        s += x1 * y2 - x2 * y1
    return s / 2.0


def _drop_collinear(ring):
    out = []
    n = len(ring)
    for i in range(n):
        p, q, r = ring[i - 1], ring[i], ring[(i + 1) % n]
        if (q[0] - p[0]) * (r[1] - q[1]) != (q[1] - p[1]) * (r[0] - q[0]):
            out.append(q)
    return out


def _normalize_ring(ring, clockwise: bool):
    """Drop collinear vertices, fix orientation, start at smallest vertex."""
    ring = _drop_collinear(ring)
    if (_signed_area(ring) > 0) != clockwise:
        ring = [ring[0]] + ring[:0:-1]
    k = ring.index(min(ring))
    return ring[k:] + ring[:k]


def ring_edge_count(ring) -> int:
    """Number of unit pixel edges along an axis-aligned lattice ring."""
    n = len(ring)
    total = 0
    for i in range(n):
        x1, y1 = ring[i]
        x2, y2 = ring[(i + 1) % n]
        total += abs(int(x2 - x1)) + abs(int(y2 - y1))
    return total


def trace_boundaries(segmap: SegmentMap) -> ReferenceSet:
    """One exterior ring (plus hole rings) per segment, along pixel edges.

    Rasterizing the result reproduces the input labels pixel-exactly.
    """
    from scipy import ndimage

    labels = segmap.labels
    polys = []
    slices = ndimage.find_objects(labels + 1)
    for lab, sl in enumerate(slices):
        if sl is None:
            continue
        mask = labels[sl] == lab
        loops = _boundary_loops(mask, sl[1].start, sl[0].start)
        exterior = None
        holes = []
        for loop in loops:
            # walk convention makes exterior loops CCW on screen (negative area)
            if _signed_area(loop) < 0:
                if exterior is not None:
                    raise AssertionError(f"label {lab}: multiple exterior rings")
                exterior = _normalize_ring(loop, clockwise=True)
            else:
                holes.append(_normalize_ring(loop, clockwise=False))
        if exterior is None:
            raise AssertionError(f"label {lab}: no exterior ring")
        polys.append(Polygon(lab, exterior, holes))
    return ReferenceSet(polys)


def rasterize_segments(refs: ReferenceSet, width: int, height: int) -> SegmentMap:
    """Rebuild a SegmentMap from traced polygons (ids must be dense)."""
    idmap = rasterize_polygons(refs, width, height)
    if (idmap < 0).any():
        raise PolygonError("polygons do not cover every pixel")
    return SegmentMap(idmap.astype(np.int32))
