"""Shared test utilities: random-but-valid segment maps and oracles."""

from __future__ import annotations

import heapq
import math

import numpy as np

from segmerge.raster import SegmentMap


def random_connected_map(height: int, width: int, nseg: int, rng) -> SegmentMap:
    """Random dense 4-connected partition grown from random seeds.

    Multi-source growth with randomly jittered arrival times keeps every
    label a single 4-connected blob by construction.
    """
    labels = np.full((height, width), -1, dtype=np.int32)
    seeds = rng.choice(height * width, size=nseg, replace=False)
    heap = []
    for lab, s in enumerate(seeds.tolist()):
        y, x = divmod(s, width)
        labels[y, x] = lab
    for lab, s in enumerate(seeds.tolist()):
        y, x = divmod(s, width)
        for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            ny, nx = y + dy, x + dx
            if 0 <= ny < height and 0 <= nx < width and labels[ny, nx] == -1:
                heapq.heappush(heap, (rng.random(), ny, nx, lab))
    while heap:
        _, y, x, lab = heapq.heappop(heap)
        if labels[y, x] != -1:
            continue
        labels[y, x] = lab
        for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            ny, nx = y + dy, x + dx
            if 0 <= ny < height and 0 <= nx < width and labels[ny, nx] == -1:
                heapq.heappush(heap, (rng.random(), ny, nx, lab))
    return SegmentMap(labels)


def brute_force_metrics(seg_labels, ref_map):
    """Per-pixel dict-and-loop implementation of the nine metrics,
    independent of the vectorized production path."""
    h, w = seg_labels.shape
    inter = {}
    seg_area = {}
    ref_area = {}
    for y in range(h):
        for x in range(w):
            s = int(seg_labels[y, x])
            seg_area[s] = seg_area.get(s, 0) + 1
            r = int(ref_map[y, x])
            if r >= 0:
                ref_area[r] = ref_area.get(r, 0) + 1
                inter[(s, r)] = inter.get((s, r), 0) + 1

    refs = sorted(ref_area)
    segs_in_s = sorted({s for s, _ in inter})
    total_r = sum(ref_area.values())
    total_s = sum(seg_area[s] for s in segs_in_s)

    prec_num = 0
    for s in segs_in_s:
        best = max((inter.get((s, r), 0) for r in refs))
        prec_num += best
    precision = prec_num / total_s

    rec_num = 0.0
    gose_terms = []
    pse = 0.0
    guse = 0.0
    for r in refs:
        cands = [(inter.get((s, r), 0), -s) for s in segs_in_s]
        best_i, neg_s = max(cands)
        best_s = -neg_s
        rec_num += best_i
        if ref_area[r] > 1:
            gose_terms.append(ref_area[r] * (ref_area[r] - best_i) / (ref_area[r] - 1))
        pse += seg_area[best_s] - best_i
        hitting = [s for s in segs_in_s if inter.get((s, r), 0) > 0]
        union = sum(seg_area[s] for s in hitting) + ref_area[r] - sum(
            inter.get((s, r), 0) for s in hitting
        )
        guse += min(union - sum(inter.get((s, r), 0) for s in hitting), ref_area[r])
    recall = rec_num / total_r
    gose = math.fsum(gose_terms) / total_r
    guse /= total_r
    pse /= total_r
    f = 0.0 if precision == 0 or recall == 0 else 1.0 / (0.5 / precision + 0.5 / recall)

    v = 0
    for s in segs_in_s:
        for r in refs:
            i = inter.get((s, r), 0)
            if i / seg_area[s] >= 0.5 or i / ref_area[r] >= 0.5:
                v += 1
                break
    nsr = abs(len(refs) - v) / len(refs)
    ed2 = (pse**2 + nsr**2) ** 0.5
    return {
        "precision": precision,
        "recall": recall,
        "f_score": f,
        "gose": gose,
        "guse": guse,
        "te": gose + guse,
        "pse": pse,
        "nsr": nsr,
        "ed2": ed2,
        "n_references": len(refs),
        "m_segments": len(segs_in_s),
        "v_corresponding": v,
    }


def point_in_polygon_bruteforce(px: float, py: float, rings) -> bool:
    """Even-odd crossing test over all rings; on-edge points are inside."""
    crossings = 0
    for ring in rings:
        n = len(ring)
        for i in range(n):
            x1, y1 = ring[i]
            x2, y2 = ring[(i + 1) % n]
            # on-segment check
            dx, dy = x2 - x1, y2 - y1
            norm = (dx * dx + dy * dy) ** 0.5
            if norm > 0:
                cross = (px - x1) * dy - (py - y1) * dx
                t = ((px - x1) * dx + (py - y1) * dy) / (norm * norm)
                if abs(cross) / norm < 1e-9 and -1e-9 <= t <= 1 + 1e-9:
                    return True
            if y1 == y2:
                continue
            ylo, yhi = (y1, y2) if y1 < y2 else (y2, y1)
            if ylo <= py < yhi:
                cx = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
                if cx > px:
                    crossings += 1
    return crossings % 2 == 1
