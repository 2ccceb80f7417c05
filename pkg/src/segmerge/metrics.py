"""Segmentation accuracy: nine metrics against reference geo-objects.

All areas are pixel counts. Evaluated segments are restricted to those
intersecting at least one reference (references typically cover only
part of a scene, so unrestricted precision would be meaningless).
Correspondence for the segment-count ratio follows the 50%-overlap rule:
a segment corresponds when at least half of it lies in some reference or
it covers at least half of that reference.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .raster import SegmentMap
from .vector import ReferenceSet, rasterize_polygons


@dataclass
class MetricsReport:
    precision: float
    recall: float
    f_score: float
    gose: float  # global over-segmentation error
    guse: float  # global under-segmentation error
    te: float  # gose + guse
    pse: float  # potential segmentation error
    nsr: float  # number-of-segments ratio
    ed2: float  # sqrt(pse^2 + nsr^2)
    n_references: int
    m_segments: int
    v_corresponding: int

    FIELDS = (
        "precision",
        "recall",
        "f_score",
        "gose",
        "guse",
        "te",
        "pse",
        "nsr",
        "ed2",
    )

    def as_dict(self) -> dict:
        return asdict(self)

    def csv_line(self, prefix: str = "") -> str:
        head = f"{prefix}," if prefix else ""
        return head + ",".join(f"{getattr(self, f):.6f}" for f in self.FIELDS)

    @classmethod
    def csv_header(cls, prefix: str = "") -> str:
        head = f"{prefix}," if prefix else ""
        return head + ",".join(cls.FIELDS)

    def save_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.as_dict(), indent=2))


def evaluate(segmap: SegmentMap, refs: ReferenceSet) -> MetricsReport:
    """Rasterize the references (pixel-center inclusion, higher id wins)
    and score the segment map against them."""
    if len(refs) == 0:
        raise ValueError("reference set is empty")
    w, h = segmap.width, segmap.height
    for poly in refs:
        for x, y in poly.ring:
            if not (0 <= x <= w and 0 <= y <= h):
                raise ValueError(f"reference {poly.id} outside image bounds")
    ref_map = rasterize_polygons(refs, w, h)
    return evaluate_maps(segmap.labels, ref_map)


def evaluate_maps(seg_labels: np.ndarray, ref_map: np.ndarray) -> MetricsReport:
    """Score against an already-rasterized reference id map (-1 = none)."""
    ref_ids = np.unique(ref_map[ref_map >= 0])
    n_refs = len(ref_ids)
    if n_refs == 0:
        raise ValueError("no reference pixels")
    ref_index = np.full(int(ref_map.max()) + 1, -1, dtype=np.int64)
    ref_index[ref_ids] = np.arange(n_refs)

    covered = ref_map >= 0
    seg_at = seg_labels[covered].astype(np.int64)
    ref_at = ref_index[ref_map[covered]]
    nseg_total = int(seg_labels.max()) + 1
    inter = np.bincount(seg_at * n_refs + ref_at, minlength=nseg_total * n_refs).reshape(
        nseg_total, n_refs
    )

    seg_area = np.bincount(seg_labels.ravel(), minlength=nseg_total).astype(np.int64)
    ref_area = inter.sum(axis=0)  # resolved reference masks partition "covered"

    in_s = inter.sum(axis=1) > 0  # segments intersecting >= 1 reference
    m_segments = int(in_s.sum())
    total_s = int(seg_area[in_s].sum())
    total_r = int(ref_area.sum())

    # precision: per evaluated segment, its largest-intersection reference
    best_ref_inter = inter[in_s].max(axis=1)
    precision = float(best_ref_inter.sum() / total_s)

    # per reference: largest-intersection segment (ties -> smaller label)
    best_seg = inter.argmax(axis=0)
    best_seg_inter = inter[best_seg, np.arange(n_refs)]
    recall = float(best_seg_inter.sum() / total_r)
    f_score = 0.0 if precision == 0 or recall == 0 else 1.0 / (0.5 / precision + 0.5 / recall)

    # over-segmentation: weighted missed fraction with the printed -1 denominator
    # (fsum keeps the term sum exactly rounded, independent of batching)
    miss = ref_area - best_seg_inter
    denom = np.maximum(ref_area - 1, 1)
    gose_terms = np.where(ref_area > 1, ref_area * miss / denom, 0.0)
    gose = math.fsum(gose_terms.tolist()) / total_r

    # under-segmentation: union-minus-intersection of all touching segments, capped
    seg_hits = inter > 0
    union_area = (seg_hits * seg_area[:, None]).sum(axis=0) + ref_area - inter.sum(axis=0)
    guse_terms = np.minimum(union_area - inter.sum(axis=0), ref_area)
    guse = float(guse_terms.sum() / total_r)
    te = gose + guse

    pse = float((seg_area[best_seg] - best_seg_inter).sum() / total_r)

    # correspondence: >= 50% overlap either way, for some reference
    frac_of_seg = inter / np.maximum(seg_area[:, None], 1)
    frac_of_ref = inter / np.maximum(ref_area[None, :], 1)
    corresponds = ((frac_of_seg >= 0.5) | (frac_of_ref >= 0.5)).any(axis=1)
    v = int(corresponds.sum())
    nsr = abs(n_refs - v) / n_refs
    ed2 = float(np.sqrt(pse * pse + nsr * nsr))

    return MetricsReport(
        precision, recall, f_score, gose, guse, te, pse, nsr, ed2, n_refs, m_segments, v
    )
