"""Staged pipeline: oversegment -> centers/embedding -> merge -> evaluate.

Every stage writes its artifacts under the working directory and records
a content hash of its inputs and parameters in ``stages.json``; reruns
with unchanged inputs are skipped, so the pipeline is resumable and
byte-stable. Scale sweeps reuse one exhaustive merge trace: truncating
the executed-merge list at a threshold reproduces merging at that
threshold, so each sweep row costs one replay instead of a fresh merge.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .graph import build_rag, replay_trace, run_merge, weight_histogram
from .metrics import MetricsReport, evaluate_maps
from .net import NetConfig, load_model, save_model
from .overseg import OversegConfig, ingest_external, oversegment
from .raster import SegmentMap, load_raster, load_segment_map, save_segment_map
from .synth import derive_pairs
from .training import SamplePair, embed_segments, prepare_segment_inputs, train_siamese
from .vector import load_reference_set, rasterize_polygons

log = logging.getLogger(__name__)

DEFAULT_SWEEP_SCALES = (0.01, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99)


@dataclass
class PipelineConfig:
    image: str
    workdir: str
    overseg: OversegConfig = field(default_factory=OversegConfig)
    net: NetConfig = field(default_factory=NetConfig)
    scale: float = 0.6
    pairs: str | None = None  # labels JSONL; absent -> derived from gt_map
    gt_map: str | None = None  # ground-truth SEGR (synthetic workflows)
    refs: str | None = None  # reference polygons JSON
    initial_map: str | None = None  # external over-segmentation to ingest
    n_train_pairs: int = 400
    n_heldout_pairs: int = 200
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.overseg, dict):
            self.overseg = OversegConfig(**self.overseg)
        if isinstance(self.net, dict):
            if "level_sides" in self.net:
                self.net["level_sides"] = tuple(self.net["level_sides"])
            self.net = NetConfig(**self.net)
        if self.scale < 0:
            raise ValueError("scale must be >= 0")

    @classmethod
    def from_yaml(cls, path) -> "PipelineConfig":
        doc = yaml.safe_load(Path(path).read_text())
        return cls(**doc)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["net"]["level_sides"] = list(d["net"]["level_sides"])
        return d


# ---------------------------------------------------------------------------
# label records (the service export feeds training directly)
# ---------------------------------------------------------------------------


def save_pairs_jsonl(pairs: list, path, tile: str = "0") -> None:
    with open(path, "w") as f:
        for p in pairs:
            rec = {
                "tile": tile,
                "a": p.left,
                "b": p.right,
                "label": "positive" if p.label == 1 else "negative",
            }
            f.write(json.dumps(rec) + "\n")


def load_pairs_jsonl(path) -> list:
    pairs = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        label = 1 if rec["label"] == "positive" else 0
        pairs.append(SamplePair(int(rec["a"]), int(rec["b"]), label))
    return pairs


# ---------------------------------------------------------------------------
# feature tables (per-segment embeddings / per-region merged features)
# ---------------------------------------------------------------------------


def save_feature_table(path, features: dict) -> None:
    """``features``: id -> (vector, weight); stored as an npz archive."""
    ids = np.array(sorted(features), dtype=np.int64)
    mat = np.stack([np.asarray(features[i][0], dtype=np.float64) for i in ids])
    weights = np.array([int(features[i][1]) for i in ids], dtype=np.int64)
    with open(path, "wb") as f:
        np.savez(f, ids=ids, features=mat, weights=weights)


def load_feature_table(path) -> dict:
    with np.load(path) as z:
        return {
            int(i): (z["features"][k], int(z["weights"][k]))
            for k, i in enumerate(z["ids"])
        }


# ---------------------------------------------------------------------------
# stage cache
# ---------------------------------------------------------------------------


class StageCache:
    def __init__(self, workdir: Path):
        self.path = workdir / "stages.json"
        self.state = json.loads(self.path.read_text()) if self.path.exists() else {}

    def fresh(self, stage: str, digest: str, outputs: list) -> bool:
        entry = self.state.get(stage)
        return (
            entry is not None
            and entry["digest"] == digest
            and all(Path(o).exists() for o in entry["outputs"])
            and entry["outputs"] == [str(o) for o in outputs]
        )

    def record(self, stage: str, digest: str, outputs: list) -> None:
        self.state[stage] = {"digest": digest, "outputs": [str(o) for o in outputs]}
        self.path.write_text(json.dumps(self.state, indent=2))


def _digest(*parts) -> str:
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, (str, int, float)):
            h.update(str(part).encode())
        elif isinstance(part, dict):
            h.update(json.dumps(part, sort_keys=True, default=str).encode())
        elif isinstance(part, Path):
            h.update(part.read_bytes())
        else:
            raise TypeError(f"cannot hash {type(part)}")
        h.update(b"\x00")
    return h.hexdigest()


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------


@dataclass
class PipelineResult:
    artifacts: dict
    report: MetricsReport | None


def run_pipeline(cfg: PipelineConfig, make_figures: bool = True) -> PipelineResult:
    work = Path(cfg.workdir)
    work.mkdir(parents=True, exist_ok=True)
    cache = StageCache(work)
    arts: dict[str, Path] = {}
    raster = load_raster(cfg.image)

    # --- over-segmentation -------------------------------------------------
    overseg_path = work / "overseg.segr"
    stage_inputs = [Path(cfg.image), asdict(cfg.overseg)]
    if cfg.initial_map:
        stage_inputs.append(Path(cfg.initial_map))
    digest = _digest("oversegment", *stage_inputs)
    if not cache.fresh("oversegment", digest, [overseg_path]):
        log.info("stage oversegment: running")
        if cfg.initial_map:
            external = load_segment_map(cfg.initial_map)
            if (external.height, external.width) != (raster.height, raster.width):
                raise ValueError("initial map dimensions mismatch companion raster")
            segmap = ingest_external(external)
        else:
            segmap = oversegment(raster, cfg.overseg)
        save_segment_map(segmap, overseg_path)
        cache.record("oversegment", digest, [overseg_path])
    else:
        log.info("stage oversegment: cached")
    arts["overseg"] = overseg_path
    segmap = load_segment_map(overseg_path)

    # --- training pairs ----------------------------------------------------
    pairs_path = work / "pairs.jsonl"
    heldout_path = work / "heldout.jsonl"
    if cfg.pairs:
        pairs_path = Path(cfg.pairs)
        heldout_path = None
    else:
        if not cfg.gt_map:
            raise ValueError("need either labeled pairs or a ground-truth map")
        digest = _digest(
            "pairs", overseg_path, Path(cfg.gt_map), cfg.n_train_pairs, cfg.n_heldout_pairs, cfg.seed
        )
        if not cache.fresh("pairs", digest, [pairs_path, heldout_path]):
            log.info("stage pairs: deriving from ground truth")
            gt = load_segment_map(cfg.gt_map)
            train, heldout = derive_pairs(
                segmap, gt, cfg.n_train_pairs, cfg.n_heldout_pairs, seed=cfg.seed
            )
            save_pairs_jsonl(train, pairs_path)
            save_pairs_jsonl(heldout, heldout_path)
            cache.record("pairs", digest, [pairs_path, heldout_path])
        else:
            log.info("stage pairs: cached")
    arts["pairs"] = pairs_path
    if heldout_path:
        arts["heldout"] = heldout_path

    # --- train -------------------------------------------------------------
    model_path = work / "model.bin"
    history_path = work / "history.json"
    digest = _digest(
        "train", Path(cfg.image), overseg_path, pairs_path, asdict(cfg.net), cfg.seed
    )
    if not cache.fresh("train", digest, [model_path, history_path]):
        log.info("stage train: running (%d epochs)", cfg.net.epochs)
        pairs = load_pairs_jsonl(pairs_path)
        inputs = prepare_segment_inputs(raster, segmap, cfg.net)
        result = train_siamese(pairs, inputs, cfg.net, seed=cfg.seed)
        save_model(model_path, cfg.net, result.params, result.norm)
        history_path.write_text(json.dumps(result.history))
        cache.record("train", digest, [model_path, history_path])
        if make_figures:
            from .plots import plot_loss_curve

            plot_loss_curve(result.history, work / "loss_curve.png")
    else:
        log.info("stage train: cached")
    arts["model"] = model_path
    arts["history"] = history_path
    if (work / "loss_curve.png").exists():
        arts["loss_curve"] = work / "loss_curve.png"

    # --- embed ---------------------------------------------------------
    emb_path = work / "emb.npz"
    digest = _digest("embed", Path(cfg.image), overseg_path, model_path)
    if not cache.fresh("embed", digest, [emb_path]):
        log.info("stage embed: running")
        net_cfg, params, norm = load_model(model_path)
        inputs = prepare_segment_inputs(raster, segmap, net_cfg)
        emb, weights = embed_segments(inputs, params, net_cfg, norm)
        save_feature_table(emb_path, {i: (emb[i], weights[i]) for i in emb})
        cache.record("embed", digest, [emb_path])
    else:
        log.info("stage embed: cached")
    arts["embeddings"] = emb_path

    # --- merge ---------------------------------------------------------
    merged_path = work / "merged.segr"
    trace_path = work / "trace.jsonl"
    regions_path = work / "regions.npz"
    digest = _digest("merge", overseg_path, emb_path, cfg.scale)
    if not cache.fresh("merge", digest, [merged_path, trace_path, regions_path]):
        log.info("stage merge: running at scale %.3f", cfg.scale)
        table = load_feature_table(emb_path)
        graph = build_rag(segmap, table)
        result = run_merge(graph, cfg.scale)
        save_segment_map(result.segmap, merged_path)
        save_trace(result.trace, trace_path)
        save_feature_table(regions_path, result.features)
        cache.record("merge", digest, [merged_path, trace_path, regions_path])
    else:
        log.info("stage merge: cached")
    arts["merged"] = merged_path
    arts["trace"] = trace_path
    arts["regions"] = regions_path

    # --- evaluate ------------------------------------------------------
    report = None
    if cfg.refs:
        report_path = work / "report.json"
        csv_path = work / "report.csv"
        merged = load_segment_map(merged_path)
        refs = load_reference_set(cfg.refs)
        ref_map = rasterize_polygons(refs, merged.width, merged.height)
        report = evaluate_maps(merged.labels, ref_map)
        report.save_json(report_path)
        csv_path.write_text(
            MetricsReport.csv_header("scale") + "\n" + report.csv_line(f"{cfg.scale}") + "\n"
        )
        arts["report"] = report_path
        arts["report_csv"] = csv_path
        if make_figures:
            from .plots import plot_overlay

            plot_overlay(raster, merged, work / "merged_overlay.png")
            arts["overlay"] = work / "merged_overlay.png"

    return PipelineResult(arts, report)


# ---------------------------------------------------------------------------
# merge trace persistence
# ---------------------------------------------------------------------------


def save_trace(trace: list, path) -> None:
    with open(path, "w") as f:
        for s in trace:
            f.write(
                json.dumps(
                    {"step": s.step, "a": s.a, "b": s.b, "weight": s.weight, "new_id": s.new_id}
                )
                + "\n"
            )


def load_trace(path) -> list:
    from .graph import MergeStep

    out = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            r = json.loads(line)
            out.append(MergeStep(r["step"], r["a"], r["b"], r["weight"], r["new_id"]))
    return out


# ---------------------------------------------------------------------------
# sweeps and histograms
# ---------------------------------------------------------------------------


def sweep_scales(
    segmap: SegmentMap,
    embeddings: dict,
    ref_map: np.ndarray,
    scales=DEFAULT_SWEEP_SCALES,
    full_trace: list | None = None,
):
    """Nine metrics per scale from a single exhaustive merge + replays."""
    if full_trace is None:
        graph = build_rag(segmap, embeddings)
        full_trace = run_merge(graph, np.inf).trace
    rows = []
    for s in scales:
        replayed = replay_trace(segmap.labels, full_trace, s)
        rows.append((float(s), evaluate_maps(replayed.labels, ref_map)))
    return rows, full_trace


def sweep_rows_to_csv(rows) -> str:
    lines = [MetricsReport.csv_header("scale")]
    for s, rep in rows:
        lines.append(rep.csv_line(f"{s}"))
    return "\n".join(lines) + "\n"


def distance_histogram(embeddings: dict, segmap: SegmentMap, bins: int = 20) -> dict:
    """Binned counts of graph edge weights (JSON-ready)."""
    graph = build_rag(segmap, embeddings)
    counts, edges = weight_histogram(graph.weights, bins=bins)
    return {
        "bins": bins,
        "edges": [float(e) for e in edges],
        "counts": [int(c) for c in counts],
        "total_edges": int(counts.sum()),
    }
