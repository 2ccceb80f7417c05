"""Command-line interface: pipeline stages, reports, and the label service."""

from __future__ import annotations

import json
import logging
import os
from pathlib import Path

import click
import numpy as np

from .compose import TileResult, compose
from .features import compute_all_stats
from .metrics import MetricsReport, evaluate_maps
from .net import NetConfig, load_model, save_model
from .overseg import OversegConfig, oversegment
from .pipeline import (
    DEFAULT_SWEEP_SCALES,
    PipelineConfig,
    distance_histogram,
    load_feature_table,
    run_pipeline,
    save_feature_table,
    save_trace,
    sweep_rows_to_csv,
    sweep_scales,
)
from .raster import Raster, load_raster, load_segment_map, save_raster, save_segment_map
from .sampling import extraction_centers, extract_patch, multi_level_widths
from .training import SamplePair, embed_segments, prepare_segment_inputs, train_siamese
from .vector import load_reference_set, rasterize_polygons, save_reference_set

CONFIG_ENV = "DEEPMERGE_CONFIG"

log = logging.getLogger("segmerge")


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log stage progress.")
def main(verbose):
    """Region-merging segmentation toolkit."""
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.command("oversegment")
@click.option("--in", "image", required=True, type=click.Path(exists=True))
@click.option("--grid", default=16, show_default=True, help="Grid cell step in pixels.")
@click.option("--tol", default=12.0, show_default=True, help="Per-band colour tolerance.")
@click.option("--min", "min_segment", default=4, show_default=True, help="Minimum segment size.")
@click.option("--out", required=True, type=click.Path())
def cmd_oversegment(image, grid, tol, min_segment, out):
    """Grid-seeded initial over-segmentation."""
    raster = load_raster(image)
    segmap = oversegment(raster, OversegConfig(grid, tol, min_segment))
    save_segment_map(segmap, out)
    click.echo(f"{segmap.count} primitives -> {out}")


@main.command("centers")
@click.option("--map", "map_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--img", type=click.Path(exists=True), help="Enables --dump-patches.")
@click.option("--dump-patches", type=click.Path(), help="Write per-segment patch mosaics here.")
@click.option("--limit", default=20, show_default=True, help="Max segments to dump.")
def cmd_centers(map_path, out, img, dump_patches, limit):
    """Extraction centers (and window widths) per segment."""
    from scipy import ndimage

    segmap = load_segment_map(map_path)
    slices = ndimage.find_objects(segmap.labels + 1)
    doc = {}
    for lab, sl in enumerate(slices):
        if sl is None:
            continue
        local = segmap.labels[sl] == lab
        centers = extraction_centers(local)
        widths = multi_level_widths(local, centers[0])
        doc[str(lab)] = {
            "centers": [[x + sl[1].start, y + sl[0].start] for x, y in centers],
            "widths": list(widths),
        }
    Path(out).write_text(json.dumps(doc))
    click.echo(f"centers for {len(doc)} segments -> {out}")
    if dump_patches and img:
        _dump_patch_mosaics(load_raster(img), doc, Path(dump_patches), limit)


def _dump_patch_mosaics(raster, doc, out_dir: Path, limit: int) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for lab, entry in list(doc.items())[:limit]:
        widths = entry["widths"]
        side = max(widths)
        tiles = []
        for cx, cy in entry["centers"]:
            row = []
            for w in widths:
                patch = extract_patch(raster.data, (cx, cy), w)
                pad = np.zeros((side, side, raster.bands), dtype=np.uint8)
                pad[: patch.shape[0], : patch.shape[1]] = patch
                row.append(pad)
            tiles.append(np.concatenate(row, axis=1))
        save_raster(Raster(np.concatenate(tiles, axis=0)), out_dir / f"segment_{lab}.png")


@main.command("features")
@click.option("--img", required=True, type=click.Path(exists=True))
@click.option("--map", "map_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
def cmd_features(img, map_path, out):
    """Engineered per-segment statistics as JSON Lines."""
    raster = load_raster(img)
    segmap = load_segment_map(map_path)
    stats = compute_all_stats(raster.data, segmap.labels)
    with open(out, "w") as f:
        for lab in sorted(stats):
            s = stats[lab]
            f.write(
                json.dumps(
                    {
                        "segment": lab,
                        "area": s.n,
                        "mean": list(s.mean),
                        "std": list(s.std),
                        "perimeter": s.perimeter,
                        "mbr_length": s.mbr_length,
                        "mbr_width": s.mbr_width,
                        "shape": s.shape,
                        "compactness": s.compactness,
                        "brightness": s.brightness,
                        "border": s.border,
                    }
                )
                + "\n"
            )
    click.echo(f"{len(stats)} segments -> {out}")


def _net_options(fn):
    options = [
        click.option("--epochs", default=50, show_default=True),
        click.option("--batch-size", default=20, show_default=True),
        click.option("--lr", default=1e-3, show_default=True),
        click.option("--margin", default=1.0, show_default=True),
        click.option("--ablation", default="TF+MLE+SFE", show_default=True,
                     type=click.Choice(["TF", "TF+MLE", "TF+MLE+SFE"])),
        click.option("--seed", default=0, show_default=True),
    ]
    for opt in reversed(options):
        fn = opt(fn)
    return fn


@main.command("train")
@click.option("--pairs", required=True, type=click.Path(exists=True), help="Label JSONL export.")
@click.option("--img-dir", required=True, type=click.Path(exists=True),
              help="Directory of <tile>.png + <tile>.segr referenced by the pairs.")
@click.option("--out", required=True, type=click.Path())
@_net_options
def cmd_train(pairs, img_dir, out, epochs, batch_size, lr, margin, ablation, seed):
    """Train the Siamese embedding net from labeled pairs."""
    cfg = NetConfig(epochs=epochs, batch_size=batch_size, learning_rate=lr,
                    margin=margin, ablation=ablation)
    records = [json.loads(l) for l in Path(pairs).read_text().splitlines() if l.strip()]
    tiles = sorted({r["tile"] for r in records})
    img_dir = Path(img_dir)
    inputs = {}
    base = {}
    offset = 0
    for tile in tiles:
        img_path = next(p for p in (img_dir / f"{tile}.png", img_dir / f"{tile}.ppm") if p.exists())
        raster = load_raster(img_path)
        segmap = load_segment_map(img_dir / f"{tile}.segr")
        tile_inputs = prepare_segment_inputs(raster, segmap, cfg)
        base[tile] = offset
        for lab, seg in tile_inputs.items():
            inputs[offset + lab] = seg
        offset += segmap.count
    sample_pairs = [
        SamplePair(base[r["tile"]] + int(r["a"]), base[r["tile"]] + int(r["b"]),
                   1 if r["label"] == "positive" else 0)
        for r in records
    ]
    result = train_siamese(sample_pairs, inputs, cfg, seed=seed)
    save_model(out, cfg, result.params, result.norm)
    click.echo(f"trained on {len(sample_pairs)} pairs, final loss "
               f"{result.history[-1][1]:.5f} -> {out}")


@main.command("embed")
@click.option("--model", required=True, type=click.Path(exists=True))
@click.option("--img", required=True, type=click.Path(exists=True))
@click.option("--map", "map_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
def cmd_embed(model, img, map_path, out):
    """Per-segment embeddings (center-averaged) with center counts."""
    cfg, params, norm = load_model(model)
    raster = load_raster(img)
    segmap = load_segment_map(map_path)
    inputs = prepare_segment_inputs(raster, segmap, cfg)
    emb, weights = embed_segments(inputs, params, cfg, norm)
    save_feature_table(out, {i: (emb[i], weights[i]) for i in emb})
    click.echo(f"{len(emb)} embeddings -> {out}")


@main.command("merge")
@click.option("--map", "map_path", required=True, type=click.Path(exists=True))
@click.option("--emb", required=True, type=click.Path(exists=True))
@click.option("--scale", default=0.6, show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--trace", "trace_path", type=click.Path())
@click.option("--regions", "regions_path", type=click.Path())
def cmd_merge(map_path, emb, scale, out, trace_path, regions_path):
    """RAG-NNG global-best merging to the scale threshold."""
    from .graph import build_rag, run_merge

    segmap = load_segment_map(map_path)
    table = load_feature_table(emb)
    graph = build_rag(segmap, table)
    result = run_merge(graph, scale)
    save_segment_map(result.segmap, out)
    if trace_path:
        save_trace(result.trace, trace_path)
    if regions_path:
        save_feature_table(regions_path, result.features)
    click.echo(f"{segmap.count} -> {result.segmap.count} regions ({len(result.trace)} merges)")


@main.command("compose")
@click.option("--tiles", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--scale", default=0.6, show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--regions", "regions_path", type=click.Path())
def cmd_compose(manifest_path, scale, out, regions_path):
    """Merge per-tile regions across shared tile borders."""
    manifest = json.loads(Path(manifest_path).read_text())
    root = Path(manifest_path).parent
    tiles = []
    for entry in manifest["tiles"]:
        segmap = load_segment_map(root / entry["map"])
        feats = load_feature_table(root / entry["regions"])
        tiles.append(TileResult(int(entry["x"]), int(entry["y"]), segmap, feats))
    result = compose(tiles, scale)
    save_segment_map(result.segmap, out)
    if regions_path:
        save_feature_table(regions_path, result.features)
    click.echo(f"composed {len(tiles)} tiles -> {result.segmap.count} regions -> {out}")


@main.command("evaluate")
@click.option("--map", "map_path", required=True, type=click.Path(exists=True))
@click.option("--refs", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
def cmd_evaluate(map_path, refs, out):
    """Nine accuracy metrics against reference polygons."""
    segmap = load_segment_map(map_path)
    ref_set = load_reference_set(refs)
    ref_map = rasterize_polygons(ref_set, segmap.width, segmap.height)
    report = evaluate_maps(segmap.labels, ref_map)
    report.save_json(out)
    csv_path = Path(out).with_suffix(".csv")
    csv_path.write_text(MetricsReport.csv_header() + "\n" + report.csv_line() + "\n")
    click.echo(json.dumps(report.as_dict(), indent=2))


@main.command("sweep")
@click.option("--map", "map_path", required=True, type=click.Path(exists=True),
              help="Initial (pre-merge) segment map.")
@click.option("--emb", required=True, type=click.Path(exists=True))
@click.option("--refs", required=True, type=click.Path(exists=True))
@click.option("--scales", default=",".join(str(s) for s in DEFAULT_SWEEP_SCALES),
              show_default=True)
@click.option("--out", required=True, type=click.Path(), help="CSV output path.")
def cmd_sweep(map_path, emb, refs, scales, out):
    """Metrics per scale via one merge pass plus trace replays."""
    segmap = load_segment_map(map_path)
    table = load_feature_table(emb)
    ref_set = load_reference_set(refs)
    ref_map = rasterize_polygons(ref_set, segmap.width, segmap.height)
    scale_list = [float(s) for s in scales.split(",") if s.strip()]
    rows, _ = sweep_scales(segmap, table, ref_map, scale_list)
    Path(out).write_text(sweep_rows_to_csv(rows))
    from .plots import plot_sweep

    fig_path = Path(out).with_suffix(".png")
    plot_sweep(rows, fig_path)
    click.echo(f"{len(rows)} scales -> {out} (+ {fig_path.name})")


@main.command("hist")
@click.option("--map", "map_path", required=True, type=click.Path(exists=True))
@click.option("--emb", required=True, type=click.Path(exists=True))
@click.option("--bins", default=20, show_default=True)
@click.option("--out", required=True, type=click.Path(), help="JSON output path.")
def cmd_hist(map_path, emb, bins, out):
    """Histogram of RAG edge weights (feature distances)."""
    segmap = load_segment_map(map_path)
    table = load_feature_table(emb)
    hist = distance_histogram(table, segmap, bins=bins)
    Path(out).write_text(json.dumps(hist, indent=2))
    from .plots import plot_histogram

    fig_path = Path(out).with_suffix(".png")
    plot_histogram(hist, fig_path)
    click.echo(f"{hist['total_edges']} edges -> {out} (+ {fig_path.name})")


@main.command("pipeline")
@click.option("--config", "config_path", type=click.Path(exists=True),
              help=f"YAML pipeline config (falls back to ${CONFIG_ENV}).")
def cmd_pipeline(config_path):
    """Run the staged pipeline from a YAML config."""
    path = config_path or os.environ.get(CONFIG_ENV)
    if not path:
        raise click.UsageError(f"pass --config or set {CONFIG_ENV}")
    cfg = PipelineConfig.from_yaml(path)
    result = run_pipeline(cfg)
    for name, p in result.artifacts.items():
        click.echo(f"{name}: {p}")
    if result.report:
        click.echo(json.dumps(result.report.as_dict(), indent=2))


@main.command("synth")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--size", default=512, show_default=True)
@click.option("--seed", default=7, show_default=True)
@click.option("--objects", default=16, show_default=True)
def cmd_synth(out_dir, size, seed, objects):
    """Generate a synthetic textured mosaic with ground truth."""
    from .synth import SynthConfig, generate_mosaic

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    res = generate_mosaic(SynthConfig(size=size, seed=seed, n_objects=objects))
    save_raster(res.raster, out / "image.png")
    save_segment_map(res.gt, out / "gt.segr")
    save_reference_set(res.refs, out / "refs.json")
    click.echo(f"{res.gt.count} ground-truth regions -> {out}")


@main.command("serve")
@click.option("--data", required=True, type=click.Path(exists=True),
              help="Directory of <tile>.png + <tile>.segr files.")
@click.option("--labels", required=True, type=click.Path(), help="Label journal path.")
@click.option("--static", "static_dir", type=click.Path(exists=True),
              help="Static UI assets to serve at /.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8008, show_default=True)
def cmd_serve(data, labels, static_dir, host, port):
    """Run the pair-labeling HTTP service."""
    import uvicorn

    from .service import create_app

    app = create_app(data, labels, static_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
