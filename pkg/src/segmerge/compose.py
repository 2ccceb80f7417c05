"""Cross-tile composition: removes edge effects after per-tile merging.

Tiles are merged independently, then regions abutting across shared
tile borders form a border-only adjacency graph that runs the same
global-best merge loop at the same scale, using the region features and
center-count weights persisted from per-tile merging (never re-extracted
embeddings). Interior regions are untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import RegionGraph, RegionNode, edge_weight, merge_features, run_merge
from .raster import SegmentMap, adjacency_pairs, relabel_dense


@dataclass
class TileResult:
    x_off: int
    y_off: int
    segmap: SegmentMap
    features: dict  # tile-local label -> (feature, center-count weight)


@dataclass
class ComposeResult:
    segmap: SegmentMap
    features: dict  # global dense label -> (feature, weight)


def _validate_grid(tiles: list) -> tuple[int, int]:
    width = max(t.x_off + t.segmap.width for t in tiles)
    height = max(t.y_off + t.segmap.height for t in tiles)
    occupancy = np.zeros((height, width), dtype=np.int32)
    for t in tiles:
        occupancy[t.y_off : t.y_off + t.segmap.height, t.x_off : t.x_off + t.segmap.width] += 1
    if (occupancy != 1).any():
        raise ValueError("tile grid gaps/overlaps")
    return width, height


def compose(tiles: list, scale: float) -> ComposeResult:
    """Merge per-tile regions across shared borders at the given scale."""
    width, height = _validate_grid(tiles)
    global_map = np.empty((height, width), dtype=np.int32)
    bases = []
    feats: dict[int, tuple] = {}
    base = 0
    for t in tiles:
        bases.append(base)
        global_map[
            t.y_off : t.y_off + t.segmap.height, t.x_off : t.x_off + t.segmap.width
        ] = (t.segmap.labels + base)
        for lab, (f, w) in t.features.items():
            feats[base + lab] = (np.asarray(f, dtype=np.float64), int(w))
        base += t.segmap.count
    bounds = np.array(bases + [base])

    def tile_of(gid: np.ndarray) -> np.ndarray:
        return np.searchsorted(bounds, gid, side="right") - 1

    pairs = adjacency_pairs(global_map)
    cross = pairs[tile_of(pairs[:, 0]) != tile_of(pairs[:, 1])]

    if len(cross):
        areas = np.bincount(global_map.ravel())
        node_ids = sorted(set(cross[:, 0].tolist()) | set(cross[:, 1].tolist()))
        nodes = {
            gid: RegionNode(gid, feats[gid][0], feats[gid][1], int(areas[gid]), [gid])
            for gid in node_ids
        }
        weights = {}
        adj: dict[int, set] = {gid: set() for gid in node_ids}
        for a, b in cross.tolist():
            weights[(a, b)] = edge_weight(feats[a][0], feats[b][0])
            adj[a].add(b)
            adj[b].add(a)
        strip = np.array(node_ids, dtype=np.int32)[None, :]
        border_graph = RegionGraph(nodes, weights, adj, strip)
        trace = run_merge(border_graph, scale).trace
    else:
        trace = []

    parent = np.arange(base, dtype=np.int64)

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = int(parent[x])
        return int(x)

    for step in trace:
        fa, fb = find(step.a), find(step.b)
        merged, w = merge_features(feats[fa][0], feats[fa][1], feats[fb][0], feats[fb][1])
        parent[fb] = fa
        feats[fa] = (merged, w)
        del feats[fb]

    roots = np.array([find(i) for i in range(base)], dtype=np.int64)
    final_labels = relabel_dense(roots[global_map].astype(np.int32))
    segmap = SegmentMap(final_labels)

    out_feats = {}
    flat_g, flat_f = global_map.ravel(), final_labels.ravel()
    uniq, first = np.unique(flat_f, return_index=True)
    for lab, idx in zip(uniq.tolist(), first.tolist()):
        out_feats[lab] = feats[find(int(flat_g[idx]))]
    return ComposeResult(segmap, out_feats)


def cut_tiles(result: ComposeResult, tile_height: int, tile_width: int) -> list:
    """Slice a composed result back into TileResults (regions keep their
    features; parts of a region falling in different tiles duplicate it)."""
    labels = result.segmap.labels
    h, w = labels.shape
    tiles = []
    for y0 in range(0, h, tile_height):
        for x0 in range(0, w, tile_width):
            sub = labels[y0 : y0 + tile_height, x0 : x0 + tile_width]
            uniq = np.unique(sub)
            remap = {int(g): i for i, g in enumerate(uniq.tolist())}
            local = np.vectorize(remap.get, otypes=[np.int32])(sub)
            feats = {remap[int(g)]: result.features[int(g)] for g in uniq.tolist()}
            tiles.append(TileResult(x0, y0, SegmentMap(local), feats))
    return tiles
