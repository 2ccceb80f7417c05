"""Region adjacency graph with nearest-neighbour-graph merge queue.

Nodes carry a feature vector and a center-count weight; edge weights are
Euclidean feature distances. Merging repeatedly extracts the globally
minimum-weight edge until it exceeds the scale threshold. The minimum
is found through the NNG: each node's "direction" is its least incident
edge under the strict order (weight, small id, big id), and an edge that
is the direction of both endpoints forms a "cycle". The global minimum
edge is always a cycle, so a lazy heap of cycle edges pops it in
O(log n). Merged features are the center-count-weighted average of the
two parents; the new node keeps the smaller id.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .raster import SegmentMap, adjacency_pairs, relabel_dense


@dataclass
class RegionNode:
    id: int
    feature: np.ndarray
    weight: int  # number of extraction centers accumulated
    area: int
    members: list  # original segment labels

    def __post_init__(self):
        if self.weight < 1:
            raise ValueError("node weight must be >= 1")
        if not np.all(np.isfinite(self.feature)):
            raise ValueError("non-finite node feature")


@dataclass
class MergeStep:
    step: int
    a: int
    b: int
    weight: float
    new_id: int


@dataclass
class RegionGraph:
    nodes: dict  # id -> RegionNode
    weights: dict  # (a, b) with a < b -> float
    adj: dict  # id -> set of ids
    labels: np.ndarray  # original segment map the node ids refer to

    def copy_state(self):
        nodes = {
            i: RegionNode(n.id, n.feature.copy(), n.weight, n.area, list(n.members))
            for i, n in self.nodes.items()
        }
        return nodes, dict(self.weights), {i: set(s) for i, s in self.adj.items()}


@dataclass
class MergeResult:
    segmap: SegmentMap
    trace: list  # MergeStep
    features: dict  # dense output label -> (feature, weight)
    node_of_label: dict  # dense output label -> surviving node id


def edge_weight(f_a: np.ndarray, f_b: np.ndarray) -> float:
    """Euclidean feature distance (the merging criterion)."""
    f_a, f_b = np.asarray(f_a), np.asarray(f_b)
    if f_a.shape != f_b.shape:
        raise ValueError(f"feature dim mismatch: {f_a.shape} vs {f_b.shape}")
    return float(np.linalg.norm(f_a - f_b))


def merge_features(f_l: np.ndarray, m: int, f_r: np.ndarray, n: int):
    """Center-count-weighted feature average; the new weight is m + n."""
    if m < 1 or n < 1:
        raise ValueError("weights must be >= 1")
    return (m * np.asarray(f_l) + n * np.asarray(f_r)) / (m + n), m + n


def build_rag(segmap: SegmentMap, embeddings: dict) -> RegionGraph:
    """One node per segment (feature, center-count weight), one edge per
    4-neighbour label adjacency, weighted by ``edge_weight``."""
    labels = segmap.labels
    areas = np.bincount(labels.ravel())
    nodes = {}
    for lab in range(int(labels.max()) + 1):
        if lab not in embeddings:
            raise KeyError(f"missing embedding for label {lab}")
        feat, weight = embeddings[lab]
        nodes[lab] = RegionNode(lab, np.asarray(feat, dtype=np.float64), int(weight), int(areas[lab]), [lab])
    weights = {}
    adj: dict[int, set] = {lab: set() for lab in nodes}
    for a, b in adjacency_pairs(labels).tolist():
        weights[(a, b)] = edge_weight(nodes[a].feature, nodes[b].feature)
        adj[a].add(b)
        adj[b].add(a)
    return RegionGraph(nodes, weights, adj, labels)


class _NngQueue:
    """Direction bookkeeping plus a lazy heap of cycle edges."""

    def __init__(self, weights: dict, adj: dict):
        self.weights = weights
        self.adj = adj
        self.direction: dict[int, tuple | None] = {}
        self.heap: list = []
        for node in adj:
            self.direction[node] = self._least_edge(node)
        for node in adj:
            self._push_if_cycle(node)

    def _least_edge(self, node: int):
        best = None
        for nb in self.adj[node]:
            e = (node, nb) if node < nb else (nb, node)
            key = (self.weights[e], e[0], e[1])
            if best is None or key < best:
                best = key
        return None if best is None else (best[1], best[2])

    def _push_if_cycle(self, node: int) -> None:
        e = self.direction.get(node)
        if e is None:
            return
        other = e[1] if e[0] == node else e[0]
        if self.direction.get(other) == e:
            heapq.heappush(self.heap, (self.weights[e], e[0], e[1]))

    def refresh(self, affected) -> None:
        for node in affected:
            self.direction[node] = self._least_edge(node)
        for node in affected:
            self._push_if_cycle(node)

    def pop_min_cycle(self):
        """(weight, edge) of the globally minimal edge, or None if no edges."""
        while self.heap:
            w, a, b = heapq.heappop(self.heap)
            e = (a, b)
            if self.weights.get(e) != w:
                continue  # stale: edge gone or re-weighted
            if self.direction.get(a) != e or self.direction.get(b) != e:
                continue  # stale: no longer a mutual direction
            return w, e
        if self.weights:
            raise AssertionError("NNG queue empty while edges remain")
        return None


def run_merge(graph: RegionGraph, scale: float, observer=None) -> MergeResult:
    """Merge until the least edge weight exceeds ``scale``.

    The input graph is not modified. ``observer(weight, edge, weights)``
    is called before each merge (used by tests to assert NNG soundness).
    """
    if scale < 0:
        raise ValueError("scale must be >= 0")
    nodes, weights, adj = graph.copy_state()
    queue = _NngQueue(weights, adj)
    trace: list[MergeStep] = []

    while True:
        popped = queue.pop_min_cycle()
        if popped is None:
            break
        w, (a, b) = popped
        if w > scale:
            break
        if observer is not None:
            observer(w, (a, b), weights)

        na, nb = nodes[a], nodes[b]
        feature, weight = merge_features(na.feature, na.weight, nb.feature, nb.weight)
        merged = RegionNode(a, feature, weight, na.area + nb.area, na.members + nb.members)
        nodes[a] = merged
        del nodes[b]
        trace.append(MergeStep(len(trace), a, b, w, a))

        neighbors = (adj[a] | adj[b]) - {a, b}
        for t in list(adj[a]):
            weights.pop((min(a, t), max(a, t)), None)
            adj[t].discard(a)
        for t in list(adj[b]):
            weights.pop((min(b, t), max(b, t)), None)
            adj[t].discard(b)
        del adj[b]
        queue.direction.pop(b, None)
        adj[a] = set(neighbors)
        for t in neighbors:
            adj[t].add(a)
            e = (min(a, t), max(a, t))
            weights[e] = edge_weight(feature, nodes[t].feature)
        queue.refresh({a} | neighbors)

    return _finalize(graph.labels, nodes, trace)


def _finalize(labels: np.ndarray, nodes: dict, trace: list) -> MergeResult:
    node_map = np.empty(int(labels.max()) + 1, dtype=np.int64)
    for node in nodes.values():
        for member in node.members:
            node_map[member] = node.id
    merged_labels = relabel_dense(node_map[labels].astype(np.int32))
    segmap = SegmentMap(merged_labels)

    # dense output label for each surviving node
    dense_of_node = {}
    first = np.full(int(merged_labels.max()) + 1, -1, dtype=np.int64)
    flat_orig = labels.ravel()
    flat_out = merged_labels.ravel()
    uniq, first_idx = np.unique(flat_out, return_index=True)
    for lab, idx in zip(uniq.tolist(), first_idx.tolist()):
        dense_of_node[int(node_map[flat_orig[idx]])] = lab
    del first

    features = {}
    node_of_label = {}
    for node_id, node in nodes.items():
        lab = dense_of_node[node_id]
        features[lab] = (node.feature, node.weight)
        node_of_label[lab] = node_id
    return MergeResult(segmap, trace, features, node_of_label)


def replay_trace(labels: np.ndarray, trace: list, scale: float) -> SegmentMap:
    """Partition after truncating a full merge trace at the first executed
    weight above ``scale``; equals running the merge at that scale."""
    n = int(labels.max()) + 1
    parent = np.arange(n, dtype=np.int64)

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for step in trace:
        if step.weight > scale:
            break
        parent[find(step.b)] = find(step.a)
    roots = np.array([find(i) for i in range(n)], dtype=np.int64)
    return SegmentMap(relabel_dense(roots[labels].astype(np.int32)))


def weight_histogram(weights, bins: int = 20):
    """Fixed-bin histogram of edge weights over [0, max]."""
    values = np.asarray(sorted(weights.values()) if isinstance(weights, dict) else weights, dtype=np.float64)
    top = float(values.max()) if len(values) else 1.0
    top = top if top > 0 else 1.0
    counts, edges = np.histogram(values, bins=bins, range=(0.0, top))
    return counts, edges
