import numpy as np
import pytest

from segmerge.graph import (
    RegionGraph,
    RegionNode,
    build_rag,
    edge_weight,
    merge_features,
    replay_trace,
    run_merge,
    weight_histogram,
)
from segmerge.raster import SegmentMap

from helpers import random_connected_map


def graph_from_arrays(features, weights, edges, labels=None):
    """Hand-built RegionGraph; labels default to a 1-row strip."""
    nodes = {
        i: RegionNode(i, np.asarray(f, dtype=np.float64), w, 1, [i])
        for i, (f, w) in enumerate(zip(features, weights))
    }
    if labels is None:
        labels = np.arange(len(features), dtype=np.int32)[None, :]
    wmap = {}
    adj = {i: set() for i in nodes}
    for a, b in edges:
        a, b = min(a, b), max(a, b)
        wmap[(a, b)] = edge_weight(nodes[a].feature, nodes[b].feature)
        adj[a].add(b)
        adj[b].add(a)
    return RegionGraph(nodes, wmap, adj, labels)


def naive_merge(graph: RegionGraph, scale: float):
    """Per-step full scan for the minimum edge; same tie rule and feature
    update as run_merge. Returns the executed (a, b, weight) sequence."""
    nodes, weights, adj = graph.copy_state()
    sequence = []
    while weights:
        (w, a, b) = min((w, e[0], e[1]) for e, w in weights.items())
        if w > scale:
            break
        sequence.append((a, b, w))
        na, nb = nodes[a], nodes[b]
        feat = (na.weight * na.feature + nb.weight * nb.feature) / (na.weight + nb.weight)
        na.feature, na.weight = feat, na.weight + nb.weight
        na.members += nb.members
        del nodes[b]
        neighbors = (adj[a] | adj[b]) - {a, b}
        for t in list(adj[a]):
            weights.pop((min(a, t), max(a, t)), None)
            adj[t].discard(a)
        for t in list(adj[b]):
            weights.pop((min(b, t), max(b, t)), None)
            adj[t].discard(b)
        del adj[b]
        adj[a] = set(neighbors)
        for t in neighbors:
            adj[t].add(a)
            weights[(min(a, t), max(a, t))] = float(np.linalg.norm(feat - nodes[t].feature))
    return sequence, nodes


def random_graph(rng, n_nodes, extra_edges=1.0, dim=4):
    feats = rng.normal(size=(n_nodes, dim))
    weights = rng.integers(1, 4, size=n_nodes).tolist()
    # random spanning tree + extras keeps it connected
    edges = set()
    order = rng.permutation(n_nodes)
    for i in range(1, n_nodes):
        j = order[rng.integers(0, i)]
        edges.add((min(order[i], j), max(order[i], j)))
    for _ in range(int(extra_edges * n_nodes)):
        a, b = rng.integers(0, n_nodes, size=2)
        if a != b:
            edges.add((min(a, b), max(a, b)))
    return graph_from_arrays(feats, weights, sorted(edges))


def test_edge_weight_examples():
    assert edge_weight([0, 0], [3, 4]) == 5.0
    assert edge_weight([1.0, 2.0], [1.0, 2.0]) == 0.0
    a, b = np.array([1.0, 7.0]), np.array([-2.0, 3.5])
    assert edge_weight(a, b) == edge_weight(b, a)
    with pytest.raises(ValueError, match="mismatch"):
        edge_weight([1.0], [1.0, 2.0])


def test_merge_features_examples():
    f, w = merge_features(np.array([2.0]), 1, np.array([4.0]), 3)
    assert f[0] == pytest.approx(3.5) and w == 4
    f2, w2 = merge_features(np.array([1.5, 2.5]), 2, np.array([1.5, 2.5]), 5)
    assert np.allclose(f2, [1.5, 2.5]) and w2 == 7
    fa, wa = merge_features(np.array([1.0]), 2, np.array([5.0]), 3)
    fb, wb = merge_features(np.array([5.0]), 3, np.array([1.0]), 2)
    assert np.allclose(fa, fb) and wa == wb


def test_build_rag_two_segments():
    labels = np.zeros((4, 4), dtype=np.int32)
    labels[:, 2:] = 1
    emb = {0: (np.zeros(3), 1), 1: (np.ones(3), 2)}
    g = build_rag(SegmentMap(labels), emb)
    assert set(g.weights) == {(0, 1)}
    assert g.nodes[1].weight == 2
    assert g.nodes[0].area == 8


def test_build_rag_stripes_path_graph():
    labels = np.repeat(np.array([[0, 1, 2]], dtype=np.int32), 2, axis=0)
    emb = {i: (np.array([float(i)]), 1) for i in range(3)}
    g = build_rag(SegmentMap(labels), emb)
    assert set(g.weights) == {(0, 1), (1, 2)}


def test_build_rag_missing_embedding():
    labels = np.zeros((2, 2), dtype=np.int32)
    with pytest.raises(KeyError, match="missing embedding"):
        build_rag(SegmentMap(labels), {})


def test_build_rag_adjacency_matches_bruteforce():
    rng = np.random.default_rng(31)
    m = random_connected_map(64, 64, 30, rng)
    emb = {i: (rng.normal(size=4), 1) for i in range(m.count)}
    g = build_rag(m, emb)
    expected = set()
    lab = m.labels
    for y in range(64):
        for x in range(64):
            for ny, nx in ((y + 1, x), (y, x + 1)):
                if ny < 64 and nx < 64 and lab[y, x] != lab[ny, nx]:
                    a, b = sorted((int(lab[y, x]), int(lab[ny, nx])))
                    expected.add((a, b))
    assert set(g.weights) == expected


def test_run_merge_three_node_hand_trace():
    g = graph_from_arrays([[0.0], [0.1], [1.0]], [1, 1, 1], [(0, 1), (1, 2)])
    res = run_merge(g, 0.5)
    assert len(res.trace) == 1
    step = res.trace[0]
    assert (step.a, step.b) == (0, 1)
    assert step.weight == pytest.approx(0.1)
    assert res.segmap.count == 2
    feats = {tuple(np.round(f, 6)): w for f, w in res.features.values()}
    assert (0.05,) in feats
    # remaining edge distance 0.95 > 0.5 stopped the loop
    assert feats[(0.05,)] == 2


def test_run_merge_scale_zero_distinct_features():
    rng = np.random.default_rng(32)
    g = random_graph(rng, 12)
    res = run_merge(g, 0.0)
    assert len(res.trace) == 0
    assert res.segmap.count == 12


def test_run_merge_full_collapse_weighted_mean():
    rng = np.random.default_rng(33)
    g = random_graph(rng, 20)
    res = run_merge(g, np.inf)
    assert res.segmap.count == 1
    (feat, weight), = res.features.values()
    total_w = sum(n.weight for n in g.nodes.values())
    expected = sum(n.weight * n.feature for n in g.nodes.values()) / total_w
    assert weight == total_w
    assert np.allclose(feat, expected, atol=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_merge_sequence_matches_naive_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    g = random_graph(rng, int(rng.integers(20, 80)))
    scale = float(rng.uniform(0.2, 3.0))
    res = run_merge(g, scale)
    expected_seq, expected_nodes = naive_merge(g, scale)
    got_seq = [(s.a, s.b, s.weight) for s in res.trace]
    assert got_seq == expected_seq
    got_parts = sorted(sorted(n.members) for n in expected_nodes.values())
    # partitions must agree; recompute run_merge partition from features map
    res_parts = []
    out = res.segmap.labels
    orig = g.labels
    for lab in range(res.segmap.count):
        res_parts.append(sorted(np.unique(orig[out == lab]).tolist()))
    assert sorted(res_parts) == got_parts


def test_nng_soundness_popped_edge_is_global_min():
    rng = np.random.default_rng(34)
    g = random_graph(rng, 40)

    def observer(w, e, weights):
        assert (w, e[0], e[1]) == min((wt, a, b) for (a, b), wt in weights.items())

    run_merge(g, np.inf, observer=observer)


def test_no_merge_above_scale_and_remaining_edges_exceed():
    rng = np.random.default_rng(35)
    g = random_graph(rng, 30)
    scale = 0.8
    res = run_merge(g, scale)
    assert all(s.weight <= scale for s in res.trace)
    # rebuild remaining weights from surviving node features
    feats = {lab: f for lab, (f, _) in res.features.items()}
    from segmerge.raster import adjacency_pairs

    for a, b in adjacency_pairs(res.segmap.labels).tolist():
        assert edge_weight(feats[a], feats[b]) > scale


def test_node_count_decreases_by_one_per_merge():
    rng = np.random.default_rng(36)
    g = random_graph(rng, 25)
    res = run_merge(g, np.inf)
    assert res.segmap.count == 25 - len(res.trace)


def test_order_independent_final_feature():
    rng = np.random.default_rng(37)
    for _ in range(5):
        g = random_graph(rng, 15)
        reference = None
        for _ in range(4):
            # random merge order via shuffled union of edges
            nodes, _, adj = g.copy_state()
            ids = list(nodes)
            rng.shuffle(ids)
            acc_f, acc_w = None, 0
            for i in ids:
                if acc_f is None:
                    acc_f, acc_w = nodes[i].feature, nodes[i].weight
                else:
                    acc_f, acc_w = merge_features(acc_f, acc_w, nodes[i].feature, nodes[i].weight)
            if reference is None:
                reference = (acc_f, acc_w)
            assert np.allclose(acc_f, reference[0], atol=1e-9)
            assert acc_w == reference[1]


def test_replay_trace_matches_direct_runs():
    rng = np.random.default_rng(38)
    g = random_graph(rng, 40)
    full = run_merge(g, np.inf)
    for scale in (0.0, 0.3, 0.7, 1.2, 2.5):
        direct = run_merge(g, scale)
        replayed = replay_trace(g.labels, full.trace, scale)
        assert (replayed.labels == direct.segmap.labels).all()


def test_weight_histogram_sums_to_edge_count():
    rng = np.random.default_rng(39)
    g = random_graph(rng, 30)
    counts, edges = weight_histogram(g.weights)
    assert counts.sum() == len(g.weights)
    assert len(counts) == 20
