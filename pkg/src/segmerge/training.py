"""Contrastive training of the Siamese embedding net and gradient checks.

A training pair references two adjacent segments with a binary label
(1 same object, 0 different). Each segment's embedding is the average of
its extraction centers' embeddings; both twins share one parameter set,
so gradients from the left and right forward passes accumulate into the
same arrays. The optimizer is adaptive moment estimation (Adam) on
minibatches. Feature normalization is fitted on the training corpus and
travels with the model.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .features import FeatureNorm, compute_all_stats
from .net import NetConfig, backward_batch, forward_batch, pair_loss_and_grads, patchset_blocks
from .raster import Raster, SegmentMap
from .sampling import THREE_CENTER_MIN

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class SamplePair:
    left: int
    right: int
    label: int  # 1 positive (same object), 0 negative

    def __post_init__(self):
        if self.left == self.right:
            raise ValueError("pair endpoints must differ")
        if self.label not in (0, 1):
            raise ValueError("label must be 0 or 1")


@dataclass
class SegmentInput:
    """Network-ready data for one segment: per-center per-level block
    matrices plus the raw engineered feature vector."""

    center_blocks: list  # one list of level blocks per extraction center
    raw_feat: np.ndarray

    @property
    def weight(self) -> int:
        return len(self.center_blocks)


@dataclass
class TrainResult:
    params: dict
    norm: FeatureNorm
    history: list  # (epoch, mean loss)


def prepare_segment_inputs(
    raster: Raster,
    segmap: SegmentMap,
    cfg: NetConfig,
    labels=None,
    three_center_min: int = THREE_CENTER_MIN,
) -> dict[int, SegmentInput]:
    """Resize patches and collect raw features for every requested segment.

    Centers and window ratios only depend on the segment's own pixels, so
    they run on the bounding-box crop; patch content comes from the full
    image (edge replication happens at the image border only).
    """
    from .sampling import extraction_centers, extract_patch, multi_level_widths

    data = raster.data
    stats = compute_all_stats(data, segmap.labels)
    wanted = sorted(stats.keys()) if labels is None else sorted(labels)
    slices = ndimage.find_objects(segmap.labels + 1)
    out: dict[int, SegmentInput] = {}
    for lab in wanted:
        sl = slices[lab]
        local = segmap.labels[sl] == lab
        x_off, y_off = sl[1].start, sl[0].start
        centers = extraction_centers(local, three_center_min)
        widths = multi_level_widths(local, centers[0])
        blocks = []
        for cx, cy in centers:
            patches = [
                extract_patch(data, (cx + x_off, cy + y_off), widths[lv])
                for lv in range(cfg.levels)
            ]
            blocks.append(patchset_blocks(patches, cfg))
        out[lab] = SegmentInput(blocks, stats[lab].raw_vector())
    return out


def _stack_batch(inputs: dict, ids: list, cfg: NetConfig, norm: FeatureNorm):
    """Flatten segments' centers into one forward batch.

    Returns per-level block tensors, normalized features, and for each
    segment the (start, count) slice of its centers in the batch.
    """
    blocks = [[] for _ in range(cfg.levels)]
    feats = []
    spans = {}
    cursor = 0
    for sid in ids:
        seg = inputs[sid]
        spans[sid] = (cursor, seg.weight)
        for center in seg.center_blocks:
            for lv in range(cfg.levels):
                blocks[lv].append(center[lv])
            feats.append((seg.raw_feat - norm.shift) / norm.scale)
        cursor += seg.weight
    stacked = [np.stack(b) for b in blocks]
    fmat = np.stack(feats) if cfg.use_features else None
    return stacked, fmat, spans


def _segment_embeddings(emb: np.ndarray, spans: dict, ids: list) -> np.ndarray:
    return np.stack([emb[s : s + c].mean(axis=0) for s, c in (spans[i] for i in ids)])


def batch_loss_and_grads(
    pairs: list,
    inputs: dict,
    params: dict,
    cfg: NetConfig,
    norm: FeatureNorm,
    train: bool = False,
    rng: np.random.Generator | None = None,
):
    """Mean pair loss over a minibatch and gradients for all parameters."""
    ids = sorted({p.left for p in pairs} | {p.right for p in pairs})
    blocks, feats, spans = _stack_batch(inputs, ids, cfg, norm)
    emb, cache = forward_batch(blocks, feats, params, cfg, train=train, rng=rng)

    idx = {sid: k for k, sid in enumerate(ids)}
    seg_emb = _segment_embeddings(emb, spans, ids)
    li = np.array([idx[p.left] for p in pairs])
    ri = np.array([idx[p.right] for p in pairs])
    alphas = np.array([p.label for p in pairs])
    loss, dleft, dright = pair_loss_and_grads(seg_emb[li], seg_emb[ri], alphas, cfg.margin)

    dseg = np.zeros_like(seg_emb)
    np.add.at(dseg, li, dleft)
    np.add.at(dseg, ri, dright)
    demb = np.zeros_like(emb)
    for sid in ids:
        s, c = spans[sid]
        demb[s : s + c] = dseg[idx[sid]] / c
    grads = backward_batch(demb, cache, params, cfg)
    return loss, grads


class Adam:
    def __init__(self, params: dict, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            mhat = self.m[k] / (1 - self.b1**self.t)
            vhat = self.v[k] / (1 - self.b2**self.t)
            params[k] -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def fit_norm_from_pairs(pairs: list, inputs: dict) -> FeatureNorm:
    ids = sorted({p.left for p in pairs} | {p.right for p in pairs})
    raw = np.stack([inputs[i].raw_feat for i in ids])
    return FeatureNorm.fit_zscore(raw)


def train_siamese(
    pairs: list,
    inputs: dict,
    cfg: NetConfig,
    seed: int = 0,
    params: dict | None = None,
) -> TrainResult:
    """Minibatch contrastive training; returns weights, the fitted feature
    normalization, and the per-epoch loss curve."""
    from .net import init_params

    if not any(p.label == 1 for p in pairs) or not any(p.label == 0 for p in pairs):
        raise ValueError("need at least one positive and one negative pair")
    rng = np.random.default_rng(seed)
    norm = fit_norm_from_pairs(pairs, inputs)
    if params is None:
        params = init_params(cfg, rng)
    params = {k: v.copy() for k, v in params.items()}
    opt = Adam(params, cfg.learning_rate)
    history = []
    order = np.arange(len(pairs))
    for epoch in range(cfg.epochs):
        rng.shuffle(order)
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = [pairs[i] for i in order[start : start + cfg.batch_size]]
            loss, grads = batch_loss_and_grads(
                batch, inputs, params, cfg, norm, train=True, rng=rng
            )
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {start // cfg.batch_size} "
                    f"(lr={cfg.learning_rate}, batch_size={cfg.batch_size})"
                )
            opt.step(params, grads)
            losses.append(loss)
        mean_loss = float(np.mean(losses))
        history.append((epoch, mean_loss))
        log.info("epoch %d: loss %.5f", epoch, mean_loss)
    return TrainResult(params, norm, history)


def embed_segments(
    inputs: dict, params: dict, cfg: NetConfig, norm: FeatureNorm
) -> tuple[dict, dict]:
    """Per-segment embedding (center average) and center-count weights."""
    ids = sorted(inputs.keys())
    embeddings: dict[int, np.ndarray] = {}
    weights: dict[int, int] = {}
    chunk = 256
    for start in range(0, len(ids), chunk):
        part = ids[start : start + chunk]
        blocks, feats, spans = _stack_batch(inputs, part, cfg, norm)
        emb, _ = forward_batch(blocks, feats, params, cfg, train=False)
        for sid in part:
            s, c = spans[sid]
            embeddings[sid] = emb[s : s + c].mean(axis=0)
            weights[sid] = c
    return embeddings, weights


# ---------------------------------------------------------------------------
# verification helpers
# ---------------------------------------------------------------------------


def grad_check(
    pairs: list,
    inputs: dict,
    params: dict,
    cfg: NetConfig,
    norm: FeatureNorm,
    n_samples: int = 200,
    step: float = 1e-5,
    seed: int = 0,
) -> float:
    """Max relative error of analytic gradients vs central differences over
    a random sample of parameter entries (inference mode, double precision)."""
    rng = np.random.default_rng(seed)
    _, grads = batch_loss_and_grads(pairs, inputs, params, cfg, norm, train=False)

    def loss_at(p):
        l, _ = batch_loss_and_grads(pairs, inputs, p, cfg, norm, train=False)
        return l

    keys = sorted(params.keys())
    sizes = np.array([params[k].size for k in keys])
    total = int(sizes.sum())
    picks = rng.choice(total, size=min(n_samples, total), replace=False)
    offsets = np.cumsum(sizes) - sizes
    worst = 0.0
    for flat in np.sort(picks):
        ki = int(np.searchsorted(offsets, flat, side="right") - 1)
        key = keys[ki]
        local = int(flat - offsets[ki])
        idx = np.unravel_index(local, params[key].shape)
        orig = params[key][idx]
        params[key][idx] = orig + step
        lp = loss_at(params)
        params[key][idx] = orig - step
        lm = loss_at(params)
        params[key][idx] = orig
        numeric = (lp - lm) / (2 * step)
        analytic = grads[key][idx]
        denom = max(abs(numeric), abs(analytic))
        if denom > 1e-12:
            worst = max(worst, abs(numeric - analytic) / denom)
    return worst


def pair_distances(pairs: list, embeddings: dict) -> np.ndarray:
    return np.array(
        [np.linalg.norm(embeddings[p.left] - embeddings[p.right]) for p in pairs]
    )


def distance_auc(pairs: list, embeddings: dict) -> float:
    """AUC of 'distance separates negatives from positives' (rank-based)."""
    d = pair_distances(pairs, embeddings)
    labels = np.array([p.label for p in pairs])
    pos, neg = d[labels == 1], d[labels == 0]
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("need both pair classes for AUC")
    order = np.argsort(np.concatenate([pos, neg]), kind="stable")
    ranks = np.empty(len(order))
    ranks[order] = np.arange(1, len(order) + 1)
    # midranks for ties
    alld = np.concatenate([pos, neg])
    for val in np.unique(alld):
        tied = alld == val
        if tied.sum() > 1:
            ranks[tied] = ranks[tied].mean()
    r_pos = ranks[: len(pos)].sum()
    u = r_pos - len(pos) * (len(pos) + 1) / 2
    return 1.0 - u / (len(pos) * len(neg))
