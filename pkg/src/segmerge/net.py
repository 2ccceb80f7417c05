"""Siamese multi-level-embedding transformer, from scratch on numpy.

Token sequence per extraction center: a learned class token, t*t patch
tokens per level (four concentric levels resized to fixed sides and
linearly embedded with kernel = stride), and one token projecting the
engineered segment features. A stack of pre-layernorm encoder blocks
(multi-head self-attention + GELU MLP, residual) feeds a final
layernorm; the class token's linear projection is the embedding.

Everything runs in double precision with hand-written backward passes
so gradients can be verified against central finite differences.

Ablations: "TF" uses only the level-1 patch tokens, "TF+MLE" all four
levels, "TF+MLE+SFE" adds the feature token.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import erf

from .features import FeatureNorm

ABLATIONS = ("TF", "TF+MLE", "TF+MLE+SFE")
LN_EPS = 1e-6
MODEL_FORMAT_VERSION = 1


@dataclass
class NetConfig:
    token_dim: int = 32  # D
    layers: int = 2  # L
    heads: int = 4
    tokens_side: int = 2  # t; t*t tokens per level
    embed_dim: int = 16  # E, class-token projection output
    level_sides: tuple = (32, 16, 8, 4)  # resize targets for P1..P4
    bands: int = 3
    feature_dim: int = 10
    mlp_ratio: int = 4
    margin: float = 1.0
    dropout: float = 0.1
    learning_rate: float = 1e-3
    batch_size: int = 20
    epochs: int = 50
    ablation: str = "TF+MLE+SFE"

    def __post_init__(self):
        self.level_sides = tuple(int(s) for s in self.level_sides)
        if self.token_dim % self.heads != 0:
            raise ValueError("token_dim must be divisible by heads")
        if self.tokens_side < 1:
            raise ValueError("tokens_side must be >= 1")
        if self.embed_dim < 2:
            raise ValueError("embed_dim must be >= 2")
        if self.margin <= 0:
            raise ValueError("margin must be > 0")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must be in [0, 1)")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}")
        if len(self.level_sides) != 4:
            raise ValueError("need four level sides")
        for s in self.level_sides[: self.levels]:
            if s % self.tokens_side != 0:
                raise ValueError(f"level side {s} not divisible by tokens_side")

    @property
    def levels(self) -> int:
        return 1 if self.ablation == "TF" else 4

    @property
    def use_features(self) -> bool:
        return self.ablation == "TF+MLE+SFE"

    @property
    def kernels(self) -> tuple:
        return tuple(s // self.tokens_side for s in self.level_sides)

    @property
    def head_dim(self) -> int:
        return self.token_dim // self.heads

    @property
    def patch_tokens(self) -> int:
        return self.levels * self.tokens_side**2

    @property
    def total_tokens(self) -> int:
        return self.patch_tokens + 1 + (1 if self.use_features else 0)

    @classmethod
    def toy(cls, **overrides) -> "NetConfig":
        return cls(**overrides)

    @classmethod
    def full_scale(cls, **overrides) -> "NetConfig":
        base = dict(
            token_dim=768,
            layers=12,
            heads=12,
            tokens_side=7,
            embed_dim=128,
            level_sides=(224, 112, 56, 28),
        )
        base.update(overrides)
        return cls(**base)


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def _gelu_forward(x: np.ndarray):
    phi = 0.5 * (1.0 + erf(x / np.sqrt(2.0)))  # standard normal CDF
    return x * phi, phi


def _gelu_backward(x: np.ndarray, phi: np.ndarray) -> np.ndarray:
    return phi + x * np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)


def gelu_grad(x: np.ndarray) -> np.ndarray:
    return _gelu_backward(x, 0.5 * (1.0 + erf(x / np.sqrt(2.0))))


def attention(q: np.ndarray, k: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Scaled dot-product attention on plain token matrices."""
    if not (np.isfinite(q).all() and np.isfinite(k).all() and np.isfinite(v).all()):
        raise ValueError("non-finite attention inputs")
    if q.shape[-1] != k.shape[-1]:
        raise ValueError("Q and K need the same column count")
    if k.shape[0] != v.shape[0]:
        raise ValueError("K and V need the same row count")
    scores = q @ k.T / np.sqrt(k.shape[-1])
    return softmax(scores, axis=-1) @ v


def multihead(a: np.ndarray, wq: np.ndarray, wk: np.ndarray, wv: np.ndarray, wo: np.ndarray) -> np.ndarray:
    """Multi-head self-attention of one token matrix (tokens x D)."""
    heads = [attention(a @ wq[i], a @ wk[i], a @ wv[i]) for i in range(wq.shape[0])]
    return np.concatenate(heads, axis=-1) @ wo


def _layernorm_forward(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * inv
    return xhat * g + b, (xhat, inv)


def _layernorm_backward(dy, cache, g):
    xhat, inv = cache
    dg = (dy * xhat).sum(axis=tuple(range(dy.ndim - 1)))
    db = dy.sum(axis=tuple(range(dy.ndim - 1)))
    dxh = dy * g
    dx = inv * (dxh - dxh.mean(axis=-1, keepdims=True) - xhat * (dxh * xhat).mean(axis=-1, keepdims=True))
    return dx, dg, db


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


def _uniform(rng, fan_in, shape, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def init_params(cfg: NetConfig, rng: np.random.Generator, dtype=np.float64) -> dict:
    d, h, dk = cfg.token_dim, cfg.heads, cfg.head_dim
    dm = cfg.mlp_ratio * d
    p: dict[str, np.ndarray] = {}
    for lv in range(cfg.levels):
        fan = cfg.bands * cfg.kernels[lv] ** 2
        p[f"emb{lv}_w"] = _uniform(rng, fan, (fan, d), dtype)
        p[f"emb{lv}_b"] = np.zeros(d, dtype=dtype)
    if cfg.use_features:
        p["feat_w"] = _uniform(rng, cfg.feature_dim, (cfg.feature_dim, d), dtype)
        p["feat_b"] = np.zeros(d, dtype=dtype)
    p["cls"] = np.zeros(d, dtype=dtype)
    for i in range(cfg.layers):
        p[f"enc{i}_ln1_g"] = np.ones(d, dtype=dtype)
        p[f"enc{i}_ln1_b"] = np.zeros(d, dtype=dtype)
        p[f"enc{i}_wq"] = _uniform(rng, d, (h, d, dk), dtype)
        p[f"enc{i}_wk"] = _uniform(rng, d, (h, d, dk), dtype)
        p[f"enc{i}_wv"] = _uniform(rng, d, (h, d, dk), dtype)
        p[f"enc{i}_wo"] = _uniform(rng, d, (d, d), dtype)
        p[f"enc{i}_ln2_g"] = np.ones(d, dtype=dtype)
        p[f"enc{i}_ln2_b"] = np.zeros(d, dtype=dtype)
        p[f"enc{i}_mlp_w1"] = _uniform(rng, d, (d, dm), dtype)
        p[f"enc{i}_mlp_b1"] = np.zeros(dm, dtype=dtype)
        p[f"enc{i}_mlp_w2"] = _uniform(rng, dm, (dm, d), dtype)
        p[f"enc{i}_mlp_b2"] = np.zeros(d, dtype=dtype)
    p["lnf_g"] = np.ones(d, dtype=dtype)
    p["lnf_b"] = np.zeros(d, dtype=dtype)
    p["proj_w"] = _uniform(rng, d, (d, cfg.embed_dim), dtype)
    p["proj_b"] = np.zeros(cfg.embed_dim, dtype=dtype)
    return p


# ---------------------------------------------------------------------------
# input embedding
# ---------------------------------------------------------------------------


def resize_bilinear(img: np.ndarray, side: int) -> np.ndarray:
    """Half-pixel-center bilinear resize of (h, w, C) to (side, side, C)."""
    h, w = img.shape[:2]
    if h == side and w == side:
        return img.astype(np.float64)
    out = np.empty((side, side, img.shape[2]), dtype=np.float64)

    def axis_coords(n, m):
        c = (np.arange(m) + 0.5) * (n / m) - 0.5
        c = np.clip(c, 0, n - 1)
        lo = np.floor(c).astype(int)
        hi = np.minimum(lo + 1, n - 1)
        return lo, hi, c - lo

    y0, y1, wy = axis_coords(h, side)
    x0, x1, wx = axis_coords(w, side)
    img = img.astype(np.float64)
    top = img[y0][:, x0] * (1 - wx)[None, :, None] + img[y0][:, x1] * wx[None, :, None]
    bot = img[y1][:, x0] * (1 - wx)[None, :, None] + img[y1][:, x1] * wx[None, :, None]
    out[:] = top * (1 - wy)[:, None, None] + bot * wy[:, None, None]
    return out


def level_blocks(resized: np.ndarray, t: int) -> np.ndarray:
    """(side, side, C) -> (t*t, k*k*C) kernel-stride blocks, k = side // t."""
    side, _, c = resized.shape
    k = side // t
    return (
        resized.reshape(t, k, t, k, c)
        .transpose(0, 2, 1, 3, 4)
        .reshape(t * t, k * k * c)
    )


def patchset_blocks(patches, cfg: NetConfig) -> list:
    """Per-level block matrices for one PatchSet, pixel values scaled to [0,1]."""
    out = []
    for lv in range(cfg.levels):
        resized = resize_bilinear(patches[lv].astype(np.float64) / 255.0, cfg.level_sides[lv])
        out.append(level_blocks(resized, cfg.tokens_side))
    return out


def multi_level_embed(patchset, params: dict, cfg: NetConfig) -> np.ndarray:
    """Token matrix (levels * t^2, D) for one PatchSet."""
    blocks = patchset_blocks(patchset.patches, cfg)
    rows = [blocks[lv] @ params[f"emb{lv}_w"] + params[f"emb{lv}_b"] for lv in range(cfg.levels)]
    return np.concatenate(rows, axis=0)


# ---------------------------------------------------------------------------
# batched forward / backward
# ---------------------------------------------------------------------------


@dataclass
class ForwardCache:
    blocks: list  # per level: (B, t*t, k*k*C)
    feats: np.ndarray | None  # (B, F) normalized
    layers: list = field(default_factory=list)
    lnf: tuple = None
    xf_cls: np.ndarray = None
    masks: list = field(default_factory=list)  # dropout masks per layer (attn, mlp)


def assemble_tokens(blocks: list, feats, params: dict, cfg: NetConfig) -> np.ndarray:
    """Stack [class; patch tokens; feature token] into (B, T, D)."""
    b = blocks[0].shape[0]
    parts = [np.broadcast_to(params["cls"], (b, 1, cfg.token_dim))]
    for lv in range(cfg.levels):
        parts.append(blocks[lv] @ params[f"emb{lv}_w"] + params[f"emb{lv}_b"])
    if cfg.use_features:
        ftok = feats @ params["feat_w"] + params["feat_b"]
        parts.append(ftok[:, None, :])
    return np.concatenate(parts, axis=1)


def forward_batch(
    blocks: list,
    feats,
    params: dict,
    cfg: NetConfig,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, ForwardCache]:
    """Embeddings (B, E) for a batch of token inputs, plus backward cache."""
    cache = ForwardCache(blocks=blocks, feats=feats)
    x = assemble_tokens(blocks, feats, params, cfg)
    keep = 1.0 - cfg.dropout
    bsz, t, d = x.shape
    h, dk = cfg.heads, cfg.head_dim

    def split_heads(flat):
        return flat.reshape(bsz, t, h, dk).transpose(0, 2, 1, 3)

    for i in range(cfg.layers):
        a1, ln1c = _layernorm_forward(x, params[f"enc{i}_ln1_g"], params[f"enc{i}_ln1_b"])
        a1f = a1.reshape(-1, d)
        # one flat GEMM per projection, then split into heads
        q = split_heads(a1f @ params[f"enc{i}_wq"].transpose(1, 0, 2).reshape(d, -1))
        k = split_heads(a1f @ params[f"enc{i}_wk"].transpose(1, 0, 2).reshape(d, -1))
        v = split_heads(a1f @ params[f"enc{i}_wv"].transpose(1, 0, 2).reshape(d, -1))
        s = q @ k.transpose(0, 1, 3, 2) / np.sqrt(dk)
        p_attn = softmax(s, axis=-1)
        ctx = p_attn @ v
        ctx_c = ctx.transpose(0, 2, 1, 3).reshape(bsz, t, d)
        o = ctx_c @ params[f"enc{i}_wo"]
        if train and cfg.dropout > 0:
            m_attn = (rng.random(o.shape) < keep) / keep
            o = o * m_attn
        else:
            m_attn = None
        x1 = x + o
        a2, ln2c = _layernorm_forward(x1, params[f"enc{i}_ln2_g"], params[f"enc{i}_ln2_b"])
        pre = a2 @ params[f"enc{i}_mlp_w1"] + params[f"enc{i}_mlp_b1"]
        hid, phi = _gelu_forward(pre)
        mout = hid @ params[f"enc{i}_mlp_w2"] + params[f"enc{i}_mlp_b2"]
        if train and cfg.dropout > 0:
            m_mlp = (rng.random(mout.shape) < keep) / keep
            mout = mout * m_mlp
        else:
            m_mlp = None
        x2 = x1 + mout
        cache.layers.append((a1, ln1c, q, k, v, p_attn, ctx_c, x1, a2, ln2c, pre, hid, phi))
        cache.masks.append((m_attn, m_mlp))
        x = x2
    xf, lnfc = _layernorm_forward(x, params["lnf_g"], params["lnf_b"])
    cache.lnf = lnfc
    cache.xf_cls = xf[:, 0, :]
    emb = cache.xf_cls @ params["proj_w"] + params["proj_b"]
    if not np.isfinite(emb).all():
        raise FloatingPointError("non-finite activations in forward pass")
    return emb, cache


def backward_batch(demb: np.ndarray, cache: ForwardCache, params: dict, cfg: NetConfig) -> dict:
    """Gradients for every parameter given d(loss)/d(embeddings)."""
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    grads["proj_w"] = cache.xf_cls.T @ demb
    grads["proj_b"] = demb.sum(axis=0)
    dxf = np.zeros((demb.shape[0], cfg.total_tokens, cfg.token_dim))
    dxf[:, 0, :] = demb @ params["proj_w"].T
    dx, grads["lnf_g"], grads["lnf_b"] = _layernorm_backward(dxf, cache.lnf, params["lnf_g"])

    inv_sqrt = 1.0 / np.sqrt(cfg.head_dim)
    for i in reversed(range(cfg.layers)):
        a1, ln1c, q, k, v, p_attn, ctx_c, x1, a2, ln2c, pre, hid, phi = cache.layers[i]
        m_attn, m_mlp = cache.masks[i]
        dmout = dx if m_mlp is None else dx * m_mlp
        dm = hid.shape[-1]
        grads[f"enc{i}_mlp_w2"] = hid.reshape(-1, dm).T @ dmout.reshape(-1, cfg.token_dim)
        grads[f"enc{i}_mlp_b2"] = dmout.sum(axis=(0, 1))
        dhid = dmout @ params[f"enc{i}_mlp_w2"].T
        dpre = dhid * _gelu_backward(pre, phi)
        grads[f"enc{i}_mlp_w1"] = a2.reshape(-1, cfg.token_dim).T @ dpre.reshape(-1, dm)
        grads[f"enc{i}_mlp_b1"] = dpre.sum(axis=(0, 1))
        da2 = dpre @ params[f"enc{i}_mlp_w1"].T
        dx1_ln, grads[f"enc{i}_ln2_g"], grads[f"enc{i}_ln2_b"] = _layernorm_backward(
            da2, ln2c, params[f"enc{i}_ln2_g"]
        )
        dx1 = dx + dx1_ln
        do = dx1 if m_attn is None else dx1 * m_attn
        bsz, t, _ = do.shape
        d = cfg.token_dim
        grads[f"enc{i}_wo"] = ctx_c.reshape(-1, d).T @ do.reshape(-1, d)
        dctx_c = do @ params[f"enc{i}_wo"].T
        dctx = dctx_c.reshape(bsz, t, cfg.heads, cfg.head_dim).transpose(0, 2, 1, 3)
        dp = dctx @ v.transpose(0, 1, 3, 2)
        dv = p_attn.transpose(0, 1, 3, 2) @ dctx
        ds = p_attn * (dp - (dp * p_attn).sum(axis=-1, keepdims=True))
        dq = (ds @ k) * inv_sqrt
        dk = (ds.transpose(0, 1, 3, 2) @ q) * inv_sqrt

        a1f = a1.reshape(-1, d)
        da1f = np.zeros_like(a1f)
        for name, dhead in (("wq", dq), ("wk", dk), ("wv", dv)):
            w = params[f"enc{i}_{name}"]
            dflat = dhead.transpose(0, 2, 1, 3).reshape(-1, d)  # (B*T, h*dk)
            grads[f"enc{i}_{name}"] = (
                (a1f.T @ dflat).reshape(d, cfg.heads, cfg.head_dim).transpose(1, 0, 2)
            )
            wflat = w.transpose(1, 0, 2).reshape(d, -1)  # (D, h*dk)
            da1f += dflat @ wflat.T
        da1 = da1f.reshape(bsz, t, d)
        dx_ln, grads[f"enc{i}_ln1_g"], grads[f"enc{i}_ln1_b"] = _layernorm_backward(
            da1, ln1c, params[f"enc{i}_ln1_g"]
        )
        dx = dx1 + dx_ln

    grads["cls"] = dx[:, 0, :].sum(axis=0)
    row = 1
    for lv in range(cfg.levels):
        nt = cfg.tokens_side**2
        dz = dx[:, row : row + nt, :]
        fin = cache.blocks[lv].shape[-1]
        grads[f"emb{lv}_w"] = cache.blocks[lv].reshape(-1, fin).T @ dz.reshape(-1, cfg.token_dim)
        grads[f"emb{lv}_b"] = dz.sum(axis=(0, 1))
        row += nt
    if cfg.use_features:
        dtok = dx[:, row, :]
        grads["feat_w"] = cache.feats.T @ dtok
        grads["feat_b"] = dtok.sum(axis=0)
    return grads


def forward_embed(patchset, feat_vec, params: dict, cfg: NetConfig) -> np.ndarray:
    """Embedding of one extraction center (inference mode)."""
    blocks = [b[None] for b in patchset_blocks(patchset.patches, cfg)]
    feats = np.asarray(feat_vec, dtype=np.float64)[None] if cfg.use_features else None
    emb, _ = forward_batch(blocks, feats, params, cfg, train=False)
    return emb[0]


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------


def contrastive_loss(e_left: np.ndarray, e_right: np.ndarray, alpha: int, margin: float) -> float:
    """alpha*d + (1-alpha)*max(0, margin - d), d the Euclidean distance."""
    if margin <= 0:
        raise ValueError("margin must be > 0")
    d = float(np.linalg.norm(np.asarray(e_left) - np.asarray(e_right)))
    return alpha * d + (1 - alpha) * max(0.0, margin - d)


def pair_loss_and_grads(e_left, e_right, alphas, margin):
    """Mean contrastive loss over pairs plus d(loss)/d(embedding) terms."""
    diff = e_left - e_right
    d = np.linalg.norm(diff, axis=1)
    losses = np.where(alphas == 1, d, np.maximum(0.0, margin - d))
    npairs = len(alphas)
    dd = np.zeros(npairs)
    pos = alphas == 1
    dd[pos & (d > 0)] = 1.0
    neg_active = (~pos) & (d < margin) & (d > 0)
    dd[neg_active] = -1.0
    safe = np.where(d > 0, d, 1.0)
    dldiff = (dd / safe / npairs)[:, None] * diff
    return float(losses.mean()), dldiff, -dldiff


# ---------------------------------------------------------------------------
# model persistence
# ---------------------------------------------------------------------------


def save_model(path, cfg: NetConfig, params: dict, norm: FeatureNorm) -> None:
    meta = {"format_version": MODEL_FORMAT_VERSION, "config": asdict(cfg)}
    # a file object keeps the caller-chosen name (np.savez would append .npz)
    with open(path, "wb") as f:
        np.savez(
            f,
            __meta__=np.array(json.dumps(meta)),
            __norm_shift__=norm.shift,
            __norm_scale__=norm.scale,
            **params,
        )


def load_model(path) -> tuple[NetConfig, dict, FeatureNorm]:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["__meta__"]))
        if meta.get("format_version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format {meta.get('format_version')}")
        cfgd = meta["config"]
        cfgd["level_sides"] = tuple(cfgd["level_sides"])
        cfg = NetConfig(**cfgd)
        norm = FeatureNorm(z["__norm_shift__"], z["__norm_scale__"])
        params = {k: z[k] for k in z.files if not k.startswith("__")}
    return cfg, params, norm
