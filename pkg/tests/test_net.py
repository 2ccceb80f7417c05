import numpy as np
import pytest

from segmerge.net import (
    NetConfig,
    attention,
    contrastive_loss,
    forward_embed,
    init_params,
    load_model,
    multi_level_embed,
    multihead,
    resize_bilinear,
    save_model,
    softmax,
)
from segmerge.features import FeatureNorm
from segmerge.sampling import PatchSet


def toy_cfg(**kw):
    base = dict(token_dim=16, layers=2, heads=2, tokens_side=2, embed_dim=4,
                level_sides=(16, 8, 4, 4), dropout=0.1)
    base.update(kw)
    return NetConfig(**base)


def make_patchset(rng, widths=(5, 10, 15, 20), bands=3):
    patches = [rng.integers(0, 256, size=(w, w, bands), dtype=np.uint8) for w in widths]
    return PatchSet(patches, widths, (10, 10))


def test_attention_single_token():
    q = np.array([[1.0, 2.0]])
    k = np.array([[0.3, -1.0]])
    v = np.array([[5.0, 6.0, 7.0]])
    assert np.allclose(attention(q, k, v), v)


def test_attention_zero_query_uniform():
    rng = np.random.default_rng(0)
    k = rng.normal(size=(6, 4))
    v = rng.normal(size=(6, 3))
    out = attention(np.zeros((2, 4)), k, v)
    assert np.allclose(out, np.tile(v.mean(axis=0), (2, 1)))


def test_attention_matches_double_loop_oracle():
    rng = np.random.default_rng(1)
    q, k, v = rng.normal(size=(5, 4)), rng.normal(size=(5, 4)), rng.normal(size=(5, 3))
    out = attention(q, k, v)
    dk = 4
    for i in range(5):
        logits = np.array([q[i] @ k[j] / np.sqrt(dk) for j in range(5)])
        w = np.exp(logits - logits.max())
        w /= w.sum()
        assert abs(w.sum() - 1.0) < 1e-12
        expected = sum(w[j] * v[j] for j in range(5))
        assert np.allclose(out[i], expected, atol=1e-12)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(2)
    x = rng.normal(scale=30, size=(4, 7, 9))
    s = softmax(x, axis=-1)
    assert np.all(np.abs(s.sum(axis=-1) - 1) < 1e-12)


def test_multihead_single_head_collapses():
    rng = np.random.default_rng(3)
    d = 6
    a = rng.normal(size=(5, d))
    wq, wk, wv = (rng.normal(size=(1, d, d)) for _ in range(3))
    wo = rng.normal(size=(d, d))
    out = multihead(a, wq, wk, wv, wo)
    expected = attention(a @ wq[0], a @ wk[0], a @ wv[0]) @ wo
    assert np.allclose(out, expected)


def test_multihead_shape():
    rng = np.random.default_rng(4)
    d, h = 32, 4
    a = rng.normal(size=(18, d))
    wq, wk, wv = (rng.normal(size=(h, d, d // h)) for _ in range(3))
    wo = rng.normal(size=(d, d))
    assert multihead(a, wq, wk, wv, wo).shape == (18, 32)


def test_multihead_permutation_equivariance():
    rng = np.random.default_rng(5)
    d, h = 8, 2
    a = rng.normal(size=(7, d))
    wq, wk, wv = (rng.normal(size=(h, d, d // h)) for _ in range(3))
    wo = rng.normal(size=(d, d))
    perm = rng.permutation(7)
    assert np.allclose(multihead(a[perm], wq, wk, wv, wo), multihead(a, wq, wk, wv, wo)[perm])


def test_full_scale_token_counts():
    cfg = NetConfig.full_scale()
    assert cfg.patch_tokens == 196
    assert cfg.total_tokens == 198
    assert cfg.token_dim == 768
    assert cfg.kernels == (32, 16, 8, 4)


def test_multi_level_embed_toy_shape():
    cfg = toy_cfg(token_dim=32, heads=4)
    rng = np.random.default_rng(6)
    params = init_params(cfg, rng)
    ps = make_patchset(rng)
    tokens = multi_level_embed(ps, params, cfg)
    assert tokens.shape == (16, 32)


def test_constant_patches_identical_tokens_within_level():
    cfg = toy_cfg()
    rng = np.random.default_rng(7)
    params = init_params(cfg, rng)
    patches = [np.full((w, w, 3), 120, dtype=np.uint8) for w in (5, 10, 15, 20)]
    ps = PatchSet(patches, (5, 10, 15, 20), (0, 0))
    tokens = multi_level_embed(ps, params, cfg)
    t2 = cfg.tokens_side**2
    for lv in range(4):
        level = tokens[lv * t2 : (lv + 1) * t2]
        assert np.allclose(level, level[0])


def test_forward_embed_deterministic_and_sensitive():
    cfg = toy_cfg()
    rng = np.random.default_rng(8)
    params = init_params(cfg, rng)
    ps = make_patchset(rng)
    feat = rng.normal(size=10)
    e1 = forward_embed(ps, feat, params, cfg)
    e2 = forward_embed(ps, feat, params, cfg)
    assert np.array_equal(e1, e2)
    assert np.all(np.isfinite(e1))
    patched = [p.copy() for p in ps.patches]
    patched[0][2, 2, 0] ^= 0xFF
    e3 = forward_embed(PatchSet(patched, ps.widths, ps.center), feat, params, cfg)
    assert not np.allclose(e1, e3)


def test_ablation_token_counts():
    assert toy_cfg(ablation="TF").total_tokens == 1 + 4
    assert toy_cfg(ablation="TF+MLE").total_tokens == 1 + 16
    assert toy_cfg(ablation="TF+MLE+SFE").total_tokens == 2 + 16


def test_contrastive_loss_examples():
    e = np.array([1.0, 2.0])
    assert contrastive_loss(e, e, 1, 1.0) == 0.0
    assert contrastive_loss(e, e, 0, 1.0) == 1.0
    far = e + np.array([1.5, 0.0])
    assert contrastive_loss(e, far, 0, 1.0) == 0.0
    assert contrastive_loss(e, far, 1, 1.0) == pytest.approx(1.5)


def test_resize_bilinear_constant_and_identity():
    img = np.full((7, 7, 3), 42.0)
    assert np.allclose(resize_bilinear(img, 4), 42.0)
    img2 = np.random.default_rng(9).normal(size=(8, 8, 3))
    assert np.allclose(resize_bilinear(img2, 8), img2)


def test_model_save_load_round_trip(tmp_path):
    cfg = toy_cfg()
    rng = np.random.default_rng(10)
    params = init_params(cfg, rng)
    norm = FeatureNorm(np.arange(10.0), np.ones(10))
    path = tmp_path / "model.bin"
    save_model(path, cfg, params, norm)
    cfg2, params2, norm2 = load_model(path)
    assert cfg2 == cfg
    assert set(params2) == set(params)
    for k in params:
        assert np.array_equal(params[k], params2[k])
    assert np.array_equal(norm2.shift, norm.shift)
